//! Resolved run configuration, parameter files and command-line value parsing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use spinmem::ensemble::{EnsembleSpec, Sampling, Simulator};
use spinmem::noise::OuNoise;
use spinmem::protocols::{MemoryOptions, ProbeOptions};
use spinmem::pulse::ErrorModel;
use spinmem::relaxation::{lindblad_generator, Equilibrium, Frame};
use spinmem::spin::SystemParams;
use spinmem::tomography::TomographyOptions;

use crate::CliError;

/// Contents of a `--params` file; every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsFile {
    pub system: SystemParams,
    pub ensemble: Option<EnsembleSpec>,
    pub errors: ErrorModel,
    pub noise: Option<OuNoise>,
    pub nuclear_dephasing_time: Option<f64>,
    pub frame: Frame,
    pub equilibrium: Equilibrium,
    pub sampling: Sampling,
    pub memory: Option<MemoryOptions>,
    pub probe: Option<ProbeOptions>,
    pub tomography: Option<TomographyOptions>,
}

impl ParamsFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    /// A sequence given as canonical `.sps` text.
    Run { sequence: String },
    Memory { options: MemoryOptions, storage_times: Vec<f64>, phases: Vec<f64> },
    Probe { options: ProbeOptions, phases: Vec<f64>, probe_times: Vec<f64>, delta_hz: f64 },
    T2nSweep { options: MemoryOptions, storage_times: Vec<f64> },
    Tomography { options: TomographyOptions },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Run { .. } => "run",
            Experiment::Memory { .. } => "memory",
            Experiment::Probe { .. } => "probe",
            Experiment::T2nSweep { .. } => "t2n-sweep",
            Experiment::Tomography { .. } => "tomography",
        }
    }
}

/// Everything needed to reproduce a run; written verbatim to `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub system: SystemParams,
    pub ensemble: EnsembleSpec,
    pub errors: ErrorModel,
    pub noise: Option<OuNoise>,
    pub nuclear_dephasing_time: Option<f64>,
    pub frame: Frame,
    pub equilibrium: Equilibrium,
    pub sampling: Sampling,
    pub experiment: Experiment,
}

impl RunConfig {
    pub fn simulator(&self) -> Result<Simulator, CliError> {
        let generator = lindblad_generator(&self.system, self.frame)
            .with_nuclear_dephasing(self.nuclear_dephasing_time)
            .with_equilibrium(self.equilibrium);
        let sim = Simulator::new(self.system)
            .with_generator(generator)
            .with_errors(self.errors)
            .with_noise(self.noise)
            .with_seed(self.seed)
            .with_sampling(self.sampling);
        sim.validate()?;
        self.ensemble.validate()?;
        Ok(sim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(config: RunConfig) -> Self {
        Self { tool: "spinmem".into(), version: env!("CARGO_PKG_VERSION").into(), config }
    }
}

/// `<number><unit>` with the unit's decimal exponent applied textually.
fn with_units(s: &str, units: &[(&str, i32)], default: Option<i32>, what: &str) -> Result<f64, CliError> {
    let t = s.trim();
    let (num, shift) = match units.iter().filter(|u| t.ends_with(u.0)).max_by_key(|u| u.0.len()) {
        Some((name, k)) => (&t[..t.len() - name.len()], *k),
        None => (t, default.ok_or_else(|| CliError::usage(format!("{what} `{s}` needs a unit")))?),
    };
    let bad = || CliError::usage(format!("cannot parse {what} `{s}`"));
    let v: f64 = if num.contains(['e', 'E']) {
        num.parse::<f64>().map_err(|_| bad())? * 10f64.powi(shift)
    } else {
        format!("{num}e{shift}").parse().map_err(|_| bad())?
    };
    if !v.is_finite() {
        return Err(bad());
    }
    Ok(v)
}

pub fn parse_time(s: &str) -> Result<f64, CliError> {
    with_units(s, &[("ns", -9), ("us", -6), ("ms", -3), ("s", 0)], None, "time")
}

pub fn parse_freq(s: &str) -> Result<f64, CliError> {
    with_units(s, &[("Hz", 0), ("kHz", 3), ("MHz", 6)], None, "frequency")
}

/// Phase in degrees unless suffixed with `rad`.
pub fn parse_phase(s: &str) -> Result<f64, CliError> {
    let t = s.trim();
    if let Some(r) = t.strip_suffix("rad") {
        return r.parse().map_err(|_| CliError::usage(format!("cannot parse phase `{s}`")));
    }
    let d: f64 = t.strip_suffix("deg").unwrap_or(t).parse().map_err(|_| CliError::usage(format!("cannot parse phase `{s}`")))?;
    Ok(d * (std::f64::consts::PI / 180.0))
}

pub fn parse_list<T>(s: &str, f: fn(&str) -> Result<T, CliError>) -> Result<Vec<T>, CliError> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(f).collect()
}

/// `mw=0.05,rf=0.05,jitter=0.01`.
pub fn parse_errors(s: &str) -> Result<ErrorModel, CliError> {
    let mut e = ErrorModel::default();
    for item in s.split(',').filter(|x| !x.trim().is_empty()) {
        let (k, v) = item.split_once('=').ok_or_else(|| CliError::usage(format!("expected key=value in `{item}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| CliError::usage(format!("cannot parse `{v}`")))?;
        match k.trim() {
            "mw" => e.mw = v,
            "rf" => e.rf = v,
            "jitter" => e.phase_jitter = v,
            other => return Err(CliError::usage(format!("unknown error channel `{other}` (mw|rf|jitter)"))),
        }
    }
    e.validate()?;
    Ok(e)
}

/// `start:stop:points`, inclusive.
pub fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else {
        return Err(CliError::usage(format!("expected start:stop:points, got `{s}`")));
    };
    let (a, b) = (parse_time(a)?, parse_time(b)?);
    let n: usize = n.parse().map_err(|_| CliError::usage(format!("bad point count `{n}`")))?;
    if n < 2 {
        return Err(CliError::usage("a range needs at least 2 points"));
    }
    Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_parsing() {
        assert_eq!(parse_time("10ms").unwrap(), 10e-3);
        assert_eq!(parse_time("1.4us").unwrap(), 1.4e-6);
        assert_eq!(parse_freq("2kHz").unwrap(), 2e3);
        assert_eq!(parse_freq("250Hz").unwrap(), 250.0);
        assert_eq!(parse_phase("90").unwrap(), std::f64::consts::FRAC_PI_2);
        assert_eq!(parse_phase("0.5rad").unwrap(), 0.5);
        assert!(parse_time("10").is_err());
        assert!(parse_time("xms").is_err());
        assert_eq!(parse_list("1ms, 2ms", parse_time).unwrap(), vec![1e-3, 2e-3]);
        assert_eq!(parse_range("0ms:2ms:3").unwrap(), vec![0.0, 1e-3, 2e-3]);
        let e = parse_errors("mw=0.05,rf=-0.02").unwrap();
        assert_eq!((e.mw, e.rf), (0.05, -0.02));
        assert!(parse_errors("uv=1").is_err());
    }
}
