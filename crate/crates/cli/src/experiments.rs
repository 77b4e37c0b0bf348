//! Execution of a resolved configuration into named output files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use spinmem::dsl;
use spinmem::ensemble::Trace;
use spinmem::protocols::{
    final_echo_area, fit_exponential_decay, fit_sinusoid, memory_write_read, nuclear_probe, reference_echo,
};
use spinmem::spin::C64;
use spinmem::tomography::run_tomography;

use crate::config::{Experiment, Manifest, RunConfig};
use crate::CliError;

/// Output files keyed by name, written in name order.
#[derive(Debug, Default)]
pub struct Outputs(pub BTreeMap<String, String>);

impl Outputs {
    fn csv(&mut self, name: String, trace: &Trace) {
        let mut s = String::from("t_s,re,im\n");
        for (t, z) in trace.times.iter().zip(&trace.signal) {
            s += &format!("{t},{},{}\n", z.re, z.im);
        }
        self.0.insert(name, s);
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
        s.push('\n');
        self.0.insert(name.into(), s);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (name, body) in &self.0 {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

fn area_json(z: C64) -> serde_json::Value {
    json!({ "re": z.re, "im": z.im, "magnitude": z.norm(), "phase_rad": z.arg() })
}

pub fn execute(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let sim = cfg.simulator()?;
    let spec = cfg.ensemble;
    let mut out = Outputs::default();
    match &cfg.experiment {
        Experiment::Run { sequence } => {
            let seq = dsl::parse(sequence).map_err(spinmem::Error::from)?;
            let trace = sim.ensemble_signal(&seq, &spec)?;
            let areas = (0..trace.windows.len())
                .map(|k| {
                    let w = trace.windows[k];
                    Ok(json!({ "transition": w.transition.to_string(), "start_s": w.start, "end_s": w.end, "area": area_json(trace.window_area(k)?) }))
                })
                .collect::<Result<Vec<_>, spinmem::Error>>()?;
            out.csv("trace_run.csv".into(), &trace);
            out.json("echoes.json", &areas)?;
        }
        Experiment::Memory { options, storage_times, phases } => {
            let mut rows = Vec::new();
            for (k, &phi) in phases.iter().enumerate() {
                let refe = sim.ensemble_signal(&reference_echo(phi, options)?, &spec)?;
                let ra = refe.window_area(0)?;
                out.csv(format!("trace_reference_p{k}.csv"), &refe);
                for (j, &ts) in storage_times.iter().enumerate() {
                    let tr = sim.ensemble_signal(&memory_write_read(phi, ts, options)?, &spec)?;
                    let a = tr.window_area(0)?;
                    out.csv(format!("trace_memory_p{k}_s{j}.csv"), &tr);
                    rows.push(json!({
                        "phase_rad": phi,
                        "storage_time_s": ts,
                        "recovered": area_json(a),
                        "initial": area_json(ra),
                        "area_ratio": a.norm() / ra.norm(),
                        "phase_difference_rad": (a / ra).arg(),
                    }));
                }
            }
            out.json("echoes.json", &rows)?;
        }
        Experiment::Probe { options, phases, probe_times, delta_hz } => {
            let mut rows = Vec::new();
            let mut fits = Vec::new();
            for &phi in phases {
                let areas = probe_times
                    .iter()
                    .map(|&t| final_echo_area(&sim, &spec, &nuclear_probe(phi, t, *delta_hz, options)?))
                    .collect::<Result<Vec<C64>, _>>()?;
                let ys: Vec<f64> = areas.iter().map(|a| a.re).collect();
                let fit = if *delta_hz > 0.0 { Some(fit_sinusoid(probe_times, &ys, delta_hz / 2.0, delta_hz * 2.0)?) } else { None };
                rows.push(json!({
                    "phase_rad": phi,
                    "points": probe_times.iter().zip(&areas).map(|(t, a)| json!({ "t_probe_s": t, "re": a.re, "im": a.im })).collect::<Vec<_>>(),
                }));
                fits.push(json!({ "phase_rad": phi, "sinusoid": fit }));
            }
            out.json("probe.json", &rows)?;
            out.json("fit.json", &fits)?;
        }
        Experiment::T2nSweep { options, storage_times } => {
            let mut amps = Vec::new();
            for (j, &ts) in storage_times.iter().enumerate() {
                let tr = sim.ensemble_signal(&memory_write_read(0.0, ts, options)?, &spec)?;
                amps.push(tr.window_area(0)?.norm());
                out.csv(format!("trace_t2n_s{j}.csv"), &tr);
            }
            let fit = fit_exponential_decay(storage_times, &amps)?;
            let gamma = cfg.system.relaxation_rate;
            out.json(
                "fit.json",
                &json!({
                    "decay": fit,
                    "t2n_s": fit.t2,
                    "relaxation_limit_t2n_s": if gamma > 0.0 { 2.0 / gamma } else { f64::INFINITY },
                }),
            )?;
        }
        Experiment::Tomography { options } => {
            let rep = run_tomography(&sim, &spec, options)?;
            out.json("tomography.json", &rep)?;
        }
    }
    out.json("manifest.json", &Manifest::new(cfg.clone()))?;
    Ok(out)
}
