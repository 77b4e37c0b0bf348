//! `spinmem`: batch runner for the spin-memory simulator.

mod config;
mod experiments;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use spinmem::dsl::{self, SourceSpan};
use spinmem::ensemble::EnsembleSpec;
use spinmem::protocols::{
    hahn_echo, memory_write_read, nuclear_probe, CpmgPhase, MemoryOptions, MemoryPulse, ProbeOptions, PulseDurations,
    Storage,
};
use spinmem::spin::Transition;
use spinmem::tomography::{recovered_readout, CardinalState, TomographyOptions};

use config::{parse_errors, parse_freq, parse_list, parse_phase, parse_range, parse_time, Experiment, Manifest, ParamsFile, RunConfig};

#[derive(Debug)]
pub struct CliError {
    kind: &'static str,
    message: String,
    span: Option<SourceSpan>,
    code: u8,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: "usage", message: message.into(), span: None, code: 2 }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: "config", message: message.into(), span: None, code: 2 }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self { kind: "io", message: format!("{}: {e}", path.display()), span: None, code: 1 }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { kind: "internal", message: message.into(), span: None, code: 1 }
    }

    fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind, "message": self.message, "span": self.span } })
    }
}

impl From<spinmem::Error> for CliError {
    fn from(e: spinmem::Error) -> Self {
        match e {
            spinmem::Error::Dsl(d) => Self {
                kind: if d.is_syntax() { "syntax" } else { "semantic" },
                message: d.to_string(),
                span: Some(d.span),
                code: 2,
            },
            other => Self { kind: "simulation", message: other.to_string(), span: None, code: 1 },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "spinmem", version, about = "Electron-nuclear spin memory simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON parameter file.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Seed for packet sampling, noise and jitter.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of spin packets.
    #[arg(long, global = true)]
    packets: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Systematic pulse errors, e.g. `mw=0.05,rf=0.05,jitter=0.01`.
    #[arg(long, global = true)]
    errors: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct PulseArgs {
    /// Pulse lengths.
    #[arg(long, value_enum)]
    durations: Option<DurationSet>,
    /// Use BB1 composites for the microwave π pulses.
    #[arg(long)]
    bb1: bool,
    /// CPMG storage at this repetition rate (e.g. `1kHz`).
    #[arg(long)]
    cpmg: Option<String>,
    /// Carr–Purcell instead of Meiboom–Gill CPMG phases.
    #[arg(long)]
    carr_purcell: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum DurationSet {
    Ideal,
    Standard,
    Short,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a `.sps` sequence file.
    Run {
        file: Option<PathBuf>,
        #[arg(long)]
        seq: Option<PathBuf>,
    },
    /// Memory write / store / read against the initial Hahn echo.
    Memory {
        #[arg(long, default_value = "1ms")]
        store: String,
        /// Encoding phases (degrees unless suffixed with `rad`).
        #[arg(long, default_value = "0,90,180,270")]
        phases: String,
        #[command(flatten)]
        pulses: PulseArgs,
    },
    /// Nuclear coherence probe swept across the storage echo.
    Probe {
        /// Probe times after the write, `start:stop:points`.
        #[arg(long, default_value = "3ms:5ms:81")]
        times: String,
        #[arg(long, default_value = "2kHz")]
        delta: String,
        #[arg(long, default_value = "0,90,180,270")]
        phases: String,
        #[arg(long)]
        tau_n: Option<String>,
        #[command(flatten)]
        pulses: PulseArgs,
    },
    /// Recovered echo against storage time with an exponential fit.
    T2nSweep {
        #[arg(long)]
        store: String,
        #[command(flatten)]
        pulses: PulseArgs,
    },
    /// Tomography of the six cardinal states and the mixed state.
    Tomography {
        #[arg(long)]
        store: Option<String>,
        #[command(flatten)]
        pulses: PulseArgs,
    },
    /// Re-run the configuration recorded in a manifest.
    Replay { manifest: PathBuf },
    /// Print a canonical protocol as `.sps` text.
    Export {
        #[arg(value_enum)]
        protocol: ExportKind,
        #[arg(long, default_value = "1ms")]
        store: String,
        #[arg(long, default_value = "0")]
        phase: String,
        /// Probe time after the write.
        #[arg(long, default_value = "4ms")]
        probe_time: String,
        #[arg(long, default_value = "2kHz")]
        delta: String,
        /// Cardinal state for the tomography export.
        #[arg(long, default_value = "+X")]
        state: String,
        #[command(flatten)]
        pulses: PulseArgs,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ExportKind {
    Memory,
    Probe,
    Tomography,
    Hahn,
}

fn memory_options(base: Option<MemoryOptions>, p: &PulseArgs) -> Result<MemoryOptions, CliError> {
    let mut m = base.unwrap_or_default();
    if let Some(d) = p.durations {
        m.durations = match d {
            DurationSet::Ideal => PulseDurations::ideal(),
            DurationSet::Standard => PulseDurations::standard(),
            DurationSet::Short => PulseDurations::short_mw(),
        };
    }
    if p.bb1 {
        for r in MemoryPulse::MW_PI {
            if !m.bb1.contains(&r) {
                m.bb1.push(r);
            }
        }
    }
    if let Some(rate) = &p.cpmg {
        let phase = if p.carr_purcell { CpmgPhase::CarrPurcell } else { CpmgPhase::MeiboomGill };
        m.storage = Storage::Cpmg { rate_hz: parse_freq(rate)?, phase };
    }
    Ok(m)
}

fn resolve(g: &Global, command: &Command) -> Result<RunConfig, CliError> {
    let params = match &g.params {
        Some(p) => ParamsFile::load(p)?,
        None => ParamsFile::default(),
    };
    let mut ensemble = params.ensemble.unwrap_or_else(|| EnsembleSpec::si_p(256, 0));
    if let Some(s) = g.seed {
        ensemble.seed = s;
    }
    if let Some(n) = g.packets {
        ensemble.packets = n;
    }
    let errors = match &g.errors {
        Some(e) => parse_errors(e)?,
        None => params.errors,
    };
    let experiment = match command {
        Command::Run { file, seq } => {
            let path = match (file, seq) {
                (Some(p), None) | (None, Some(p)) => p,
                _ => return Err(CliError::usage("give the sequence file either positionally or with --seq")),
            };
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let parsed = dsl::parse(&text).map_err(spinmem::Error::from)?;
            Experiment::Run { sequence: dsl::serialize(&parsed) }
        }
        Command::Memory { store, phases, pulses } => Experiment::Memory {
            options: memory_options(params.memory, pulses)?,
            storage_times: parse_list(store, parse_time)?,
            phases: parse_list(phases, parse_phase)?,
        },
        Command::Probe { times, delta, phases, tau_n, pulses } => {
            let mut options = params.probe.unwrap_or_default();
            options.memory = memory_options(Some(options.memory), pulses)?;
            if let Some(t) = tau_n {
                options.tau_n = parse_time(t)?;
            }
            Experiment::Probe {
                options,
                phases: parse_list(phases, parse_phase)?,
                probe_times: parse_range(times)?,
                delta_hz: parse_freq(delta)?,
            }
        }
        Command::T2nSweep { store, pulses } => {
            let storage_times = parse_list(store, parse_time)?;
            if storage_times.len() < 4 {
                return Err(CliError::usage("t2n-sweep needs at least 4 storage times"));
            }
            Experiment::T2nSweep { options: memory_options(params.memory, pulses)?, storage_times }
        }
        Command::Tomography { store, pulses } => {
            let mut options = params.tomography.unwrap_or_default();
            options.memory = memory_options(Some(options.memory), pulses)?;
            if let Some(s) = store {
                options.storage_time = parse_time(s)?;
            }
            Experiment::Tomography { options }
        }
        Command::Replay { .. } | Command::Export { .. } => unreachable!("handled before resolution"),
    };
    Ok(RunConfig {
        seed: ensemble.seed,
        system: params.system,
        ensemble,
        errors,
        noise: params.noise,
        nuclear_dephasing_time: params.nuclear_dephasing_time,
        frame: params.frame,
        equilibrium: params.equilibrium,
        sampling: params.sampling,
        experiment,
    })
}

fn export(g: &Global, cmd: &Command) -> Result<String, CliError> {
    let Command::Export { protocol, store, phase, probe_time, delta, state, pulses } = cmd else { unreachable!() };
    let params = match &g.params {
        Some(p) => ParamsFile::load(p)?,
        None => ParamsFile::default(),
    };
    let phi = parse_phase(phase)?;
    let store = parse_time(store)?;
    let seq = match protocol {
        ExportKind::Memory => memory_write_read(phi, store, &memory_options(params.memory, pulses)?)?,
        ExportKind::Probe => {
            let mut o: ProbeOptions = params.probe.unwrap_or_default();
            o.memory = memory_options(Some(o.memory), pulses)?;
            nuclear_probe(phi, parse_time(probe_time)?, parse_freq(delta)?, &o)?
        }
        ExportKind::Tomography => {
            let mut o: TomographyOptions = params.tomography.unwrap_or_default();
            o.memory = memory_options(Some(o.memory), pulses)?;
            o.storage_time = store;
            let s: CardinalState = state.parse()?;
            recovered_readout(s, &o, params.system.relaxation_rate)?
        }
        ExportKind::Hahn => {
            let m = memory_options(params.memory, pulses)?;
            hahn_echo(Transition::mw(1, 2), m.tau_e, phi, &m.durations, m.detect_window)?
        }
    };
    Ok(dsl::serialize(&seq))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::internal(e.to_string()))?;
    }
    let cfg = match &cli.command {
        Command::Export { .. } => {
            let text = export(&cli.global, &cli.command)?;
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::internal(e.to_string()))?;
            return Ok(());
        }
        Command::Replay { manifest } => {
            let text = std::fs::read_to_string(manifest).map_err(|e| CliError::io(manifest, e))?;
            let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", manifest.display())))?;
            if m.tool != "spinmem" {
                return Err(CliError::config(format!("manifest written by `{}`", m.tool)));
            }
            m.config
        }
        other => resolve(&cli.global, other)?,
    };
    let outputs = experiments::execute(&cfg)?;
    outputs.write(&cli.global.out)?;
    let summary = json!({ "experiment": cfg.experiment.name(), "out": cli.global.out, "files": outputs.0.keys().collect::<Vec<_>>() });
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let err = CliError::usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code)
        }
    }
}
