use std::path::{Path, PathBuf};

use spinmem::dsl::{parse, serialize};
use spinmem::ensemble::{EnsembleSpec, Simulator};
use spinmem::protocols::{
    hahn_echo, measure_t2n, memory_write_read, nuclear_probe, CpmgPhase, MemoryOptions, ProbeOptions, PulseDurations,
    Storage,
};
use spinmem::relaxation::{lindblad_generator, Frame};
use spinmem::spin::{SystemParams, Transition};
use spinmem::tomography::{
    bloch_components, bloch_to_rho, measure_areas, normalise, recovered_readout, starting_readout, CardinalState,
    TomographyOptions,
};
use spinmem::Error;

fn protocol_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../protocols")
}

fn body(file: &str) -> String {
    let text = std::fs::read_to_string(protocol_dir().join(file)).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

fn sim(gamma: f64) -> Simulator {
    Simulator::new(SystemParams::si_p().with_relaxation_rate(gamma))
}

#[test]
fn t2n_sweep_recovers_two_over_gamma() {
    let opts = MemoryOptions::ideal();
    let fit = measure_t2n(&[0.01, 0.05, 0.1, 0.2, 0.3], &opts, &EnsembleSpec::si_p(16, 1), &sim(10.0)).unwrap();
    assert!((fit.t2 / 0.2 - 1.0).abs() < 0.02, "{}", fit.t2);
}

#[test]
fn t2n_sweep_recovers_extra_dephasing_channel() {
    let params = SystemParams::si_p().with_relaxation_rate(0.0);
    let gen = lindblad_generator(&params, Frame::RotatingIsing).with_nuclear_dephasing(Some(0.065));
    let sim = Simulator::new(params).with_generator(gen);
    let fit = measure_t2n(&[0.005, 0.03, 0.06, 0.1, 0.15], &MemoryOptions::ideal(), &EnsembleSpec::si_p(16, 2), &sim).unwrap();
    assert!((fit.t2 / 0.065 - 1.0).abs() < 0.01, "{}", fit.t2);
}

#[test]
fn t2n_sweep_needs_enough_points() {
    let r = measure_t2n(&[0.0], &MemoryOptions::ideal(), &EnsembleSpec::si_p(4, 0), &sim(1.0));
    assert!(matches!(r, Err(Error::Fit { .. })));
}

#[test]
fn shipped_protocols_equal_their_builders() {
    let m = MemoryOptions::default();
    let cpmg = MemoryOptions { storage: Storage::Cpmg { rate_hz: 1e3, phase: CpmgPhase::MeiboomGill }, ..m.clone() };
    let tomo = TomographyOptions::default();
    let cases = [
        ("hahn.sps", hahn_echo(Transition::mw(1, 2), m.tau_e, 0.0, &m.durations, m.detect_window).unwrap()),
        ("memory.sps", memory_write_read(0.0, 1e-3, &m).unwrap()),
        ("probe.sps", nuclear_probe(0.0, 4e-3, 2e3, &ProbeOptions::default()).unwrap()),
        ("tomography_plus_x.sps", recovered_readout(CardinalState::PlusX, &tomo, 1.0).unwrap()),
        ("cpmg_memory.sps", memory_write_read(0.0, 0.101, &cpmg).unwrap()),
    ];
    for (file, seq) in cases {
        let text = body(file);
        assert_eq!(parse(&text).unwrap(), seq, "{file}");
        assert_eq!(serialize(&seq), text, "{file}");
    }
}

fn readout_options() -> TomographyOptions {
    let memory = MemoryOptions { durations: PulseDurations::ideal(), ..MemoryOptions::default() };
    TomographyOptions { memory, z_delay: Some(50e-6), ..TomographyOptions::default() }
}

#[test]
fn ideal_readout_areas() {
    let (sim, spec, opts) = (sim(1.0), EnsembleSpec::si_p(64, 3), readout_options());
    let areas = |s| measure_areas(&sim, &spec, &starting_readout(s, &opts, 1.0).unwrap()).unwrap();
    let phi_ref = areas(CardinalState::PlusX).transverse.arg();
    let raw = |s| bloch_components(&areas(s), phi_ref);
    let x = raw(CardinalState::PlusX);
    assert!(x[0] > 0.0 && x[1].abs() < 1e-3 * x[0] && x[2].abs() < 1e-3 * x[0], "{x:?}");

    let z = raw(CardinalState::PlusZ);
    assert!((z[2] / x[0] - 1.0).abs() < 0.01, "{z:?} {x:?}");

    let i = raw(CardinalState::Identity);
    assert!(i.iter().all(|v| v.abs() < 1e-3 * z[2]), "{i:?}");
}

#[test]
fn reconstruction_examples() {
    let r = normalise([1.0, 0.0, 0.0], None).unwrap();
    let rho = bloch_to_rho(r);
    for (k, v) in [0.5, 0.5, 0.5, 0.5].iter().enumerate() {
        assert!((rho[k].re - v).abs() < 1e-15 && rho[k].im.abs() < 1e-15);
    }
    let r = normalise([0.45, 0.0, 0.0], Some(0.5)).unwrap();
    assert!((r[0] - 0.9).abs() < 1e-15);
    let r = normalise([0.0, 0.0, 0.0], Some(0.5)).unwrap();
    assert_eq!(bloch_to_rho(r), nalgebra::Matrix2::identity() * spinmem::spin::C64::new(0.5, 0.0));
}
