//! Acceptance run: one PASS/FAIL line per criterion.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinmem::dsl::{parse, serialize};
use spinmem::ensemble::{EnsembleSpec, Simulator};
use spinmem::noise::OuNoise;
use spinmem::protocols::{
    final_echo_area, fit_exponential_decay, fit_sinusoid, measure_t2n, memory_write_read, nuclear_probe,
    reference_echo, write_transfer_matrices, CpmgPhase, MemoryOptions, MemoryPulse, ProbeOptions, PulseDurations,
    Storage,
};
use spinmem::pulse::{rotation, ErrorModel};
use spinmem::relaxation::{analytic_rates, evolve, lindblad_generator, Frame};
use spinmem::spin::{
    electron_up_population, nuclear_coherence, thermal_pseudopure_state, Detuning, SystemParams, Transition, C64,
};
use spinmem::tomography::{run_tomography, TomographyOptions};

type Criterion = (&'static str, u64, Box<dyn Fn() -> Outcome>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

fn literal(entries: &[((usize, usize), C64)]) -> Matrix4<C64> {
    let mut m = Matrix4::zeros();
    for &((i, j), v) in entries {
        m[(i - 1, j - 1)] = v;
    }
    m
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (pe, pr, pm) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let m = write_transfer_matrices(pe, pr, pm);
        let q = c(0.25, 0.0);
        let rho1 = literal(&[
            ((1, 1), q),
            ((1, 2), C64::from_polar(0.25, -pe)),
            ((2, 1), C64::from_polar(0.25, pe)),
            ((2, 2), q),
            ((3, 3), c(0.5, 0.0)),
        ]);
        let x = pe - pr - pm;
        let rho2 = literal(&[
            ((1, 1), q),
            ((1, 3), C64::from_polar(0.25, x)),
            ((2, 2), c(0.5, 0.0)),
            ((3, 1), C64::from_polar(0.25, -x)),
            ((3, 3), q),
        ]);
        for (got, want) in [(m.rho1.matrix(), &rho1), (m.rho2.matrix(), &rho2), (m.rho3.matrix(), &rho1)] {
            worst = worst.max((got - want).camax());
        }
    }
    outcome(worst <= 1e-12, format!("max element deviation {worst:.2e} over 100 phase triples"))
}

fn fit_rate(times: &[f64], values: &[f64]) -> f64 {
    fit_exponential_decay(times, values).unwrap().rate
}

fn criterion_2() -> Outcome {
    let gamma = 1e3;
    let det = Detuning::default();
    let th = thermal_pseudopure_state();

    let params = SystemParams::si_p().with_relaxation_rate(gamma);
    let gen = lindblad_generator(&params, Frame::RotatingIsing);
    let inverted = th.transform(&rotation(&Transition::mw(1, 2), PI, 0.0));
    let p_eq = electron_up_population(th.matrix());
    let times: Vec<f64> = (0..12).map(|k| k as f64 * 0.4 / gamma).collect();
    let pops: Vec<f64> = times
        .iter()
        .map(|&t| (electron_up_population(evolve(&inverted, 0.0, t, &det, &gen).unwrap().matrix()) - p_eq).abs())
        .collect();
    let t1 = 1.0 / fit_rate(&times, &pops);
    let t1_err = (t1 * gamma - 1.0).abs();
    let mut pass = t1_err < 0.005;
    let mut detail = format!("T1e·γ = {:.5}", t1 * gamma);

    let u = rotation(&Transition::mw(1, 2), PI, 0.0) * rotation(&Transition::rf(1, 3), PI, 0.0) * rotation(&Transition::mw(1, 2), FRAC_PI_2, 0.0);
    let stored = th.transform(&u);
    for ratio in [1e3, 1e5] {
        let p = params.with_hyperfine_hz(ratio * gamma / TAU);
        let gen = lindblad_generator(&p, Frame::RotatingIsing);
        let times: Vec<f64> = (0..12).map(|k| k as f64 * 0.5 / gamma).collect();
        let amps: Vec<f64> = times
            .iter()
            .map(|&t| nuclear_coherence(evolve(&stored, 0.0, t, &det, &gen).unwrap().matrix()).norm())
            .collect();
        let rate = fit_rate(&times, &amps);
        let t2n = 1.0 / rate;
        let t2n_err = (t2n * gamma / 2.0 - 1.0).abs();
        let rates = analytic_rates(&p).unwrap();
        let eig_err = rates.eigenvalues.iter().map(|l| (rate / -l.re - 1.0).abs()).fold(0.0, f64::max);
        pass &= t2n_err < 0.01 && eig_err < 0.01 && rates.hyperfine_dominated;
        detail += &format!("; A/γ={ratio:.0e}: T2n·γ/2 = {:.5}, rate vs −Re λ± off by {:.2e}", t2n * gamma / 2.0, eig_err);
    }
    outcome(pass, detail)
}

fn quadrature() -> [f64; 4] {
    [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]
}

fn criterion_3() -> Outcome {
    let sim = Simulator::new(SystemParams::si_p().with_relaxation_rate(0.0));
    let spec = EnsembleSpec { packets: 1000, t2e_star: Some(2e-6), t2n_star: Some(100e-6), correlation: 0.0, seed: 3 };
    let opts = MemoryOptions::ideal();
    let mut pass = true;
    let (mut min_ratio, mut max_phase) = (f64::INFINITY, 0.0f64);
    let mut offsets = Vec::new();
    for phi in quadrature() {
        let init = final_echo_area(&sim, &spec, &reference_echo(phi, &opts).unwrap()).unwrap();
        let rec = final_echo_area(&sim, &spec, &memory_write_read(phi, 1e-3, &opts).unwrap()).unwrap();
        let ratio = rec.norm() / init.norm();
        let dphi = wrap((rec / init).arg()).abs().to_degrees();
        min_ratio = min_ratio.min(ratio);
        max_phase = max_phase.max(dphi);
        offsets.push(wrap(rec.arg() - phi));
        pass &= ratio >= 0.999 && dphi < 0.1;
    }
    let track = offsets.iter().map(|o| wrap(o - offsets[0]).abs().to_degrees()).fold(0.0, f64::max);
    pass &= track < 0.1;
    outcome(pass, format!("min area ratio {min_ratio:.6}, max phase error {max_phase:.2e}°, phase tracking spread {track:.2e}°"))
}

fn criterion_4() -> Outcome {
    let sim = Simulator::new(SystemParams::si_p());
    let spec = EnsembleSpec::si_p(10_000, 4);
    let base_opts = MemoryOptions::default();
    let area = |o: &MemoryOptions| final_echo_area(&sim, &spec, &memory_write_read(0.0, 1e-3, o).unwrap()).unwrap().norm();
    let base = area(&base_opts);
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for role in MemoryPulse::RF_PI {
        let r = area(&MemoryOptions { omit: vec![role], ..base_opts.clone() }) / base;
        worst = worst.max(r);
        detail += &format!("without {role:?}: {:.2}%; ", 100.0 * r);
    }
    let rabi = 1.0 / (2.0 * base_opts.durations.rf_pi);
    let r = area(&MemoryOptions { rf_offset_hz: 10.0 * rabi, ..base_opts.clone() }) / base;
    worst = worst.max(r);
    detail += &format!("rf carrier +{:.0} kHz: {:.2}%", 10.0 * rabi / 1e3, 100.0 * r);
    outcome(worst < 0.05, detail)
}

/// Regression anchors of the criterion-5 simulation.
const PLAIN_ANCHOR: f64 = 0.8798;
const BB1_ANCHOR: f64 = 0.9828;

fn criterion_5() -> Outcome {
    let errors = ErrorModel { mw: 0.05, rf: 0.05, ..ErrorModel::default() };
    let sim = Simulator::new(SystemParams::si_p()).with_errors(errors);
    let spec = EnsembleSpec::si_p(400, 5);
    let plain = run_tomography(&sim, &spec, &TomographyOptions::default()).unwrap().mean_fidelity;
    let memory = MemoryOptions { durations: PulseDurations::short_mw(), bb1: MemoryPulse::MW_PI.to_vec(), ..MemoryOptions::default() };
    let bb1 = run_tomography(&sim, &spec, &TomographyOptions { memory, ..TomographyOptions::default() }).unwrap().mean_fidelity;
    let anchored = (plain - PLAIN_ANCHOR).abs() < 1e-3 && (bb1 - BB1_ANCHOR).abs() < 1e-3;
    outcome(
        (0.85..=0.95).contains(&plain) && bb1 >= 0.96 && anchored,
        format!("mean F′ = {plain:.4} with 5% errors, {bb1:.4} with BB1 microwave π pulses (anchors {PLAIN_ANCHOR}, {BB1_ANCHOR})"),
    )
}

fn cpmg_t2(sim: &Simulator, spec: &EnsembleSpec, times: &[f64]) -> f64 {
    let opts = MemoryOptions {
        durations: PulseDurations::ideal(),
        storage: Storage::Cpmg { rate_hz: 1e3, phase: CpmgPhase::MeiboomGill },
        ..MemoryOptions::default()
    };
    measure_t2n(times, &opts, spec, sim).unwrap().t2
}

fn hahn_t2(sim: &Simulator, spec: &EnsembleSpec, times: &[f64]) -> f64 {
    measure_t2n(times, &MemoryOptions::ideal(), spec, sim).unwrap().t2
}

fn criterion_6() -> Outcome {
    let spec = EnsembleSpec::si_p(200, 6);
    let noise = OuNoise::for_hahn_t2(0.05, 0.01).unwrap();
    let noisy = Simulator::new(SystemParams::si_p().with_relaxation_rate(0.0)).with_noise(Some(noise));
    let hahn = hahn_t2(&noisy, &spec, &[0.005, 0.015, 0.03, 0.045, 0.06]);
    let cpmg = cpmg_t2(&noisy, &spec, &[0.001, 0.101, 0.301, 0.601, 0.999]);

    let relax = Simulator::new(SystemParams::si_p().with_relaxation_rate(10.0));
    let times = [0.011, 0.051, 0.101, 0.201, 0.301];
    let (h, c) = (hahn_t2(&relax, &spec, &times), cpmg_t2(&relax, &spec, &times));
    let agree = (c / h - 1.0).abs();
    outcome(
        cpmg / hahn >= 5.0 && agree < 0.03,
        format!(
            "OU noise: Hahn T2 {:.1} ms, CPMG T2 {:.0} ms (×{:.1}); γ only: Hahn {:.1} ms, CPMG {:.1} ms ({:.2}% apart)",
            hahn * 1e3,
            cpmg * 1e3,
            cpmg / hahn,
            h * 1e3,
            c * 1e3,
            100.0 * agree
        ),
    )
}

fn criterion_7() -> Outcome {
    let sim = Simulator::new(SystemParams::si_p());
    let spec = EnsembleSpec { t2n_star: None, ..EnsembleSpec::si_p(64, 7) };
    let opts = ProbeOptions { memory: MemoryOptions { durations: PulseDurations::ideal(), ..MemoryOptions::default() }, ..ProbeOptions::default() };
    let delta = 2e3;
    let times: Vec<f64> = (0..81).map(|k| 3e-3 + k as f64 * 2e-3 / 80.0).collect();
    let mut freq_err: f64 = 0.0;
    let mut phases = Vec::new();
    for phi in quadrature() {
        let ys: Vec<f64> = times
            .iter()
            .map(|&t| final_echo_area(&sim, &spec, &nuclear_probe(phi, t, delta, &opts).unwrap()).unwrap().re)
            .collect();
        let fit = fit_sinusoid(&times, &ys, delta / 2.0, 2.0 * delta).unwrap();
        freq_err = freq_err.max((fit.frequency / delta - 1.0).abs());
        phases.push(fit.phase);
    }
    let track = quadrature()
        .iter()
        .zip(&phases)
        .map(|(phi, p)| wrap(p - phases[0] - phi).abs().to_degrees())
        .fold(0.0, f64::max);
    outcome(
        freq_err < 0.01 && track < 1.0,
        format!("max frequency error {:.3}%, fringe phase follows φe within {track:.3}°", 100.0 * freq_err),
    )
}

const SHIPPED: [&str; 5] = ["hahn.sps", "memory.sps", "probe.sps", "tomography_plus_x.sps", "cpmg_memory.sps"];

fn mutate(rng: &mut ChaCha8Rng, text: &str) -> String {
    const PIECES: [&str; 24] = [
        "pulse", "delay", "detect", "repeat", "{", "}", "mw", "rf", "1-2", "2-4", "1-3", "pi", "pi/2", "phase=",
        "dur=", "offset=", "window=", "err=", "us", "ms", "-", "1e999", "#", "\n",
    ];
    let mut s: Vec<char> = text.chars().collect();
    for _ in 0..rng.random_range(1..4) {
        let at = rng.random_range(0..=s.len());
        match rng.random_range(0..5) {
            0 if !s.is_empty() => {
                let end = (at + rng.random_range(1..8)).min(s.len());
                s.drain(at.min(end)..end);
            }
            1 => s.insert(at, rng.random_range(b' '..=b'~') as char),
            2 => {
                let p = PIECES[rng.random_range(0..PIECES.len())];
                s.splice(at..at, p.chars());
            }
            3 => s.truncate(at),
            _ => {
                let end = (at + rng.random_range(1..6)).min(s.len());
                let chunk: Vec<char> = s[at.min(end)..end].to_vec();
                s.splice(at..at, chunk);
            }
        }
    }
    s.into_iter().collect()
}

fn criterion_8(dir: &Path) -> Outcome {
    let mut texts = Vec::new();
    let mut round_trip = true;
    for f in SHIPPED {
        let text = std::fs::read_to_string(dir.join(f)).unwrap();
        let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
        let seq = parse(&text).unwrap();
        round_trip &= serialize(&seq) == body && parse(&serialize(&seq)).unwrap() == seq;
        texts.push(text);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut crashes, mut errors, mut spanned, mut accepted_ok) = (0, 0, 0, true);
    for k in 0..10_000 {
        let input = mutate(&mut rng, &texts[k % texts.len()]);
        match catch_unwind(AssertUnwindSafe(|| parse(&input))) {
            Err(_) => crashes += 1,
            Ok(Err(e)) => {
                errors += 1;
                let lines = input.split('\n').count();
                if e.span.line >= 1 && e.span.line <= lines && e.span.start >= 1 && e.span.end >= e.span.start {
                    spanned += 1;
                }
            }
            Ok(Ok(seq)) => accepted_ok &= parse(&serialize(&seq)).as_ref() == Ok(&seq),
        }
    }
    outcome(
        round_trip && crashes == 0 && spanned == errors && accepted_ok,
        format!("shipped round trip {round_trip}; 10000 mutations: {crashes} crashes, {spanned}/{errors} errors with spans"),
    )
}

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../protocols");
    let criteria: [Criterion; 8] = [
        ("transfer matrices", 1, Box::new(criterion_1)),
        ("relaxation oracles", 10, Box::new(criterion_2)),
        ("refocusing", 60, Box::new(criterion_3)),
        ("destruction", 60, Box::new(criterion_4)),
        ("fidelity vs pulse error", 300, Box::new(criterion_5)),
        ("CPMG", 300, Box::new(criterion_6)),
        ("nuclear probe", 60, Box::new(criterion_7)),
        ("DSL", 60, Box::new(move || criterion_8(&dir))),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= Duration::from_secs(*budget), o.detail),
            Err(e) => (false, format!("panicked: {}", e.downcast_ref::<String>().cloned().unwrap_or_default())),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {} ({name}): {} [{:.2} s of {budget} s] {detail}",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
