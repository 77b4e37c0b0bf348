//! Electron-qubit state tomography of starting and recovered states.
//!
//! The transverse components come from the complex area of an echo
//! referenced to the +X readout phase. The longitudinal component is read
//! after the transverse echo, once the coherence has dephased: a further
//! π/2(0) – τr – π echo converts the population difference into an echo
//! whose sign is flipped by the π pulse that preceded it.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSpec, Simulator};
use crate::error::{Error, Result};
use crate::protocols::{memory_after, MemoryOptions, MemoryPulse, Preparation};
use crate::pulse::CompositeScheme;
use crate::relaxation::identity_preparation_wait;
use crate::sequence::{Event, Sequence, Timeline};
use crate::spin::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CardinalState {
    #[serde(rename = "+X")]
    PlusX,
    #[serde(rename = "-X")]
    MinusX,
    #[serde(rename = "+Y")]
    PlusY,
    #[serde(rename = "-Y")]
    MinusY,
    #[serde(rename = "+Z")]
    PlusZ,
    #[serde(rename = "-Z")]
    MinusZ,
    /// Maximally mixed electron qubit.
    #[serde(rename = "I")]
    Identity,
}

impl CardinalState {
    pub const ALL: [CardinalState; 7] = [
        CardinalState::PlusX,
        CardinalState::MinusX,
        CardinalState::PlusY,
        CardinalState::MinusY,
        CardinalState::PlusZ,
        CardinalState::MinusZ,
        CardinalState::Identity,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CardinalState::PlusX => "+X",
            CardinalState::MinusX => "-X",
            CardinalState::PlusY => "+Y",
            CardinalState::MinusY => "-Y",
            CardinalState::PlusZ => "+Z",
            CardinalState::MinusZ => "-Z",
            CardinalState::Identity => "I",
        }
    }

    pub fn is_pure(self) -> bool {
        self != CardinalState::Identity
    }

    /// Ideal Bloch vector.
    pub fn bloch(self) -> [f64; 3] {
        match self {
            CardinalState::PlusX => [1.0, 0.0, 0.0],
            CardinalState::MinusX => [-1.0, 0.0, 0.0],
            CardinalState::PlusY => [0.0, 1.0, 0.0],
            CardinalState::MinusY => [0.0, -1.0, 0.0],
            CardinalState::PlusZ => [0.0, 0.0, 1.0],
            CardinalState::MinusZ => [0.0, 0.0, -1.0],
            CardinalState::Identity => [0.0; 3],
        }
    }

    fn equator_phase(self) -> Option<f64> {
        match self {
            CardinalState::PlusX => Some(0.0),
            CardinalState::PlusY => Some(FRAC_PI_2),
            CardinalState::MinusX => Some(PI),
            CardinalState::MinusY => Some(3.0 * FRAC_PI_2),
            _ => None,
        }
    }
}

impl std::fmt::Display for CardinalState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for CardinalState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Tomography(format!("unknown state label {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TomographyOptions {
    pub memory: MemoryOptions,
    pub storage_time: f64,
    /// Delay τr of the readout echoes.
    pub readout_tau: f64,
    pub readout_window: f64,
    /// Wait between the transverse echo and the longitudinal readout;
    /// 1 % of T1e when absent (20 μs without relaxation).
    pub z_delay: Option<f64>,
}

impl Default for TomographyOptions {
    fn default() -> Self {
        Self { memory: MemoryOptions::default(), storage_time: 1e-3, readout_tau: 5e-6, readout_window: 4e-6, z_delay: None }
    }
}

impl TomographyOptions {
    fn z_delay(&self, gamma: f64) -> f64 {
        self.z_delay.unwrap_or(if gamma > 0.0 { 0.01 / gamma } else { 20e-6 })
    }

    fn readout_bb1(&self) -> bool {
        self.memory.bb1.contains(&MemoryPulse::Refocus)
    }
}

/// Preparation pulses for a cardinal state, starting from the thermal state.
pub fn prepare_state(state: CardinalState, opts: &TomographyOptions, gamma: f64) -> Result<Preparation> {
    let m = &opts.memory;
    let e = m.roles.electron;
    if let Some(phase) = state.equator_phase() {
        return Ok(Preparation::encode(m.durations.pulse(e, FRAC_PI_2, phase)));
    }
    let mut seq = Sequence::default();
    match state {
        CardinalState::PlusZ => {}
        CardinalState::MinusZ => seq.push(Event::Pulse(m.durations.pulse(e, PI, 0.0))),
        CardinalState::Identity => {
            if !(gamma > 0.0) {
                return Err(Error::Tomography("the mixed state needs a non-zero relaxation rate".into()));
            }
            seq.push(Event::Pulse(m.durations.pulse(e, PI, 0.0)));
            seq.push(Event::Delay(identity_preparation_wait(gamma)));
        }
        _ => unreachable!(),
    }
    let origin = seq.duration();
    Ok(Preparation { sequence: seq, origin })
}

fn readout_pi(opts: &TomographyOptions) -> crate::pulse::Pulse {
    let p = opts.memory.durations.pulse(opts.memory.roles.electron, PI, 0.0);
    if opts.readout_bb1() {
        p.with_composite(CompositeScheme::Bb1)
    } else {
        p
    }
}

fn append_z_readout(tl: &mut Timeline, echo: f64, opts: &TomographyOptions, gamma: f64) -> Result<()> {
    let e = opts.memory.roles.electron;
    let half = opts.memory.durations.pulse(e, FRAC_PI_2, 0.0);
    let c = echo + opts.z_delay(gamma);
    tl.pulse_centered(half, c)?;
    tl.pulse_centered(readout_pi(opts), c + opts.readout_tau)?;
    tl.detect_centered(e, c + 2.0 * opts.readout_tau, opts.readout_window)?;
    Ok(())
}

/// Preparation followed directly by the transverse and longitudinal readouts.
pub fn starting_readout(state: CardinalState, opts: &TomographyOptions, gamma: f64) -> Result<Sequence> {
    let prep = prepare_state(state, opts, gamma)?;
    let mut tl = Timeline::new();
    for ev in &prep.sequence.events {
        match ev {
            Event::Pulse(p) => {
                tl.pulse(*p);
            }
            Event::Delay(d) => {
                tl.delay(*d)?;
            }
            Event::Detect(_) => unreachable!(),
        }
    }
    let e = opts.memory.roles.electron;
    let c = prep.origin;
    tl.pulse_centered(readout_pi(opts), c + opts.readout_tau)?;
    let echo = c + 2.0 * opts.readout_tau;
    tl.detect_centered(e, echo, opts.readout_window)?;
    append_z_readout(&mut tl, echo, opts, gamma)?;
    Ok(tl.build())
}

/// Preparation, memory write / store / read, then the same readouts.
pub fn recovered_readout(state: CardinalState, opts: &TomographyOptions, gamma: f64) -> Result<Sequence> {
    let prep = prepare_state(state, opts, gamma)?;
    let m = MemoryOptions { detect_window: opts.readout_window, ..opts.memory.clone() };
    let (mut tl, echo) = memory_after(&prep, opts.storage_time, &m)?;
    append_z_readout(&mut tl, echo, opts, gamma)?;
    Ok(tl.build())
}

/// Raw echo areas of one readout sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Areas {
    pub transverse: C64,
    pub longitudinal: C64,
}

pub fn measure_areas(sim: &Simulator, spec: &EnsembleSpec, seq: &Sequence) -> Result<Areas> {
    let trace = sim.ensemble_signal(seq, spec)?;
    if trace.windows.len() != 2 {
        return Err(Error::Tomography(format!("expected 2 detection windows, found {}", trace.windows.len())));
    }
    Ok(Areas { transverse: trace.window_area(0)?, longitudinal: trace.window_area(1)? })
}

/// Unnormalised Bloch components relative to the reference phase.
pub fn bloch_components(a: &Areas, phi_ref: f64) -> [f64; 3] {
    let rot = C64::from_polar(1.0, -phi_ref);
    let t = a.transverse * rot;
    [t.re, t.im, -(a.longitudinal * rot).re]
}

/// Scale by `norm` (own length when absent), clipping into the Bloch ball.
pub fn normalise(v: [f64; 3], norm: Option<f64>) -> Result<[f64; 3]> {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let n = norm.unwrap_or(len);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Tomography("zero readout amplitude".into()));
    }
    let mut r = v.map(|x| x / n);
    let l = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if l > 1.0 {
        r = r.map(|x| x / l);
    }
    Ok(r)
}

/// ρ = (I + r·σ)/2.
pub fn bloch_to_rho(r: [f64; 3]) -> Matrix2<C64> {
    let h = 0.5;
    Matrix2::new(
        C64::new(h * (1.0 + r[2]), 0.0),
        C64::new(h * r[0], -h * r[1]),
        C64::new(h * r[0], h * r[1]),
        C64::new(h * (1.0 - r[2]), 0.0),
    )
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// ⟨ψ0|ρ1|ψ0⟩ where ψ0 is the pure state along `r0`.
pub fn pure_fidelity(r0: [f64; 3], r1: [f64; 3]) -> f64 {
    let l = dot(r0, r0).sqrt();
    if l == 0.0 {
        return 0.5;
    }
    0.5 * (1.0 + dot(r0, r1) / l)
}

/// Uhlmann fidelity (tr√(√ρ0 ρ1 √ρ0))² of two qubit states.
pub fn uhlmann_fidelity(r0: [f64; 3], r1: [f64; 3]) -> f64 {
    // determinants within rounding of zero are pure states
    let det = |r: [f64; 3]| {
        let d = 1.0 - dot(r, r);
        if d < 1e-14 { 0.0 } else { d }
    };
    let (d0, d1) = (det(r0), det(r1));
    0.5 * (1.0 + dot(r0, r1) + (d0 * d1).sqrt())
}

pub fn trace_distance(r0: [f64; 3], r1: [f64; 3]) -> f64 {
    let d = [r0[0] - r1[0], r0[1] - r1[1], r0[2] - r1[2]];
    0.5 * dot(d, d).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub label: String,
    /// [Re, Im] of the transverse then longitudinal echo areas.
    pub areas: [[f64; 2]; 2],
    pub bloch: [f64; 3],
    pub rho_re: [[f64; 2]; 2],
    pub rho_im: [[f64; 2]; 2],
    /// F′ against the starting state for pure labels; absent otherwise.
    pub fidelity: Option<f64>,
    pub uhlmann_fidelity: Option<f64>,
    /// Trace distance to the starting state (recovered records only).
    pub trace_distance: Option<f64>,
}

impl StateRecord {
    fn new(label: &str, a: &Areas, r: [f64; 3]) -> Self {
        let rho = bloch_to_rho(r);
        let grid = |f: fn(&C64) -> f64| [[f(&rho[(0, 0)]), f(&rho[(0, 1)])], [f(&rho[(1, 0)]), f(&rho[(1, 1)])]];
        Self {
            label: label.into(),
            areas: [[a.transverse.re, a.transverse.im], [a.longitudinal.re, a.longitudinal.im]],
            bloch: r,
            rho_re: grid(|z| z.re),
            rho_im: grid(|z| z.im),
            fidelity: None,
            uhlmann_fidelity: None,
            trace_distance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyReport {
    pub reference_phase: f64,
    pub recovered_reference_phase: f64,
    pub starting: Vec<StateRecord>,
    pub recovered: Vec<StateRecord>,
    /// Mean F′ over the six pure states.
    pub mean_fidelity: f64,
}

/// Measure the seven starting states and their recovered counterparts.
pub fn run_tomography(sim: &Simulator, spec: &EnsembleSpec, opts: &TomographyOptions) -> Result<TomographyReport> {
    let gamma = sim.params.relaxation_rate;
    let states: Vec<CardinalState> =
        CardinalState::ALL.into_iter().filter(|s| s.is_pure() || gamma > 0.0).collect();
    let mut start_areas = Vec::new();
    let mut rec_areas = Vec::new();
    for &s in &states {
        start_areas.push(measure_areas(sim, spec, &starting_readout(s, opts, gamma)?)?);
        rec_areas.push(measure_areas(sim, spec, &recovered_readout(s, opts, gamma)?)?);
    }
    let phi_ref = start_areas[0].transverse.arg();
    let phi_rec = rec_areas[0].transverse.arg();
    let mut starting = Vec::new();
    let mut recovered = Vec::new();
    let mut start_norms = Vec::new();
    let mut sum = 0.0;
    for (k, &s) in states.iter().enumerate() {
        let v0 = bloch_components(&start_areas[k], phi_ref);
        let n0 = dot(v0, v0).sqrt();
        let r0 = if s.is_pure() {
            start_norms.push(n0);
            normalise(v0, None)?
        } else {
            let mean = start_norms.iter().sum::<f64>() / start_norms.len() as f64;
            normalise(v0, Some(mean))?
        };
        let norm = if s.is_pure() { n0 } else { start_norms.iter().sum::<f64>() / start_norms.len() as f64 };
        let r1 = normalise(bloch_components(&rec_areas[k], phi_rec), Some(norm))?;
        let mut rec = StateRecord::new(s.label(), &rec_areas[k], r1);
        rec.trace_distance = Some(trace_distance(r0, r1));
        if s.is_pure() {
            let f = pure_fidelity(r0, r1);
            rec.fidelity = Some(f);
            rec.uhlmann_fidelity = Some(uhlmann_fidelity(r0, r1));
            sum += f;
        }
        starting.push(StateRecord::new(s.label(), &start_areas[k], r0));
        recovered.push(rec);
    }
    Ok(TomographyReport {
        reference_phase: phi_ref,
        recovered_reference_phase: phi_rec,
        starting,
        recovered,
        mean_fidelity: sum / 6.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::PulseDurations;
    use crate::spin::SystemParams;

    fn close3(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn labels_round_trip() {
        for s in CardinalState::ALL {
            assert_eq!(s.label().parse::<CardinalState>().unwrap(), s);
        }
        assert!("+W".parse::<CardinalState>().is_err());
    }

    #[test]
    fn fidelity_formulas() {
        let x = [1.0, 0.0, 0.0];
        assert_eq!(pure_fidelity(x, x), 1.0);
        assert_eq!(pure_fidelity(x, [-1.0, 0.0, 0.0]), 0.0);
        assert!((uhlmann_fidelity(x, [0.0; 3]) - 0.5).abs() < 1e-15);
        assert!((uhlmann_fidelity([0.0; 3], [0.0; 3]) - 1.0).abs() < 1e-15);
        assert!((trace_distance(x, [0.0; 3]) - 0.5).abs() < 1e-15);
        let rho = bloch_to_rho([0.3, -0.2, 0.5]);
        assert!((rho.trace().re - 1.0).abs() < 1e-15);
        assert!(normalise([0.0; 3], None).is_err());
        assert!(close3(normalise([2.0, 0.0, 0.0], Some(1.0)).unwrap(), x, 0.0));
    }

    fn ideal_opts() -> TomographyOptions {
        TomographyOptions {
            memory: MemoryOptions { durations: PulseDurations::ideal(), ..MemoryOptions::default() },
            storage_time: 200e-6,
            ..TomographyOptions::default()
        }
    }

    #[test]
    fn ideal_round_trip() {
        let sim = Simulator::new(SystemParams::si_p().with_relaxation_rate(0.0));
        let rep = run_tomography(&sim, &EnsembleSpec::si_p(64, 5), &ideal_opts()).unwrap();
        assert_eq!(rep.starting.len(), 6);
        for ((st, rec), s) in rep.starting.iter().zip(&rep.recovered).zip(CardinalState::ALL) {
            assert!(close3(st.bloch, s.bloch(), 1e-3), "{s} {:?}", st.bloch);
            assert!(close3(rec.bloch, s.bloch(), 1e-3), "{s} {:?}", rec.bloch);
        }
        assert!(rep.mean_fidelity > 1.0 - 1e-3);
    }

    #[test]
    fn mixed_state_with_relaxation() {
        let sim = Simulator::new(SystemParams::si_p().with_relaxation_rate(1.0));
        let rep = run_tomography(&sim, &EnsembleSpec::si_p(64, 5), &ideal_opts()).unwrap();
        let i = &rep.starting[6];
        assert!(i.bloch.iter().all(|x| x.abs() < 0.02), "{:?}", i.bloch);
        assert!(rep.recovered[6].trace_distance.unwrap() < 0.02);
        assert!(rep.mean_fidelity > 0.99);
        let no_relax = Simulator::new(SystemParams::si_p().with_relaxation_rate(0.0));
        assert!(prepare_state(CardinalState::Identity, &ideal_opts(), no_relax.params.relaxation_rate).is_err());
    }
}
