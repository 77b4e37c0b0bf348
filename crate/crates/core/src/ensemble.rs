//! Inhomogeneously broadened ensembles of spin packets.
//!
//! Each packet carries static electron and nuclear detunings drawn from
//! Gaussians of width σ = √2/T2*, so a free induction decay falls off as
//! exp(−t²/T2*²). Packets run independently and their complex detection
//! signals are averaged in packet-index order, which keeps results
//! bit-identical for any number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::OuNoise;
use crate::pulse::{apply_error_model, expand_composite, finite_pulse_propagator, rotation, ErrorModel};
use crate::relaxation::{lindblad_generator, Frame, LindbladGenerator};
use crate::sequence::{Event, Sequence};
use crate::spin::{
    coherence_signal, iz, thermal_pseudopure_state, Detuning, Operator4, SystemParams, Transition, C64,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinPacket {
    pub detuning: Detuning,
    pub weight: f64,
    /// Initial value of the nuclear detuning noise; drawn from the
    /// stationary law when absent.
    pub noise_state: Option<f64>,
    /// Random stream of the packet, normally its index.
    pub stream: u64,
}

impl SpinPacket {
    pub fn on_resonance() -> Self {
        Self::with_detuning(Detuning::default())
    }

    pub fn with_detuning(detuning: Detuning) -> Self {
        Self { detuning, weight: 1.0, noise_state: None, stream: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSpec {
    pub packets: usize,
    /// Electron inhomogeneous dephasing time; `None` for no broadening.
    pub t2e_star: Option<f64>,
    /// Nuclear inhomogeneous dephasing time; `None` for no broadening.
    pub t2n_star: Option<f64>,
    /// Correlation coefficient between δe and δn.
    #[serde(default)]
    pub correlation: f64,
    pub seed: u64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self { packets: 1, t2e_star: None, t2n_star: None, correlation: 0.0, seed: 0 }
    }
}

impl EnsembleSpec {
    /// Broadening used for the memory experiments: T2e* = 2 μs, T2n* = 100 μs.
    pub fn si_p(packets: usize, seed: u64) -> Self {
        Self { packets, t2e_star: Some(2e-6), t2n_star: Some(100e-6), correlation: 0.0, seed }
    }

    pub fn sigma_e(&self) -> f64 {
        self.t2e_star.map_or(0.0, |t| 2f64.sqrt() / t)
    }

    pub fn sigma_n(&self) -> f64 {
        self.t2n_star.map_or(0.0, |t| 2f64.sqrt() / t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.packets == 0 {
            return Err(Error::InvalidEnsemble("at least one packet is required".into()));
        }
        for t in [self.t2e_star, self.t2n_star].into_iter().flatten() {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidEnsemble(format!("dephasing time {t} must be positive")));
            }
        }
        if !(self.correlation.abs() <= 1.0) {
            return Err(Error::InvalidEnsemble("correlation must lie in [−1, 1]".into()));
        }
        Ok(())
    }
}

/// Draw the packets of an ensemble; deterministic in `spec.seed`.
pub fn sample_packets(spec: &EnsembleSpec) -> Result<Vec<SpinPacket>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (se, sn, r) = (spec.sigma_e(), spec.sigma_n(), spec.correlation);
    let weight = 1.0 / spec.packets as f64;
    Ok((0..spec.packets)
        .map(|k| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let de = se * z1;
            let dn = sn * (r * z1 + (1.0 - r * r).sqrt() * z2);
            SpinPacket { detuning: Detuning::new(de, dn), weight, noise_state: None, stream: k as u64 }
        })
        .collect())
}

/// One acquisition window inside a [`Trace`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectWindow {
    pub transition: Transition,
    pub start: f64,
    pub end: f64,
    /// Index range of the window's samples.
    pub first: usize,
    pub len: usize,
}

/// Sampled complex detection signal; real part in phase, imaginary part
/// in quadrature.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub times: Vec<f64>,
    pub signal: Vec<C64>,
    pub windows: Vec<DetectWindow>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Samples of the k-th window.
    pub fn window(&self, k: usize) -> Option<(&[f64], &[C64])> {
        let w = self.windows.get(k)?;
        Some((&self.times[w.first..w.first + w.len], &self.signal[w.first..w.first + w.len]))
    }

    /// Trapezoidal area of the whole k-th window.
    pub fn window_area(&self, k: usize) -> Result<C64> {
        let w = self.windows.get(k).ok_or_else(|| Error::Window(format!("trace has no window {k}")))?;
        echo_area(self, w.start, w.end)
    }

    fn scale_add(&mut self, other: &Trace, w: f64) {
        for (s, o) in self.signal.iter_mut().zip(&other.signal) {
            *s += o * w;
        }
    }
}

/// Trapezoidal integral of the signal over the samples inside `[t0, t1]`.
pub fn echo_area(trace: &Trace, t0: f64, t1: f64) -> Result<C64> {
    if !(t1 > t0) {
        return Err(Error::Window(format!("empty window [{t0:e}, {t1:e}]")));
    }
    let slack = 1e-12 * (t1 - t0);
    let idx: Vec<usize> = (0..trace.len()).filter(|&i| trace.times[i] >= t0 - slack && trace.times[i] <= t1 + slack).collect();
    if idx.len() < 2 {
        return Err(Error::Window(format!("window [{t0:e}, {t1:e}] holds fewer than two samples")));
    }
    Ok(idx
        .windows(2)
        .map(|p| {
            let (a, b) = (p[0], p[1]);
            if b != a + 1 {
                return C64::new(0.0, 0.0);
            }
            (trace.signal[a] + trace.signal[b]) * ((trace.times[b] - trace.times[a]) / 2.0)
        })
        .sum())
}

/// Number of samples per detection window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// 16 points per 1/σe of the ensemble, at least 33.
    #[default]
    Auto,
    Fixed(usize),
}

impl Sampling {
    pub fn points(&self, window: f64, sigma_e: f64) -> usize {
        match *self {
            Sampling::Fixed(n) => n.max(2),
            Sampling::Auto => {
                let n = (16.0 * sigma_e * window).ceil() as usize;
                n.clamp(32, 4096) | 1
            }
        }
    }
}

/// Physical models and execution settings shared by all packets.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    pub params: SystemParams,
    pub generator: LindbladGenerator,
    pub errors: ErrorModel,
    pub noise: Option<OuNoise>,
    /// Seed of the per-packet noise and jitter streams.
    pub seed: u64,
    pub sampling: Sampling,
}

/// Final state and detection record of one packet.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketRun {
    pub state: Operator4,
    pub trace: Trace,
}

struct PacketState<'a> {
    sim: &'a Simulator,
    rho: Operator4,
    t: f64,
    detuning: Detuning,
    noise_x: f64,
    noise_rng: ChaCha8Rng,
    jitter_rng: ChaCha8Rng,
}

impl PacketState<'_> {
    /// Free evolution; `static_detuning` false switches off the packet's
    /// own precession (already contained in a pulse propagator).
    fn free(&mut self, dt: f64, static_detuning: bool) {
        if dt <= 0.0 {
            return;
        }
        let det = if static_detuning { self.detuning } else { Detuning::default() };
        if static_detuning || !self.sim.generator.is_unitary() {
            self.rho = self.sim.generator.propagate(&self.rho, self.t, dt, &det);
        }
        if let Some(noise) = &self.sim.noise {
            let (x, phi) = noise.step(self.noise_x, dt, &mut self.noise_rng);
            self.noise_x = x;
            // H = −x·Iz integrates to exp(+iΦ·Iz)
            let d = iz().map_diagonal(|v| v.re);
            self.rho = Operator4::from_fn(|i, j| self.rho[(i, j)] * C64::from_polar(1.0, phi * (d[i] - d[j])));
        }
        self.t += dt;
    }

    fn pulse(&mut self, p: &crate::pulse::Pulse) {
        for q in expand_composite(p) {
            let q = apply_error_model(&q, &self.sim.errors, &mut self.jitter_rng);
            if q.is_ideal() {
                let u = rotation(&q.transition, q.angle, q.phase_at(self.t));
                self.rho = u * self.rho * u.adjoint();
            } else {
                let half = q.duration / 2.0;
                let start = self.t;
                self.free(half, false);
                let u = finite_pulse_propagator(&q, &self.detuning, start);
                self.rho = u * self.rho * u.adjoint();
                self.free(half, false);
            }
        }
    }
}

impl Simulator {
    pub fn new(params: SystemParams) -> Self {
        Self {
            generator: lindblad_generator(&params, Frame::RotatingIsing),
            params,
            errors: ErrorModel::default(),
            noise: None,
            seed: 0,
            sampling: Sampling::Auto,
        }
    }

    pub fn with_errors(mut self, errors: ErrorModel) -> Self {
        self.errors = errors;
        self
    }

    pub fn with_noise(mut self, noise: Option<OuNoise>) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_generator(mut self, generator: LindbladGenerator) -> Self {
        self.generator = generator;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.errors.validate()?;
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        Ok(())
    }

    fn stream_rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn execute(&self, seq: &Sequence, packet: &SpinPacket, sigma_e: f64) -> PacketRun {
        let mut noise_rng = self.stream_rng(2 * packet.stream);
        let noise_x = match (&self.noise, packet.noise_state) {
            (Some(_), Some(x)) => x,
            (Some(n), None) => n.sample_stationary(&mut noise_rng),
            (None, _) => 0.0,
        };
        let mut st = PacketState {
            sim: self,
            rho: thermal_pseudopure_state().into_matrix(),
            t: 0.0,
            detuning: packet.detuning,
            noise_x,
            noise_rng,
            jitter_rng: self.stream_rng(2 * packet.stream + 1),
        };
        let mut trace = Trace::default();
        for e in &seq.events {
            match e {
                Event::Pulse(p) => st.pulse(p),
                Event::Delay(d) => st.free(*d, true),
                Event::Detect(d) => {
                    let n = self.sampling.points(d.window, sigma_e);
                    let dt = d.window / (n - 1) as f64;
                    let start = st.t;
                    trace.windows.push(DetectWindow { transition: d.transition, start, end: start + d.window, first: trace.len(), len: n });
                    for k in 0..n {
                        if k > 0 {
                            st.free(dt, true);
                        }
                        trace.times.push(start + k as f64 * dt);
                        trace.signal.push(coherence_signal(&st.rho, &d.transition));
                    }
                    // pin the clock to the nominal end of the window
                    st.t = start + d.window;
                }
            }
        }
        PacketRun { state: st.rho, trace }
    }

    /// Run a sequence on one packet.
    pub fn run_packet(&self, seq: &Sequence, packet: &SpinPacket) -> Result<PacketRun> {
        seq.validate()?;
        self.validate()?;
        Ok(self.execute(seq, packet, 0.0))
    }

    /// Weighted sum of the packet traces, reduced in packet order. Sampled
    /// ensembles carry weights summing to one.
    pub fn signal_of_packets(&self, seq: &Sequence, packets: &[SpinPacket], sigma_e: f64) -> Result<Trace> {
        seq.validate()?;
        self.validate()?;
        if packets.is_empty() {
            return Err(Error::InvalidEnsemble("no packets".into()));
        }
        let traces: Vec<(f64, Trace)> = packets.par_iter().map(|p| (p.weight, self.execute(seq, p, sigma_e).trace)).collect();
        let mut out = Trace { signal: vec![C64::new(0.0, 0.0); traces[0].1.len()], ..traces[0].1.clone() };
        for (w, t) in &traces {
            out.scale_add(t, *w);
        }
        Ok(out)
    }

    pub fn ensemble_signal(&self, seq: &Sequence, spec: &EnsembleSpec) -> Result<Trace> {
        let packets = sample_packets(spec)?;
        self.signal_of_packets(seq, &packets, spec.sigma_e())
    }
}

pub fn run_packet(seq: &Sequence, packet: &SpinPacket, sim: &Simulator) -> Result<Trace> {
    sim.run_packet(seq, packet).map(|r| r.trace)
}

pub fn ensemble_signal(seq: &Sequence, spec: &EnsembleSpec, sim: &Simulator) -> Result<Trace> {
    sim.ensemble_signal(seq, spec)
}
