//! Canonical experiments built as sequences, and the fits that extract
//! their observables.
//!
//! Memory timeline (centres of pulses, `c0` = centre of the encoding pulse,
//! `tw = c0 + 2τe`, `d` = double-quantum delay):
//!
//! ```text
//! c0            mw π/2(φe) on the electron qubit
//! c0 + τe       mw π refocusing the electron coherence
//! tw − d        rf π(φrf)         electron → double-quantum coherence
//! tw            mw π(φmw)         double-quantum → nuclear coherence
//! tw + τn       rf π storage refocus (or a CPMG train over the storage time)
//! tw + T        mw π(φmw)         nuclear → double-quantum coherence
//! tw + T + d    rf π(φrf)         double-quantum → electron coherence
//! tw + T + τe   mw π refocusing the recovered electron coherence
//! tw + T + 2τe  recovered echo
//! ```
//!
//! The double-quantum coherence precesses at δe + δn, so the electron part
//! unwinds during `d` on the way in and winds up again on the way out; the
//! nuclear part is refocused by the storage pulse(s).

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSpec, Simulator};
use crate::error::{Error, Result};
use crate::pulse::{rotation, CompositeScheme, Pulse};
use crate::sequence::{Event, Sequence, Timeline};
use crate::spin::{thermal_pseudopure_state, DensityMatrix, Transition, C64};

/// Assignment of the transitions used by the memory protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolePreset {
    /// Electron processing qubit.
    pub electron: Transition,
    /// rf transition carrying the memory coherence.
    pub nuclear: Transition,
    /// Microwave transition of the transfer pulses.
    pub transfer: Transition,
}

impl RolePreset {
    /// Electron qubit 1-2, rf on 1-3, transfer mw on 1-2.
    pub fn rf_1_3() -> Self {
        Self { electron: Transition::mw(1, 2), nuclear: Transition::rf(1, 3), transfer: Transition::mw(1, 2) }
    }

    /// Electron qubit 1-2, memory on 2-4.
    pub fn rf_2_4() -> Self {
        Self { electron: Transition::mw(1, 2), nuclear: Transition::rf(2, 4), transfer: Transition::mw(1, 2) }
    }
}

impl Default for RolePreset {
    fn default() -> Self {
        Self::rf_1_3()
    }
}

/// Rectangular pulse lengths (s); zero selects ideal pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseDurations {
    pub mw_pi: f64,
    pub mw_half_pi: f64,
    pub rf_pi: f64,
    pub rf_half_pi: f64,
}

impl PulseDurations {
    pub fn ideal() -> Self {
        Self { mw_pi: 0.0, mw_half_pi: 0.0, rf_pi: 0.0, rf_half_pi: 0.0 }
    }

    /// mw π = 1400 ns, π/2 = 700 ns, rf π = 20 μs.
    pub fn standard() -> Self {
        Self { mw_pi: 1400e-9, mw_half_pi: 700e-9, rf_pi: 20e-6, rf_half_pi: 10e-6 }
    }

    /// Short microwave pulses used with composite pulses: π = 160 ns.
    pub fn short_mw() -> Self {
        Self { mw_pi: 160e-9, mw_half_pi: 80e-9, ..Self::standard() }
    }

    fn for_angle(&self, t: &Transition, angle: f64) -> f64 {
        let (pi, half) = match t.channel() {
            crate::spin::Channel::Rf => (self.rf_pi, self.rf_half_pi),
            _ => (self.mw_pi, self.mw_half_pi),
        };
        if (angle - FRAC_PI_2).abs() < 1e-12 {
            half
        } else {
            pi * angle / PI
        }
    }

    /// A pulse of the given angle with the configured length.
    pub fn pulse(&self, t: Transition, angle: f64, phase: f64) -> Pulse {
        Pulse::new(t, angle, phase).with_duration(self.for_angle(&t, angle))
    }
}

impl Default for PulseDurations {
    fn default() -> Self {
        Self::standard()
    }
}

/// Phase of the CPMG refocusing pulses relative to the write rf pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpmgPhase {
    /// Shifted by π/2.
    #[default]
    MeiboomGill,
    /// Same phase as the write rf pulse.
    CarrPurcell,
}

impl CpmgPhase {
    fn shift(self) -> f64 {
        match self {
            CpmgPhase::MeiboomGill => FRAC_PI_2,
            CpmgPhase::CarrPurcell => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    /// One rf π at the middle of the storage time, with the write rf phase.
    #[default]
    Hahn,
    /// rf π train at `rate_hz`; the storage time must hold an odd number
    /// of periods.
    Cpmg { rate_hz: f64, phase: CpmgPhase },
}

/// Pulses of the memory sequence, for selective substitution or removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryPulse {
    Encode,
    Refocus,
    WriteRf,
    WriteMw,
    StoreRf,
    ReadMw,
    ReadRf,
    FinalMw,
}

impl MemoryPulse {
    pub const ALL: [MemoryPulse; 8] = [
        MemoryPulse::Encode,
        MemoryPulse::Refocus,
        MemoryPulse::WriteRf,
        MemoryPulse::WriteMw,
        MemoryPulse::StoreRf,
        MemoryPulse::ReadMw,
        MemoryPulse::ReadRf,
        MemoryPulse::FinalMw,
    ];
    pub const MW_PI: [MemoryPulse; 4] = [MemoryPulse::Refocus, MemoryPulse::WriteMw, MemoryPulse::ReadMw, MemoryPulse::FinalMw];
    pub const RF_PI: [MemoryPulse; 3] = [MemoryPulse::WriteRf, MemoryPulse::StoreRf, MemoryPulse::ReadRf];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryOptions {
    pub roles: RolePreset,
    pub durations: PulseDurations,
    /// Electron refocusing interval τe (s).
    pub tau_e: f64,
    /// Spacing of the rf and mw transfer pulses; τe/2 when absent.
    pub dq_delay: Option<f64>,
    /// Width of the detection window centred on the recovered echo.
    pub detect_window: f64,
    pub phi_rf: f64,
    pub phi_mw: f64,
    /// Phase of the electron refocusing π pulses.
    pub refocus_phase: f64,
    pub storage: Storage,
    /// When false the electron and storage refocusing pulses are left out,
    /// leaving the bare transfer algebra.
    pub refocusing: bool,
    /// Pulses replaced by BB1 composites.
    pub bb1: Vec<MemoryPulse>,
    /// Pulses removed from the sequence.
    pub omit: Vec<MemoryPulse>,
    /// Carrier offset of every rf pulse (Hz).
    pub rf_offset_hz: f64,
}

impl Default for MemoryOptions {
    fn default() -> Self {
        Self {
            roles: RolePreset::default(),
            durations: PulseDurations::default(),
            tau_e: 40e-6,
            dq_delay: None,
            detect_window: 10e-6,
            phi_rf: 0.0,
            phi_mw: 0.0,
            refocus_phase: 0.0,
            storage: Storage::Hahn,
            refocusing: true,
            bb1: Vec::new(),
            omit: Vec::new(),
            rf_offset_hz: 0.0,
        }
    }
}

impl MemoryOptions {
    pub fn ideal() -> Self {
        Self { durations: PulseDurations::ideal(), ..Self::default() }
    }

    pub fn dq_delay(&self) -> f64 {
        self.dq_delay.unwrap_or(self.tau_e / 2.0)
    }

    fn make(&self, role: MemoryPulse, t: Transition, angle: f64, phase: f64) -> Option<Pulse> {
        if self.omit.contains(&role) {
            return None;
        }
        let mut p = self.durations.pulse(t, angle, phase);
        if t.channel() == crate::spin::Channel::Rf {
            p = p.with_offset(self.rf_offset_hz);
        }
        if self.bb1.contains(&role) {
            p = p.with_composite(CompositeScheme::Bb1);
        }
        Some(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau_e > 0.0) {
            return Err(Error::Timing("τe must be positive".into()));
        }
        let d = self.dq_delay();
        if !(d > 0.0 && d < self.tau_e) {
            return Err(Error::Timing(format!("double-quantum delay {d:e} must lie in (0, τe)")));
        }
        if !(self.detect_window > 0.0) {
            return Err(Error::Window("detection window must be positive".into()));
        }
        if self.detect_window / 2.0 >= self.tau_e {
            return Err(Error::Timing("detection window overlaps the final refocusing pulse".into()));
        }
        Ok(())
    }
}

/// Number of CPMG pulses for a storage time; must be a positive odd integer.
pub fn cpmg_pulse_count(storage_time: f64, rate_hz: f64) -> Result<usize> {
    if !(rate_hz > 0.0) {
        return Err(Error::InvalidParams("CPMG rate must be positive".into()));
    }
    let x = storage_time * rate_hz;
    let n = x.round();
    if n < 1.0 || (x - n).abs() > 1e-6 {
        return Err(Error::Timing(format!("storage time {storage_time:e} s is not a whole number of CPMG periods at {rate_hz} Hz")));
    }
    if (n as usize).is_multiple_of(2) {
        return Err(Error::Timing(format!(
            "CPMG train of {n} pulses leaves the nuclear coherence unconjugated; use an odd count"
        )));
    }
    Ok(n as usize)
}

/// Centres of an n-pulse train at spacing 1/rate with τ/2 bookends.
pub fn cpmg_centers(rate_hz: f64, n: usize) -> Vec<f64> {
    let tau = 1.0 / rate_hz;
    (0..n).map(|k| tau / 2.0 + k as f64 * tau).collect()
}

/// Free-standing CPMG storage fragment of total length n/rate.
pub fn cpmg_storage(
    rate_hz: f64,
    n: usize,
    phase: CpmgPhase,
    nuclear: Transition,
    phi_rf: f64,
    rf_pi: f64,
) -> Result<Sequence> {
    if n == 0 {
        return Err(Error::InvalidParams("CPMG needs at least one pulse".into()));
    }
    if !(rate_hz > 0.0) || rf_pi * rate_hz >= 1.0 {
        return Err(Error::Timing("CPMG pulses overlap at this rate".into()));
    }
    let mut tl = Timeline::new();
    for c in cpmg_centers(rate_hz, n) {
        tl.pulse_centered(Pulse::new(nuclear, PI, phi_rf + phase.shift()).with_duration(rf_pi), c)?;
    }
    let end = n as f64 / rate_hz;
    let rest = end - tl.now();
    tl.delay(rest.max(0.0))?;
    Ok(tl.build())
}

/// Time origin of a memory experiment: the sequence so far and the time at
/// which the electron coherence to be stored has zero dephasing phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Preparation {
    pub sequence: Sequence,
    pub origin: f64,
}

impl Preparation {
    /// A single encoding pulse starting at t = 0.
    pub fn encode(p: Pulse) -> Self {
        let origin = p.total_duration() / 2.0;
        Self { sequence: Sequence::new(vec![Event::Pulse(p)]), origin }
    }
}

/// Memory sequence after an arbitrary preparation. Returns the timeline
/// ending with the recovered-echo detection window, and the echo time.
pub fn memory_after(prep: &Preparation, storage_time: f64, opts: &MemoryOptions) -> Result<(Timeline, f64)> {
    opts.validate()?;
    if !(storage_time >= 0.0) {
        return Err(Error::NegativeDuration(storage_time));
    }
    let r = &opts.roles;
    let (c0, te, d) = (prep.origin, opts.tau_e, opts.dq_delay());
    let tw = c0 + 2.0 * te;
    let mut placed: Vec<(f64, Pulse)> = Vec::new();
    let mut place = |center: f64, role: MemoryPulse, t: Transition, angle: f64, phase: f64| {
        if let Some(p) = opts.make(role, t, angle, phase) {
            placed.push((center, p));
        }
    };
    if opts.refocusing {
        place(c0 + te, MemoryPulse::Refocus, r.electron, PI, opts.refocus_phase);
    }
    place(tw - d, MemoryPulse::WriteRf, r.nuclear, PI, opts.phi_rf);
    place(tw, MemoryPulse::WriteMw, r.transfer, PI, opts.phi_mw);
    if opts.refocusing {
        match opts.storage {
            Storage::Hahn => {
                if storage_time <= 0.0 {
                    return Err(Error::Timing("Hahn storage needs a positive storage time".into()));
                }
                place(tw + storage_time / 2.0, MemoryPulse::StoreRf, r.nuclear, PI, opts.phi_rf);
            }
            Storage::Cpmg { rate_hz, phase } => {
                let n = cpmg_pulse_count(storage_time, rate_hz)?;
                for c in cpmg_centers(rate_hz, n) {
                    place(tw + c, MemoryPulse::StoreRf, r.nuclear, PI, opts.phi_rf + phase.shift());
                }
            }
        }
    }
    let tr = tw + storage_time;
    place(tr, MemoryPulse::ReadMw, r.transfer, PI, opts.phi_mw);
    place(tr + d, MemoryPulse::ReadRf, r.nuclear, PI, opts.phi_rf);
    if opts.refocusing {
        place(tr + te, MemoryPulse::FinalMw, r.electron, PI, opts.refocus_phase);
    }
    let echo = if opts.refocusing { tr + 2.0 * te } else { tr + te };

    let mut tl = Timeline::new();
    for e in &prep.sequence.events {
        match e {
            Event::Pulse(p) => {
                tl.pulse(*p);
            }
            Event::Delay(x) => {
                tl.delay(*x)?;
            }
            Event::Detect(_) => return Err(Error::Timing("preparation must not contain detection".into())),
        }
    }
    for (center, p) in placed {
        tl.pulse_centered(p, center)?;
    }
    tl.detect_centered(r.electron, echo, opts.detect_window)?;
    Ok((tl, echo))
}

/// The write / store / read sequence with detection on the recovered echo.
pub fn memory_write_read(phi_e: f64, storage_time: f64, opts: &MemoryOptions) -> Result<Sequence> {
    let encode = opts.make(MemoryPulse::Encode, opts.roles.electron, FRAC_PI_2, phi_e);
    let prep = match encode {
        Some(p) => Preparation::encode(p),
        None => Preparation { sequence: Sequence::default(), origin: 0.0 },
    };
    Ok(memory_after(&prep, storage_time, opts)?.0.build())
}

/// Hahn echo π/2(φ) – τ – π – detect, timed from pulse centres.
pub fn hahn_echo(transition: Transition, tau: f64, phase: f64, durations: &PulseDurations, window: f64) -> Result<Sequence> {
    hahn_echo_with(transition, tau, phase, 0.0, durations, window, false)
}

fn hahn_echo_with(
    transition: Transition,
    tau: f64,
    phase: f64,
    refocus_phase: f64,
    durations: &PulseDurations,
    window: f64,
    bb1: bool,
) -> Result<Sequence> {
    if !(tau > 0.0) {
        return Err(Error::Timing("echo delay must be positive".into()));
    }
    let first = durations.pulse(transition, FRAC_PI_2, phase);
    let mut refocus = durations.pulse(transition, PI, refocus_phase);
    if bb1 {
        refocus = refocus.with_composite(CompositeScheme::Bb1);
    }
    let c0 = first.total_duration() / 2.0;
    let mut tl = Timeline::new();
    tl.pulse(first);
    tl.pulse_centered(refocus, c0 + tau)?;
    tl.detect_centered(transition, c0 + 2.0 * tau, window)?;
    Ok(tl.build())
}

/// Hahn echo with the timing and pulses of the memory's initial echo.
pub fn reference_echo(phi_e: f64, opts: &MemoryOptions) -> Result<Sequence> {
    let bb1 = opts.bb1.contains(&MemoryPulse::Refocus);
    hahn_echo_with(opts.roles.electron, opts.tau_e, phi_e, opts.refocus_phase, &opts.durations, opts.detect_window, bb1)
}

/// Density matrices of the bare transfer algebra under the default roles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrices {
    /// After the encoding π/2.
    pub rho1: DensityMatrix,
    /// After rf π then mw π (write).
    pub rho2: DensityMatrix,
    /// After mw π then rf π (read).
    pub rho3: DensityMatrix,
}

pub fn write_transfer_matrices(phi_e: f64, phi_rf: f64, phi_mw: f64) -> TransferMatrices {
    let r = RolePreset::rf_1_3();
    let rho1 = thermal_pseudopure_state().transform(&rotation(&r.electron, FRAC_PI_2, phi_e));
    let write = rotation(&r.transfer, PI, phi_mw) * rotation(&r.nuclear, PI, phi_rf);
    let read = rotation(&r.nuclear, PI, phi_rf) * rotation(&r.transfer, PI, phi_mw);
    let rho2 = rho1.transform(&write);
    let rho3 = rho2.transform(&read);
    TransferMatrices { rho1, rho2, rho3 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeOptions {
    pub memory: MemoryOptions,
    /// Half the nuclear storage echo time: refocus at τn, echo at 2τn.
    pub tau_n: f64,
    /// Delay τ of the nuclear-state-selective electron echo readout.
    pub readout_tau: f64,
    /// Width of the readout detection window.
    pub readout_window: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { memory: MemoryOptions::default(), tau_n: 2e-3, readout_tau: 5e-6, readout_window: 4e-6 }
    }
}

/// Write, store with an rf refocusing π, then at `t_probe` (measured from
/// the write mw π) an rf π/2 with carrier offset `delta_rf_hz` followed by
/// an electron Hahn echo on the electron qubit transition.
pub fn nuclear_probe(phi_e: f64, t_probe: f64, delta_rf_hz: f64, opts: &ProbeOptions) -> Result<Sequence> {
    let m = &opts.memory;
    m.validate()?;
    let r = &m.roles;
    let encode = m.durations.pulse(r.electron, FRAC_PI_2, phi_e);
    let c0 = encode.total_duration() / 2.0;
    let (te, d) = (m.tau_e, m.dq_delay());
    let tw = c0 + 2.0 * te;
    let store = m.durations.pulse(r.nuclear, PI, m.phi_rf).with_offset(m.rf_offset_hz);
    let probe = m.durations.pulse(r.nuclear, FRAC_PI_2, m.phi_rf).with_offset(delta_rf_hz);
    let earliest = opts.tau_n + (store.total_duration() + probe.total_duration()) / 2.0;
    if t_probe <= earliest {
        return Err(Error::Timing(format!("probe at {t_probe:e} s overlaps the storage refocusing pulse")));
    }
    let mut tl = Timeline::new();
    tl.pulse(encode);
    tl.pulse_centered(m.durations.pulse(r.electron, PI, m.refocus_phase), c0 + te)?;
    tl.pulse_centered(m.durations.pulse(r.nuclear, PI, m.phi_rf).with_offset(m.rf_offset_hz), tw - d)?;
    tl.pulse_centered(m.durations.pulse(r.transfer, PI, m.phi_mw), tw)?;
    tl.pulse_centered(store, tw + opts.tau_n)?;
    tl.pulse_centered(probe, tw + t_probe)?;
    let read_half = m.durations.pulse(r.electron, FRAC_PI_2, 0.0);
    let start = tw + t_probe + probe.total_duration() / 2.0;
    let rc = start + read_half.total_duration() / 2.0;
    tl.pulse(read_half);
    tl.pulse_centered(m.durations.pulse(r.electron, PI, 0.0), rc + opts.readout_tau)?;
    tl.detect_centered(r.electron, rc + 2.0 * opts.readout_tau, opts.readout_window)?;
    Ok(tl.build())
}

/// Single-exponential fit `A·exp(−t/T2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Decay rate 1/T2 (1/s); non-positive when the data do not decay.
    pub rate: f64,
    /// 1/rate, infinite when the data do not decay.
    pub t2: f64,
    pub amplitude: f64,
    /// Asymptote of the model; the log-linear fit pins it at zero.
    pub asymptote: f64,
    /// Euclidean norm of the linear-space residuals.
    pub residual: f64,
}

/// Least squares on log-amplitude; samples below 1e-12 of the largest are
/// clamped to that floor.
pub fn fit_exponential_decay(times: &[f64], amplitudes: &[f64]) -> Result<DecayFit> {
    if times.len() != amplitudes.len() {
        return Err(Error::Fit { message: "times and amplitudes differ in length".into(), residual: f64::NAN });
    }
    if times.len() < 4 {
        return Err(Error::Fit { message: format!("{} points, at least 4 needed", times.len()), residual: f64::NAN });
    }
    let max = amplitudes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) || amplitudes.iter().any(|a| !a.is_finite()) {
        return Err(Error::Fit { message: "amplitudes must be finite with a positive maximum".into(), residual: f64::NAN });
    }
    let floor = max * 1e-12;
    let ys: Vec<f64> = amplitudes.iter().map(|a| a.max(floor).ln()).collect();
    let n = times.len() as f64;
    let mt = times.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let stt: f64 = times.iter().map(|t| (t - mt).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::Fit { message: "all times are equal".into(), residual: f64::NAN });
    }
    let sty: f64 = times.iter().zip(&ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let slope = sty / stt;
    let amplitude = (my - slope * mt).exp();
    let rate = -slope;
    let residual = times
        .iter()
        .zip(amplitudes)
        .map(|(t, a)| (a - amplitude * (-rate * t).exp()).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(DecayFit {
        times: times.to_vec(),
        amplitudes: amplitudes.to_vec(),
        rate,
        t2: if rate > 0.0 { 1.0 / rate } else { f64::INFINITY },
        amplitude,
        asymptote: 0.0,
        residual,
    })
}

/// `offset + amplitude·cos(2π·frequency·t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    pub residual: f64,
}

fn linear_sinusoid(t: &[f64], y: &[f64], f: f64) -> Option<SinusoidFit> {
    let w = 2.0 * PI * f;
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for (&ti, &yi) in t.iter().zip(y) {
        let row = nalgebra::Vector3::new(1.0, (w * ti).cos(), (w * ti).sin());
        ata += row * row.transpose();
        aty += row * yi;
    }
    let x = ata.cholesky()?.solve(&aty);
    let residual = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| (yi - x[0] - x[1] * (w * ti).cos() - x[2] * (w * ti).sin()).powi(2))
        .sum::<f64>()
        .sqrt();
    Some(SinusoidFit { frequency: f, amplitude: x[1].hypot(x[2]), phase: (-x[2]).atan2(x[1]), offset: x[0], residual })
}

/// Fit a sinusoid with frequency in `[f_min, f_max]`: grid scan of the
/// linear least-squares residual followed by golden-section refinement.
pub fn fit_sinusoid(t: &[f64], y: &[f64], f_min: f64, f_max: f64) -> Result<SinusoidFit> {
    if t.len() != y.len() || t.len() < 5 {
        return Err(Error::Fit { message: "need at least 5 paired samples".into(), residual: f64::NAN });
    }
    if !(f_max > f_min && f_min > 0.0) {
        return Err(Error::Fit { message: "invalid frequency range".into(), residual: f64::NAN });
    }
    let res = |f: f64| linear_sinusoid(t, y, f).map_or(f64::INFINITY, |s| s.residual);
    let steps = 2000;
    let grid: Vec<f64> = (0..=steps).map(|k| f_min + (f_max - f_min) * k as f64 / steps as f64).collect();
    let best = (0..grid.len()).min_by(|&a, &b| res(grid[a]).total_cmp(&res(grid[b]))).unwrap_or(0);
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(steps)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let (a, b) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if res(a) < res(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    linear_sinusoid(t, y, (lo + hi) / 2.0).ok_or_else(|| Error::Fit { message: "degenerate sinusoid design".into(), residual: f64::NAN })
}

/// Complex area of the last detection window of the ensemble signal.
pub fn final_echo_area(sim: &Simulator, spec: &EnsembleSpec, seq: &Sequence) -> Result<C64> {
    let trace = sim.ensemble_signal(seq, spec)?;
    let k = trace.windows.len().checked_sub(1).ok_or_else(|| Error::Window("sequence has no detection".into()))?;
    trace.window_area(k)
}

/// Recovered echo magnitude against storage time, with an exponential fit.
pub fn measure_t2n(storage_times: &[f64], opts: &MemoryOptions, spec: &EnsembleSpec, sim: &Simulator) -> Result<DecayFit> {
    if storage_times.len() < 4 {
        return Err(Error::Fit { message: format!("{} storage times, at least 4 needed", storage_times.len()), residual: f64::NAN });
    }
    let amplitudes = storage_times
        .iter()
        .map(|&t| final_echo_area(sim, spec, &memory_write_read(0.0, t, opts)?).map(|a| a.norm()))
        .collect::<Result<Vec<f64>>>()?;
    fit_exponential_decay(storage_times, &amplitudes)
}
