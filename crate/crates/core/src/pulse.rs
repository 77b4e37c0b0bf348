//! Transition-selective microwave and rf pulses.
//!
//! A pulse of phase φ on the pair (a, b) rotates the fictitious spin-½ of
//! that pair about the axis `(cos(φ+π/2), sin(φ+π/2), 0)` with the rotation
//! sense of its channel (see [`Channel::rotation_sense`]). A phase-0 π/2
//! pulse on thermal polarization therefore produces the `+x` Bloch vector,
//! i.e. a coherence `ρ[a,b] = 1/4` on the pseudopure state.
//!
//! A source detuned by `offset_hz` from its transition keeps a continuous
//! phase reference: its phase at time `t` is `φ + 2π·offset·t`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{c, Channel, Detuning, Operator4, Transition, C64};

/// Composite replacement applied to a pulse at execution time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositeScheme {
    #[default]
    None,
    /// Wimperis broadband sequence θ(φ) π(φ+φ1) 2π(φ+3φ1) π(φ+φ1).
    Bb1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub transition: Transition,
    /// Nominal rotation angle (rad).
    pub angle: f64,
    /// Phase at sequence time zero (rad).
    pub phase: f64,
    /// Seconds; zero means an instantaneous ideal rotation.
    pub duration: f64,
    /// Intentional detuning of the source from the transition (Hz).
    pub offset_hz: f64,
    pub composite: CompositeScheme,
    /// Per-pulse fractional angle error overriding the channel default.
    pub angle_error: Option<f64>,
}

impl Pulse {
    pub fn new(transition: Transition, angle: f64, phase: f64) -> Self {
        Self {
            transition,
            angle,
            phase,
            duration: 0.0,
            offset_hz: 0.0,
            composite: CompositeScheme::None,
            angle_error: None,
        }
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn with_offset(mut self, offset_hz: f64) -> Self {
        self.offset_hz = offset_hz;
        self
    }

    pub fn with_composite(mut self, scheme: CompositeScheme) -> Self {
        self.composite = scheme;
        self
    }

    pub fn with_angle_error(mut self, eps: f64) -> Self {
        self.angle_error = Some(eps);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.transition.is_drivable() {
            return Err(Error::InvalidPulse(format!("transition {} cannot be driven", self.transition)));
        }
        if !(self.angle > 0.0 && self.angle <= 4.0 * PI + 1e-12) {
            return Err(Error::InvalidPulse(format!("angle {} outside (0, 4π]", self.angle)));
        }
        if !self.phase.is_finite() || !self.offset_hz.is_finite() {
            return Err(Error::InvalidPulse("non-finite phase or offset".into()));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(Error::NegativeDuration(self.duration));
        }
        if let Some(e) = self.angle_error {
            if !(e.abs() < 1.0) {
                return Err(Error::InvalidPulse(format!("angle error {e} must satisfy |ε| < 1")));
            }
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.duration == 0.0
    }

    /// Rabi frequency ω1 = θ/duration (rad/s); `None` for ideal pulses.
    pub fn rabi_frequency(&self) -> Option<f64> {
        (self.duration > 0.0).then(|| self.angle / self.duration)
    }

    /// Wall-clock length including composite expansion.
    pub fn total_duration(&self) -> f64 {
        match self.composite {
            CompositeScheme::None => self.duration,
            CompositeScheme::Bb1 => self.duration * (self.angle + 4.0 * PI) / self.angle,
        }
    }

    pub fn phase_at(&self, time: f64) -> f64 {
        self.phase + 2.0 * PI * self.offset_hz * time
    }
}

/// Per-channel systematic angle errors plus optional phase jitter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorModel {
    /// Fractional over-rotation of microwave pulses.
    #[serde(default)]
    pub mw: f64,
    /// Fractional over-rotation of rf pulses.
    #[serde(default)]
    pub rf: f64,
    /// RMS phase jitter (rad).
    #[serde(default)]
    pub phase_jitter: f64,
}

impl ErrorModel {
    pub fn uniform(eps: f64) -> Self {
        Self { mw: eps, rf: eps, phase_jitter: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.mw == 0.0 && self.rf == 0.0 && self.phase_jitter == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mw.abs() < 1.0 && self.rf.abs() < 1.0) {
            return Err(Error::InvalidPulse("angle errors must satisfy |ε| < 1".into()));
        }
        if !(self.phase_jitter >= 0.0) || !self.phase_jitter.is_finite() {
            return Err(Error::InvalidPulse("phase jitter must be non-negative".into()));
        }
        Ok(())
    }

    pub fn angle_error(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Mw => self.mw,
            Channel::Rf => self.rf,
            Channel::MultiQuantum => 0.0,
        }
    }
}

/// θ' = θ(1+ε) with ε from the pulse override or its channel, and the phase
/// perturbed by one jitter draw. The duration is kept, so the error acts as
/// a drive-amplitude miscalibration.
pub fn apply_error_model<R: Rng + ?Sized>(p: &Pulse, e: &ErrorModel, rng: &mut R) -> Pulse {
    let eps = p.angle_error.unwrap_or_else(|| e.angle_error(p.transition.channel()));
    let mut out = *p;
    out.angle = p.angle * (1.0 + eps);
    out.angle_error = None;
    if e.phase_jitter > 0.0 {
        let normal = Normal::new(0.0, e.phase_jitter).expect("finite jitter");
        out.phase += normal.sample(rng);
    }
    out
}

/// BB1 correction phase φ1 = arccos(−θ/4π).
pub fn bb1_phase(theta: f64) -> f64 {
    (-theta / (4.0 * PI)).acos()
}

/// Expand a pulse according to its composite scheme. Sub-pulses keep the
/// Rabi frequency of the parent, so their durations scale with angle.
pub fn expand_composite(p: &Pulse) -> Vec<Pulse> {
    match p.composite {
        CompositeScheme::None => vec![*p],
        CompositeScheme::Bb1 => {
            let phi1 = bb1_phase(p.angle);
            let per_radian = p.duration / p.angle;
            [(p.angle, 0.0), (PI, phi1), (2.0 * PI, 3.0 * phi1), (PI, phi1)]
                .into_iter()
                .map(|(angle, shift)| Pulse {
                    angle,
                    phase: p.phase + shift,
                    duration: per_radian * angle,
                    composite: CompositeScheme::None,
                    ..*p
                })
                .collect()
        }
    }
}

fn embed(t: &Transition, sub: &Matrix2<C64>, outside: [C64; 4]) -> Operator4 {
    let (a, b) = t.indices();
    let mut u = Operator4::from_diagonal(&outside.into());
    u[(a, a)] = sub[(0, 0)];
    u[(a, b)] = sub[(0, 1)];
    u[(b, a)] = sub[(1, 0)];
    u[(b, b)] = sub[(1, 1)];
    u
}

/// n·σ for the in-plane drive axis of phase φ.
fn drive_axis(phase: f64) -> Matrix2<C64> {
    let e = C64::from_polar(1.0, phase + FRAC_PI_2);
    Matrix2::new(c(0.0), e.conj(), e, c(0.0))
}

/// Instantaneous rotation by `angle` with the given phase on a transition.
pub fn rotation(t: &Transition, angle: f64, phase: f64) -> Operator4 {
    let s = t.channel().rotation_sense();
    let half = angle / 2.0;
    let sub = Matrix2::identity() * c(half.cos()) - drive_axis(phase) * C64::new(0.0, s * half.sin());
    embed(t, &sub, [c(1.0); 4])
}

/// exp(−iθ(n·σ)/2) on the pulse's transition, using its phase at time zero.
pub fn ideal_pulse_propagator(p: &Pulse) -> Operator4 {
    rotation(&p.transition, p.angle, p.phase)
}

/// Exact propagator of a rectangular pulse starting at `start_time`.
///
/// Inside the addressed pair the packet sees `δ·σz/2 + ω1·(n·σ)/2` with
/// δ = E_a − E_b of its free Hamiltonian, and the source phase sweeps at
/// the carrier offset. The remaining levels precess freely. Only the
/// addressed pair is driven.
pub fn finite_pulse_propagator(p: &Pulse, detuning: &Detuning, start_time: f64) -> Operator4 {
    let tau = p.duration;
    let energies = detuning.level_energies();
    let outside: [C64; 4] = std::array::from_fn(|k| C64::from_polar(1.0, -energies[k] * tau));
    let (a, b) = p.transition.indices();
    let w_off = 2.0 * PI * p.offset_hz;
    let e0 = (energies[a] + energies[b]) / 2.0;
    let hz = (energies[a] - energies[b] - w_off) / 2.0;
    let s = p.transition.channel().rotation_sense();
    let w1 = p.angle / tau;
    let axis = p.phase_at(start_time) + FRAC_PI_2;
    let (hx, hy) = (s * w1 / 2.0 * axis.cos(), s * w1 / 2.0 * axis.sin());
    let h = (hx * hx + hy * hy + hz * hz).sqrt();
    let (cos, sinc) = ((h * tau).cos(), if h == 0.0 { tau } else { (h * tau).sin() / h });
    let i = C64::new(0.0, 1.0);
    let moving = Matrix2::new(
        c(cos) - i * sinc * hz,
        -i * sinc * C64::new(hx, -hy),
        -i * sinc * C64::new(hx, hy),
        c(cos) + i * sinc * hz,
    ) * C64::from_polar(1.0, -e0 * tau);
    let frame = Matrix2::new(C64::from_polar(1.0, -w_off * tau / 2.0), c(0.0), c(0.0), C64::from_polar(1.0, w_off * tau / 2.0));
    embed(&p.transition, &(frame * moving), outside)
}

/// Propagator for either kind of pulse at the given start time.
pub fn pulse_propagator(p: &Pulse, detuning: &Detuning, start_time: f64) -> Operator4 {
    if p.is_ideal() {
        rotation(&p.transition, p.angle, p.phase_at(start_time))
    } else {
        finite_pulse_propagator(p, detuning, start_time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{subspace_z_rotation, thermal_pseudopure_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn is_unitary(u: &Operator4) -> bool {
        (u * u.adjoint() - Operator4::identity()).camax() < 1e-12
    }

    /// Independent route: brute-force exponential of the 4×4 generator.
    fn expm_generator(t: &Transition, angle: f64, phase: f64) -> Operator4 {
        let s = t.channel().rotation_sense();
        let (a, b) = t.indices();
        let mut g = Operator4::zeros();
        let e = C64::from_polar(1.0, phase + FRAC_PI_2);
        g[(a, b)] = e.conj();
        g[(b, a)] = e;
        (g * C64::new(0.0, -s * angle / 2.0)).exp()
    }

    #[test]
    fn rotation_matches_matrix_exponential() {
        for t in [Transition::mw(1, 2), Transition::mw(3, 4), Transition::rf(1, 3), Transition::rf(2, 4)] {
            for (angle, phase) in [(PI, 0.0), (FRAC_PI_2, 1.1), (0.37, -2.0), (4.0 * PI, 0.5)] {
                let u = rotation(&t, angle, phase);
                assert!(is_unitary(&u));
                assert!((u - expm_generator(&t, angle, phase)).camax() < 1e-12);
            }
        }
    }

    #[test]
    fn half_pi_on_thermal_state_gives_literal_coherence() {
        let phi = 0.83;
        let p = Pulse::new(Transition::mw(1, 2), FRAC_PI_2, phi);
        let rho = thermal_pseudopure_state().transform(&ideal_pulse_propagator(&p));
        let m = rho.matrix();
        assert!((m[(0, 1)] - C64::from_polar(0.25, -phi)).norm() < 1e-15);
        assert!((m[(1, 0)] - C64::from_polar(0.25, phi)).norm() < 1e-15);
        assert!((m[(0, 0)].re - 0.25).abs() < 1e-15 && (m[(1, 1)].re - 0.25).abs() < 1e-15);
        assert!((m[(2, 2)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn full_turn_is_identity_up_to_sign() {
        let t = Transition::mw(1, 2);
        let u = rotation(&t, 2.0 * PI, 0.4);
        let rho = thermal_pseudopure_state().transform(&rotation(&t, FRAC_PI_2, 0.0));
        assert!((rho.transform(&u).matrix() - rho.matrix()).camax() < 1e-15);
        assert!((u[(0, 0)] + c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn two_pi_pulses_restore_populations() {
        let t = Transition::rf(1, 3);
        let u = rotation(&t, PI, 0.3) * rotation(&t, PI, 0.3);
        let rho = thermal_pseudopure_state().transform(&rotation(&Transition::mw(1, 2), PI, 0.0));
        let out = rho.transform(&u);
        for k in 0..4 {
            assert!((out.get(k, k) - rho.get(k, k)).norm() < 1e-15);
        }
    }

    #[test]
    fn disjoint_pulses_commute() {
        let u = rotation(&Transition::mw(1, 2), 1.0, 0.2);
        let v = rotation(&Transition::mw(3, 4), 2.0, -0.7);
        assert!((u * v - v * u).camax() < 1e-15);
    }

    #[test]
    fn phase_covariance() {
        let t = Transition::mw(3, 4);
        let (angle, phase, shift) = (1.3, 0.4, 0.9);
        let z = subspace_z_rotation(&t, shift);
        let lhs = z * rotation(&t, angle, phase) * z.adjoint();
        assert!((lhs - rotation(&t, angle, phase + shift)).camax() < 1e-14);
    }

    #[test]
    fn finite_pulse_on_resonance_equals_ideal() {
        for t in [Transition::mw(1, 2), Transition::rf(2, 4)] {
            let p = Pulse::new(t, PI, 0.7).with_duration(1.4e-6);
            let u = finite_pulse_propagator(&p, &Detuning::default(), 0.0);
            assert!(is_unitary(&u));
            assert!((u - ideal_pulse_propagator(&p)).camax() < 1e-12);
        }
    }

    #[test]
    fn finite_pulse_generalized_rabi() {
        let t = Transition::mw(1, 2);
        let p = Pulse::new(t, PI, 0.0).with_duration(1e-6);
        let w1 = p.rabi_frequency().unwrap();
        let u = finite_pulse_propagator(&p, &Detuning::new(w1, 0.0), 0.0);
        let transfer = u[(1, 0)].norm_sqr();
        let expected = 0.5 * (PI / 2f64.sqrt()).sin().powi(2);
        assert!((transfer - expected).abs() < 1e-12, "{transfer} vs {expected}");
    }

    #[test]
    fn long_microwave_pulse_is_imperfect_at_inhomogeneous_detuning() {
        let p = Pulse::new(Transition::mw(1, 2), PI, 0.0).with_duration(1400e-9);
        let u = finite_pulse_propagator(&p, &Detuning::new(2.0 * PI * 250e3, 0.0), 0.0);
        let transfer = u[(1, 0)].norm_sqr();
        assert!(transfer < 0.95, "transfer {transfer}");
    }

    #[test]
    fn finite_pulse_matches_brute_force_with_offset_and_detuning() {
        let t = Transition::rf(1, 3);
        let p = Pulse::new(t, PI, 0.3).with_duration(20e-6).with_offset(7e3);
        let det = Detuning::new(1.0e5, 3.0e4);
        let t0 = 13e-6;
        let u = finite_pulse_propagator(&p, &det, t0);
        // integrate the time-dependent Hamiltonian with fine piecewise steps
        let steps = 4000;
        let dt = p.duration / steps as f64;
        let mut v = Operator4::identity();
        let (a, b) = t.indices();
        let w1 = p.rabi_frequency().unwrap();
        let s = t.channel().rotation_sense();
        for k in 0..steps {
            let tm = t0 + (k as f64 + 0.5) * dt;
            let mut h = det.hamiltonian();
            let e = C64::from_polar(1.0, p.phase_at(tm) + FRAC_PI_2);
            h[(a, b)] += e.conj() * (s * w1 / 2.0);
            h[(b, a)] += e * (s * w1 / 2.0);
            v = (h * C64::new(0.0, -dt)).exp() * v;
        }
        assert!((u - v).camax() < 1e-6, "{}", (u - v).camax());
    }

    #[test]
    fn error_model_scales_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Pulse::new(Transition::mw(1, 2), PI, 0.1);
        assert_eq!(apply_error_model(&p, &ErrorModel::default(), &mut rng), p);
        let over = apply_error_model(&p, &ErrorModel::uniform(0.05), &mut rng);
        assert!((over.angle - 1.05 * PI).abs() < 1e-15);
        let under = apply_error_model(&p, &ErrorModel::uniform(-0.05), &mut rng);
        assert!((under.angle - 0.95 * PI).abs() < 1e-15);
        let rf = Pulse::new(Transition::rf(1, 3), PI, 0.0);
        let only_mw = ErrorModel { mw: 0.05, rf: 0.0, phase_jitter: 0.0 };
        assert_eq!(apply_error_model(&rf, &only_mw, &mut rng).angle, PI);
        let overridden = apply_error_model(&p.with_angle_error(-0.1), &only_mw, &mut rng);
        assert!((overridden.angle - 0.9 * PI).abs() < 1e-15);
    }

    #[test]
    fn phase_jitter_is_seeded() {
        let p = Pulse::new(Transition::mw(1, 2), PI, 0.0);
        let e = ErrorModel { mw: 0.0, rf: 0.0, phase_jitter: 0.01 };
        let a = apply_error_model(&p, &e, &mut ChaCha8Rng::seed_from_u64(9));
        let b = apply_error_model(&p, &e, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.phase != 0.0 && a.phase.abs() < 0.1);
    }

    fn composite_unitary(p: &Pulse, eps: f64) -> Operator4 {
        expand_composite(p).iter().fold(Operator4::identity(), |acc, q| rotation(&q.transition, q.angle * (1.0 + eps), q.phase) * acc)
    }

    fn inversion_error(u: &Operator4) -> f64 {
        1.0 - u[(1, 0)].norm_sqr()
    }

    fn gate_infidelity(u: &Operator4, target: &Operator4) -> f64 {
        let overlap = (target.adjoint() * u).fixed_view::<2, 2>(0, 0).trace() / 2.0;
        1.0 - overlap.norm_sqr()
    }

    #[test]
    fn bb1_phase_for_pi() {
        assert!((bb1_phase(PI) - (-0.25f64).acos()).abs() < 1e-15);
        assert!((bb1_phase(PI) - 1.8235).abs() < 1e-4);
    }

    #[test]
    fn bb1_is_exact_without_error() {
        for t in [Transition::mw(1, 2), Transition::rf(1, 3)] {
            for angle in [FRAC_PI_2, PI] {
                let p = Pulse::new(t, angle, 0.6).with_composite(CompositeScheme::Bb1).with_duration(1e-6);
                let parts = expand_composite(&p);
                assert_eq!(parts.len(), 4);
                let total: f64 = parts.iter().map(|q| q.duration).sum();
                assert!((total - p.total_duration()).abs() < 1e-18);
                let u = composite_unitary(&p, 0.0);
                assert!((u - ideal_pulse_propagator(&p)).camax() < 1e-10);
            }
        }
    }

    #[test]
    fn bb1_suppresses_inversion_error() {
        let plain = Pulse::new(Transition::mw(1, 2), PI, 0.0);
        let bb1 = plain.with_composite(CompositeScheme::Bb1);
        let e_plain = inversion_error(&composite_unitary(&plain, 0.05));
        let e_bb1 = inversion_error(&composite_unitary(&bb1, 0.05));
        assert!((e_plain - (0.025 * PI).sin().powi(2)).abs() < 1e-12);
        assert!(e_bb1 / e_plain < 1e-2, "ratio {}", e_bb1 / e_plain);
    }

    #[test]
    fn bb1_flatness_order() {
        let plain = Pulse::new(Transition::mw(1, 2), PI, 0.0);
        let bb1 = plain.with_composite(CompositeScheme::Bb1);
        let target = ideal_pulse_propagator(&plain);
        let ratio = |p: &Pulse| gate_infidelity(&composite_unitary(p, 0.04), &target) / gate_infidelity(&composite_unitary(p, 0.02), &target);
        let r_plain = ratio(&plain);
        let r_bb1 = ratio(&bb1);
        // ε² scaling gives 4, ε⁶ gives 64
        assert!((r_plain - 4.0).abs() < 0.1, "{r_plain}");
        assert!(r_bb1 > 50.0 && r_bb1 < 70.0, "{r_bb1}");
    }

    #[test]
    fn validation() {
        let t = Transition::mw(1, 2);
        assert!(Pulse::new(t, 0.0, 0.0).validate().is_err());
        assert!(Pulse::new(t, 5.0 * PI, 0.0).validate().is_err());
        assert!(Pulse::new(t, PI, 0.0).with_duration(-1.0).validate().is_err());
        assert!(Pulse::new(Transition::from_levels(1, 4).unwrap(), PI, 0.0).validate().is_err());
        assert!(Pulse::new(t, PI, 0.0).with_angle_error(1.5).validate().is_err());
        Pulse::new(t, 4.0 * PI, 0.0).validate().unwrap();
    }
}
