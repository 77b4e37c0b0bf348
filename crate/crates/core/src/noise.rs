//! Ornstein–Uhlenbeck fluctuations of the nuclear detuning.
//!
//! The process `x(t)` (rad/s) has stationary standard deviation `rms` and
//! correlation time `τc`. Updates sample the exact joint Gaussian law of the
//! next value and of the accumulated phase `∫x dt`, so step size does not
//! affect the statistics.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuNoise {
    /// Stationary standard deviation σ (rad/s).
    pub rms: f64,
    /// Correlation time τc (s).
    pub correlation_time: f64,
}

impl OuNoise {
    pub fn new(rms: f64, correlation_time: f64) -> Result<Self> {
        let n = Self { rms, correlation_time };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rms >= 0.0) || !self.rms.is_finite() {
            return Err(Error::InvalidEnsemble(format!("noise rms {} must be non-negative", self.rms)));
        }
        if !(self.correlation_time > 0.0) || !self.correlation_time.is_finite() {
            return Err(Error::InvalidEnsemble(format!("correlation time {} must be positive", self.correlation_time)));
        }
        Ok(())
    }

    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.rms * rng.sample::<f64, _>(StandardNormal)
    }

    /// Advance by `dt` from `x`, returning the new value and ∫x dt.
    pub fn step<R: Rng + ?Sized>(&self, x: f64, dt: f64, rng: &mut R) -> (f64, f64) {
        if dt <= 0.0 {
            return (x, 0.0);
        }
        let tau = self.correlation_time;
        let s2 = self.rms * self.rms;
        let a = (-dt / tau).exp();
        let one_minus_a = -(-dt / tau).exp_m1();
        let var_x = s2 * one_minus_a * (1.0 + a);
        let var_phi = s2 * tau * tau * (2.0 * dt / tau - 3.0 + 4.0 * a - a * a).max(0.0);
        let cov = s2 * tau * one_minus_a * one_minus_a;
        let (z1, z2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        let sx = var_x.sqrt();
        let x1 = x * a + sx * z1;
        let mean_phi = x * tau * one_minus_a;
        let phi = if sx > 0.0 {
            let k = cov / sx;
            mean_phi + k * z1 + (var_phi - k * k).max(0.0).sqrt() * z2
        } else {
            mean_phi
        };
        (x1, phi)
    }

    /// Variance of the free-evolution phase over `t` for a stationary start.
    pub fn free_phase_variance(&self, t: f64) -> f64 {
        let tau = self.correlation_time;
        2.0 * self.rms * self.rms * tau * tau * (t / tau - 1.0 + (-t / tau).exp())
    }

    /// Variance of the refocused phase of a Hahn echo of total length `t`.
    pub fn hahn_phase_variance(&self, t: f64) -> f64 {
        let tau = self.correlation_time;
        let r = t / tau;
        2.0 * self.rms * self.rms * tau * tau * (r - 3.0 + 4.0 * (-r / 2.0).exp() - (-r).exp())
    }

    /// Noise whose Hahn echo of total length `t2` decays to 1/e.
    pub fn for_hahn_t2(t2: f64, correlation_time: f64) -> Result<Self> {
        let unit = Self { rms: 1.0, correlation_time };
        unit.validate()?;
        if !(t2 > 0.0) {
            return Err(Error::InvalidEnsemble("target T2 must be positive".into()));
        }
        Self::new((2.0 / unit.hahn_phase_variance(t2)).sqrt(), correlation_time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn variance(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    }

    #[test]
    fn hahn_calibration() {
        let n = OuNoise::for_hahn_t2(0.05, 0.01).unwrap();
        assert!((n.rms - 65.6).abs() < 0.1, "{}", n.rms);
        assert!((n.hahn_phase_variance(0.05) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stationarity_and_phase_statistics() {
        let n = OuNoise::new(50.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 20000;
        let (mut finals, mut free, mut hahn) = (Vec::new(), Vec::new(), Vec::new());
        let t = 0.03;
        for _ in 0..trials {
            let mut x = n.sample_stationary(&mut rng);
            // uneven steps: statistics must not depend on the grid
            let (x1, p1) = n.step(x, 0.004, &mut rng);
            let (x2, p2) = n.step(x1, t / 2.0 - 0.004, &mut rng);
            let (x3, p3) = n.step(x2, t / 2.0, &mut rng);
            x = x3;
            finals.push(x);
            free.push(p1 + p2 + p3);
            hahn.push(p3 - p1 - p2);
        }
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        assert!(rel(variance(&finals), 2500.0) < 0.04);
        assert!(rel(variance(&free), n.free_phase_variance(t)) < 0.04);
        assert!(rel(variance(&hahn), n.hahn_phase_variance(t)) < 0.04);
    }

    #[test]
    fn zero_step_and_validation() {
        let n = OuNoise::new(1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(n.step(0.3, 0.0, &mut rng), (0.3, 0.0));
        assert!(OuNoise::new(-1.0, 1.0).is_err());
        assert!(OuNoise::new(1.0, 0.0).is_err());
    }
}
