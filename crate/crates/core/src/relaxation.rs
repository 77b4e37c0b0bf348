//! Electron spin relaxation in Lindblad form.
//!
//! The simulator state lives in the rotating frame of the Ising Hamiltonian
//! `ωe·Sz − ωI·Iz + A·Sz·Iz`, where resonant pulses are static. Relaxation
//! is propagated in the Zeeman frame instead, where the generator
//!
//! ```text
//! dρ/dt = −i[A·Sz·Iz + δe·Sz − δn·Iz, ρ] + (γ/2)·D[S⁺]ρ + (γ/2)·D[S⁻]ρ + κ·D[Iz]ρ
//! ```
//!
//! is time independent. Transforming to the rotating frame reproduces the
//! `e^{±iAt}` cross-coupling of ρ13 and ρ24. The superoperator splits into
//! 1×1 and 2×2 blocks that are exponentiated in closed form.
//!
//! Superoperators act on row-major vectorized states, `k = 4·i + j`.

use std::f64::consts::LN_2;

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{
    build_static_hamiltonian, c, hyperfine_ising_diagonal, identity, iz, s_minus, s_plus,
    thermal_pseudopure_state, DensityMatrix, Detuning, Operator4, SystemParams, C64,
};

pub type Superoperator = SMatrix<C64, 16, 16>;

/// Frame in which a generator is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Rotating frame of the Ising Hamiltonian, high-temperature limit.
    #[default]
    RotatingIsing,
    /// Laboratory frame with finite thermal β. Intended for validation.
    Lab { full_hamiltonian: bool },
}

/// State the relaxation drives towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equilibrium {
    /// The deviation from the pseudopure thermal state relaxes:
    /// `ρ(t) = ρ_th + e^{Lt}(ρ(0) − ρ_th)`, so populations return to
    /// diag(½, 0, ½, 0).
    #[default]
    Pseudopure,
    /// Plain Lindblad evolution whose fixed point is set by the generator.
    Generator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladGenerator {
    gamma: f64,
    beta: f64,
    hyperfine: f64,
    frame: Frame,
    equilibrium: Equilibrium,
    nuclear_dephasing: f64,
    params: SystemParams,
    base: Superoperator,
    blocks: Vec<Vec<usize>>,
}

/// Build the generator for the given frame.
pub fn lindblad_generator(params: &SystemParams, frame: Frame) -> LindbladGenerator {
    LindbladGenerator::new(params, frame, Equilibrium::default(), None)
}

fn commutator_superop(h: &Operator4) -> Superoperator {
    let id = identity();
    (h.kronecker(&id) - id.kronecker(&h.transpose())) * C64::new(0.0, -1.0)
}

fn dissipator_superop(l: &Operator4) -> Superoperator {
    let id = identity();
    let ll = l.adjoint() * l;
    l.kronecker(&l.conjugate()) - (ll.kronecker(&id) + id.kronecker(&ll.transpose())) * c(0.5)
}

fn vectorize(m: &Operator4) -> SMatrix<C64, 16, 1> {
    SMatrix::from_fn(|k, _| m[(k / 4, k % 4)])
}

fn unvectorize(v: &SMatrix<C64, 16, 1>) -> Operator4 {
    Operator4::from_fn(|i, j| v[4 * i + j])
}

/// Connected components of the non-zero pattern of a superoperator.
fn block_structure(m: &Superoperator) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..16).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..16 {
        for j in 0..16 {
            if i != j && m[(i, j)] != c(0.0) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of = [usize::MAX; 16];
    for i in 0..16 {
        let r = find(&mut parent, i);
        if root_of[r] == usize::MAX {
            root_of[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_of[r]].push(i);
    }
    groups
}

/// exp of a 2×2 complex matrix M = m·I + N with N² = s²·I, written with
/// e^{m±s} so strongly damped blocks do not overflow.
fn expm2(m: [[C64; 2]; 2]) -> [[C64; 2]; 2] {
    let mean = (m[0][0] + m[1][1]) * 0.5;
    let n00 = m[0][0] - mean;
    let s = (n00 * n00 + m[0][1] * m[1][0]).sqrt();
    let (cosh, sinhc) = if s.norm() < 1e-6 {
        let e = mean.exp();
        let s2 = s * s;
        (e * (c(1.0) + s2 * 0.5), e * (c(1.0) + s2 / 6.0))
    } else {
        let (p, q) = ((mean + s).exp(), (mean - s).exp());
        ((p + q) * 0.5, (p - q) / (s * 2.0))
    };
    [
        [cosh + sinhc * n00, sinhc * m[0][1]],
        [sinhc * m[1][0], cosh - sinhc * n00],
    ]
}

impl LindbladGenerator {
    fn new(params: &SystemParams, frame: Frame, equilibrium: Equilibrium, dephasing_time: Option<f64>) -> Self {
        let gamma = params.relaxation_rate;
        let nuclear_dephasing = dephasing_time.map_or(0.0, |t| 2.0 / t);
        let mut base = Superoperator::zeros();
        match frame {
            Frame::RotatingIsing => {
                base += dissipator_superop(&s_plus()) * c(gamma / 2.0);
                base += dissipator_superop(&s_minus()) * c(gamma / 2.0);
                let a = hyperfine_ising_diagonal(params.hyperfine());
                for k in 0..16 {
                    base[(k, k)] += C64::new(0.0, -(a[k / 4] - a[k % 4]));
                }
            }
            Frame::Lab { full_hamiltonian } => {
                let h = build_static_hamiltonian(params);
                let h = if full_hamiltonian { h.full } else { h.ising };
                base += commutator_superop(&h);
                base += dissipator_superop(&s_plus()) * c(gamma / 2.0);
                base += dissipator_superop(&s_minus()) * c(gamma * (-params.thermal_beta).exp() / 2.0);
            }
        }
        if nuclear_dephasing > 0.0 {
            base += dissipator_superop(&iz()) * c(nuclear_dephasing);
        }
        let blocks = block_structure(&base);
        Self {
            gamma,
            beta: params.thermal_beta,
            hyperfine: params.hyperfine(),
            frame,
            equilibrium,
            nuclear_dephasing,
            params: *params,
            base,
            blocks,
        }
    }

    /// Add phenomenological pure nuclear dephasing with coherence time `t`.
    pub fn with_nuclear_dephasing(self, t: Option<f64>) -> Self {
        Self::new(&self.params, self.frame, self.equilibrium, t)
    }

    pub fn with_equilibrium(self, equilibrium: Equilibrium) -> Self {
        Self::new(&self.params, self.frame, equilibrium, self.nuclear_dephasing_time())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn equilibrium(&self) -> Equilibrium {
        self.equilibrium
    }

    pub fn nuclear_dephasing_time(&self) -> Option<f64> {
        (self.nuclear_dephasing > 0.0).then(|| 2.0 / self.nuclear_dephasing)
    }

    /// True when the generator has no dissipative part.
    pub fn is_unitary(&self) -> bool {
        self.gamma == 0.0 && self.nuclear_dephasing == 0.0
    }

    /// Full superoperator including the packet's free precession.
    pub fn superoperator(&self, detuning: &Detuning) -> Superoperator {
        self.base + commutator_superop(&detuning.hamiltonian())
    }

    fn equilibrium_state(&self) -> Operator4 {
        match self.equilibrium {
            Equilibrium::Pseudopure => thermal_pseudopure_state().into_matrix(),
            Equilibrium::Generator => Operator4::zeros(),
        }
    }

    /// Propagate a state expressed in the generator's own frame.
    pub fn propagate_in_frame(&self, rho: &Operator4, duration: f64, detuning: &Detuning) -> Operator4 {
        let eq = self.equilibrium_state();
        let v = vectorize(&(rho - eq));
        let out = match self.frame {
            Frame::Lab { .. } => (self.superoperator(detuning) * c(duration)).exp() * v,
            Frame::RotatingIsing => {
                let energies = detuning.level_energies();
                let diag = |k: usize| self.base[(k, k)] + C64::new(0.0, -(energies[k / 4] - energies[k % 4]));
                let mut out = SMatrix::<C64, 16, 1>::zeros();
                for block in &self.blocks {
                    match *block.as_slice() {
                        [k] => out[k] = (diag(k) * duration).exp() * v[k],
                        [i, j] => {
                            let e = expm2([
                                [diag(i) * duration, self.base[(i, j)] * duration],
                                [self.base[(j, i)] * duration, diag(j) * duration],
                            ]);
                            out[i] = e[0][0] * v[i] + e[0][1] * v[j];
                            out[j] = e[1][0] * v[i] + e[1][1] * v[j];
                        }
                        _ => return unvectorize(&((self.superoperator(detuning) * c(duration)).exp() * v)) + eq,
                    }
                }
                out
            }
        };
        unvectorize(&out) + eq
    }

    /// Propagate a rotating-frame state from `start_time` for `duration`.
    /// Lab-frame generators ignore `start_time`.
    ///
    /// Uncoupled elements are advanced with their rotating-frame rates so
    /// large hyperfine phases never enter; only the ρ13/ρ24 pairs pick up the
    /// explicit `e^{±iA·t}` frame factor.
    pub fn propagate(&self, rho: &Operator4, start_time: f64, duration: f64, detuning: &Detuning) -> Operator4 {
        if let Frame::Lab { .. } = self.frame {
            return self.propagate_in_frame(rho, duration, detuning);
        }
        let eq = self.equilibrium_state();
        let v = vectorize(&(rho - eq));
        let energies = detuning.level_energies();
        let hf = hyperfine_ising_diagonal(self.hyperfine);
        let alpha = |k: usize| hf[k / 4] - hf[k % 4];
        let diag = |k: usize| self.base[(k, k)] + C64::new(0.0, -(energies[k / 4] - energies[k % 4]));
        let mut out = SMatrix::<C64, 16, 1>::zeros();
        for block in &self.blocks {
            match *block.as_slice() {
                [k] => out[k] = ((diag(k) + C64::new(0.0, alpha(k))) * duration).exp() * v[k],
                [i, j] => {
                    let e = expm2([
                        [diag(i) * duration, self.base[(i, j)] * duration],
                        [self.base[(j, i)] * duration, diag(j) * duration],
                    ]);
                    let (pi, pj) = (C64::from_polar(1.0, alpha(i) * duration), C64::from_polar(1.0, alpha(j) * duration));
                    let cross = C64::from_polar(1.0, (alpha(i) - alpha(j)) * start_time);
                    out[i] = e[0][0] * pi * v[i] + e[0][1] * pi * cross * v[j];
                    out[j] = e[1][0] * pj * cross.conj() * v[i] + e[1][1] * pj * v[j];
                }
                _ => {
                    let z = rotating_to_zeeman(rho, self.hyperfine, start_time);
                    let z = self.propagate_in_frame(&z, duration, detuning);
                    return zeeman_to_rotating(&z, self.hyperfine, start_time + duration);
                }
            }
        }
        unvectorize(&out) + eq
    }
}

fn hyperfine_phase_conjugation(rho: &Operator4, a: f64, t: f64, sign: f64) -> Operator4 {
    let d = hyperfine_ising_diagonal(a);
    Operator4::from_fn(|i, j| rho[(i, j)] * C64::from_polar(1.0, sign * (d[j] - d[i]) * t))
}

/// ρ_Z = R ρ_rot R† with R = exp(−i·A·Sz·Iz·t).
pub fn rotating_to_zeeman(rho: &Operator4, hyperfine: f64, t: f64) -> Operator4 {
    hyperfine_phase_conjugation(rho, hyperfine, t, 1.0)
}

pub fn zeeman_to_rotating(rho: &Operator4, hyperfine: f64, t: f64) -> Operator4 {
    hyperfine_phase_conjugation(rho, hyperfine, t, -1.0)
}

/// Rotating-frame state from a lab-frame one: e^{iH0t} ρ e^{−iH0t} with the
/// Ising H0.
pub fn lab_to_rotating(rho: &Operator4, params: &SystemParams, t: f64) -> Operator4 {
    let h = build_static_hamiltonian(params).ising;
    Operator4::from_fn(|i, j| rho[(i, j)] * C64::from_polar(1.0, (h[(i, i)].re - h[(j, j)].re) * t))
}

pub fn rotating_to_lab(rho: &Operator4, params: &SystemParams, t: f64) -> Operator4 {
    lab_to_rotating(rho, params, -t)
}

/// Propagate a validated state.
pub fn evolve(
    state: &DensityMatrix,
    start_time: f64,
    duration: f64,
    detuning: &Detuning,
    generator: &LindbladGenerator,
) -> Result<DensityMatrix> {
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::NegativeDuration(duration));
    }
    let out = generator.propagate(state.matrix(), start_time, duration, detuning);
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// Closed-form rates of the relaxation model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticRates {
    /// 1/γ (infinite for γ = 0).
    pub t1e: f64,
    /// 2/γ, valid while A ≫ γ.
    pub t2n: f64,
    /// λ± = (−γ ± √(γ² − A²))/2 of the coupled ρ31, ρ42 pair.
    pub eigenvalues: [C64; 2],
    /// False when A ≤ γ: the eigenvalues then have unequal real parts and
    /// T2n = 2·T1e no longer holds.
    pub hyperfine_dominated: bool,
}

pub fn analytic_rates(params: &SystemParams) -> Result<AnalyticRates> {
    let (g, a) = (params.relaxation_rate, params.hyperfine());
    if !(g >= 0.0) || !(a >= 0.0) {
        return Err(Error::InvalidParams("rates require γ ≥ 0 and A ≥ 0".into()));
    }
    let root = c(g * g - a * a).sqrt();
    Ok(AnalyticRates {
        t1e: 1.0 / g,
        t2n: 2.0 / g,
        eigenvalues: [(c(-g) + root) * 0.5, (c(-g) - root) * 0.5],
        hyperfine_dominated: a > g,
    })
}

/// Wait after an electron π pulse that equalizes the electron populations.
pub fn identity_preparation_wait(gamma: f64) -> f64 {
    LN_2 / gamma
}
