//! Four-level electron ⊗ nuclear spin space of a ³¹P donor.
//!
//! Basis ordering is fixed everywhere to
//! `|1> = (↑e, ↑n)`, `|2> = (↓e, ↑n)`, `|3> = (↑e, ↓n)`, `|4> = (↓e, ↓n)`,
//! i.e. `(m_S, m_I) = (½,½), (−½,½), (½,−½), (−½,−½)`. Matrix indices are
//! zero based in code; level labels (1..=4) are one based.
//!
//! All operators are in angular-frequency units. Configuration values are
//! ordinary frequencies in Hz and are converted with [`hz_to_angular`].

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;

/// 4×4 complex operator on the electron ⊗ nuclear space.
pub type Operator4 = Matrix4<C64>;

pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const NUCLEAR_MAGNETON: f64 = 5.050_783_746_1e-27;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Electron g-factor of the phosphorus donor.
pub const G_ELECTRON_SIP: f64 = 1.9987;
/// Nuclear g-factor of ³¹P.
pub const G_NUCLEAR_P31: f64 = 2.2632;
/// Isotropic hyperfine coupling of Si:P in Hz.
pub const HYPERFINE_SIP_HZ: f64 = 117.0e6;

pub fn hz_to_angular(f: f64) -> f64 {
    2.0 * PI * f
}

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Electron spin projection of each basis level.
pub const ELECTRON_M: [f64; 4] = [0.5, -0.5, 0.5, -0.5];
/// Nuclear spin projection of each basis level.
pub const NUCLEAR_M: [f64; 4] = [0.5, 0.5, -0.5, -0.5];

/// Raw field inputs from which the Zeeman frequencies can be derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldInputs {
    pub g_electron: f64,
    pub g_nuclear: f64,
    pub field_tesla: f64,
}

impl FieldInputs {
    pub fn electron_zeeman_hz(&self) -> f64 {
        self.g_electron * BOHR_MAGNETON * self.field_tesla / HBAR / (2.0 * PI)
    }

    pub fn nuclear_zeeman_hz(&self) -> f64 {
        self.g_nuclear * NUCLEAR_MAGNETON * self.field_tesla / HBAR / (2.0 * PI)
    }
}

/// Physical constants of the donor system.
///
/// Frequencies are ordinary frequencies (Hz); `relaxation_rate` is the
/// electron relaxation rate γ in 1/s (so that `T1e = 1/γ`).
/// `thermal_beta` is the signed ratio of electron Zeeman energy to kT and is
/// only used by the lab-frame relaxation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemParams {
    pub electron_zeeman_hz: f64,
    pub nuclear_zeeman_hz: f64,
    pub hyperfine_hz: f64,
    pub relaxation_rate: f64,
    #[serde(default)]
    pub thermal_beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldInputs>,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::si_p()
    }
}

impl SystemParams {
    /// X-band Si:P at 0.3468 T with γ = 1 s⁻¹ (T1e = 1 s).
    pub fn si_p() -> Self {
        Self::from_field(G_ELECTRON_SIP, G_NUCLEAR_P31, 0.3468, HYPERFINE_SIP_HZ, 1.0)
    }

    pub fn from_field(g: f64, g_nuclear: f64, field_tesla: f64, hyperfine_hz: f64, gamma: f64) -> Self {
        let field = FieldInputs { g_electron: g, g_nuclear, field_tesla };
        Self {
            electron_zeeman_hz: field.electron_zeeman_hz(),
            nuclear_zeeman_hz: field.nuclear_zeeman_hz(),
            hyperfine_hz,
            relaxation_rate: gamma,
            thermal_beta: 0.0,
            field: Some(field),
        }
    }

    pub fn with_relaxation_rate(mut self, gamma: f64) -> Self {
        self.relaxation_rate = gamma;
        self
    }

    pub fn with_hyperfine_hz(mut self, a: f64) -> Self {
        self.hyperfine_hz = a;
        self
    }

    pub fn with_thermal_beta(mut self, beta: f64) -> Self {
        self.thermal_beta = beta;
        self
    }

    /// Signed β = −g μB B0 / kT for a given temperature.
    pub fn thermal_beta_at(&self, temperature_k: f64) -> f64 {
        -(HBAR * hz_to_angular(self.electron_zeeman_hz)) / (BOLTZMANN * temperature_k)
    }

    pub fn omega_e(&self) -> f64 {
        hz_to_angular(self.electron_zeeman_hz)
    }

    pub fn omega_i(&self) -> f64 {
        hz_to_angular(self.nuclear_zeeman_hz)
    }

    pub fn hyperfine(&self) -> f64 {
        hz_to_angular(self.hyperfine_hz)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.hyperfine_hz > 0.0) || !self.hyperfine_hz.is_finite() {
            return bad("hyperfine coupling must be positive");
        }
        if !(self.relaxation_rate >= 0.0) || !self.relaxation_rate.is_finite() {
            return bad("relaxation rate must be non-negative");
        }
        if !(self.nuclear_zeeman_hz >= 0.0) || !(self.electron_zeeman_hz > self.nuclear_zeeman_hz) {
            return bad("Zeeman frequencies must satisfy ωe > ωI ≥ 0");
        }
        if !self.thermal_beta.is_finite() {
            return bad("thermal beta must be finite");
        }
        if let Some(f) = &self.field {
            let rel = |x: f64, y: f64| ((x - y) / y).abs();
            if rel(self.electron_zeeman_hz, f.electron_zeeman_hz()) > 1e-12
                || rel(self.nuclear_zeeman_hz, f.nuclear_zeeman_hz()) > 1e-12
            {
                return bad("Zeeman frequencies inconsistent with g, g_I and B0");
            }
        }
        Ok(())
    }
}

/// Radiation channel addressing a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// Microwave: flips the electron, nuclear projection unchanged.
    Mw,
    /// Radiofrequency: flips the nucleus, electron projection unchanged.
    Rf,
    /// Zero- or double-quantum pair (1-4, 2-3); not drivable.
    MultiQuantum,
}

impl Channel {
    /// Sense of rotation of a pulse on this channel.
    ///
    /// The nuclear Zeeman term enters with opposite sign (−ωI·Iz), so rf
    /// rotations run in the opposite sense to microwave rotations. With this
    /// choice the phase bookkeeping of the write/read algebra comes out with
    /// the coherence phases `exp(−iφe)` and `exp(i(φe−φrf−φmw))` exactly.
    pub fn rotation_sense(self) -> f64 {
        match self {
            Channel::Rf => -1.0,
            _ => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Mw => "mw",
            Channel::Rf => "rf",
            Channel::MultiQuantum => "mq",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An ordered pair of basis levels together with the channel that drives it.
///
/// Levels are stored with the spin-up member first (`upper < lower` as
/// labels), so `1-2`, `3-4` are electron transitions and `1-3`, `2-4`
/// nuclear ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    a: u8,
    b: u8,
    channel: Channel,
}

impl Transition {
    /// Classify a level pair. Order of the labels does not matter.
    pub fn from_levels(a: u8, b: u8) -> Result<Self> {
        if !(1..=4).contains(&a) || !(1..=4).contains(&b) || a == b {
            return Err(Error::InvalidTransition { a, b, channel: "any".into() });
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let channel = match (a, b) {
            (1, 2) | (3, 4) => Channel::Mw,
            (1, 3) | (2, 4) => Channel::Rf,
            _ => Channel::MultiQuantum,
        };
        Ok(Self { a, b, channel })
    }

    /// A transition that must be addressable on `channel`.
    pub fn new(channel: Channel, a: u8, b: u8) -> Result<Self> {
        let t = Self::from_levels(a, b)?;
        if t.channel != channel {
            return Err(Error::InvalidTransition { a, b, channel: channel.to_string() });
        }
        Ok(t)
    }

    pub fn mw(a: u8, b: u8) -> Self {
        Self::new(Channel::Mw, a, b).expect("not a microwave transition")
    }

    pub fn rf(a: u8, b: u8) -> Self {
        Self::new(Channel::Rf, a, b).expect("not an rf transition")
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    /// Level labels (1-based), spin-up member first.
    pub fn levels(&self) -> (u8, u8) {
        (self.a, self.b)
    }

    /// Zero-based matrix indices.
    pub fn indices(&self) -> (usize, usize) {
        (self.a as usize - 1, self.b as usize - 1)
    }

    pub fn is_drivable(&self) -> bool {
        self.channel != Channel::MultiQuantum
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.a, self.b)
    }
}

fn diag(d: [f64; 4]) -> Operator4 {
    Operator4::from_diagonal(&nalgebra::Vector4::new(c(d[0]), c(d[1]), c(d[2]), c(d[3])))
}

pub fn identity() -> Operator4 {
    Operator4::identity()
}

pub fn sz() -> Operator4 {
    diag(ELECTRON_M)
}

pub fn iz() -> Operator4 {
    diag(NUCLEAR_M)
}

/// Electron raising operator S⁺ = |1><2| + |3><4|.
pub fn s_plus() -> Operator4 {
    let mut m = Operator4::zeros();
    m[(0, 1)] = c(1.0);
    m[(2, 3)] = c(1.0);
    m
}

pub fn s_minus() -> Operator4 {
    s_plus().adjoint()
}

/// Nuclear raising operator I⁺ = |1><3| + |2><4|.
pub fn i_plus() -> Operator4 {
    let mut m = Operator4::zeros();
    m[(0, 2)] = c(1.0);
    m[(1, 3)] = c(1.0);
    m
}

pub fn i_minus() -> Operator4 {
    i_plus().adjoint()
}

pub fn sx() -> Operator4 {
    (s_plus() + s_minus()) * c(0.5)
}

pub fn sy() -> Operator4 {
    (s_plus() - s_minus()) * C64::new(0.0, -0.5)
}

pub fn ix() -> Operator4 {
    (i_plus() + i_minus()) * c(0.5)
}

pub fn iy() -> Operator4 {
    (i_plus() - i_minus()) * C64::new(0.0, -0.5)
}

/// Static spin Hamiltonian in both its isotropic and Ising forms (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct StaticHamiltonian {
    /// ωe·Sz − ωI·Iz + A·S·I
    pub full: Operator4,
    /// ωe·Sz − ωI·Iz + A·Sz·Iz
    pub ising: Operator4,
}

pub fn build_static_hamiltonian(params: &SystemParams) -> StaticHamiltonian {
    let (we, wi, a) = (params.omega_e(), params.omega_i(), params.hyperfine());
    let zeeman = sz() * c(we) - iz() * c(wi);
    let ising = zeeman + sz() * iz() * c(a);
    let full = zeeman + (sx() * ix() + sy() * iy() + sz() * iz()) * c(a);
    StaticHamiltonian { full, ising }
}

/// Diagonal of the hyperfine Ising term A·m_S·m_I for each level.
pub fn hyperfine_ising_diagonal(a: f64) -> [f64; 4] {
    std::array::from_fn(|k| a * ELECTRON_M[k] * NUCLEAR_M[k])
}

/// Rotating-frame detunings of one spin packet (rad/s).
///
/// The packet's free Hamiltonian in the rotating frame is
/// `δe·Sz − δn·Iz`: electron coherence precesses at δe, nuclear coherence
/// at δn, and the 2-3 coherence at δe + δn.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Detuning {
    pub electron: f64,
    pub nuclear: f64,
}

impl Detuning {
    pub fn new(electron: f64, nuclear: f64) -> Self {
        Self { electron, nuclear }
    }

    pub fn level_energies(&self) -> [f64; 4] {
        std::array::from_fn(|k| self.electron * ELECTRON_M[k] - self.nuclear * NUCLEAR_M[k])
    }

    pub fn hamiltonian(&self) -> Operator4 {
        diag(self.level_energies())
    }

    /// E_a − E_b for the transition, the detuning seen by a drive on it.
    pub fn on(&self, t: &Transition) -> f64 {
        let e = self.level_energies();
        let (a, b) = t.indices();
        e[a] - e[b]
    }
}

/// Density matrix of the electron ⊗ nuclear pair.
///
/// Construction through [`DensityMatrix::new`] checks Hermiticity, unit
/// trace and positivity. Pseudopure deviation states reached during
/// long relaxation can leave the positive cone; the simulator therefore
/// works on raw [`Operator4`] values internally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Operator4);

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-12;
    pub const TRACE_TOL: f64 = 1e-12;
    pub const POSITIVITY_TOL: f64 = 1e-10;

    pub fn new(m: Operator4) -> Result<Self> {
        let herm = (m - m.adjoint()).camax();
        if herm > Self::HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = m.trace();
        if (tr - c(1.0)).norm() > Self::TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let rho = Self(m);
        let min = rho.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < -Self::POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(rho)
    }

    /// Wrap a matrix without checks.
    pub fn from_matrix_unchecked(m: Operator4) -> Self {
        Self(m)
    }

    pub fn maximally_mixed() -> Self {
        Self(identity() * c(0.25))
    }

    pub fn matrix(&self) -> &Operator4 {
        &self.0
    }

    pub fn into_matrix(self) -> Operator4 {
        self.0
    }

    /// Element by zero-based indices.
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn expectation(&self, op: &Operator4) -> C64 {
        (self.0 * op).trace()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (self.0 + self.0.adjoint()) * c(0.5);
        let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Apply a unitary: U ρ U†.
    pub fn transform(&self, u: &Operator4) -> Self {
        Self(u * self.0 * u.adjoint())
    }
}

/// Pseudopure thermal state (Sz + 𝕀/2)/2 = diag(½, 0, ½, 0).
pub fn thermal_pseudopure_state() -> DensityMatrix {
    DensityMatrix((sz() + identity() * c(0.5)) * c(0.5))
}

/// Axis of a transition-selective spin operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
    /// |a><b|, the raising operator of the pair (spin-up member first).
    Raising,
}

/// Fictitious spin-½ operator of a two-level subspace, rotated by `phase`
/// about the subspace z axis and zero outside the pair.
///
/// X, Y, Z carry the spin-½ factor (σ/2).
pub fn subspace_operator(t: &Transition, axis: Axis, phase: f64) -> Operator4 {
    let (a, b) = t.indices();
    let mut op = Operator4::zeros();
    match axis {
        Axis::X => {
            op[(a, b)] = c(0.5);
            op[(b, a)] = c(0.5);
        }
        Axis::Y => {
            op[(a, b)] = C64::new(0.0, -0.5);
            op[(b, a)] = C64::new(0.0, 0.5);
        }
        Axis::Z => {
            op[(a, a)] = c(0.5);
            op[(b, b)] = c(-0.5);
        }
        Axis::Raising => op[(a, b)] = c(1.0),
    }
    if phase == 0.0 || axis == Axis::Z {
        return op;
    }
    let rot = subspace_z_rotation(t, phase);
    rot * op * rot.adjoint()
}

/// exp(−i·angle·σz/2) on the pair, identity elsewhere.
pub fn subspace_z_rotation(t: &Transition, angle: f64) -> Operator4 {
    let (a, b) = t.indices();
    let mut u = identity();
    u[(a, a)] = C64::from_polar(1.0, -angle / 2.0);
    u[(b, b)] = C64::from_polar(1.0, angle / 2.0);
    u
}

/// Projector onto the two levels of a transition.
pub fn subspace_projector(t: &Transition) -> Operator4 {
    let (a, b) = t.indices();
    let mut p = Operator4::zeros();
    p[(a, a)] = c(1.0);
    p[(b, b)] = c(1.0);
    p
}

/// Complex detection signal of a transition: ρ[a, b] = Tr(ρ·|b><a|).
///
/// A coherence written by a pulse of phase φ reads back with phase −φ on
/// the free induction decay and with phase +φ (plus a fixed offset) on
/// a Hahn echo.
pub fn coherence_signal(rho: &Operator4, t: &Transition) -> C64 {
    let (a, b) = t.indices();
    rho[(a, b)]
}

/// ρ31 + ρ42, the nuclear coherence summed over both electron manifolds.
pub fn nuclear_coherence(rho: &Operator4) -> C64 {
    rho[(2, 0)] + rho[(3, 1)]
}

/// Electron population ρ11 + ρ33 (probability of m_S = +½).
pub fn electron_up_population(rho: &Operator4) -> f64 {
    rho[(0, 0)].re + rho[(2, 2)].re
}
