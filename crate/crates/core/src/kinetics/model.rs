//! Eight-level NV photo/spin kinetics: state vector, rate parameters and the
//! right-hand side of the rate/Bloch equations.
//!
//! Level numbering: 1..3 ground |0⟩, |−1⟩, |+1⟩; 4..6 the matching excited
//! states; 7 the intersystem-crossing intermediate; 8 the metastable singlet.
//! The MW drives |0⟩ ↔ |+1⟩ (levels 1 and 3) and the drive coherence is ρ01.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DIM: usize = 10;
pub type StateVector = SVector<f64, DIM>;
pub type Generator = SMatrix<f64, DIM, DIM>;

/// Populations n1..n8 and the ground-state coherence ρ01.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NVState {
    pub n: [f64; 8],
    pub rho01_re: f64,
    pub rho01_im: f64,
}

impl NVState {
    /// Equal populations in the three ground sublevels, no coherence.
    pub fn thermal() -> Self {
        let mut n = [0.0; 8];
        n[..3].fill(1.0 / 3.0);
        Self {
            n,
            rho01_re: 0.0,
            rho01_im: 0.0,
        }
    }

    /// All population in |0⟩.
    pub fn polarized() -> Self {
        let mut n = [0.0; 8];
        n[0] = 1.0;
        Self {
            n,
            rho01_re: 0.0,
            rho01_im: 0.0,
        }
    }

    pub fn from_vector(v: &StateVector) -> Self {
        let mut n = [0.0; 8];
        n.copy_from_slice(&v.as_slice()[..8]);
        Self {
            n,
            rho01_re: v[8],
            rho01_im: v[9],
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut v = StateVector::zeros();
        v.as_mut_slice()[..8].copy_from_slice(&self.n);
        v[8] = self.rho01_re;
        v[9] = self.rho01_im;
        v
    }

    pub fn population_sum(&self) -> f64 {
        self.n.iter().sum()
    }

    /// n4 + n5 + n6.
    pub fn fluorescence(&self) -> f64 {
        self.n[3] + self.n[4] + self.n[5]
    }

    pub fn coherence_magnitude(&self) -> f64 {
        self.rho01_re.hypot(self.rho01_im)
    }

    pub fn is_finite(&self) -> bool {
        self.n.iter().all(|x| x.is_finite()) && self.rho01_re.is_finite() && self.rho01_im.is_finite()
    }

    /// Checks populations within [−tol, 1 + tol], the sum within tol of one and
    /// |ρ01| ≤ ½ + tol.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::InvalidState("non-finite component".into()));
        }
        for (i, &p) in self.n.iter().enumerate() {
            if p < -tol || p > 1.0 + tol {
                return Err(Error::InvalidState(format!("n{} = {p} outside [0, 1]", i + 1)));
            }
        }
        let s = self.population_sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::InvalidState(format!("population sum {s} != 1")));
        }
        if self.coherence_magnitude() > 0.5 + tol {
            return Err(Error::InvalidState("|rho01| exceeds 1/2".into()));
        }
        Ok(())
    }
}

/// MW detuning Δ(t) in rad/s.
#[derive(Clone)]
pub enum Detuning {
    Constant(f64),
    /// offset + deviation·cos(2π f_m t), offset and deviation in rad/s, f_m in Hz.
    Cosine {
        offset: f64,
        deviation: f64,
        f_m: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Detuning {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Detuning::Constant(d) => *d,
            Detuning::Cosine { offset, deviation, f_m } => offset + deviation * (2.0 * PI * f_m * t).cos(),
            Detuning::Custom(f) => f(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Detuning::Constant(_))
    }
}

impl fmt::Debug for Detuning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Detuning::Constant(d) => write!(f, "Constant({d})"),
            Detuning::Cosine { offset, deviation, f_m } => {
                write!(f, "Cosine {{ offset: {offset}, deviation: {deviation}, f_m: {f_m} }}")
            }
            Detuning::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Default for Detuning {
    fn default() -> Self {
        Detuning::Constant(0.0)
    }
}

/// Transition rates in s⁻¹; `omega_r` and the detuning in rad/s.
#[derive(Debug, Clone)]
pub struct KineticsParams {
    pub gamma_p: f64,
    pub gamma_1: f64,
    pub gamma_2_star: f64,
    pub r_fl: f64,
    pub r_47: f64,
    pub r_57: f64,
    pub r_67: f64,
    pub r_78: f64,
    pub r_81: f64,
    pub r_82: f64,
    pub r_83: f64,
    pub omega_r: f64,
    /// Prefactor k of the drive source term −k·Ω_R(n3 − n1) in dIm(ρ01)/dt.
    /// With k = ½ a resonant drive flops the populations at Ω_R.
    pub drive_factor: f64,
    pub detuning: Detuning,
}

pub const DEFAULT_GAMMA_P: f64 = 0.026e6;
pub const DEFAULT_T1: f64 = 6e-3;
pub const DEFAULT_T2_STAR: f64 = 8.5e-6;

impl Default for KineticsParams {
    fn default() -> Self {
        Self {
            gamma_p: DEFAULT_GAMMA_P,
            gamma_1: 1.0 / DEFAULT_T1,
            gamma_2_star: 1.0 / DEFAULT_T2_STAR,
            r_fl: 66e6,
            // Not listed with the other rates; taken from the same literature set
            // (triplet |0⟩ branch ISC rate).
            r_47: 7.9e6,
            r_57: 53e6,
            r_67: 53e6,
            r_78: 1e9,
            r_81: 1e6,
            r_82: 0.7e6,
            r_83: 0.7e6,
            omega_r: 0.0,
            drive_factor: 0.5,
            detuning: Detuning::Constant(0.0),
        }
    }
}

impl KineticsParams {
    pub fn with_pumping(mut self, gamma_p: f64) -> Self {
        self.gamma_p = gamma_p;
        self
    }

    pub fn with_rabi(mut self, omega_r: f64) -> Self {
        self.omega_r = omega_r;
        self
    }

    pub fn with_detuning(mut self, delta: f64) -> Self {
        self.detuning = Detuning::Constant(delta);
        self
    }

    pub fn with_detuning_fn(mut self, detuning: Detuning) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_t1(mut self, t1: f64) -> Self {
        self.gamma_1 = 1.0 / t1;
        self
    }

    pub fn with_t2_star(mut self, t2_star: f64) -> Self {
        self.gamma_2_star = 1.0 / t2_star;
        self
    }

    fn rates(&self) -> [(&'static str, f64); 13] {
        [
            ("gamma_p", self.gamma_p),
            ("gamma_1", self.gamma_1),
            ("gamma_2_star", self.gamma_2_star),
            ("r_fl", self.r_fl),
            ("r_47", self.r_47),
            ("r_57", self.r_57),
            ("r_67", self.r_67),
            ("r_78", self.r_78),
            ("r_81", self.r_81),
            ("r_82", self.r_82),
            ("r_83", self.r_83),
            ("omega_r", self.omega_r),
            ("drive_factor", self.drive_factor),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.rates() {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if let Detuning::Cosine { f_m, .. } = self.detuning {
            if !(f_m > 0.0 && f_m.is_finite()) {
                return Err(invalid("f_m", format!("must be > 0, got {f_m}")));
            }
        }
        Ok(())
    }

    /// Largest diagonal decay rate of the generator, the stiffest time scale.
    pub fn dominant_rate(&self) -> f64 {
        generator(self, self.detuning.at(0.0))
            .diagonal()
            .iter()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
            .max(self.omega_r)
    }
}

/// d(state)/dt evaluated term by term.
pub fn derivatives(state: &NVState, params: &KineticsParams, t: f64) -> Result<NVState> {
    if !state.is_finite() {
        return Err(Error::InvalidState(format!("non-finite state at t = {t}")));
    }
    let delta = params.detuning.at(t);
    if !delta.is_finite() {
        return Err(Error::InvalidState(format!("detuning not finite at t = {t}")));
    }
    Ok(rates_at(state, params, delta))
}

fn rates_at(s: &NVState, p: &KineticsParams, delta: f64) -> NVState {
    let [n1, n2, n3, n4, n5, n6, n7, n8] = s.n;
    let (re, im) = (s.rho01_re, s.rho01_im);
    let g1 = p.gamma_1 / 3.0;
    let om = p.omega_r;

    // Population exchange by the drive: leaves |0⟩ and enters |+1⟩ with equal
    // magnitude so the total population is conserved.
    let dn1 = -p.gamma_p * n1 + p.r_fl * n4 + p.r_81 * n8 - g1 * (2.0 * n1 - n2 - n3) - om * im;
    let dn2 = -p.gamma_p * n2 + p.r_fl * n5 + p.r_82 * n8 - g1 * (2.0 * n2 - n1 - n3);
    let dn3 = -p.gamma_p * n3 + p.r_fl * n6 + p.r_83 * n8 - g1 * (2.0 * n3 - n1 - n2) + om * im;

    let dn4 = -p.r_fl * n4 + p.gamma_p * n1 - p.r_47 * n4;
    let dn5 = -p.r_fl * n5 + p.gamma_p * n2 - p.r_57 * n5;
    let dn6 = -p.r_fl * n6 + p.gamma_p * n3 - p.r_67 * n6;
    let dn7 = p.r_47 * n4 + p.r_57 * n5 + p.r_67 * n6 - p.r_78 * n7;
    let dn8 = p.r_78 * n7 - (p.r_81 + p.r_82 + p.r_83) * n8;

    let dre = delta * im - p.gamma_2_star * re;
    let dim = -delta * re - p.gamma_2_star * im - p.drive_factor * om * (n3 - n1);

    NVState {
        n: [dn1, dn2, dn3, dn4, dn5, dn6, dn7, dn8],
        rho01_re: dre,
        rho01_im: dim,
    }
}

/// Generator matrix A(Δ) with dy/dt = A·y, built by applying the right-hand
/// side to the unit vectors.
pub fn generator(params: &KineticsParams, delta: f64) -> Generator {
    let mut a = Generator::zeros();
    for j in 0..DIM {
        let mut e = StateVector::zeros();
        e[j] = 1.0;
        let col = rates_at(&NVState::from_vector(&e), params, delta).to_vector();
        a.set_column(j, &col);
    }
    a
}
