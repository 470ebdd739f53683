//! Linear-algebra views of the kinetics: exact propagators for piecewise
//! constant detuning, the stationary state, and periodic steady states.

use nalgebra::{SMatrix, SVector};

use super::model::{generator, Generator, KineticsParams, NVState, StateVector, DIM};
use crate::error::{invalid, Error, Result};

/// exp(A·dt) for detuning `delta` (rad/s).
pub fn propagator(params: &KineticsParams, delta: f64, dt: f64) -> Generator {
    (generator(params, delta) * dt).exp()
}

/// Returns (exp(A·dt), ∫₀^dt exp(A·s) ds) from one augmented exponential.
pub fn propagator_with_integral(params: &KineticsParams, delta: f64, dt: f64) -> (Generator, Generator) {
    let a = generator(params, delta);
    let mut m = SMatrix::<f64, { 2 * DIM }, { 2 * DIM }>::zeros();
    m.fixed_view_mut::<DIM, DIM>(0, 0).copy_from(&(a * dt));
    for i in 0..DIM {
        m[(i, DIM + i)] = dt;
    }
    let e = m.exp();
    (
        e.fixed_view::<DIM, DIM>(0, 0).into_owned(),
        e.fixed_view::<DIM, DIM>(0, DIM).into_owned(),
    )
}

fn population_row() -> SVector<f64, DIM> {
    let mut r = SVector::<f64, DIM>::zeros();
    r.as_mut_slice()[..8].fill(1.0);
    r
}

/// Solves M·y = 0 subject to Σ populations = 1, where M has a one-dimensional
/// null space (generator or Φ − I).
fn constrained_null_vector(m: &Generator) -> Option<StateVector> {
    // The population equations sum to zero, so the first one is redundant and
    // can carry the normalization instead.
    let mut b = *m;
    b.set_row(0, &population_row().transpose());
    let mut rhs = StateVector::zeros();
    rhs[0] = 1.0;
    b.full_piv_lu().solve(&rhs)
}

/// Stationary state for constant detuning (`params.detuning` evaluated at t = 0).
pub fn steady_state(params: &KineticsParams) -> Result<NVState> {
    params.validate()?;
    if params.gamma_p <= 0.0 && params.gamma_1 <= 0.0 {
        return Err(invalid(
            "gamma_p",
            "steady state needs optical pumping or T1 relaxation (both rates are zero)",
        ));
    }
    let a = generator(params, params.detuning.at(0.0));
    let y = constrained_null_vector(&a).ok_or_else(|| Error::NoConvergence("singular stationary system".into()))?;
    let scale = a.diagonal().amax();
    let residual = (a * y).amax();
    if residual > 1e-12 * scale {
        // One step of iterative refinement usually recovers the last digits.
        let y2 = refine(&a, y);
        let r2 = (a * y2).amax();
        if r2 > 1e-12 * scale {
            return Err(Error::NoConvergence(format!(
                "residual {r2:.3e} exceeds 1e-12 of the dominant rate {scale:.3e}"
            )));
        }
        return Ok(NVState::from_vector(&y2));
    }
    Ok(NVState::from_vector(&y))
}

fn refine(a: &Generator, y: StateVector) -> StateVector {
    let mut b = *a;
    b.set_row(0, &population_row().transpose());
    let mut r = -(a * y);
    r[0] = 1.0 - population_row().dot(&y);
    match b.full_piv_lu().solve(&r) {
        Some(dy) => y + dy,
        None => y,
    }
}

/// Periodic steady state y* = Φ·y* of a one-period propagator Φ.
pub fn periodic_steady_state(monodromy: &Generator) -> Result<StateVector> {
    let m = monodromy - Generator::identity();
    constrained_null_vector(&m).ok_or_else(|| Error::NoConvergence("singular monodromy system".into()))
}
