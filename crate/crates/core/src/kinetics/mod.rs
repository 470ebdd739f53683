//! Eight-level NV photo/spin kinetics.

mod cycle;
mod integrator;
mod linear;
mod model;
mod simulate;

pub use cycle::{modulated_fluorescence, periodic_fluorescence, CycleSegment, PeriodicFluorescence};
pub use integrator::{evolve, integrate, integrate_at, integrate_at_with, IntegratorOptions, Trajectory};
pub use linear::{periodic_steady_state, propagator, propagator_with_integral, steady_state};
pub use model::{
    derivatives, generator, Detuning, Generator, KineticsParams, NVState, StateVector, DEFAULT_GAMMA_P, DEFAULT_T1,
    DEFAULT_T2_STAR, DIM,
};
pub use simulate::{
    polarized_state, simulate_fid, simulate_fid_sampled, simulate_rabi, simulate_rabi_sampled, simulate_repolarization,
    simulate_repolarization_from, RamseyMode, DEFAULT_SAMPLES, HYPERFINE_DETUNINGS, READOUT_GATE,
};

/// Flopping frequency under pumping and T1 damping, rad/s:
/// √(Ω_R² − (Γp/4 − Γ1/2)²). Returns 0 in the overdamped case.
pub fn damped_rabi_frequency(omega_r: f64, gamma_p: f64, gamma_1: f64) -> f64 {
    let c = gamma_p / 4.0 - gamma_1 / 2.0;
    (omega_r * omega_r - c * c).max(0.0).sqrt()
}
