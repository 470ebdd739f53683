//! Physical constants and unit conversions.
//!
//! Rates are stored in s⁻¹ ("Hz") throughout the crate; Rabi frequency and
//! MW detuning are the exceptions and are always angular (rad/s).

use std::f64::consts::PI;

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// NV electron g-factor.
pub const NV_G_FACTOR: f64 = 2.003;
/// NV gyromagnetic ratio g·μB/h in Hz/T.
pub const GAMMA_NV: f64 = 28.024e9;

/// h/(g·μB) in T/Hz: field equivalent of a 1 Hz line shift.
pub const fn tesla_per_hz() -> f64 {
    1.0 / GAMMA_NV
}

/// ħ/(g·μB) in T·s.
pub fn tesla_seconds_per_radian() -> f64 {
    1.0 / (2.0 * PI * GAMMA_NV)
}

pub fn hz_to_rad_per_s(f: f64) -> f64 {
    2.0 * PI * f
}

pub fn rad_per_s_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// Converts a rate quoted in MHz (as in rate tables) to s⁻¹.
pub fn mhz(rate: f64) -> f64 {
    rate * 1e6
}

pub fn celsius_to_kelvin(c: f64) -> f64 {
    c + 273.15
}

pub const PICOTESLA: f64 = 1e-12;
pub const NANOTESLA: f64 = 1e-9;
