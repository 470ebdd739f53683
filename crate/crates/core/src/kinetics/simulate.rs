//! Canned kinetics experiments: fluorescence repolarization, Rabi flopping and
//! Ramsey free-induction decay. Segments with constant laser/MW settings are
//! propagated with exact matrix exponentials.

use std::f64::consts::PI;

use super::linear::{propagator, propagator_with_integral, steady_state};
use super::model::{Generator, KineticsParams, NVState, StateVector};
use crate::error::{invalid, Result};
use crate::trace::{SignalUnit, TimeTrace};
use crate::units::hz_to_rad_per_s;

/// Default number of samples for the canned traces.
pub const DEFAULT_SAMPLES: usize = 2001;
/// Readout gate after MW pulses, s.
pub const READOUT_GATE: f64 = 10e-6;

fn mw_off(params: &KineticsParams) -> KineticsParams {
    let mut p = params.clone();
    p.omega_r = 0.0;
    p
}

fn laser_off(params: &KineticsParams) -> KineticsParams {
    let mut p = params.clone();
    p.gamma_p = 0.0;
    p
}

fn fluorescence(y: &StateVector) -> f64 {
    y[3] + y[4] + y[5]
}

fn uniform_trace(values: Vec<f64>, step: f64) -> Result<TimeTrace> {
    TimeTrace::new(values, 1.0 / step, SignalUnit::Dimensionless)
}

fn sample_step(duration: f64, samples: usize) -> Result<f64> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(invalid("duration", format!("must be > 0, got {duration}")));
    }
    if samples < 2 {
        return Err(invalid("samples", "need at least 2 samples"));
    }
    Ok(duration / (samples - 1) as f64)
}

/// Sampled fluorescence of a constant-setting evolution from `y0`.
fn sampled_fluorescence(params: &KineticsParams, delta: f64, y0: StateVector, step: f64, samples: usize) -> Vec<f64> {
    let phi = propagator(params, delta, step);
    let mut y = y0;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        out.push(fluorescence(&y));
        y = phi * y;
    }
    out
}

/// Fluorescence recovery with the laser on and MW off, starting from an
/// unpolarized ground manifold.
pub fn simulate_repolarization(params: &KineticsParams, duration: f64) -> Result<TimeTrace> {
    simulate_repolarization_from(params, &NVState::thermal(), duration, DEFAULT_SAMPLES)
}

pub fn simulate_repolarization_from(
    params: &KineticsParams,
    initial: &NVState,
    duration: f64,
    samples: usize,
) -> Result<TimeTrace> {
    params.validate()?;
    let step = sample_step(duration, samples)?;
    let p = mw_off(params);
    let f = sampled_fluorescence(&p, 0.0, initial.to_vector(), step, samples);
    uniform_trace(f, step)
}

/// Polarized starting point: stationary state with the laser on and MW off.
pub fn polarized_state(params: &KineticsParams) -> Result<NVState> {
    steady_state(&mw_off(params).with_detuning(0.0))
}

/// Rabi flopping from the polarized state.
///
/// With continuous excitation the fluorescence is sampled while the MW and
/// laser are both on. Otherwise every sample is a separate pulsed experiment:
/// laser off during a MW pulse of the sample's length, then a 10 µs
/// laser-on readout gate whose mean fluorescence is reported.
pub fn simulate_rabi(params: &KineticsParams, duration: f64, continuous_excitation: bool) -> Result<TimeTrace> {
    simulate_rabi_sampled(params, duration, continuous_excitation, DEFAULT_SAMPLES)
}

pub fn simulate_rabi_sampled(
    params: &KineticsParams,
    duration: f64,
    continuous_excitation: bool,
    samples: usize,
) -> Result<TimeTrace> {
    params.validate()?;
    let step = sample_step(duration, samples)?;
    let delta = params.detuning.at(0.0);
    let y0 = polarized_state(params)?.to_vector();
    if continuous_excitation {
        return uniform_trace(sampled_fluorescence(params, delta, y0, step, samples), step);
    }
    let drive = propagator(&laser_off(params), delta, step);
    let (_, gate) = propagator_with_integral(&mw_off(params), 0.0, READOUT_GATE);
    let mut y = y0;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        out.push(fluorescence(&(gate * y)) / READOUT_GATE);
        y = drive * y;
    }
    uniform_trace(out, step)
}

/// Ramsey sequence flavour for FID simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RamseyMode {
    /// Laser on throughout.
    ContinuousExcitation,
    /// Laser off during pulses and free evolution, on for readout.
    Gated,
}

/// ¹⁴N hyperfine subensemble offsets, Hz.
pub const HYPERFINE_DETUNINGS: [f64; 3] = [0.0, 2.2e6, -2.2e6];

/// Ramsey FID contrast 1 − F(τ)/F_ref versus free-evolution time τ, averaged
/// over equal-weight subensembles detuned by `hyperfine_detunings` (Hz) from
/// the MW carrier (which sits at `params.detuning`). F is the mean
/// fluorescence of a 10 µs readout gate after the second π/2 pulse and F_ref
/// the same gate without pulses.
pub fn simulate_fid(params: &KineticsParams, tau_max: f64, hyperfine_detunings: &[f64]) -> Result<TimeTrace> {
    simulate_fid_sampled(
        params,
        tau_max,
        hyperfine_detunings,
        RamseyMode::ContinuousExcitation,
        DEFAULT_SAMPLES,
    )
}

pub fn simulate_fid_sampled(
    params: &KineticsParams,
    tau_max: f64,
    hyperfine_detunings: &[f64],
    mode: RamseyMode,
    samples: usize,
) -> Result<TimeTrace> {
    params.validate()?;
    if params.omega_r <= 0.0 {
        return Err(invalid("omega_r", "Ramsey pulses need a nonzero Rabi frequency"));
    }
    if hyperfine_detunings.is_empty() {
        return Err(invalid("hyperfine_detunings", "need at least one subensemble"));
    }
    let step = sample_step(tau_max, samples)?;
    let y0 = polarized_state(params)?.to_vector();
    let t_half_pi = PI / (2.0 * params.omega_r);
    let (_, gate) = propagator_with_integral(&mw_off(params), 0.0, READOUT_GATE);
    let f_ref = fluorescence(&(gate * y0));

    let evolution = match mode {
        RamseyMode::ContinuousExcitation => params.clone(),
        RamseyMode::Gated => laser_off(params),
    };
    let carrier = params.detuning.at(0.0);
    let mut acc = vec![0.0; samples];
    for &hf in hyperfine_detunings {
        let delta = carrier + hz_to_rad_per_s(hf);
        let pulse: Generator = propagator(&evolution, delta, t_half_pi);
        let free = propagator(&mw_off(&evolution), delta, step);
        let readout = gate * pulse;
        let mut y = pulse * y0;
        for a in acc.iter_mut() {
            *a += 1.0 - fluorescence(&(readout * y)) / f_ref;
            y = free * y;
        }
    }
    let n = hyperfine_detunings.len() as f64;
    uniform_trace(acc.into_iter().map(|a| a / n).collect(), step)
}
