//! Digital lock-in amplifier and the continuously excited Ramsey sequence.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kinetics::{periodic_fluorescence, CycleSegment, KineticsParams};
use crate::trace::TimeTrace;
use crate::units::GAMMA_NV;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LockinOutput {
    #[default]
    InPhase,
    Quadrature,
    Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockinConfig {
    /// Reference frequency, Hz.
    pub f_ref: f64,
    /// Reference phase, rad. The in-phase reference is sin(2π f_ref t + phase).
    pub phase: f64,
    /// −3 dB frequency of each single-pole stage, Hz.
    pub cutoff: f64,
    pub filter_order: u32,
    pub output: LockinOutput,
}

impl LockinConfig {
    pub fn new(f_ref: f64, cutoff: f64, filter_order: u32) -> Self {
        Self {
            f_ref,
            phase: 0.0,
            cutoff,
            filter_order,
            output: LockinOutput::InPhase,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_ref > 0.0 && self.f_ref.is_finite()) {
            return Err(invalid("f_ref", format!("must be > 0, got {}", self.f_ref)));
        }
        if !(self.cutoff > 0.0 && self.cutoff < self.f_ref) {
            return Err(invalid(
                "cutoff",
                format!("must satisfy 0 < cutoff < f_ref, got {} Hz", self.cutoff),
            ));
        }
        if self.filter_order < 1 {
            return Err(invalid("filter_order", "must be >= 1"));
        }
        if !self.phase.is_finite() {
            return Err(invalid("phase", "must be finite"));
        }
        Ok(())
    }

    /// Time constant of one stage, s.
    pub fn time_constant(&self) -> f64 {
        1.0 / (2.0 * PI * self.cutoff)
    }

    /// Ten time constants per filter stage.
    pub fn settling_time(&self) -> f64 {
        10.0 * self.time_constant() * self.filter_order as f64
    }

    /// Magnitude response of the analog filter prototype at baseband offset `f`.
    pub fn filter_gain(&self, f: f64) -> f64 {
        (1.0 + (f / self.cutoff).powi(2)).powf(-0.5 * self.filter_order as f64)
    }

    /// Rejects sample rates at which the reference band leaves the Nyquist
    /// range or the 2·f_ref mixing product folds back into the passband.
    pub fn check_sample_rate(&self, sample_rate: f64) -> Result<()> {
        let nyquist = 0.5 * sample_rate;
        let image = {
            let k = (2.0 * self.f_ref / sample_rate).round();
            (2.0 * self.f_ref - k * sample_rate).abs()
        };
        if self.f_ref + self.cutoff >= nyquist || image <= self.cutoff {
            return Err(Error::Aliasing {
                sample_rate,
                f_ref: self.f_ref,
            });
        }
        Ok(())
    }
}

/// Cascaded exponential low-pass, y += α(x − y) per stage.
#[derive(Debug, Clone)]
struct LowPass {
    alpha: f64,
    state: Vec<f64>,
}

impl LowPass {
    fn new(cutoff: f64, order: u32, dt: f64) -> Self {
        Self {
            alpha: 1.0 - (-2.0 * PI * cutoff * dt).exp(),
            state: vec![0.0; order as usize],
        }
    }

    fn update(&mut self, x: f64) -> f64 {
        let mut v = x;
        for s in self.state.iter_mut() {
            *s += self.alpha * (v - *s);
            v = *s;
        }
        v
    }
}

/// In-phase and quadrature outputs for every sample of `trace`.
pub fn demodulate_iq(trace: &TimeTrace, config: &LockinConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    config.validate()?;
    config.check_sample_rate(trace.sample_rate)?;
    let dt = trace.dt();
    let mut lp_x = LowPass::new(config.cutoff, config.filter_order, dt);
    let mut lp_y = LowPass::new(config.cutoff, config.filter_order, dt);
    let w = 2.0 * PI * config.f_ref;
    let mut xs = Vec::with_capacity(trace.len());
    let mut ys = Vec::with_capacity(trace.len());
    for (i, &v) in trace.samples.iter().enumerate() {
        let arg = w * trace.time(i) + config.phase;
        xs.push(lp_x.update(2.0 * v * arg.sin()));
        ys.push(lp_y.update(2.0 * v * arg.cos()));
    }
    Ok((xs, ys))
}

/// Lock-in output trace selected by `config.output`.
pub fn demodulate(trace: &TimeTrace, config: &LockinConfig) -> Result<TimeTrace> {
    let (x, y) = demodulate_iq(trace, config)?;
    let out = match config.output {
        LockinOutput::InPhase => x,
        LockinOutput::Quadrature => y,
        LockinOutput::Magnitude => x.iter().zip(&y).map(|(a, b)| a.hypot(*b)).collect(),
    };
    Ok(TimeTrace {
        samples: out,
        ..trace.clone()
    })
}

/// Mean output after the settling time.
pub fn settled_output(trace: &TimeTrace, config: &LockinConfig) -> Result<f64> {
    let out = demodulate(trace, config)?;
    let skip = (config.settling_time() * trace.sample_rate).ceil() as usize;
    if skip >= out.len() {
        return Err(invalid("trace", "shorter than the lock-in settling time"));
    }
    let tail = &out.samples[skip..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Timing of one continuously excited Ramsey cycle.
///
/// Half A: π/2 pulse, free evolution τ_m, π/2 pulse, readout τ_r.
/// Half B: MW-off reference of τ_m + τ_r + 2π/Ω_R, so that the cycle obeys
/// T_seq = 2τ_r + 2τ_m + 3π/Ω_R. The laser stays on throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CERamseySchedule {
    pub t_seq: f64,
    pub tau_m: f64,
    pub tau_r: f64,
    /// π/2 pulse length π/(2Ω_R), s.
    pub pulse_width: f64,
    /// rad/s.
    pub omega_r: f64,
    /// 1/T_seq, Hz.
    pub demod_frequency: f64,
}

impl CERamseySchedule {
    pub fn half_a(&self) -> f64 {
        2.0 * self.pulse_width + self.tau_m + self.tau_r
    }

    pub fn half_b(&self) -> f64 {
        self.tau_m + self.tau_r + 2.0 * PI / self.omega_r
    }

    /// Start of the readout window within the cycle.
    pub fn readout_start(&self) -> f64 {
        2.0 * self.pulse_width + self.tau_m
    }

    /// Segments of the cycle for detuning `delta` (rad/s) and pumping `gamma_p`.
    pub fn segments(&self, gamma_p: f64, delta: f64) -> [CycleSegment; 5] {
        let seg = |omega_r: f64, duration: f64| CycleSegment {
            gamma_p,
            omega_r,
            delta,
            duration,
        };
        [
            seg(self.omega_r, self.pulse_width),
            seg(0.0, self.tau_m),
            seg(self.omega_r, self.pulse_width),
            seg(0.0, self.tau_r),
            seg(0.0, self.half_b()),
        ]
    }
}

/// Schedule with τ_r = (T_seq − 3π/Ω_R)/2 − τ_m.
pub fn ce_ramsey_schedule(omega_r: f64, tau_m: f64, t_seq: f64) -> Result<CERamseySchedule> {
    if !(omega_r > 0.0 && omega_r.is_finite()) {
        return Err(invalid("omega_r", "must be > 0"));
    }
    if !(tau_m >= 0.0 && t_seq > 0.0) {
        return Err(invalid("tau_m", "tau_m must be >= 0 and t_seq > 0"));
    }
    let pulses = 3.0 * PI / omega_r;
    let tau_r = (t_seq - pulses) / 2.0 - tau_m;
    if tau_r < 0.0 {
        return Err(Error::InfeasibleSchedule(format!(
            "repolarization time would be {tau_r:.4e} s: need T_seq >= 2·tau_m + 3π/Ω_R = {:.4e} s",
            2.0 * tau_m + pulses
        )));
    }
    Ok(CERamseySchedule {
        t_seq,
        tau_m,
        tau_r,
        pulse_width: PI / (2.0 * omega_r),
        omega_r,
        demod_frequency: 1.0 / t_seq,
    })
}

/// Settled lock-in level of the periodic CE-Ramsey fluorescence at MW offset
/// `detuning` (Hz). The reference is sin(2π t/T_seq + phase) with t measured
/// from the start of the readout window. `params.omega_r` is ignored in favour
/// of the schedule's pulses.
pub fn simulate_ce_ramsey_output(
    params: &KineticsParams,
    schedule: &CERamseySchedule,
    detuning: f64,
    config: &LockinConfig,
) -> Result<f64> {
    config.validate()?;
    if (config.f_ref - schedule.demod_frequency).abs() > 1e-9 * schedule.demod_frequency {
        return Err(Error::Mismatch(format!(
            "lock-in reference {} Hz differs from the sequence rate {} Hz",
            config.f_ref, schedule.demod_frequency
        )));
    }
    let segments = schedule.segments(params.gamma_p, 2.0 * PI * detuning);
    let pf = periodic_fluorescence(params, &segments, schedule.t_seq / 512.0)?;
    let (a, b) = pf.harmonic(schedule.demod_frequency);
    // Fluorescence ⊃ a·cos ωt + b·sin ωt; project on sin(ω(t − t_r) + φ).
    let shift = 2.0 * PI * schedule.demod_frequency * schedule.readout_start() - config.phase;
    let in_phase = b * shift.cos() - a * shift.sin();
    let quadrature = a * shift.cos() + b * shift.sin();
    Ok(match config.output {
        LockinOutput::InPhase => in_phase,
        LockinOutput::Quadrature => quadrature,
        LockinOutput::Magnitude => in_phase.hypot(quadrature),
    })
}

/// CE-Ramsey fringe: lock-in level versus MW offset.
pub fn ce_ramsey_fringe(
    params: &KineticsParams,
    schedule: &CERamseySchedule,
    detunings: &[f64],
    config: &LockinConfig,
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    detunings
        .par_iter()
        .map(|&d| simulate_ce_ramsey_output(params, schedule, d, config))
        .collect()
}

/// Maximum fringe slope times γ_NV (signal units per tesla), evaluated
/// around the quarter-fringe offsets ±1/(4τ_m).
pub fn ce_ramsey_scalar_factor(
    params: &KineticsParams,
    schedule: &CERamseySchedule,
    config: &LockinConfig,
) -> Result<f64> {
    let quarter = 1.0 / (4.0 * schedule.tau_m.max(1e-12));
    let h = quarter * 1e-3;
    let mut best: f64 = 0.0;
    for k in -4..=4 {
        let d = quarter * (1.0 + 0.1 * k as f64);
        let s = (simulate_ce_ramsey_output(params, schedule, d + h, config)?
            - simulate_ce_ramsey_output(params, schedule, d - h, config)?)
            / (2.0 * h);
        best = best.max(s.abs());
    }
    Ok(best * GAMMA_NV)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::SignalUnit;

    fn tone(amp: f64, f: f64, phase: f64, fs: f64, n: usize) -> TimeTrace {
        let s = (0..n)
            .map(|i| amp * (2.0 * PI * f * i as f64 / fs + phase).sin())
            .collect();
        TimeTrace::new(s, fs, SignalUnit::Volt).unwrap()
    }

    #[test]
    fn dc_rejected() {
        let cfg = LockinConfig::new(1e3, 10.0, 2);
        let tr = TimeTrace::new(vec![1.0; 200_000], 100e3, SignalUnit::Volt).unwrap();
        assert!(settled_output(&tr, &cfg).unwrap().abs() < 1e-3);
    }

    #[test]
    fn aliasing_detected() {
        let cfg = LockinConfig::new(1e3, 10.0, 2);
        let tr = tone(1.0, 1e3, 0.0, 1.5e3, 100);
        assert!(matches!(demodulate(&tr, &cfg), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn schedule_segments_sum_to_cycle() {
        let s = ce_ramsey_schedule(2.0 * PI * 4e6, 6.42e-6, 110e-6).unwrap();
        assert!((s.half_a() + s.half_b() - s.t_seq).abs() < 1e-18);
        assert_eq!(s.demod_frequency, 1.0 / 110e-6);
        assert!(matches!(
            ce_ramsey_schedule(2.0 * PI * 4e6, 55e-6, 110e-6),
            Err(Error::InfeasibleSchedule(_))
        ));
    }
}
