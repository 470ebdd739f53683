//! Periodic steady states of piecewise-constant drive cycles.
//!
//! A cycle is a list of segments with fixed pumping, Rabi frequency and
//! detuning. Segments are split into pieces no longer than a maximum length;
//! each piece is propagated exactly and its fluorescence integral is taken from
//! the same augmented exponential. The periodic state follows from the
//! monodromy matrix, so no transient has to be simulated.

use std::f64::consts::PI;

use super::linear::{periodic_steady_state, propagator_with_integral};
use super::model::{Generator, KineticsParams, StateVector};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSegment {
    /// Optical pumping rate during the segment, s⁻¹.
    pub gamma_p: f64,
    /// Rabi angular frequency during the segment (0 = MW off), rad/s.
    pub omega_r: f64,
    /// Detuning, rad/s.
    pub delta: f64,
    /// s.
    pub duration: f64,
}

/// Fluorescence of the periodic state, resolved per piece.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicFluorescence {
    pub period: f64,
    /// Start time of each piece within the cycle, s.
    pub start: Vec<f64>,
    /// Piece durations, s.
    pub width: Vec<f64>,
    /// ∫ (n4 + n5 + n6) dt over each piece.
    pub integral: Vec<f64>,
    /// State at the start of the cycle.
    pub initial_state: StateVector,
}

impl PeriodicFluorescence {
    pub fn mean(&self) -> f64 {
        self.integral.iter().sum::<f64>() / self.period
    }

    /// Settled lock-in components (X, Y) at `f_ref` with the peak-amplitude
    /// convention: a fluorescence term A·cos(2π f_ref t) gives X = A.
    /// The reference is evaluated exactly over each piece.
    pub fn harmonic(&self, f_ref: f64) -> (f64, f64) {
        let w = 2.0 * PI * f_ref;
        let (mut x, mut y) = (0.0, 0.0);
        for ((&t0, &h), &int) in self.start.iter().zip(&self.width).zip(&self.integral) {
            // Mean of cos/sin over the piece times the fluorescence integral.
            let (c, s) = if w * h < 1e-9 {
                ((w * (t0 + 0.5 * h)).cos(), (w * (t0 + 0.5 * h)).sin())
            } else {
                (
                    ((w * (t0 + h)).sin() - (w * t0).sin()) / (w * h),
                    ((w * t0).cos() - (w * (t0 + h)).cos()) / (w * h),
                )
            };
            x += int * c;
            y += int * s;
        }
        (2.0 * x / self.period, 2.0 * y / self.period)
    }
}

/// Periodic steady state of the cycle. Pieces are at most `max_piece` long.
pub fn periodic_fluorescence(
    base: &KineticsParams,
    segments: &[CycleSegment],
    max_piece: f64,
) -> Result<PeriodicFluorescence> {
    base.validate()?;
    if segments.is_empty() {
        return Err(invalid("segments", "cycle is empty"));
    }
    if !(max_piece > 0.0) {
        return Err(invalid("max_piece", "must be > 0"));
    }
    let mut pieces: Vec<(Generator, Generator, f64)> = Vec::new();
    for seg in segments {
        if !(seg.duration >= 0.0) {
            return Err(invalid("duration", "segment durations must be >= 0"));
        }
        if seg.duration == 0.0 {
            continue;
        }
        let n = (seg.duration / max_piece).ceil().max(1.0) as usize;
        let h = seg.duration / n as f64;
        let mut p = base.clone();
        p.gamma_p = seg.gamma_p;
        p.omega_r = seg.omega_r;
        let (phi, int) = propagator_with_integral(&p, seg.delta, h);
        for _ in 0..n {
            pieces.push((phi, int, h));
        }
    }
    let mut mono = Generator::identity();
    for (phi, _, _) in &pieces {
        mono = phi * mono;
    }
    let y0 = periodic_steady_state(&mono)?;
    let mut out = PeriodicFluorescence {
        period: 0.0,
        start: Vec::with_capacity(pieces.len()),
        width: Vec::with_capacity(pieces.len()),
        integral: Vec::with_capacity(pieces.len()),
        initial_state: y0,
    };
    let mut y = y0;
    let mut t = 0.0;
    for (phi, int, h) in &pieces {
        let fy = int * y;
        out.start.push(t);
        out.width.push(*h);
        out.integral.push(fy[3] + fy[4] + fy[5]);
        y = phi * y;
        t += h;
    }
    out.period = t;
    Ok(out)
}

/// Periodic state under a sinusoidally modulated detuning
/// Δ(t) = 2π(offset + deviation·cos(2π f_m t)), one modulation period split
/// into `pieces` equal steps with the detuning held at the piece midpoint.
pub fn modulated_fluorescence(
    params: &KineticsParams,
    offset_hz: f64,
    deviation_hz: f64,
    f_m: f64,
    pieces: usize,
) -> Result<PeriodicFluorescence> {
    if !(f_m > 0.0) {
        return Err(invalid("f_m", "must be > 0"));
    }
    let pieces = pieces.max(8);
    let period = 1.0 / f_m;
    let h = period / pieces as f64;
    let segments: Vec<CycleSegment> = (0..pieces)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            CycleSegment {
                gamma_p: params.gamma_p,
                omega_r: params.omega_r,
                delta: 2.0 * PI * (offset_hz + deviation_hz * (2.0 * PI * f_m * t).cos()),
                duration: h,
            }
        })
        .collect();
    periodic_fluorescence(params, &segments, h * 1.000_001)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::steady_state;

    #[test]
    fn constant_cycle_has_no_harmonic() {
        let p = KineticsParams::default().with_rabi(2.0 * PI * 10e3);
        let seg = CycleSegment {
            gamma_p: p.gamma_p,
            omega_r: p.omega_r,
            delta: 0.0,
            duration: 1e-3,
        };
        let pf = periodic_fluorescence(&p, &[seg], 1e-5).unwrap();
        let (x, y) = pf.harmonic(1e3);
        let f = steady_state(&p).unwrap().fluorescence();
        assert!((pf.mean() / f - 1.0).abs() < 1e-9);
        assert!(x.abs() < 1e-9 * f && y.abs() < 1e-9 * f, "{x} {y} {f}");
    }

    #[test]
    fn slow_modulation_follows_static_slope() {
        // Quasi-static: F(t) ≈ S(f0 + f_d cos) so X ≈ f_d·S'(f0).
        let p = KineticsParams::default().with_rabi(2.0 * PI * 5e3);
        let s = |f: f64| {
            steady_state(&p.clone().with_detuning(2.0 * PI * f))
                .unwrap()
                .fluorescence()
        };
        let (f0, fd) = (8e3, 200.0);
        let slope = (s(f0 + 1.0) - s(f0 - 1.0)) / 2.0;
        let pf = modulated_fluorescence(&p, f0, fd, 5.0, 256).unwrap();
        let (x, _) = pf.harmonic(5.0);
        assert!((x / (fd * slope) - 1.0).abs() < 0.02, "{x} vs {}", fd * slope);
    }
}
