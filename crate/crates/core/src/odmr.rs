//! CW-ODMR observables: analytic linewidths, steady-state and lock-in spectra,
//! scalar factor and the modulation frequency response.
//!
//! Spectrum frequency grids are MW offsets from the |0⟩ → |+1⟩ resonance, Hz.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::fit_lorentzian_dip;
use crate::kinetics::{modulated_fluorescence, steady_state, KineticsParams};
use crate::mwsignal::{MWModulation, ModulationKind};
use crate::units::GAMMA_NV;

/// Lineshape factor of a Lorentzian profile in the CW shot-noise formula.
pub const LORENTZIAN_LINESHAPE_FACTOR: f64 = 0.77;

/// Power- and pumping-broadened CW linewidth, Hz:
/// (1/2π)·√(Γ2² + Ω_R²Γ2/(2Γ1 + Γp)) with Γ2 = Γ2* + Γp.
pub fn cw_linewidth(gamma_1: f64, gamma_2_star: f64, gamma_p: f64, omega_r: f64) -> Result<f64> {
    for (name, v) in [
        ("gamma_1", gamma_1),
        ("gamma_2_star", gamma_2_star),
        ("gamma_p", gamma_p),
        ("omega_r", omega_r),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
        }
    }
    let g2 = gamma_2_star + gamma_p;
    let relax = 2.0 * gamma_1 + gamma_p;
    let power = if omega_r == 0.0 {
        0.0
    } else if relax == 0.0 {
        return Err(Error::Singular(
            "2Γ1 + Γp = 0 with a nonzero drive: the saturation term diverges".into(),
        ));
    } else {
        omega_r * omega_r * g2 / relax
    };
    Ok((g2 * g2 + power).sqrt() / (2.0 * PI))
}

/// Fourier-limited pulsed-ODMR linewidth 2√(ln 2)/(π T2*), Hz.
pub fn pulsed_odmr_linewidth(t2_star: f64) -> Result<f64> {
    if !(t2_star > 0.0 && t2_star.is_finite()) {
        return Err(invalid("t2_star", format!("must be > 0, got {t2_star}")));
    }
    Ok(2.0 * 2f64.ln().sqrt() / (PI * t2_star))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumKind {
    /// Steady-state fluorescence (n4 + n5 + n6).
    Fluorescence,
    /// Lock-in output: peak-to-peak swing of the fluorescence at f_m, projected
    /// on the principal demodulation axis.
    LockIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdmrSpectrum {
    pub kind: SpectrumKind,
    /// MW offset from resonance, Hz.
    pub freqs: Vec<f64>,
    pub signal: Vec<f64>,
    /// Off-resonant / MW-off fluorescence level.
    pub baseline: f64,
    /// Fitted FWHM, Hz (fluorescence spectra with a resolvable dip).
    pub fwhm: Option<f64>,
    /// Fitted line center, Hz.
    pub center: Option<f64>,
    /// Dip depth (fluorescence) or peak-to-peak (lock-in) relative to the baseline.
    pub contrast: f64,
}

impl OdmrSpectrum {
    pub fn new(kind: SpectrumKind, freqs: Vec<f64>, signal: Vec<f64>, baseline: f64) -> Result<Self> {
        check_grid(&freqs)?;
        if signal.len() != freqs.len() {
            return Err(Error::Mismatch(format!(
                "{} frequencies but {} signal values",
                freqs.len(),
                signal.len()
            )));
        }
        let mut s = Self {
            kind,
            freqs,
            signal,
            baseline,
            fwhm: None,
            center: None,
            contrast: 0.0,
        };
        s.contrast = s.compute_contrast();
        Ok(s)
    }

    fn compute_contrast(&self) -> f64 {
        if self.baseline == 0.0 {
            return 0.0;
        }
        let min = self.signal.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.signal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let c = match self.kind {
            SpectrumKind::Fluorescence => (self.baseline - min) / self.baseline,
            SpectrumKind::LockIn => (max - min) / self.baseline.abs(),
        };
        c.clamp(0.0, 1.0)
    }

    pub fn peak_to_peak(&self) -> f64 {
        let min = self.signal.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.signal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max - min
    }

    pub fn is_flat(&self) -> bool {
        self.peak_to_peak() <= 1e-14 * self.baseline.abs().max(f64::MIN_POSITIVE)
    }

    /// Multiplies the signal (and baseline) by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut s = self.clone();
        s.signal.iter_mut().for_each(|v| *v *= k);
        s.baseline *= k;
        s
    }

    /// Frequency of the sign change closest to the grid center (lock-in spectra).
    pub fn zero_crossing(&self) -> Option<f64> {
        let mid = 0.5 * (self.freqs[0] + self.freqs[self.freqs.len() - 1]);
        (1..self.signal.len())
            .filter(|&i| self.signal[i - 1] * self.signal[i] <= 0.0 && self.signal[i - 1] != self.signal[i])
            .map(|i| {
                let (f0, f1) = (self.freqs[i - 1], self.freqs[i]);
                let (s0, s1) = (self.signal[i - 1], self.signal[i]);
                f0 - s0 * (f1 - f0) / (s1 - s0)
            })
            .min_by(|a, b| (a - mid).abs().total_cmp(&(b - mid).abs()))
    }

    /// CSV with columns `freq_hz,signal`.
    pub fn to_csv_string(&self, header_comments: &[String]) -> String {
        let mut s = String::new();
        for line in header_comments {
            for l in line.lines() {
                let _ = writeln!(s, "# {l}");
            }
        }
        s.push_str("freq_hz,signal\n");
        for (f, v) in self.freqs.iter().zip(&self.signal) {
            let _ = writeln!(s, "{f:?},{v:?}");
        }
        s
    }
}

fn check_grid(freqs: &[f64]) -> Result<()> {
    if freqs.len() < 3 {
        return Err(invalid("freq_grid", "need at least 3 frequencies"));
    }
    if freqs.windows(2).any(|w| !(w[1] > w[0])) || freqs.iter().any(|f| !f.is_finite()) {
        return Err(invalid(
            "freq_grid",
            "frequencies must be finite and strictly increasing",
        ));
    }
    Ok(())
}

fn steady_fluorescence(params: &KineticsParams, offset_hz: f64) -> Result<f64> {
    Ok(steady_state(&params.clone().with_detuning(2.0 * PI * offset_hz))?.fluorescence())
}

/// Evenly spaced grid of `n` points over [lo, hi].
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Steady-state CW-ODMR spectrum with a Lorentzian fit of the dip.
pub fn cw_spectrum(params: &KineticsParams, freq_grid: &[f64]) -> Result<OdmrSpectrum> {
    params.validate()?;
    check_grid(freq_grid)?;
    let expected = cw_linewidth(params.gamma_1, params.gamma_2_star, params.gamma_p, params.omega_r)?;
    let span = freq_grid[freq_grid.len() - 1] - freq_grid[0];
    if span < 4.0 * expected {
        return Err(invalid(
            "freq_grid",
            format!("span {span:.4e} Hz is below 4× the expected linewidth {expected:.4e} Hz"),
        ));
    }
    let baseline = {
        let mut p = params.clone();
        p.omega_r = 0.0;
        steady_fluorescence(&p, 0.0)?
    };
    let signal = freq_grid
        .par_iter()
        .map(|&f| steady_fluorescence(params, f))
        .collect::<Result<Vec<_>>>()?;
    let mut spec = OdmrSpectrum::new(SpectrumKind::Fluorescence, freq_grid.to_vec(), signal, baseline)?;
    if spec.contrast > 1e-12 {
        let fit = fit_lorentzian_dip(&spec.freqs, &spec.signal)?;
        spec.fwhm = Some(fit.fwhm);
        spec.center = Some(fit.center);
    } else {
        spec.contrast = 0.0;
    }
    Ok(spec)
}

/// Half width at half depth of the steady-state line, Hz, found by bisection.
pub fn cw_half_width(params: &KineticsParams) -> Result<f64> {
    let base = {
        let mut p = params.clone();
        p.omega_r = 0.0;
        steady_fluorescence(&p, 0.0)?
    };
    let depth = |f: f64| -> Result<f64> { Ok(base - steady_fluorescence(params, f)?) };
    let d0 = depth(0.0)?;
    if !(d0 > 0.0) {
        return Err(invalid("omega_r", "no resonance dip (MW off?)"));
    }
    let mut hi = (params.gamma_2_star / (2.0 * PI)).max(1.0);
    while depth(hi)? > 0.5 * d0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoConvergence("half width search diverged".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if depth(mid)? > 0.5 * d0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Static finite-difference profile S(f − f_d) − S(f + f_d) of the
/// steady-state spectrum.
pub fn finite_difference_spectrum(params: &KineticsParams, f_d: f64, freq_grid: &[f64]) -> Result<OdmrSpectrum> {
    params.validate()?;
    check_grid(freq_grid)?;
    let signal = freq_grid
        .par_iter()
        .map(|&f| Ok(steady_fluorescence(params, f - f_d)? - steady_fluorescence(params, f + f_d)?))
        .collect::<Result<Vec<_>>>()?;
    let baseline = {
        let mut p = params.clone();
        p.omega_r = 0.0;
        steady_fluorescence(&p, 0.0)?
    };
    OdmrSpectrum::new(SpectrumKind::LockIn, freq_grid.to_vec(), signal, baseline)
}

/// Pieces per modulation period used for the modulated-drive propagation.
pub const MODULATION_PIECES: usize = 256;

/// Lock-in detected ODMR spectrum under FM/PM drive.
///
/// For each carrier offset the kinetics are driven with the instantaneous
/// detuning of `modulation` until periodic, then demodulated at f_m with a
/// settled lock-in. The demodulation phase is the principal axis of the
/// (X, Y) points over the sweep; the sign is chosen so the output follows
/// S(f − f_d) − S(f + f_d). The signal is the peak-to-peak swing (2× the
/// first-harmonic amplitude), which equals the finite difference in the
/// slow, small-deviation limit.
pub fn lockin_odmr_spectrum(
    params: &KineticsParams,
    modulation: &MWModulation,
    freq_grid: &[f64],
) -> Result<OdmrSpectrum> {
    params.validate()?;
    modulation.validate()?;
    check_grid(freq_grid)?;
    if modulation.kind == ModulationKind::Am {
        return Err(Error::Unsupported("lock-in ODMR needs FM or PM drive".into()));
    }
    let span = freq_grid[freq_grid.len() - 1] - freq_grid[0];
    if modulation.f_m >= span {
        return Err(invalid(
            "f_m",
            format!(
                "modulation frequency {} Hz not below the sweep span {span} Hz",
                modulation.f_m
            ),
        ));
    }
    let f_d = modulation.f_d;
    let xy = freq_grid
        .par_iter()
        .map(|&f| {
            let pf = modulated_fluorescence(params, f, f_d, modulation.f_m, MODULATION_PIECES)?;
            Ok(pf.harmonic(modulation.f_m))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let sxy: f64 = xy.iter().map(|(x, y)| x * y).sum();
    let sxx_yy: f64 = xy.iter().map(|(x, y)| x * x - y * y).sum();
    let theta = 0.5 * (2.0 * sxy).atan2(sxx_yy);
    let mut signal: Vec<f64> = xy
        .iter()
        .map(|(x, y)| 2.0 * (x * theta.cos() + y * theta.sin()))
        .collect();
    let orientation: f64 = freq_grid.iter().zip(&signal).map(|(f, s)| -f.signum() * s).sum();
    if orientation < 0.0 {
        signal.iter_mut().for_each(|v| *v = -*v);
    }
    let baseline = {
        let mut p = params.clone();
        p.omega_r = 0.0;
        steady_fluorescence(&p, 0.0)?
    };
    OdmrSpectrum::new(SpectrumKind::LockIn, freq_grid.to_vec(), signal, baseline)
}

/// Maximum |dS/df| times γ_NV: signal units per tesla. Returns 0 for a flat
/// spectrum.
pub fn scalar_factor(spectrum: &OdmrSpectrum) -> f64 {
    max_slope(spectrum) * GAMMA_NV
}

/// Maximum |dS/df| by central differences (one-sided at the ends), per Hz.
pub fn max_slope(spectrum: &OdmrSpectrum) -> f64 {
    if spectrum.is_flat() {
        return 0.0;
    }
    let f = &spectrum.freqs;
    let s = &spectrum.signal;
    let n = f.len();
    (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            ((s[b] - s[a]) / (f[b] - f[a])).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    /// Modulation frequencies, Hz.
    pub f_m: Vec<f64>,
    /// First-harmonic fluorescence amplitude divided by the mean fluorescence.
    pub contrast: Vec<f64>,
    /// `contrast` relative to the quasi-static response.
    pub normalized: Vec<f64>,
    pub quasi_static_contrast: f64,
    /// −3 dB point by log-frequency interpolation, Hz.
    pub bandwidth_3db: Option<f64>,
    /// Operating point and deviation used, Hz.
    pub operating_offset: f64,
    pub deviation: f64,
}

/// Small-signal response to FM at the steepest point of the line.
///
/// The carrier sits at HWHM/√3 (maximum slope of a Lorentzian) and the
/// deviation is HWHM/20, both from the numerically determined half width.
pub fn frequency_response(params: &KineticsParams, f_m_list: &[f64]) -> Result<FrequencyResponse> {
    params.validate()?;
    if f_m_list.is_empty() || f_m_list.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
        return Err(invalid("f_m_list", "modulation frequencies must be positive"));
    }
    let hwhm = cw_half_width(params)?;
    let offset = hwhm / 3f64.sqrt();
    let deviation = hwhm / 20.0;
    let response = |f_m: f64| -> Result<f64> {
        let pf = modulated_fluorescence(params, offset, deviation, f_m, MODULATION_PIECES)?;
        let (x, y) = pf.harmonic(f_m);
        Ok(x.hypot(y) / pf.mean())
    };
    let f_min = f_m_list.iter().copied().fold(f64::INFINITY, f64::min);
    let quasi_static = response((f_min / 20.0).min(1.0))?;
    let contrast = f_m_list.par_iter().map(|&f| response(f)).collect::<Result<Vec<_>>>()?;
    let normalized: Vec<f64> = contrast.iter().map(|c| c / quasi_static).collect();

    let mut order: Vec<usize> = (0..f_m_list.len()).collect();
    order.sort_by(|&a, &b| f_m_list[a].total_cmp(&f_m_list[b]));
    let target = 0.5f64.sqrt();
    let mut bandwidth = None;
    for w in order.windows(2) {
        let (i, j) = (w[0], w[1]);
        if normalized[i] >= target && normalized[j] < target {
            let (l0, l1) = (f_m_list[i].ln(), f_m_list[j].ln());
            let frac = (normalized[i] - target) / (normalized[i] - normalized[j]);
            bandwidth = Some((l0 + frac * (l1 - l0)).exp());
            break;
        }
    }
    Ok(FrequencyResponse {
        f_m: f_m_list.to_vec(),
        contrast,
        normalized,
        quasi_static_contrast: quasi_static,
        bandwidth_3db: bandwidth,
        operating_offset: offset,
        deviation,
    })
}

/// Log-spaced frequencies from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
