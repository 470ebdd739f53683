//! Small least-squares fitting toolkit: Nelder–Mead simplex for the nonlinear
//! parameters and linear least squares for the parameters that enter linearly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Stop when the simplex spread in function value falls below this.
    pub f_tol: f64,
    pub x_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iter: 4000,
            f_tol: 1e-14,
            x_tol: 1e-10,
        }
    }
}

/// Minimizes `f` starting from `x0` with initial simplex offsets `step`.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: &[f64], opts: SimplexOptions) -> (Vec<f64>, f64) {
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();
    for _ in 0..opts.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = (vals[n] - vals[0]).abs();
        let size = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * (vals[0].abs() + opts.f_tol) && size <= opts.x_tol {
            break;
        }
        if size <= opts.x_tol * 1e-3 {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (pts[n][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                let best = pts[0].clone();
                for i in 1..=n {
                    for j in 0..n {
                        pts[i][j] = best[j] + 0.5 * (pts[i][j] - best[j]);
                    }
                    vals[i] = eval(&pts[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (pts[best].clone(), vals[best])
}

/// Least-squares coefficients for y ≈ Σ c_k·columns[k]; returns (coefficients, SSE).
pub fn linear_lstsq(columns: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let m = y.len();
    let k = columns.len();
    if m < k || columns.iter().any(|c| c.len() != m) {
        return None;
    }
    let a = DMatrix::from_fn(m, k, |i, j| columns[j][i]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&b, 1e-13).ok()?;
    let r = &a * &coef - &b;
    Some((coef.iter().copied().collect(), r.norm_squared()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub offset: f64,
    pub amplitude: f64,
    /// Time constant, s.
    pub tau: f64,
}

/// Fits y = offset + amplitude·exp(−t/τ).
pub fn fit_exponential(t: &[f64], y: &[f64]) -> Result<ExponentialFit> {
    if t.len() < 4 || t.len() != y.len() {
        return Err(Error::Fit("need at least 4 matching points".into()));
    }
    let span = t[t.len() - 1] - t[0];
    let sse = |log_tau: f64| -> (f64, Vec<f64>) {
        let tau = log_tau.exp();
        let ones = vec![1.0; t.len()];
        let e: Vec<f64> = t.iter().map(|&ti| (-(ti - t[0]) / tau).exp()).collect();
        match linear_lstsq(&[ones, e], y) {
            Some((c, s)) => (s, c),
            None => (f64::INFINITY, vec![0.0, 0.0]),
        }
    };
    // Coarse log-spaced scan, then simplex refinement.
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=80 {
        let lt = (span * 1e-3).ln() + (i as f64 / 80.0) * (1e6f64).ln();
        let (s, _) = sse(lt);
        if s < best.0 {
            best = (s, lt);
        }
    }
    let (x, _) = nelder_mead(|p| sse(p[0]).0, &[best.1], &[0.05], SimplexOptions::default());
    let (_, c) = sse(x[0]);
    let tau = x[0].exp();
    Ok(ExponentialFit {
        offset: c[0],
        amplitude: c[1] * (t[0] / tau).exp(),
        tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampedSineFit {
    /// Oscillation frequency, Hz.
    pub frequency: f64,
    /// Envelope decay rate, s⁻¹.
    pub decay: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    pub slope: f64,
}

/// Dominant frequency of uniformly sampled data from a zero-padded FFT peak
/// with parabolic interpolation. Returns (frequency Hz, peak magnitude).
pub fn dominant_frequency(y: &[f64], dt: f64) -> (f64, f64) {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let padded = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = y
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(padded)
        .collect();
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let mags: Vec<f64> = buf[..padded / 2].iter().map(|c| c.norm()).collect();
    let k = (1..mags.len())
        .max_by(|&a, &b| mags[a].total_cmp(&mags[b]))
        .unwrap_or(1);
    let shift = if k + 1 < mags.len() {
        let (a, b, c) = (mags[k - 1], mags[k], mags[k + 1]);
        let den = a - 2.0 * b + c;
        if den != 0.0 {
            0.5 * (a - c) / den
        } else {
            0.0
        }
    } else {
        0.0
    };
    ((k as f64 + shift) / (padded as f64 * dt), mags[k])
}

/// Fits y = offset + slope·t + e^{−γt}(A cos 2πft + B sin 2πft) to uniformly
/// sampled data.
pub fn fit_damped_sinusoid(t: &[f64], y: &[f64]) -> Result<DampedSineFit> {
    let n = t.len();
    if n < 8 || n != y.len() {
        return Err(Error::Fit("need at least 8 matching points".into()));
    }
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    let (f0, _) = dominant_frequency(y, dt);
    if !(f0 > 0.0) {
        return Err(Error::Fit("no oscillation found".into()));
    }
    let t0 = t[0];
    let ones = vec![1.0; n];
    let lin: Vec<f64> = t.iter().map(|&ti| ti - t0).collect();
    let model = |p: &[f64]| -> Option<(Vec<f64>, f64)> {
        let (f, g) = (p[0] * f0, p[1] * f0);
        let c: Vec<f64> = lin.iter().map(|&s| (-g * s).exp() * (2.0 * PI * f * s).cos()).collect();
        let d: Vec<f64> = lin.iter().map(|&s| (-g * s).exp() * (2.0 * PI * f * s).sin()).collect();
        linear_lstsq(&[ones.clone(), lin.clone(), c, d], y)
    };
    let cost = |p: &[f64]| model(p).map_or(f64::INFINITY, |m| m.1);
    let mut best = (f64::INFINITY, vec![1.0, 0.0]);
    for &g in &[0.0, 0.01, 0.05, 0.2] {
        let (x, v) = nelder_mead(cost, &[1.0, g], &[0.01, 0.02], SimplexOptions::default());
        if v < best.0 {
            best = (v, x);
        }
    }
    let p = best.1;
    let (c, _) = model(&p).ok_or_else(|| Error::Fit("singular design matrix".into()))?;
    Ok(DampedSineFit {
        frequency: p[0] * f0,
        decay: p[1] * f0,
        amplitude: c[2].hypot(c[3]),
        phase: (-c[3]).atan2(c[2]),
        offset: c[0] - c[1] * t0,
        slope: c[1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub fwhm: f64,
    /// Depth of the dip (positive for a dip below `baseline`).
    pub depth: f64,
    pub baseline: f64,
}

/// Fits y = baseline − depth / (1 + ((x − x0)/(fwhm/2))²).
pub fn fit_lorentzian_dip(x: &[f64], y: &[f64]) -> Result<LorentzianFit> {
    let n = x.len();
    if n < 5 || n != y.len() {
        return Err(Error::Fit("need at least 5 matching points".into()));
    }
    let span = x[n - 1] - x[0];
    let imin = (0..n).min_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
    let ymax = y.iter().copied().fold(f64::MIN, f64::max);
    let half = 0.5 * (ymax + y[imin]);
    let crossings = (0..n).filter(|&i| y[i] < half).count().max(1);
    let w0 = (crossings as f64 * span / (n - 1) as f64).max(span / n as f64);
    let ones = vec![1.0; n];
    let model = |p: &[f64]| -> Option<(Vec<f64>, f64)> {
        let (x0, hw) = (x[imin] + p[0] * w0, 0.5 * w0 * p[1].exp());
        let l: Vec<f64> = x.iter().map(|&xi| -1.0 / (1.0 + ((xi - x0) / hw).powi(2))).collect();
        linear_lstsq(&[ones.clone(), l], y)
    };
    let cost = |p: &[f64]| model(p).map_or(f64::INFINITY, |m| m.1);
    let (p, _) = nelder_mead(cost, &[0.0, 0.0], &[0.1, 0.2], SimplexOptions::default());
    let (c, _) = model(&p).ok_or_else(|| Error::Fit("singular design matrix".into()))?;
    Ok(LorentzianFit {
        center: x[imin] + p[0] * w0,
        fwhm: w0 * p[1].exp(),
        depth: c[1],
        baseline: c[0],
    })
}

/// Full width at half depth of a sampled dip, by linear interpolation of the
/// half-depth crossings on either side of the minimum.
pub fn half_depth_width(x: &[f64], y: &[f64], baseline: f64) -> Option<f64> {
    let imin = (0..y.len()).min_by(|&a, &b| y[a].total_cmp(&y[b]))?;
    let half = 0.5 * (baseline + y[imin]);
    let cross = |i: usize, j: usize| x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]);
    let left = (1..=imin).rev().find(|&i| y[i - 1] >= half).map(|i| cross(i - 1, i))?;
    let right = (imin..y.len() - 1)
        .find(|&i| y[i + 1] >= half)
        .map(|i| cross(i, i + 1))?;
    Some(right - left)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_finds_rosenbrock_minimum() {
        let f = |p: &[f64]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        let (x, _) = nelder_mead(f, &[-1.2, 1.0], &[0.1, 0.1], SimplexOptions::default());
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn exponential_recovered() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 5e-6).collect();
        let y: Vec<f64> = t.iter().map(|&s| 2.0 - 0.3 * (-s / 1.5e-4).exp()).collect();
        let fit = fit_exponential(&t, &y).unwrap();
        assert!((fit.tau / 1.5e-4 - 1.0).abs() < 1e-6);
        assert!((fit.amplitude + 0.3).abs() < 1e-6);
    }

    #[test]
    fn damped_sine_recovered() {
        let t: Vec<f64> = (0..800).map(|i| i as f64 * 5e-9).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&s| 0.1 + 0.02 * (-3e5 * s).exp() * (2.0 * PI * 2.5e6 * s + 0.4).cos())
            .collect();
        let fit = fit_damped_sinusoid(&t, &y).unwrap();
        assert!((fit.frequency / 2.5e6 - 1.0).abs() < 1e-7, "{fit:?}");
        assert!((fit.decay / 3e5 - 1.0).abs() < 1e-4, "{fit:?}");
        assert!((fit.amplitude - 0.02).abs() < 1e-8);
    }

    #[test]
    fn lorentzian_recovered() {
        let x: Vec<f64> = (0..161).map(|i| -200e3 + i as f64 * 2.5e3).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&f| 1.0 - 0.01 / (1.0 + ((f - 3e3) / 20e3).powi(2)))
            .collect();
        let fit = fit_lorentzian_dip(&x, &y).unwrap();
        assert!((fit.fwhm / 40e3 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.center - 3e3).abs() < 1.0);
        assert!((fit.depth - 0.01).abs() < 1e-9);
        let w = half_depth_width(&x, &y, 1.0).unwrap();
        assert!((w / 40e3 - 1.0).abs() < 0.01);
    }
}
