//! Shot-noise sensitivity estimators, readout contrast integrals, coil noise
//! and the CW sensitivity optimizer over (saturation fraction, Rabi frequency).

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kinetics::{steady_state, KineticsParams};
use crate::odmr::{cw_linewidth, log_grid, LORENTZIAN_LINESHAPE_FACTOR};
use crate::units::{tesla_per_hz, tesla_seconds_per_radian, BOLTZMANN, ELEMENTARY_CHARGE};

/// Gain from driving all three hyperfine lines.
pub const HYPERFINE_ENHANCEMENT: f64 = 2.67;
/// Gain from double-resonance driving.
pub const DOUBLE_RESONANCE_ENHANCEMENT: f64 = 1.3;

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

fn nonzero_signal(contrast: f64, rate: f64) -> Result<()> {
    if contrast == 0.0 || rate == 0.0 {
        return Err(Error::InfiniteSensitivity(format!(
            "contrast {contrast} and photon rate {rate} Hz must both be nonzero"
        )));
    }
    Ok(())
}

/// CW-ODMR shot-noise limit P_F·(h/gμB)·ν/(C√(R t)), T.
pub fn shot_noise_cw(p_f: f64, linewidth: f64, contrast: f64, photon_rate: f64, t: f64) -> Result<f64> {
    nonzero_signal(contrast, photon_rate)?;
    positive("p_f", p_f)?;
    positive("linewidth", linewidth)?;
    positive("contrast", contrast)?;
    positive("photon_rate", photon_rate)?;
    positive("t", t)?;
    Ok(p_f * tesla_per_hz() * linewidth / (contrast * (photon_rate * t).sqrt()))
}

/// Ramsey shot-noise limit (ħ/gμB)/(C√(N τ_m t))·√(T_seq/τ_m), T, for N
/// detected photons per measurement.
pub fn shot_noise_ramsey(contrast: f64, photons_per_meas: f64, tau_m: f64, t_seq: f64, t: f64) -> Result<f64> {
    nonzero_signal(contrast, photons_per_meas)?;
    positive("contrast", contrast)?;
    positive("photons_per_meas", photons_per_meas)?;
    positive("tau_m", tau_m)?;
    positive("t", t)?;
    if !(t_seq >= tau_m) {
        return Err(invalid("t_seq", format!("must be >= tau_m = {tau_m}, got {t_seq}")));
    }
    Ok(tesla_seconds_per_radian() / (contrast * (photons_per_meas * tau_m * t).sqrt()) * (t_seq / tau_m).sqrt())
}

/// Ramsey limit with N = R·T_seq: (ħ/gμB)/(C τ_m √(R t)), T.
pub fn shot_noise_ramsey_simplified(contrast: f64, photon_rate: f64, tau_m: f64, t: f64) -> Result<f64> {
    nonzero_signal(contrast, photon_rate)?;
    positive("contrast", contrast)?;
    positive("photon_rate", photon_rate)?;
    positive("tau_m", tau_m)?;
    positive("t", t)?;
    Ok(tesla_seconds_per_radian() / (contrast * tau_m * (photon_rate * t).sqrt()))
}

/// Detected photon rate U_PD/(G_TI·q), Hz.
pub fn photon_rate_from_pd(u_pd: f64, transimpedance_gain: f64) -> Result<f64> {
    positive("transimpedance_gain", transimpedance_gain)?;
    Ok(u_pd / (transimpedance_gain * ELEMENTARY_CHARGE))
}

/// Timing and fluorescence-recovery parameters of a continuously excited
/// readout. The fluorescence after the second π/2 pulse recovers as
/// U_fl(t) = −A_fl·exp(−t/τ_fl).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutGeometry {
    pub t_seq: f64,
    pub tau_m: f64,
    /// Gate length, s.
    pub delta_t: f64,
    /// Reference cycle time, s.
    pub t_ref: f64,
    /// Repolarization reference time, s.
    pub t0: f64,
    /// Recovery amplitude, V.
    pub a_fl: f64,
    pub tau_fl: f64,
    pub t2_star: f64,
}

impl Default for ReadoutGeometry {
    fn default() -> Self {
        Self {
            t_seq: 110e-6,
            tau_m: 6.42e-6,
            delta_t: 55e-6,
            t_ref: 110e-6,
            t0: 150e-6,
            a_fl: 0.105,
            tau_fl: 0.1e-3,
            t2_star: 8.5e-6,
        }
    }
}

impl ReadoutGeometry {
    pub fn validate(&self) -> Result<()> {
        positive("t_seq", self.t_seq)?;
        positive("tau_fl", self.tau_fl)?;
        positive("t2_star", self.t2_star)?;
        if !(self.delta_t > 0.0 && self.delta_t <= 0.5 * self.t_seq * (1.0 + 1e-12)) {
            return Err(invalid(
                "delta_t",
                format!("must satisfy 0 < delta_t <= t_seq/2, got {}", self.delta_t),
            ));
        }
        if !(self.tau_m >= 0.0 && self.tau_m < self.t_seq) {
            return Err(invalid(
                "tau_m",
                format!("must satisfy 0 <= tau_m < t_seq, got {}", self.tau_m),
            ));
        }
        if !(self.a_fl >= 0.0 && self.a_fl.is_finite()) {
            return Err(invalid("a_fl", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// ∫_a^b U_fl dt.
    fn recovery_integral(&self, a: f64, b: f64) -> f64 {
        -self.a_fl * self.tau_fl * ((-a / self.tau_fl).exp() - (-b / self.tau_fl).exp())
    }

    fn dephasing(&self) -> f64 {
        (-self.tau_m / self.t2_star).exp()
    }
}

/// Lock-in output: the difference of the two half-cycle integrals of the
/// recovery around t0, normalized by T_seq/2 and damped by exp(−τ_m/T2*).
/// Reported as the positive size of the fluorescence decrease, V.
pub fn lia_contrast(geom: &ReadoutGeometry) -> Result<f64> {
    geom.validate()?;
    let half = 0.5 * geom.t_seq;
    if geom.t0 < half {
        return Err(invalid("t0", format!("must be >= t_seq/2 = {half}, got {}", geom.t0)));
    }
    let diff = geom.recovery_integral(geom.t0 - half, geom.t0) - geom.recovery_integral(geom.t0, geom.t0 + half);
    Ok(-diff / half * geom.dephasing())
}

/// Gated readout: difference of two Δt-long gates starting at t0 − T_seq/2
/// and t0, normalized by Δt and damped by exp(−τ_m/T2*). Positive, V.
pub fn gated_contrast(geom: &ReadoutGeometry) -> Result<f64> {
    geom.validate()?;
    let half = 0.5 * geom.t_seq;
    if geom.t0 < half {
        return Err(invalid("t0", format!("must be >= t_seq/2 = {half}, got {}", geom.t0)));
    }
    let a = geom.t0 - half;
    let diff = geom.recovery_integral(a, a + geom.delta_t) - geom.recovery_integral(geom.t0, geom.t0 + geom.delta_t);
    Ok(-diff / geom.delta_t * geom.dephasing())
}

/// C_det/√(T_seq/Δt)/√(T_seq/T_ref).
pub fn equivalent_contrast(c_det: f64, geom: &ReadoutGeometry) -> Result<f64> {
    geom.validate()?;
    positive("t_ref", geom.t_ref)?;
    Ok(c_det / (geom.t_seq / geom.delta_t).sqrt() / (geom.t_seq / geom.t_ref).sqrt())
}

/// η·√V for a sensing volume in mm³.
pub fn volume_normalized(eta: f64, volume_mm3: f64) -> Result<f64> {
    positive("volume", volume_mm3)?;
    Ok(eta * volume_mm3.sqrt())
}

/// Battery-driven bias coil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilCircuit {
    /// Ω.
    pub r_coil: f64,
    /// Ω.
    pub r_battery: f64,
    /// K.
    pub temperature: f64,
    /// A.
    pub current: f64,
    /// Bias field at the sensor, T.
    pub b_bias: f64,
    /// Supply voltage, V.
    pub u_supply: f64,
}

impl Default for CoilCircuit {
    fn default() -> Self {
        Self {
            r_coil: 49.5,
            r_battery: 0.016,
            temperature: 293.15,
            current: 12.0 / 49.5,
            b_bias: 1e-3,
            u_supply: 12.0,
        }
    }
}

/// Field noise of the bias coil from Johnson noise of coil plus battery and
/// shot noise of the current: (√2 B_bias/2U)·√(U_J² + (i_shot R_coil)²), T.
pub fn coil_noise(coil: &CoilCircuit, bandwidth: f64) -> Result<f64> {
    positive("r_coil", coil.r_coil)?;
    positive("r_battery", coil.r_battery)?;
    positive("u_supply", coil.u_supply)?;
    if !(coil.temperature >= 0.0 && coil.current >= 0.0 && bandwidth >= 0.0) {
        return Err(invalid("coil", "temperature, current and bandwidth must be >= 0"));
    }
    let u_j2 = 4.0 * BOLTZMANN * coil.temperature * (coil.r_coil + coil.r_battery) * bandwidth;
    let i_shot2 = 2.0 * ELEMENTARY_CHARGE * coil.current * bandwidth;
    let u_shot2 = i_shot2 * coil.r_coil * coil.r_coil;
    Ok(2f64.sqrt() * coil.b_bias / (2.0 * coil.u_supply) * (u_j2 + u_shot2).sqrt())
}

/// Model behind the CW optimizer.
///
/// Pumping follows Γp = s·Γp_sat; the contrast is the steady-state
/// fluorescence dip of the kinetics model at zero detuning, scaled by
/// `visibility` (orientation and hyperfine dilution, collection); the
/// photon rate scales with steady-state fluorescence relative to the
/// reference pumping at which `photon_rate_ref` was measured; the linewidth
/// is the analytic CW linewidth. `gamma_p_sat` and `visibility` are fitted
/// constants, not measured ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwSensitivityModel {
    pub t1: f64,
    pub t2_star: f64,
    /// s⁻¹ per unit saturation fraction.
    pub gamma_p_sat: f64,
    pub visibility: f64,
    /// Hz.
    pub photon_rate_ref: f64,
    /// s⁻¹.
    pub gamma_p_ref: f64,
    pub lineshape_factor: f64,
}

impl Default for CwSensitivityModel {
    fn default() -> Self {
        Self {
            t1: 6e-3,
            t2_star: 8.5e-6,
            gamma_p_sat: 7.526e8,
            visibility: 0.02483,
            photon_rate_ref: 4.6e15,
            gamma_p_ref: 0.026e6,
            lineshape_factor: LORENTZIAN_LINESHAPE_FACTOR,
        }
    }
}

/// One grid cell of the CW optimization. `delta_b` is the 1 s shot-noise
/// limit (T, numerically equal to η in T/√Hz); infinite when the contrast
/// vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwPoint {
    pub s: f64,
    /// rad/s.
    pub omega_r: f64,
    pub gamma_p: f64,
    pub contrast: f64,
    pub linewidth: f64,
    pub photon_rate: f64,
    pub delta_b: f64,
}

impl CwSensitivityModel {
    pub fn validate(&self) -> Result<()> {
        positive("t1", self.t1)?;
        positive("t2_star", self.t2_star)?;
        positive("gamma_p_sat", self.gamma_p_sat)?;
        positive("visibility", self.visibility)?;
        positive("photon_rate_ref", self.photon_rate_ref)?;
        positive("gamma_p_ref", self.gamma_p_ref)?;
        positive("lineshape_factor", self.lineshape_factor)
    }

    fn kinetics(&self, gamma_p: f64) -> KineticsParams {
        KineticsParams::default()
            .with_t1(self.t1)
            .with_t2_star(self.t2_star)
            .with_pumping(gamma_p)
    }

    fn fluorescence(&self, gamma_p: f64, omega_r: f64) -> Result<f64> {
        Ok(steady_state(&self.kinetics(gamma_p).with_rabi(omega_r))?.fluorescence())
    }

    pub fn evaluate(&self, s: f64, omega_r: f64) -> Result<CwPoint> {
        positive("s", s)?;
        if !(omega_r >= 0.0 && omega_r.is_finite()) {
            return Err(invalid("omega_r", "must be finite and >= 0"));
        }
        let gamma_p = s * self.gamma_p_sat;
        let f_dark = self.fluorescence(gamma_p, 0.0)?;
        let f_drive = self.fluorescence(gamma_p, omega_r)?;
        let contrast = self.visibility * (f_dark - f_drive) / f_dark;
        let photon_rate = self.photon_rate_ref * f_dark / self.fluorescence(self.gamma_p_ref, 0.0)?;
        let linewidth = cw_linewidth(1.0 / self.t1, 1.0 / self.t2_star, gamma_p, omega_r)?;
        let delta_b = if contrast > 0.0 {
            shot_noise_cw(self.lineshape_factor, linewidth, contrast, photon_rate, 1.0)?
        } else {
            f64::INFINITY
        };
        Ok(CwPoint {
            s,
            omega_r,
            gamma_p,
            contrast,
            linewidth,
            photon_rate,
            delta_b,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwOptimum {
    pub best: CwPoint,
    /// Best η divided by the hyperfine and double-resonance gains, T/√Hz.
    pub enhanced_eta: f64,
    /// Every grid cell, saturation fraction outermost.
    pub map: Vec<CwPoint>,
}

impl CwOptimum {
    /// `s,omega_r_hz,delta_b_tesla` rows.
    pub fn to_csv_string(&self, header_comments: &[String]) -> String {
        let mut out = String::new();
        for c in header_comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str("s,omega_r_hz,delta_b_tesla\n");
        for p in &self.map {
            let _ = writeln!(
                out,
                "{:?},{:?},{:?}",
                p.s,
                p.omega_r / (2.0 * std::f64::consts::PI),
                p.delta_b
            );
        }
        out
    }
}

/// 50 saturation fractions from 10⁻⁵ to 10⁻².
pub fn default_s_grid() -> Vec<f64> {
    log_grid(1e-5, 1e-2, 50)
}

/// 50 Rabi frequencies from 2π·1 kHz to 2π·100 kHz, rad/s.
pub fn default_omega_grid() -> Vec<f64> {
    log_grid(1e3, 1e5, 50)
        .into_iter()
        .map(|f| 2.0 * std::f64::consts::PI * f)
        .collect()
}

/// Exhaustive search of the default model with the given relaxation times.
pub fn optimize_cw(t1: f64, t2_star: f64, s_grid: &[f64], omega_grid: &[f64]) -> Result<CwOptimum> {
    let model = CwSensitivityModel {
        t1,
        t2_star,
        ..CwSensitivityModel::default()
    };
    optimize_cw_with(&model, s_grid, omega_grid)
}

/// Exhaustive search. Ties go to the lowest Ω_R, then the lowest s.
pub fn optimize_cw_with(model: &CwSensitivityModel, s_grid: &[f64], omega_grid: &[f64]) -> Result<CwOptimum> {
    model.validate()?;
    if s_grid.is_empty() || omega_grid.is_empty() {
        return Err(invalid("grid", "s and omega grids must be nonempty"));
    }
    let cells: Vec<(f64, f64)> = s_grid
        .iter()
        .flat_map(|&s| omega_grid.iter().map(move |&w| (s, w)))
        .collect();
    let map = cells
        .par_iter()
        .map(|&(s, w)| model.evaluate(s, w))
        .collect::<Result<Vec<_>>>()?;
    let best = *map
        .iter()
        .filter(|p| p.delta_b.is_finite())
        .min_by(|a, b| {
            a.delta_b
                .total_cmp(&b.delta_b)
                .then(a.omega_r.total_cmp(&b.omega_r))
                .then(a.s.total_cmp(&b.s))
        })
        .ok_or_else(|| Error::InfiniteSensitivity("no grid cell has a nonzero contrast".into()))?;
    Ok(CwOptimum {
        best,
        enhanced_eta: best.delta_b / (HYPERFINE_ENHANCEMENT * DOUBLE_RESONANCE_ENHANCEMENT),
        map,
    })
}

/// Summary of a CW sensitivity estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// Minimum detectable field at `measurement_time`, T.
    pub delta_b: f64,
    /// T/√Hz.
    pub eta: f64,
    pub contrast: f64,
    /// Hz.
    pub linewidth: f64,
    /// Hz.
    pub photon_rate: f64,
    /// V/T.
    pub scalar_factor: f64,
    pub hyperfine_factor: f64,
    pub dr_factor: f64,
    /// η with both enhancement factors applied, T/√Hz.
    pub eta_enhanced: f64,
    /// s.
    pub measurement_time: f64,
    /// T·mm^{3/2}/√Hz.
    pub eta_v: f64,
    /// Model constants that were fitted rather than measured.
    pub fitted_parameters: Vec<String>,
}

impl SensitivityReport {
    pub fn cw(
        p_f: f64,
        linewidth: f64,
        contrast: f64,
        photon_rate: f64,
        scalar_factor: f64,
        measurement_time: f64,
        volume_mm3: f64,
    ) -> Result<Self> {
        positive("scalar_factor", scalar_factor)?;
        let eta = shot_noise_cw(p_f, linewidth, contrast, photon_rate, 1.0)?;
        Ok(Self {
            delta_b: eta / measurement_time.sqrt(),
            eta,
            contrast,
            linewidth,
            photon_rate,
            scalar_factor,
            hyperfine_factor: HYPERFINE_ENHANCEMENT,
            dr_factor: DOUBLE_RESONANCE_ENHANCEMENT,
            eta_enhanced: eta / (HYPERFINE_ENHANCEMENT * DOUBLE_RESONANCE_ENHANCEMENT),
            measurement_time,
            eta_v: volume_normalized(eta, volume_mm3)?,
            fitted_parameters: Vec::new(),
        })
    }

    /// Report for an optimizer result, flagging the fitted model constants.
    pub fn from_optimum(
        model: &CwSensitivityModel,
        opt: &CwOptimum,
        scalar_factor: f64,
        measurement_time: f64,
        volume_mm3: f64,
    ) -> Result<Self> {
        let b = &opt.best;
        let mut r = Self::cw(
            model.lineshape_factor,
            b.linewidth,
            b.contrast,
            b.photon_rate,
            scalar_factor,
            measurement_time,
            volume_mm3,
        )?;
        r.fitted_parameters = vec![
            format!("gamma_p_sat = {:e} s^-1", model.gamma_p_sat),
            format!("visibility = {}", model.visibility),
        ];
        Ok(r)
    }
}
