//! Modulated microwave drive: FM/PM/AM descriptions, instantaneous detuning,
//! Carson bandwidth and Bessel sideband decomposition.
//!
//! Phase convention: the frequency deviation is maximal at t = 0, i.e. the
//! instantaneous offset is f_d·cos(2π f_m t) and the carrier phase is
//! β·sin(2π f_m t).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModulationKind {
    Fm,
    Pm,
    Am,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MWModulation {
    pub kind: ModulationKind,
    /// Carrier, Hz.
    pub f0: f64,
    /// Modulation frequency, Hz.
    pub f_m: f64,
    /// Peak frequency deviation, Hz (FM). For PM this is φ_d·f_m.
    pub f_d: f64,
    /// Peak phase deviation, rad (PM). For FM this is f_d/f_m.
    pub phi_d: f64,
}

impl MWModulation {
    pub fn fm(f0: f64, f_m: f64, f_d: f64) -> Result<Self> {
        let m = Self {
            kind: ModulationKind::Fm,
            f0,
            f_m,
            f_d,
            phi_d: if f_m > 0.0 { f_d / f_m } else { 0.0 },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn pm(f0: f64, f_m: f64, phi_d: f64) -> Result<Self> {
        let m = Self {
            kind: ModulationKind::Pm,
            f0,
            f_m,
            f_d: phi_d * f_m,
            phi_d,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn am(f0: f64, f_m: f64) -> Result<Self> {
        let m = Self {
            kind: ModulationKind::Am,
            f0,
            f_m,
            f_d: 0.0,
            phi_d: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_m > 0.0 && self.f_m.is_finite()) {
            return Err(invalid("f_m", format!("must be > 0, got {}", self.f_m)));
        }
        if !(self.f_d >= 0.0 && self.f_d.is_finite()) {
            return Err(invalid("f_d", format!("must be >= 0, got {}", self.f_d)));
        }
        if !(self.phi_d >= 0.0 && self.phi_d.is_finite()) {
            return Err(invalid("phi_d", format!("must be >= 0, got {}", self.phi_d)));
        }
        if self.kind != ModulationKind::Am && (self.f_d - self.phi_d * self.f_m).abs() > 1e-9 * self.f_d.max(1.0) {
            return Err(invalid("phi_d", "inconsistent with f_d / f_m"));
        }
        Ok(())
    }

    /// Modulation index β = f_d/f_m (FM) or φ_d (PM); zero for AM.
    pub fn beta(&self) -> f64 {
        match self.kind {
            ModulationKind::Fm => self.f_d / self.f_m,
            ModulationKind::Pm => self.phi_d,
            ModulationKind::Am => 0.0,
        }
    }

    fn require_angle(&self) -> Result<()> {
        if self.kind == ModulationKind::Am {
            return Err(Error::Unsupported(
                "AM keeps a fixed carrier frequency; use am_two_tone".into(),
            ));
        }
        Ok(())
    }

    /// Instantaneous frequency offset from the carrier, Hz.
    pub fn instantaneous_detuning(&self, t: f64) -> Result<f64> {
        self.require_angle()?;
        let c = (2.0 * PI * self.f_m * t).cos();
        Ok(match self.kind {
            ModulationKind::Fm => self.f_d * c,
            // d/dt [φ_d sin(2π f_m t)] / 2π
            _ => self.phi_d * self.f_m * c,
        })
    }

    /// Carson bandwidth, Hz.
    pub fn carson_bandwidth(&self) -> Result<f64> {
        self.require_angle()?;
        Ok(match self.kind {
            ModulationKind::Fm => 2.0 * (self.f_d + self.f_m),
            _ => 2.0 * (self.phi_d + 1.0) * self.f_m,
        })
    }

    /// Carrier phase excursion β·sin(2π f_m t), rad.
    pub fn phase(&self, t: f64) -> Result<f64> {
        self.require_angle()?;
        Ok(self.beta() * (2.0 * PI * self.f_m * t).sin())
    }

    /// Sideband lines (frequency Hz, signed amplitude J_n(β)) for n = −n_max..n_max.
    pub fn sidebands(&self, n_max: usize) -> Result<Vec<(f64, f64)>> {
        self.require_angle()?;
        let j = bessel_sidebands(self.beta(), n_max);
        let mut out = Vec::with_capacity(2 * n_max + 1);
        for n in -(n_max as i64)..=(n_max as i64) {
            let k = n.unsigned_abs() as usize;
            let sign = if n < 0 && k % 2 == 1 { -1.0 } else { 1.0 };
            out.push((self.f0 + n as f64 * self.f_m, sign * j[k]));
        }
        Ok(out)
    }
}

/// J_n(x) for n = 0..=n_max by Miller's backward recurrence, normalized with
/// J₀ + 2ΣJ₂ₖ = 1.
pub fn bessel_sidebands(beta: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if beta == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let x = beta.abs();
    let top = n_max.max(x.ceil() as usize);
    let mut m = top + 20 + (40.0 * top as f64).sqrt() as usize;
    m += m % 2;
    let mut j_next = 0.0;
    let mut j_cur = 1e-300;
    let mut norm = 0.0;
    for k in (1..=m).rev() {
        let j_prev = 2.0 * k as f64 / x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        let idx = k - 1;
        if idx <= n_max {
            out[idx] = j_cur;
        }
        if idx % 2 == 0 {
            norm += if idx == 0 { j_cur } else { 2.0 * j_cur };
        }
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    for (n, v) in out.iter_mut().enumerate() {
        *v /= norm;
        if beta < 0.0 && n % 2 == 1 {
            *v = -*v;
        }
    }
    out
}

pub fn bessel_j(n: usize, x: f64) -> f64 {
    bessel_sidebands(x, n)[n]
}

/// Two-tone description of an amplitude-modulated drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmSidebands {
    /// (frequency Hz, relative amplitude).
    pub tones: Vec<(f64, f64)>,
    /// f_m too small for the two tones to be distinct; a single tone is returned.
    pub degenerate: bool,
    /// The two sideband dips are resolved as separate lines: for two equal
    /// Lorentzians of width FWHM this happens when 2·f_m > FWHM/√3.
    pub splitting: bool,
}

/// Tones at f0 ± f_m of equal amplitude. `linewidth_fwhm` (Hz), if given, sets
/// the spectrum-splitting flag.
pub fn am_two_tone(f0: f64, f_m: f64, linewidth_fwhm: Option<f64>) -> Result<AmSidebands> {
    if !(f_m >= 0.0 && f_m.is_finite()) {
        return Err(invalid("f_m", format!("must be >= 0, got {f_m}")));
    }
    if f_m <= f64::EPSILON * f0.abs() {
        return Ok(AmSidebands {
            tones: vec![(f0, 1.0)],
            degenerate: true,
            splitting: false,
        });
    }
    let splitting = linewidth_fwhm.is_some_and(|w| 2.0 * f_m > w / 3f64.sqrt());
    Ok(AmSidebands {
        tones: vec![(f0 - f_m, 0.5), (f0 + f_m, 0.5)],
        degenerate: false,
        splitting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(n: usize, x: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = (x / 2.0).powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>();
        for k in 0..60 {
            sum += term;
            term *= -(x / 2.0).powi(2) / ((k + 1) as f64 * (n + k + 1) as f64);
        }
        sum
    }

    #[test]
    fn bessel_matches_series() {
        for &x in &[0.3, 1.0, 2.0, 4.5, 9.0] {
            let j = bessel_sidebands(x, 8);
            for (n, v) in j.iter().enumerate() {
                assert!((v - series(n, x)).abs() < 1e-12, "J_{n}({x})");
            }
        }
    }

    #[test]
    fn bessel_large_argument() {
        // J_0(30) from tables.
        assert!((bessel_j(0, 30.0) - (-0.086_367_983_581_040_22)).abs() < 1e-10);
    }

    #[test]
    fn am_degenerate_and_tones() {
        let t = am_two_tone(2.87e9, 10e3, None).unwrap();
        assert_eq!(t.tones, vec![(2.87e9 - 10e3, 0.5), (2.87e9 + 10e3, 0.5)]);
        assert!(!t.degenerate);
        assert!(am_two_tone(2.87e9, 0.0, None).unwrap().degenerate);
    }

    #[test]
    fn am_has_no_instantaneous_detuning() {
        let m = MWModulation::am(2.87e9, 1e3).unwrap();
        assert!(matches!(m.instantaneous_detuning(0.0), Err(Error::Unsupported(_))));
        assert!(matches!(m.carson_bandwidth(), Err(Error::Unsupported(_))));
    }
}
