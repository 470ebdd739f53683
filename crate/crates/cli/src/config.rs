//! Experiment configuration: a TOML file with one flat section per module.
//!
//! Every field is optional in the file. Resolution fills defaults, collects
//! every missing or out-of-range field for the selected mode, and leaves the
//! config in its fully resolved form so it can be written back out and rerun.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nvmag_core::analysis::Window;
use nvmag_core::kinetics::KineticsParams;
use nvmag_core::mwsignal::MWModulation;
use nvmag_core::sensitivity::CwSensitivityModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SimulateOdmr,
    SimulateRamsey,
    SimulateRepolarization,
    Optimize,
    Analyze,
    Calibrate,
    Gradiometer,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::SimulateOdmr => "simulate-odmr",
            Mode::SimulateRamsey => "simulate-ramsey",
            Mode::SimulateRepolarization => "simulate-repolarization",
            Mode::Optimize => "optimize",
            Mode::Analyze => "analyze",
            Mode::Calibrate => "calibrate",
            Mode::Gradiometer => "gradiometer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OdmrKind {
    Cw,
    Lockin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Fm,
    Pm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Tesla,
    Volt,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kinetics: Option<KineticsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odmr: Option<OdmrSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ramsey: Option<RamseySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repolarization: Option<RepolarizationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analyze: Option<AnalyzeSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradiometer: Option<GradiometerSection>,
    /// Synthetic calibration recording used by `analyze` and `calibrate`
    /// when no input file is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSection>,
}

/// Rate overrides. Rates in s⁻¹; the Rabi frequency and detuning in Hz.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsSection {
    pub gamma_p: Option<f64>,
    pub t1_s: Option<f64>,
    pub t2_star_s: Option<f64>,
    pub r_fl: Option<f64>,
    pub r_47: Option<f64>,
    pub r_57: Option<f64>,
    pub r_67: Option<f64>,
    pub r_78: Option<f64>,
    pub r_81: Option<f64>,
    pub r_82: Option<f64>,
    pub r_83: Option<f64>,
    pub drive_factor: Option<f64>,
    pub rabi_hz: Option<f64>,
    pub detuning_hz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdmrSection {
    pub kind: Option<OdmrKind>,
    pub freq_min_hz: Option<f64>,
    pub freq_max_hz: Option<f64>,
    pub points: Option<usize>,
    pub modulation: Option<Modulation>,
    pub f_m_hz: Option<f64>,
    pub f_d_hz: Option<f64>,
    pub phi_d_rad: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseySection {
    pub rabi_hz: Option<f64>,
    pub tau_m_s: Option<f64>,
    pub t_seq_s: Option<f64>,
    pub detuning_min_hz: Option<f64>,
    pub detuning_max_hz: Option<f64>,
    pub points: Option<usize>,
    pub cutoff_hz: Option<f64>,
    pub filter_order: Option<u32>,
    pub phase_rad: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepolarizationSection {
    pub duration_s: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub t1_s: Option<f64>,
    pub t2_star_s: Option<f64>,
    pub s_min: Option<f64>,
    pub s_max: Option<f64>,
    pub s_points: Option<usize>,
    pub rabi_min_hz: Option<f64>,
    pub rabi_max_hz: Option<f64>,
    pub rabi_points: Option<usize>,
    pub gamma_p_sat: Option<f64>,
    pub visibility: Option<f64>,
    pub photon_rate_ref: Option<f64>,
    pub gamma_p_ref: Option<f64>,
    pub measurement_time_s: Option<f64>,
    pub volume_mm3: Option<f64>,
    pub scalar_factor_v_per_t: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    pub input: Option<PathBuf>,
    pub band_min_hz: Option<f64>,
    pub band_max_hz: Option<f64>,
    pub detrend: Option<bool>,
    pub window: Option<Window>,
    /// V/T; required for volt traces.
    pub scalar_factor_v_per_t: Option<f64>,
    /// Trace recorded without the flux guide; its detrend slope is the
    /// denominator of the flux gain.
    pub flux_reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    pub input: Option<PathBuf>,
    pub carrier_hz: Option<f64>,
    pub tones_hz: Option<Vec<f64>>,
    pub cutoff_hz: Option<f64>,
    pub filter_order: Option<u32>,
    pub band_min_hz: Option<f64>,
    pub band_max_hz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradiometerSection {
    pub input1: Option<PathBuf>,
    pub input2: Option<PathBuf>,
    pub band_min_hz: Option<f64>,
    pub band_max_hz: Option<f64>,
    /// Synthetic channel pair, used when no inputs are given.
    pub sample_rate_hz: Option<f64>,
    pub samples: Option<usize>,
    pub common_mode_hz: Option<f64>,
    pub common_mode_amplitude: Option<f64>,
    pub differential_hz: Option<f64>,
    pub differential_amplitude: Option<f64>,
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub sample_rate_hz: Option<f64>,
    pub samples: Option<usize>,
    pub carrier_hz: Option<f64>,
    pub tones_hz: Option<Vec<f64>>,
    pub tone_amplitude: Option<f64>,
    pub interferers_hz: Option<Vec<f64>>,
    pub interferer_amplitude: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub ramp_per_s: Option<f64>,
    pub offset: Option<f64>,
    pub unit: Option<Unit>,
}

/// Concrete inputs of one run.
#[derive(Debug, Clone)]
pub enum Plan {
    Odmr {
        params: KineticsParams,
        grid: Vec<f64>,
        modulation: Option<MWModulation>,
    },
    Ramsey {
        params: KineticsParams,
        omega_r: f64,
        tau_m: f64,
        t_seq: f64,
        detunings: Vec<f64>,
        cutoff: f64,
        filter_order: u32,
        phase: f64,
    },
    Repolarization {
        params: KineticsParams,
        duration: f64,
        samples: usize,
    },
    Optimize {
        model: CwSensitivityModel,
        s_grid: Vec<f64>,
        omega_grid: Vec<f64>,
        measurement_time: f64,
        volume_mm3: f64,
        scalar_factor: f64,
    },
    Analyze {
        source: Source,
        band: (f64, f64),
        detrend: bool,
        window: Window,
        scalar_factor: Option<f64>,
        flux_reference: Option<PathBuf>,
    },
    Calibrate {
        source: Source,
        carrier: f64,
        tones: Vec<f64>,
        cutoff: f64,
        filter_order: u32,
        band: (f64, f64),
    },
    Gradiometer {
        inputs: Option<(PathBuf, PathBuf)>,
        synthetic: GradiometerSynthetic,
        band: (f64, f64),
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub enum Source {
    File(PathBuf),
    Synthetic(nvmag_core::analysis::SyntheticCalibration),
}

#[derive(Debug, Clone, Copy)]
pub struct GradiometerSynthetic {
    pub sample_rate: f64,
    pub samples: usize,
    pub common_mode: (f64, f64),
    pub differential: (f64, f64),
    pub noise_sigma: f64,
}

/// Field-level problems found while resolving.
#[derive(Debug, Default)]
struct Problems(Vec<String>);

impl Problems {
    fn missing(&mut self, field: &str) {
        self.0.push(format!("missing field `{field}`"));
    }

    fn invalid(&mut self, field: &str, reason: impl std::fmt::Display) {
        self.0.push(format!("invalid `{field}`: {reason}"));
    }

    fn need<T: Clone>(&mut self, slot: &Option<T>, field: &str) -> Option<T> {
        if slot.is_none() {
            self.missing(field);
        }
        slot.clone()
    }

    fn positive(&mut self, v: f64, field: &str) {
        if !(v > 0.0 && v.is_finite()) {
            self.invalid(field, format!("must be finite and > 0, got {v}"));
        }
    }

    fn range(&mut self, lo: f64, hi: f64, field_lo: &str, field_hi: &str) {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            self.invalid(field_lo, format!("must be below `{field_hi}` ({lo} vs {hi})"));
        }
    }

    fn at_least(&mut self, v: usize, min: usize, field: &str) {
        if v < min {
            self.invalid(field, format!("must be >= {min}, got {v}"));
        }
    }
}

fn fill<T: Clone>(slot: &mut Option<T>, default: T) -> T {
    slot.get_or_insert(default).clone()
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().trim().to_string() + &location(text, e.span()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fills defaults for `mode`, validates, and returns the run plan.
    /// Relative input paths are taken relative to `base_dir`. On failure
    /// every problem found is returned.
    pub fn resolve(&mut self, mode: Mode, base_dir: &Path) -> Result<Plan, Vec<String>> {
        let mut p = Problems::default();
        if let Some(m) = self.mode {
            if m != mode {
                p.invalid(
                    "mode",
                    format!("config is for `{}`, run as `{}`", m.name(), mode.name()),
                );
            }
        }
        self.mode = Some(mode);
        let seed = fill(&mut self.seed, 0);
        let plan = match mode {
            Mode::SimulateOdmr => self.resolve_odmr(&mut p),
            Mode::SimulateRamsey => self.resolve_ramsey(&mut p),
            Mode::SimulateRepolarization => self.resolve_repolarization(&mut p),
            Mode::Optimize => self.resolve_optimize(&mut p),
            Mode::Analyze => self.resolve_analyze(&mut p, seed, base_dir),
            Mode::Calibrate => self.resolve_calibrate(&mut p, seed, base_dir),
            Mode::Gradiometer => self.resolve_gradiometer(&mut p, seed, base_dir),
        };
        match plan {
            Some(plan) if p.0.is_empty() => Ok(plan),
            _ => Err(p.0),
        }
    }

    fn kinetics(&mut self, p: &mut Problems, require_rabi: bool) -> KineticsParams {
        let k = self.kinetics.get_or_insert_with(Default::default);
        let d = KineticsParams::default();
        if require_rabi {
            p.need(&k.rabi_hz, "kinetics.rabi_hz");
        }
        let t1 = fill(&mut k.t1_s, 1.0 / d.gamma_1);
        let t2 = fill(&mut k.t2_star_s, 1.0 / d.gamma_2_star);
        p.positive(t1, "kinetics.t1_s");
        p.positive(t2, "kinetics.t2_star_s");
        let params = KineticsParams {
            gamma_p: fill(&mut k.gamma_p, d.gamma_p),
            gamma_1: 1.0 / t1,
            gamma_2_star: 1.0 / t2,
            r_fl: fill(&mut k.r_fl, d.r_fl),
            r_47: fill(&mut k.r_47, d.r_47),
            r_57: fill(&mut k.r_57, d.r_57),
            r_67: fill(&mut k.r_67, d.r_67),
            r_78: fill(&mut k.r_78, d.r_78),
            r_81: fill(&mut k.r_81, d.r_81),
            r_82: fill(&mut k.r_82, d.r_82),
            r_83: fill(&mut k.r_83, d.r_83),
            omega_r: 2.0 * PI * fill(&mut k.rabi_hz, 0.0),
            drive_factor: fill(&mut k.drive_factor, d.drive_factor),
            ..d
        }
        .with_detuning(2.0 * PI * fill(&mut k.detuning_hz, 0.0));
        if let Err(e) = params.validate() {
            p.invalid("kinetics", e);
        }
        params
    }

    fn resolve_odmr(&mut self, p: &mut Problems) -> Option<Plan> {
        let params = self.kinetics(p, true);
        let s = self.odmr.get_or_insert_with(Default::default);
        let kind = fill(&mut s.kind, OdmrKind::Cw);
        let lo = p.need(&s.freq_min_hz, "odmr.freq_min_hz");
        let hi = p.need(&s.freq_max_hz, "odmr.freq_max_hz");
        let points = fill(&mut s.points, 201);
        p.at_least(points, 3, "odmr.points");
        let modulation = if kind == OdmrKind::Lockin {
            let f_m = p.need(&s.f_m_hz, "odmr.f_m_hz");
            let m = match fill(&mut s.modulation, Modulation::Fm) {
                Modulation::Fm => p
                    .need(&s.f_d_hz, "odmr.f_d_hz")
                    .zip(f_m)
                    .map(|(f_d, f_m)| MWModulation::fm(0.0, f_m, f_d)),
                Modulation::Pm => p
                    .need(&s.phi_d_rad, "odmr.phi_d_rad")
                    .zip(f_m)
                    .map(|(phi, f_m)| MWModulation::pm(0.0, f_m, phi)),
            };
            match m {
                Some(Ok(m)) => Some(m),
                Some(Err(e)) => {
                    p.invalid("odmr", e);
                    None
                }
                None => None,
            }
        } else {
            None
        };
        let (lo, hi) = (lo?, hi?);
        p.range(lo, hi, "odmr.freq_min_hz", "odmr.freq_max_hz");
        if kind == OdmrKind::Lockin && modulation.is_none() {
            return None;
        }
        Some(Plan::Odmr {
            params,
            grid: nvmag_core::odmr::linear_grid(lo, hi, points),
            modulation,
        })
    }

    fn resolve_ramsey(&mut self, p: &mut Problems) -> Option<Plan> {
        let params = self.kinetics(p, false);
        let s = self.ramsey.get_or_insert_with(Default::default);
        let rabi = p.need(&s.rabi_hz, "ramsey.rabi_hz");
        let tau_m = p.need(&s.tau_m_s, "ramsey.tau_m_s");
        let t_seq = p.need(&s.t_seq_s, "ramsey.t_seq_s");
        let (rabi, tau_m, t_seq) = (rabi?, tau_m?, t_seq?);
        p.positive(rabi, "ramsey.rabi_hz");
        p.positive(tau_m, "ramsey.tau_m_s");
        p.positive(t_seq, "ramsey.t_seq_s");
        let span = 2.0 / tau_m;
        let lo = fill(&mut s.detuning_min_hz, -span);
        let hi = fill(&mut s.detuning_max_hz, span);
        p.range(lo, hi, "ramsey.detuning_min_hz", "ramsey.detuning_max_hz");
        let points = fill(&mut s.points, 121);
        p.at_least(points, 3, "ramsey.points");
        let cutoff = fill(&mut s.cutoff_hz, 0.1 / t_seq);
        let filter_order = fill(&mut s.filter_order, 2);
        if filter_order < 1 {
            p.invalid("ramsey.filter_order", "must be >= 1");
        }
        if !(cutoff > 0.0 && cutoff < 1.0 / t_seq) {
            p.invalid("ramsey.cutoff_hz", format!("must lie in (0, 1/t_seq), got {cutoff}"));
        }
        Some(Plan::Ramsey {
            params,
            omega_r: 2.0 * PI * rabi,
            tau_m,
            t_seq,
            detunings: nvmag_core::odmr::linear_grid(lo, hi, points),
            cutoff,
            filter_order,
            phase: fill(&mut s.phase_rad, 0.0),
        })
    }

    fn resolve_repolarization(&mut self, p: &mut Problems) -> Option<Plan> {
        let params = self.kinetics(p, false);
        let s = self.repolarization.get_or_insert_with(Default::default);
        let duration = p.need(&s.duration_s, "repolarization.duration_s");
        let samples = fill(&mut s.samples, 2000);
        p.at_least(samples, 2, "repolarization.samples");
        let duration = duration?;
        p.positive(duration, "repolarization.duration_s");
        Some(Plan::Repolarization {
            params,
            duration,
            samples,
        })
    }

    fn resolve_optimize(&mut self, p: &mut Problems) -> Option<Plan> {
        let s = self.optimize.get_or_insert_with(Default::default);
        let d = CwSensitivityModel::default();
        let t1 = p.need(&s.t1_s, "optimize.t1_s");
        let t2 = p.need(&s.t2_star_s, "optimize.t2_star_s");
        let s_min = fill(&mut s.s_min, 1e-5);
        let s_max = fill(&mut s.s_max, 1e-2);
        let s_points = fill(&mut s.s_points, 50);
        let rabi_min = fill(&mut s.rabi_min_hz, 1e3);
        let rabi_max = fill(&mut s.rabi_max_hz, 1e5);
        let rabi_points = fill(&mut s.rabi_points, 50);
        p.at_least(s_points, 1, "optimize.s_points");
        p.at_least(rabi_points, 1, "optimize.rabi_points");
        p.positive(s_min, "optimize.s_min");
        p.positive(rabi_min, "optimize.rabi_min_hz");
        if s_points > 1 {
            p.range(s_min, s_max, "optimize.s_min", "optimize.s_max");
        }
        if rabi_points > 1 {
            p.range(rabi_min, rabi_max, "optimize.rabi_min_hz", "optimize.rabi_max_hz");
        }
        let model = CwSensitivityModel {
            t1: t1.unwrap_or(d.t1),
            t2_star: t2.unwrap_or(d.t2_star),
            gamma_p_sat: fill(&mut s.gamma_p_sat, d.gamma_p_sat),
            visibility: fill(&mut s.visibility, d.visibility),
            photon_rate_ref: fill(&mut s.photon_rate_ref, d.photon_rate_ref),
            gamma_p_ref: fill(&mut s.gamma_p_ref, d.gamma_p_ref),
            ..d
        };
        if let Err(e) = model.validate() {
            p.invalid("optimize", e);
        }
        let measurement_time = fill(&mut s.measurement_time_s, 1.0);
        let volume_mm3 = fill(&mut s.volume_mm3, 0.125);
        let scalar_factor = fill(&mut s.scalar_factor_v_per_t, 2.97e-6 / 1e-9);
        p.positive(measurement_time, "optimize.measurement_time_s");
        p.positive(volume_mm3, "optimize.volume_mm3");
        p.positive(scalar_factor, "optimize.scalar_factor_v_per_t");
        let grid = |lo: f64, hi: f64, n: usize| {
            if n == 1 {
                vec![lo]
            } else {
                nvmag_core::odmr::log_grid(lo, hi, n)
            }
        };
        let omega_grid = grid(rabi_min, rabi_max, rabi_points)
            .into_iter()
            .map(|f| 2.0 * PI * f)
            .collect();
        t1?;
        t2?;
        Some(Plan::Optimize {
            model,
            s_grid: grid(s_min, s_max, s_points),
            omega_grid,
            measurement_time,
            volume_mm3,
            scalar_factor,
        })
    }

    fn synthetic(&mut self, p: &mut Problems, seed: u64) -> nvmag_core::analysis::SyntheticCalibration {
        let s = self.synthetic.get_or_insert_with(Default::default);
        let d = nvmag_core::analysis::SyntheticCalibration::default();
        let amp = fill(&mut s.tone_amplitude, 150e-12);
        let interferer_amp = fill(&mut s.interferer_amplitude, 0.0);
        let syn = nvmag_core::analysis::SyntheticCalibration {
            sample_rate: fill(&mut s.sample_rate_hz, d.sample_rate),
            samples: fill(&mut s.samples, d.samples),
            carrier: fill(&mut s.carrier_hz, d.carrier),
            tones: fill(&mut s.tones_hz, d.tones.iter().map(|t| t.0).collect())
                .into_iter()
                .map(|f| (f, amp))
                .collect(),
            interferers: fill(&mut s.interferers_hz, Vec::new())
                .into_iter()
                .map(|f| (f, interferer_amp))
                .collect(),
            noise_sigma: fill(&mut s.noise_sigma, 20e-12),
            ramp: fill(&mut s.ramp_per_s, 0.0),
            offset: fill(&mut s.offset, 0.0),
            seed,
            unit: match fill(&mut s.unit, Unit::Tesla) {
                Unit::Tesla => nvmag_core::SignalUnit::Tesla,
                Unit::Volt => nvmag_core::SignalUnit::Volt,
            },
        };
        p.positive(syn.sample_rate, "synthetic.sample_rate_hz");
        p.at_least(syn.samples, 16, "synthetic.samples");
        if syn.noise_sigma.is_nan() || syn.noise_sigma < 0.0 {
            p.invalid("synthetic.noise_sigma", "must be >= 0");
        }
        syn
    }

    fn band(p: &mut Problems, lo: &Option<f64>, hi: &Option<f64>, section: &str) -> Option<(f64, f64)> {
        let lo = p.need(lo, &format!("{section}.band_min_hz"));
        let hi = p.need(hi, &format!("{section}.band_max_hz"));
        let (lo, hi) = (lo?, hi?);
        p.range(
            lo,
            hi,
            &format!("{section}.band_min_hz"),
            &format!("{section}.band_max_hz"),
        );
        Some((lo, hi))
    }

    fn resolve_analyze(&mut self, p: &mut Problems, seed: u64, base: &Path) -> Option<Plan> {
        let s = self.analyze.get_or_insert_with(Default::default);
        let band = Self::band(p, &s.band_min_hz, &s.band_max_hz, "analyze");
        let detrend = fill(&mut s.detrend, true);
        let window = fill(&mut s.window, Window::Rectangular);
        let scalar_factor = s.scalar_factor_v_per_t;
        if let Some(k) = scalar_factor {
            p.positive(k, "analyze.scalar_factor_v_per_t");
        }
        let input = s.input.clone();
        let flux_reference = s.flux_reference.as_deref().map(|r| resolve_path(base, r));
        let source = match input {
            Some(path) => Source::File(resolve_path(base, &path)),
            None => Source::Synthetic(self.synthetic(p, seed)),
        };
        Some(Plan::Analyze {
            source,
            band: band?,
            detrend,
            window,
            scalar_factor,
            flux_reference,
        })
    }

    fn resolve_calibrate(&mut self, p: &mut Problems, seed: u64, base: &Path) -> Option<Plan> {
        let s = self.calibrate.get_or_insert_with(Default::default);
        let carrier = fill(&mut s.carrier_hz, 182.0);
        let tones = fill(&mut s.tones_hz, vec![2.0, 5.0, 10.0]);
        let cutoff = fill(&mut s.cutoff_hz, 49.0);
        let filter_order = fill(&mut s.filter_order, 2);
        let lo = fill(&mut s.band_min_hz, 1.0);
        let hi = fill(&mut s.band_max_hz, 20.0);
        p.range(lo, hi, "calibrate.band_min_hz", "calibrate.band_max_hz");
        p.positive(carrier, "calibrate.carrier_hz");
        if tones.is_empty() {
            p.invalid("calibrate.tones_hz", "need at least one tone");
        }
        if let Err(e) = nvmag_core::lockin::LockinConfig::new(carrier, cutoff, filter_order).validate() {
            p.invalid("calibrate", e);
        }
        let input = s.input.clone();
        let source = match input {
            Some(path) => Source::File(resolve_path(base, &path)),
            None => {
                if self.synthetic.as_ref().and_then(|s| s.carrier_hz).is_none() {
                    self.synthetic.get_or_insert_with(Default::default).carrier_hz = Some(carrier);
                }
                Source::Synthetic(self.synthetic(p, seed))
            }
        };
        Some(Plan::Calibrate {
            source,
            carrier,
            tones,
            cutoff,
            filter_order,
            band: (lo, hi),
        })
    }

    fn resolve_gradiometer(&mut self, p: &mut Problems, seed: u64, base: &Path) -> Option<Plan> {
        let s = self.gradiometer.get_or_insert_with(Default::default);
        let band = Self::band(p, &s.band_min_hz, &s.band_max_hz, "gradiometer");
        let inputs = match (&s.input1, &s.input2) {
            (Some(a), Some(b)) => Some((resolve_path(base, a), resolve_path(base, b))),
            (None, None) => None,
            (Some(_), None) => {
                p.missing("gradiometer.input2");
                None
            }
            (None, Some(_)) => {
                p.missing("gradiometer.input1");
                None
            }
        };
        let synthetic = if inputs.is_none() {
            GradiometerSynthetic {
                sample_rate: fill(&mut s.sample_rate_hz, 900.0),
                samples: fill(&mut s.samples, 65536),
                common_mode: (
                    fill(&mut s.common_mode_hz, 50.0),
                    fill(&mut s.common_mode_amplitude, 1e-9),
                ),
                differential: (
                    fill(&mut s.differential_hz, 7.0),
                    fill(&mut s.differential_amplitude, 10e-12),
                ),
                noise_sigma: fill(&mut s.noise_sigma, 1e-12),
            }
        } else {
            GradiometerSynthetic {
                sample_rate: 0.0,
                samples: 0,
                common_mode: (0.0, 0.0),
                differential: (0.0, 0.0),
                noise_sigma: 0.0,
            }
        };
        if inputs.is_none() {
            p.positive(synthetic.sample_rate, "gradiometer.sample_rate_hz");
            p.at_least(synthetic.samples, 16, "gradiometer.samples");
        }
        Some(Plan::Gradiometer {
            inputs,
            synthetic,
            band: band?,
            seed,
        })
    }
}

/// " (line L, column C)" for a byte span of `text`.
fn location(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    let Some(span) = span else {
        return String::new();
    };
    let before = &text[..span.start.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    format!(" (line {line}, column {col})")
}
