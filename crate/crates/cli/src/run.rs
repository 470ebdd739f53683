//! Executes a resolved plan and writes its outputs.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use nvmag_core::analysis::{
    baseband, detrend_linear, gaussian_noise, gradiometer_difference, min_detectable_field, noise_spectrum,
    tone_amplitude, NoiseSpectrum, Window,
};
use nvmag_core::kinetics::{simulate_repolarization_from, KineticsParams, NVState};
use nvmag_core::lockin::{ce_ramsey_fringe, ce_ramsey_scalar_factor, ce_ramsey_schedule, LockinConfig};
use nvmag_core::odmr::{cw_linewidth, cw_spectrum, lockin_odmr_spectrum, scalar_factor};
use nvmag_core::sensitivity::{optimize_cw_with, SensitivityReport};
use nvmag_core::{SignalUnit, TimeTrace};

use crate::config::{ExperimentConfig, Plan, Source};
use crate::plot::{heatmap_svg, line_svg, LinePlot, Scale};
use crate::report::{csv_header, line, Report};
use crate::{CliError, Mode};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub summary: String,
    pub report: Report,
}

/// Files, summary and JSON results of one run.
struct Output {
    files: Vec<(&'static str, String)>,
    summary: String,
    results: Value,
}

impl Output {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            summary: String::new(),
            results: Value::Null,
        }
    }

    fn file(&mut self, name: &'static str, contents: String) {
        self.files.push((name, contents));
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Write { path, source })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_toml(&text).map_err(|message| CliError::ParseConfig {
        path: path.to_path_buf(),
        message,
    })
}

pub fn run(opts: &RunOptions) -> Result<Outcome, CliError> {
    let mut cfg = load_config(&opts.config)?;
    if let Some(seed) = opts.seed {
        cfg.seed = Some(seed);
    }
    let base = opts.config.parent().unwrap_or(Path::new("."));
    let plan = cfg.resolve(opts.mode, base).map_err(CliError::Invalid)?;
    let resolved = cfg.to_toml();
    let header = csv_header(opts.mode.name(), &resolved);

    fs::create_dir_all(&opts.out_dir).map_err(|source| CliError::Write {
        path: opts.out_dir.clone(),
        source,
    })?;
    write(&opts.out_dir, "resolved_config.toml", &resolved)?;

    let out = match execute(&plan, &header) {
        Ok(out) => out,
        Err(e) => {
            let report = Report::failed(opts.mode.name(), &resolved, e.to_string());
            write(&opts.out_dir, "report.json", &report.to_json())?;
            return Err(e);
        }
    };
    for (name, contents) in &out.files {
        write(&opts.out_dir, name, contents)?;
    }
    let summary = format!(
        "nvmag {}: {}\n{}",
        env!("CARGO_PKG_VERSION"),
        opts.mode.name(),
        out.summary
    );
    write(&opts.out_dir, "summary.txt", &summary)?;
    let report = Report::ok(opts.mode.name(), &resolved, out.results);
    write(&opts.out_dir, "report.json", &report.to_json())?;
    Ok(Outcome {
        out_dir: opts.out_dir.clone(),
        summary,
        report,
    })
}

fn execute(plan: &Plan, header: &[String]) -> Result<Output, CliError> {
    match plan {
        Plan::Odmr {
            params,
            grid,
            modulation,
        } => odmr(params, grid, modulation.as_ref(), header),
        Plan::Ramsey {
            params,
            omega_r,
            tau_m,
            t_seq,
            detunings,
            cutoff,
            filter_order,
            phase,
        } => {
            let schedule = ce_ramsey_schedule(*omega_r, *tau_m, *t_seq)?;
            let lia = LockinConfig {
                phase: *phase,
                ..LockinConfig::new(schedule.demod_frequency, *cutoff, *filter_order)
            };
            let fringe = ce_ramsey_fringe(params, &schedule, detunings, &lia)?;
            let k = ce_ramsey_scalar_factor(params, &schedule, &lia)?;
            let mut o = Output::new();
            let mut csv = comments(header);
            csv.push_str("detuning_hz,lockin_output\n");
            for (d, v) in detunings.iter().zip(&fringe) {
                let _ = writeln!(csv, "{d:?},{v:?}");
            }
            o.file("ce_ramsey_fringe.csv", csv);
            o.file(
                "ce_ramsey_fringe.svg",
                line_svg(
                    &LinePlot {
                        title: "CE-Ramsey fringe",
                        x_label: "MW detuning (Hz)",
                        y_label: "lock-in output (a.u.)",
                        x_scale: Scale::Linear,
                        y_scale: Scale::Linear,
                    },
                    detunings,
                    &fringe,
                ),
            );
            let pp = peak_to_peak(&fringe);
            o.summary += &line("repolarization time", schedule.tau_r, "s");
            o.summary += &line("demodulation frequency", schedule.demod_frequency, "Hz");
            o.summary += &line("fringe peak-to-peak", pp, "");
            o.summary += &line("scalar factor", k, "per T");
            o.results = json!({
                "tau_r_s": schedule.tau_r,
                "pulse_width_s": schedule.pulse_width,
                "demod_frequency_hz": schedule.demod_frequency,
                "fringe_peak_to_peak": pp,
                "scalar_factor_per_tesla": k,
            });
            Ok(o)
        }
        Plan::Repolarization {
            params,
            duration,
            samples,
        } => {
            let tr = simulate_repolarization_from(params, &NVState::thermal(), *duration, *samples)?;
            let t = tr.times();
            let f_end = *tr.samples.last().expect("at least two samples");
            let f_min = tr.samples.iter().copied().fold(f64::INFINITY, f64::min);
            // Last sample outside ±1 % of the final level.
            let settle = tr
                .samples
                .iter()
                .rposition(|&v| (v - f_end).abs() > 0.01 * f_end.abs())
                .map(|i| t[(i + 1).min(t.len() - 1)]);
            let mut o = Output::new();
            o.file("repolarization.csv", tr.to_csv_string(header));
            o.file(
                "repolarization.svg",
                line_svg(
                    &LinePlot {
                        title: "Fluorescence under continuous excitation",
                        x_label: "time (s)",
                        y_label: "fluorescence (model units)",
                        x_scale: Scale::Linear,
                        y_scale: Scale::Linear,
                    },
                    &t,
                    &tr.samples,
                ),
            );
            o.summary += &line("initial fluorescence", tr.samples[0], "");
            o.summary += &line("final fluorescence", f_end, "");
            if let Some(t) = settle {
                o.summary += &line("settling time (1%)", t, "s");
            }
            o.results = json!({
                "initial_fluorescence": tr.samples[0],
                "minimum_fluorescence": f_min,
                "final_fluorescence": f_end,
                "settling_time_s": settle,
            });
            Ok(o)
        }
        Plan::Optimize {
            model,
            s_grid,
            omega_grid,
            measurement_time,
            volume_mm3,
            scalar_factor,
        } => {
            let opt = optimize_cw_with(model, s_grid, omega_grid)?;
            let rep = SensitivityReport::from_optimum(model, &opt, *scalar_factor, *measurement_time, *volume_mm3)?;
            let b = &opt.best;
            let mut o = Output::new();
            o.file("sensitivity_map.csv", opt.to_csv_string(header));
            let rabi_hz: Vec<f64> = omega_grid.iter().map(|w| w / (2.0 * PI)).collect();
            let z: Vec<Vec<f64>> = opt
                .map
                .chunks(omega_grid.len())
                .map(|r| r.iter().map(|p| p.delta_b).collect())
                .collect();
            o.file(
                "sensitivity_map.svg",
                heatmap_svg(
                    "Shot-noise limit (T, 1 s)",
                    "Rabi frequency (Hz)",
                    "saturation fraction s",
                    &rabi_hz,
                    s_grid,
                    &z,
                ),
            );
            o.summary += &line("optimum s", b.s, "");
            o.summary += &line("optimum Rabi frequency", b.omega_r / (2.0 * PI), "Hz");
            o.summary += &line("contrast", b.contrast, "");
            o.summary += &line("linewidth", b.linewidth, "Hz");
            o.summary += &line("photon rate", b.photon_rate, "Hz");
            o.summary += &line("eta", rep.eta, "T/sqrt(Hz)");
            o.summary += &line("eta with enhancements", rep.eta_enhanced, "T/sqrt(Hz)");
            o.summary += &line("eta_v", rep.eta_v, "T mm^1.5/sqrt(Hz)");
            o.summary += &line("delta_b", rep.delta_b, "T");
            o.results = json!({
                "optimum": {
                    "s": b.s,
                    "rabi_hz": b.omega_r / (2.0 * PI),
                    "gamma_p": b.gamma_p,
                    "contrast": b.contrast,
                    "linewidth_hz": b.linewidth,
                    "photon_rate_hz": b.photon_rate,
                },
                "report": rep,
            });
            Ok(o)
        }
        Plan::Analyze {
            source,
            band,
            detrend,
            window,
            scalar_factor,
            flux_reference,
        } => {
            let mut tr = load(source)?;
            let gain = match flux_reference {
                Some(p) => {
                    let r = TimeTrace::load_csv(p)?;
                    if r.unit != tr.unit {
                        return Err(nvmag_core::Error::Mismatch(format!(
                            "flux reference unit {:?}, trace unit {:?}",
                            r.unit, tr.unit
                        ))
                        .into());
                    }
                    let (with, without) = (detrend_linear(&tr)?.slope, detrend_linear(&r)?.slope);
                    Some(nvmag_core::analysis::flux_gain_from_slopes(with, without)?)
                }
                None => None,
            };
            if let Some(k) = scalar_factor {
                if tr.unit == SignalUnit::Volt {
                    tr = tr.to_tesla(*k)?;
                }
            }
            let d = detrend_linear(&tr)?;
            let slope = d.slope;
            let analysed = if *detrend { d.residual } else { tr };
            let spec = noise_spectrum(&analysed, *window);
            let floor = min_detectable_field(&spec, band.0, band.1)?;
            let unit = unit_name(spec.unit);
            let mut o = Output::new();
            o.file("spectrum.csv", spec.to_csv_string(header));
            o.file("spectrum.svg", spectrum_svg(&spec));
            o.summary += &line("samples", analysed.len() as f64, "");
            o.summary += &line("resolution", spec.resolution, "Hz");
            o.summary += &line("noise floor", floor.floor, unit);
            o.summary += &line("eta", floor.eta, &format!("{unit}/sqrt(Hz)"));
            if let Some(g) = gain {
                o.summary += &line("flux gain", g, "");
            }
            o.results = json!({
                "unit": unit,
                "samples": analysed.len(),
                "resolution_hz": spec.resolution,
                "measurement_time_s": spec.measurement_time,
                "slope_per_s": slope,
                "noise_floor": floor,
                "flux_gain": gain,
            });
            Ok(o)
        }
        Plan::Calibrate {
            source,
            carrier,
            tones,
            cutoff,
            filter_order,
            band,
        } => {
            let tr = load(source)?;
            let lia = LockinConfig::new(*carrier, *cutoff, *filter_order);
            let bb = baseband(&tr, *carrier, &lia)?;
            let amps = tones
                .iter()
                .map(|&f| tone_amplitude(&bb, f))
                .collect::<Result<Vec<_>, _>>()?;
            let spec = noise_spectrum(&bb, Window::Rectangular);
            let floor = min_detectable_field(&spec, band.0, band.1)?;
            let unit = unit_name(bb.unit);
            let mut o = Output::new();
            o.file("baseband.csv", bb.to_csv_string(header));
            o.file("baseband_spectrum.csv", spec.to_csv_string(header));
            o.file("baseband_spectrum.svg", spectrum_svg(&spec));
            for (f, a) in tones.iter().zip(&amps) {
                o.summary += &line(&format!("tone {f} Hz"), *a, unit);
            }
            o.summary += &line("noise floor", floor.floor, unit);
            o.summary += &line("eta", floor.eta, &format!("{unit}/sqrt(Hz)"));
            let tone_rows: Vec<Value> = tones
                .iter()
                .zip(&amps)
                .map(|(f, a)| json!({ "freq_hz": f, "amplitude": a }))
                .collect();
            o.results = json!({
                "unit": unit,
                "carrier_hz": carrier,
                "tones": tone_rows,
                "noise_floor": floor,
            });
            Ok(o)
        }
        Plan::Gradiometer {
            inputs,
            synthetic,
            band,
            seed,
        } => {
            let (ch1, ch2) = match inputs {
                Some((a, b)) => (TimeTrace::load_csv(a)?, TimeTrace::load_csv(b)?),
                None => {
                    let s = synthetic;
                    let n1 = gaussian_noise(s.samples, s.noise_sigma, *seed);
                    let n2 = gaussian_noise(s.samples, s.noise_sigma, seed.wrapping_add(1));
                    let channel = |sign: f64, noise: &[f64]| {
                        let v = (0..s.samples)
                            .map(|i| {
                                let t = i as f64 / s.sample_rate;
                                s.common_mode.1 * (2.0 * PI * s.common_mode.0 * t).sin()
                                    + sign * 0.5 * s.differential.1 * (2.0 * PI * s.differential.0 * t).sin()
                                    + noise[i]
                            })
                            .collect();
                        TimeTrace::new(v, s.sample_rate, SignalUnit::Tesla)
                    };
                    (channel(1.0, &n1)?, channel(-1.0, &n2)?)
                }
            };
            let diff = gradiometer_difference(&ch1, &ch2)?;
            let spectra = [&ch1, &ch2, &diff].map(|t| noise_spectrum(t, Window::Rectangular));
            let floors = spectra
                .iter()
                .map(|s| min_detectable_field(s, band.0, band.1))
                .collect::<Result<Vec<_>, _>>()?;
            let unit = unit_name(diff.unit);
            let mut o = Output::new();
            let mut csv = comments(header);
            csv.push_str("freq_hz,channel1,channel2,difference\n");
            for k in 0..spectra[0].freqs.len() {
                let _ = writeln!(
                    csv,
                    "{:?},{:?},{:?},{:?}",
                    spectra[0].freqs[k], spectra[0].amplitude[k], spectra[1].amplitude[k], spectra[2].amplitude[k]
                );
            }
            o.file("gradiometer_spectrum.csv", csv);
            o.file("gradiometer_spectrum.svg", spectrum_svg(&spectra[2]));
            o.summary += &line("channel 1 floor", floors[0].floor, unit);
            o.summary += &line("channel 2 floor", floors[1].floor, unit);
            o.summary += &line("difference floor", floors[2].floor, unit);
            o.summary += &line("difference eta", floors[2].eta, &format!("{unit}/sqrt(Hz)"));
            let mut results = json!({
                "unit": unit,
                "channel1_floor": floors[0],
                "channel2_floor": floors[1],
                "difference_floor": floors[2],
            });
            if inputs.is_none() {
                let (f_cm, f_d) = (synthetic.common_mode.0, synthetic.differential.0);
                let cm_in = tone_amplitude(&ch1, f_cm)?;
                let cm_out = tone_amplitude(&diff, f_cm)?;
                let d_out = tone_amplitude(&diff, f_d)?;
                o.summary += &line("common mode in channel 1", cm_in, unit);
                o.summary += &line("common mode in difference", cm_out, unit);
                o.summary += &line("differential tone", d_out, unit);
                results["common_mode_channel1"] = json!(cm_in);
                results["common_mode_difference"] = json!(cm_out);
                results["differential_tone"] = json!(d_out);
            }
            o.results = results;
            Ok(o)
        }
    }
}

fn odmr(
    params: &KineticsParams,
    grid: &[f64],
    modulation: Option<&nvmag_core::mwsignal::MWModulation>,
    header: &[String],
) -> Result<Output, CliError> {
    let spec = match modulation {
        None => cw_spectrum(params, grid)?,
        Some(m) => lockin_odmr_spectrum(params, m, grid)?,
    };
    let k = scalar_factor(&spec);
    let linewidth = cw_linewidth(params.gamma_1, params.gamma_2_star, params.gamma_p, params.omega_r)?;
    let mut o = Output::new();
    o.file("odmr_spectrum.csv", spec.to_csv_string(header));
    o.file(
        "odmr_spectrum.svg",
        line_svg(
            &LinePlot {
                title: if modulation.is_some() {
                    "Lock-in ODMR"
                } else {
                    "CW-ODMR"
                },
                x_label: "MW offset (Hz)",
                y_label: "signal (model units)",
                x_scale: Scale::Linear,
                y_scale: Scale::Linear,
            },
            &spec.freqs,
            &spec.signal,
        ),
    );
    o.summary += &line("analytic linewidth", linewidth, "Hz");
    if let Some(w) = spec.fwhm {
        o.summary += &line("fitted FWHM", w, "Hz");
    }
    if let Some(z) = spec.zero_crossing().filter(|_| modulation.is_some()) {
        o.summary += &line("zero crossing", z, "Hz");
    }
    o.summary += &line("contrast", spec.contrast, "");
    o.summary += &line("scalar factor", k, "per T");
    o.results = json!({
        "kind": spec.kind,
        "analytic_linewidth_hz": linewidth,
        "fwhm_hz": spec.fwhm,
        "center_hz": spec.center,
        "zero_crossing_hz": modulation.and(spec.zero_crossing()),
        "contrast": spec.contrast,
        "baseline": spec.baseline,
        "scalar_factor_per_tesla": k,
    });
    Ok(o)
}

fn load(source: &Source) -> Result<TimeTrace, CliError> {
    Ok(match source {
        Source::File(p) => TimeTrace::load_csv(p)?,
        Source::Synthetic(s) => s.build()?,
    })
}

fn comments(header: &[String]) -> String {
    header.iter().map(|h| format!("# {h}\n")).collect()
}

fn peak_to_peak(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

fn unit_name(u: SignalUnit) -> &'static str {
    match u {
        SignalUnit::Volt => "V",
        SignalUnit::Tesla => "T",
        SignalUnit::Dimensionless => "",
    }
}

fn spectrum_svg(spec: &NoiseSpectrum) -> String {
    let label = match spec.unit {
        SignalUnit::Volt => "amplitude (V)",
        SignalUnit::Tesla => "amplitude (T)",
        SignalUnit::Dimensionless => "amplitude",
    };
    line_svg(
        &LinePlot {
            title: "Amplitude spectrum",
            x_label: "frequency (Hz)",
            y_label: label,
            x_scale: Scale::Log,
            y_scale: Scale::Log,
        },
        &spec.freqs,
        &spec.amplitude,
    )
}
