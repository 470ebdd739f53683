use std::f64::consts::PI;

use proptest::prelude::*;

use nvmag_core::fit::fit_damped_sinusoid;
use nvmag_core::kinetics::KineticsParams;
use nvmag_core::lockin::*;
use nvmag_core::mwsignal::*;
use nvmag_core::{Error, SignalUnit, TimeTrace};

fn trace(f: impl Fn(f64) -> f64, fs: f64, n: usize) -> TimeTrace {
    TimeTrace::new((0..n).map(|i| f(i as f64 / fs)).collect(), fs, SignalUnit::Volt).unwrap()
}

/// J_n(x) = (1/π)∫₀^π cos(nτ − x sin τ) dτ by composite Simpson.
fn bessel_integral(n: usize, x: f64) -> f64 {
    let m = 2000;
    let h = PI / m as f64;
    let g = |t: f64| (n as f64 * t - x * t.sin()).cos();
    let mut s = g(0.0) + g(PI);
    for k in 1..m {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * g(k as f64 * h);
    }
    s * h / 3.0 / PI
}

#[test]
fn fm_detuning_over_one_period() {
    let m = MWModulation::fm(2.87e9, 1e3, 5e3).unwrap();
    assert_eq!(m.instantaneous_detuning(0.0).unwrap(), 5e3);
    assert!(m.instantaneous_detuning(0.25e-3).unwrap().abs() < 1e-9);
    assert!((m.instantaneous_detuning(0.5e-3).unwrap() + 5e3).abs() < 1e-9);
    assert_eq!(m.beta(), 5.0);
}

#[test]
fn pm_matches_equivalent_fm_pointwise() {
    let pm = MWModulation::pm(2.87e9, 9e3, 2.0).unwrap();
    let fm = MWModulation::fm(2.87e9, 9e3, 18e3).unwrap();
    for k in 0..200 {
        let t = k as f64 * 1.3e-6;
        let (a, b) = (
            pm.instantaneous_detuning(t).unwrap(),
            fm.instantaneous_detuning(t).unwrap(),
        );
        assert!((a - b).abs() < 1e-9, "t = {t}");
        assert!((pm.phase(t).unwrap() - fm.phase(t).unwrap()).abs() < 1e-12);
    }
    assert_eq!(pm.carson_bandwidth().unwrap(), fm.carson_bandwidth().unwrap());
}

#[test]
fn phase_is_integral_of_detuning() {
    let m = MWModulation::fm(0.0, 2e3, 7e3).unwrap();
    let (t, h) = (0.13e-3, 1e-9);
    let dphi = (m.phase(t + h).unwrap() - m.phase(t - h).unwrap()) / (2.0 * h) / (2.0 * PI);
    assert!((dphi - m.instantaneous_detuning(t).unwrap()).abs() < 1e-3);
}

#[test]
fn invalid_modulations_rejected() {
    assert!(MWModulation::fm(0.0, 0.0, 1e3).is_err());
    assert!(MWModulation::fm(0.0, 1e3, -1.0).is_err());
    assert!(MWModulation::pm(0.0, 1e3, f64::NAN).is_err());
    let am = MWModulation::am(0.0, 1e3).unwrap();
    assert!(matches!(am.carson_bandwidth(), Err(Error::Unsupported(_))));
    assert!(am.instantaneous_detuning(0.0).is_err());
}

#[test]
fn bessel_matches_integral_representation() {
    for &x in &[0.1, 1.0, 2.0, 4.0, 7.5, 15.0] {
        let j = bessel_sidebands(x, 12);
        for (n, v) in j.iter().enumerate() {
            let oracle = bessel_integral(n, x);
            assert!((v - oracle).abs() < 1e-10, "J_{n}({x}) = {v} vs {oracle}");
        }
    }
}

#[test]
fn sidebands_symmetric_with_odd_sign_flip() {
    let m = MWModulation::fm(100e3, 1e3, 3e3).unwrap();
    let sb = m.sidebands(6).unwrap();
    assert_eq!(sb.len(), 13);
    assert_eq!(sb[6].0, 100e3);
    for n in 1..=6 {
        let (lo, hi) = (sb[6 - n], sb[6 + n]);
        assert!((hi.0 - lo.0 - 2.0 * n as f64 * 1e3).abs() < 1e-9);
        let sign = if n % 2 == 1 { -1.0 } else { 1.0 };
        assert!((lo.1 - sign * hi.1).abs() < 1e-15);
    }
}

#[test]
fn am_sidebands_split_at_twenty_kilohertz() {
    let fwhm = 28e3;
    let far = am_two_tone(2.87e9, 20e3, Some(fwhm)).unwrap();
    assert!(far.splitting && !far.degenerate);
    assert_eq!(far.tones, vec![(2.87e9 - 20e3, 0.5), (2.87e9 + 20e3, 0.5)]);
    let near = am_two_tone(2.87e9, 2e3, Some(fwhm)).unwrap();
    assert!(!near.splitting);
    let zero = am_two_tone(2.87e9, 0.0, Some(fwhm)).unwrap();
    assert!(zero.degenerate && zero.tones.len() == 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sideband_power_sums_to_one(beta in 0.0f64..20.0) {
        let n_max = (beta + 10.0 + 3.0 * beta.cbrt()).ceil() as usize;
        let j = bessel_sidebands(beta, n_max);
        let total = j[0] * j[0] + 2.0 * j[1..].iter().map(|v| v * v).sum::<f64>();
        prop_assert!((0.9999..=1.0 + 1e-9).contains(&total), "total {total}");
    }

    #[test]
    fn carson_band_holds_most_power(f_m in 100.0f64..50e3, beta in 0.05f64..10.0) {
        let m = MWModulation::fm(0.0, f_m, beta * f_m).unwrap();
        let half = 0.5 * m.carson_bandwidth().unwrap();
        let sb = m.sidebands(60).unwrap();
        let power = |edge: f64| -> f64 {
            sb.iter().filter(|(f, _)| f.abs() <= edge * (1.0 + 1e-12)).map(|(_, a)| a * a).sum()
        };
        // The strict band loses order ⌈β⌉+1 just below integer β, the worst case
        // being 95.9% near β = 6. Whole sideband orders up to ⌈β⌉+1 hold ≥ 98%.
        prop_assert!(power(half) >= 0.955, "strict band {} for beta {beta}", power(half));
        let whole = (beta.ceil() + 1.0) * f_m;
        prop_assert!(power(whole) >= 0.98, "whole orders {} for beta {beta}", power(whole));
    }

    #[test]
    fn lockin_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
        let fs = 20e3;
        let cfg = LockinConfig::new(1e3, 20.0, 2);
        let noise = nvmag_core::analysis::gaussian_noise(2000, 1.0, seed);
        let x = trace(|t| (2.0 * PI * 1e3 * t).sin(), fs, 2000);
        let y = TimeTrace::new(noise, fs, SignalUnit::Volt).unwrap();
        let mix = TimeTrace::new(
            x.samples.iter().zip(&y.samples).map(|(p, q)| a * p + b * q).collect(),
            fs,
            SignalUnit::Volt,
        ).unwrap();
        let (ox, oy, om) = (demodulate(&x, &cfg).unwrap(), demodulate(&y, &cfg).unwrap(), demodulate(&mix, &cfg).unwrap());
        for i in 0..om.len() {
            let want = a * ox.samples[i] + b * oy.samples[i];
            prop_assert!((om.samples[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }
}

#[test]
fn settles_to_tone_amplitude_within_settling_time() {
    let (fs, f_ref, amp) = (10e3, 1e3, 0.7);
    for order in [1, 2] {
        let cfg = LockinConfig::new(f_ref, 1.0, order);
        let n = ((cfg.settling_time() + 0.5) * fs) as usize;
        let x = trace(|t| amp * (2.0 * PI * f_ref * t).sin(), fs, n);
        let out = demodulate(&x, &cfg).unwrap();
        let i0 = (cfg.settling_time() * fs).ceil() as usize;
        for v in &out.samples[i0..] {
            assert!((v / amp - 1.0).abs() <= 1e-3, "order {order}: {v}");
        }
    }
}

#[test]
fn quadrature_picks_up_cosine_component() {
    let (fs, f_ref) = (10e3, 1e3);
    let mut cfg = LockinConfig::new(f_ref, 2.0, 2);
    let x = trace(|t| 0.5 * (2.0 * PI * f_ref * t).cos(), fs, 40_000);
    let in_phase = settled_output(&x, &cfg).unwrap();
    cfg.output = LockinOutput::Quadrature;
    let quad = settled_output(&x, &cfg).unwrap();
    cfg.output = LockinOutput::Magnitude;
    let mag = settled_output(&x, &cfg).unwrap();
    assert!(in_phase.abs() < 1e-3, "{in_phase}");
    assert!((quad - 0.5).abs() < 1e-3, "{quad}");
    assert!((mag - 0.5).abs() < 1e-3, "{mag}");
}

#[test]
fn reference_phase_rotates_output() {
    let (fs, f_ref) = (10e3, 1e3);
    let mut cfg = LockinConfig::new(f_ref, 2.0, 2);
    cfg.phase = PI / 3.0;
    let x = trace(|t| (2.0 * PI * f_ref * t).sin(), fs, 40_000);
    let v = settled_output(&x, &cfg).unwrap();
    assert!((v - (PI / 3.0).cos()).abs() < 2e-3, "{v}");
}

#[test]
fn offset_tone_attenuated_by_filter_response() {
    let (fs, f_ref) = (10e3, 1e3);
    for (order, offset) in [(1, 20.0), (2, 20.0), (4, 10.0)] {
        let cfg = LockinConfig::new(f_ref, 5.0, order);
        let n = 200_000;
        let x = trace(|t| (2.0 * PI * (f_ref + offset) * t).sin(), fs, n);
        let (xs, ys) = demodulate_iq(&x, &cfg).unwrap();
        let i0 = (cfg.settling_time() * fs).ceil() as usize;
        let mag = xs[i0..].iter().zip(&ys[i0..]).map(|(a, b)| a.hypot(*b)).sum::<f64>() / (n - i0) as f64;
        let db = 20.0 * (mag / cfg.filter_gain(offset)).log10();
        assert!(db.abs() <= 2.0, "order {order}: {db:.2} dB");
    }
}

#[test]
fn undersampled_reference_rejected() {
    let cfg = LockinConfig::new(1e3, 10.0, 1);
    assert!(cfg.check_sample_rate(10e3).is_ok());
    assert!(matches!(cfg.check_sample_rate(1.5e3), Err(Error::Aliasing { .. })));
    // 2·f_ref folds onto DC at fs = 2 kHz.
    assert!(cfg.check_sample_rate(2e3).is_err());
    // Calibration-style carrier below the tenfold rate is still accepted.
    assert!(LockinConfig::new(182.0, 49.0, 2).check_sample_rate(900.0).is_ok());
}

#[test]
fn invalid_filter_settings_rejected() {
    assert!(LockinConfig::new(1e3, 0.0, 1).validate().is_err());
    assert!(LockinConfig::new(1e3, 2e3, 1).validate().is_err());
    assert!(LockinConfig::new(1e3, 10.0, 0).validate().is_err());
}

fn ce_setup(t_seq: f64) -> (KineticsParams, CERamseySchedule, LockinConfig) {
    let p = KineticsParams::default().with_pumping(0.26e6);
    let s = ce_ramsey_schedule(2.0 * PI * 4e6, 6.42e-6, t_seq).unwrap();
    let cfg = LockinConfig::new(s.demod_frequency, 0.1 * s.demod_frequency, 2);
    (p, s, cfg)
}

#[test]
fn ce_ramsey_fringe_period_is_inverse_free_evolution_time() {
    let (p, s, cfg) = ce_setup(110e-6);
    let period = 1.0 / s.tau_m;
    let det: Vec<f64> = (0..161)
        .map(|k| -3.0 * period + 6.0 * period * k as f64 / 160.0)
        .collect();
    let fringe = ce_ramsey_fringe(&p, &s, &det, &cfg).unwrap();
    let fit = fit_damped_sinusoid(&det, &fringe).unwrap();
    // The fitted "frequency" is in cycles per Hz of detuning, i.e. τ_m.
    assert!(
        (fit.frequency * period - 1.0).abs() < 0.02,
        "fringe period {}",
        1.0 / fit.frequency
    );
}

#[test]
fn ce_ramsey_fringe_extremal_at_resonance() {
    let (p, s, cfg) = ce_setup(110e-6);
    let half = 0.5 / s.tau_m;
    let det: Vec<f64> = (0..41).map(|k| -half + 2.0 * half * k as f64 / 40.0).collect();
    let fringe = ce_ramsey_fringe(&p, &s, &det, &cfg).unwrap();
    let centre = fringe[20];
    let is_max = fringe.iter().all(|&v| v <= centre + 1e-15);
    let is_min = fringe.iter().all(|&v| v >= centre - 1e-15);
    assert!(is_max || is_min, "{fringe:?}");
}

#[test]
fn ce_ramsey_scalar_factor_rises_with_demodulation_frequency() {
    let sf: Vec<f64> = [1e-3, 110e-6, 30e-6]
        .iter()
        .map(|&t| {
            let (p, s, cfg) = ce_setup(t);
            ce_ramsey_scalar_factor(&p, &s, &cfg).unwrap()
        })
        .collect();
    assert!(sf.windows(2).all(|w| w[1] > w[0]), "{sf:?}");
}

#[test]
fn ce_ramsey_requires_matching_reference() {
    let (p, s, _) = ce_setup(110e-6);
    let wrong = LockinConfig::new(2.0 * s.demod_frequency, 100.0, 1);
    assert!(matches!(
        simulate_ce_ramsey_output(&p, &s, 0.0, &wrong),
        Err(Error::Mismatch(_))
    ));
}

#[test]
fn ce_ramsey_schedule_too_short_is_infeasible() {
    let err = ce_ramsey_schedule(2.0 * PI * 4e6, 6.42e-6, 10e-6).unwrap_err();
    assert!(matches!(err, Error::InfeasibleSchedule(_)));
    let s = ce_ramsey_schedule(2.0 * PI * 4e6, 6.42e-6, 110e-6).unwrap();
    assert!((s.half_a() + s.half_b() - s.t_seq).abs() < 1e-15);
}
