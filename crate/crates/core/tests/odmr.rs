use std::f64::consts::PI;

use proptest::prelude::*;

use nvmag_core::kinetics::KineticsParams;
use nvmag_core::mwsignal::MWModulation;
use nvmag_core::odmr::*;
use nvmag_core::units::GAMMA_NV;

fn lorentzian_dip(freqs: &[f64], depth: f64, hwhm: f64) -> OdmrSpectrum {
    let signal = freqs.iter().map(|f| 1.0 - depth / (1.0 + (f / hwhm).powi(2))).collect();
    OdmrSpectrum::new(SpectrumKind::Fluorescence, freqs.to_vec(), signal, 1.0).unwrap()
}

#[test]
fn linewidth_matches_hand_evaluation() {
    let (g1, g2s, gp, om) = (1.0 / 6e-3, 1.0 / 8.5e-6, 0.026e6, 2.0 * PI * 17e3);
    let g2 = g2s + gp;
    let by_hand = (g2 * g2 + om * om * g2 / (2.0 * g1 + gp)).sqrt() / (2.0 * PI);
    let w = cw_linewidth(g1, g2s, gp, om).unwrap();
    assert!((w / by_hand - 1.0).abs() < 1e-14);
    // Without drive only the dephasing and pumping terms remain.
    let w0 = cw_linewidth(g1, g2s, gp, 0.0).unwrap();
    assert!((w0 - g2 / (2.0 * PI)).abs() < 1e-9);
}

#[test]
fn linewidth_rejects_negative_rates() {
    assert!(cw_linewidth(-1.0, 1e5, 0.0, 0.0).is_err());
    assert!(cw_linewidth(1.0, 1e5, f64::NAN, 0.0).is_err());
}

#[test]
fn pulsed_linewidth_at_one_microsecond() {
    let w = pulsed_odmr_linewidth(1e-6).unwrap();
    let oracle = 2.0 * (2.0f64.ln()).sqrt() / PI * 1e6;
    assert!((w / oracle - 1.0).abs() < 1e-14);
    assert!((w - 529.9e3).abs() < 0.2e3, "{w}");
    let half = pulsed_odmr_linewidth(2e-6).unwrap();
    assert!((w / half - 2.0).abs() < 1e-12);
    assert!(pulsed_odmr_linewidth(0.0).is_err());
}

#[test]
fn lockin_spectrum_flat_without_drive() {
    let p = KineticsParams::default();
    let m = MWModulation::fm(0.0, 5e3, 10e3).unwrap();
    let s = lockin_odmr_spectrum(&p, &m, &linear_grid(-100e3, 100e3, 21)).unwrap();
    assert!(s.is_flat(), "peak-to-peak {}", s.peak_to_peak());
    assert_eq!(scalar_factor(&s), 0.0);
}

#[test]
fn lockin_spectrum_antisymmetric_with_zero_crossing_at_resonance() {
    let p = KineticsParams::default().with_rabi(2.0 * PI * 10e3);
    let m = MWModulation::fm(0.0, 3e3, 15e3).unwrap();
    let grid = linear_grid(-120e3, 120e3, 41);
    let step = grid[1] - grid[0];
    let s = lockin_odmr_spectrum(&p, &m, &grid).unwrap();
    let pp = s.peak_to_peak();
    let n = s.signal.len();
    for (i, f) in grid.iter().enumerate() {
        let sum = s.signal[i] + s.signal[n - 1 - i];
        assert!(sum.abs() <= 0.02 * pp, "asymmetry at {f}: {sum} vs {pp}");
    }
    let z = s.zero_crossing().expect("zero crossing");
    assert!(z.abs() <= step, "crossing at {z}");
    // Dispersive sign: positive below resonance.
    assert!(s.signal[n / 2 - 2] > 0.0);
}

#[test]
fn slow_small_modulation_approaches_finite_difference() {
    let p = KineticsParams::default().with_rabi(2.0 * PI * 10e3);
    let grid = linear_grid(-100e3, 100e3, 21);
    let f_d = 2e3;
    let fd = finite_difference_spectrum(&p, f_d, &grid).unwrap();
    let m = MWModulation::fm(0.0, 20.0, f_d).unwrap();
    let li = lockin_odmr_spectrum(&p, &m, &grid).unwrap();
    let ratio = li.peak_to_peak() / fd.peak_to_peak();
    assert!((ratio - 1.0).abs() <= 0.10, "lock-in / finite difference = {ratio}");
    let scale = fd.peak_to_peak();
    for (a, b) in li.signal.iter().zip(&fd.signal) {
        assert!((a - b).abs() <= 0.05 * scale, "{a} vs {b}");
    }
}

#[test]
fn scalar_factor_of_lorentzian_dip() {
    let (depth, hwhm) = (0.02, 20e3);
    let grid = linear_grid(-200e3, 200e3, 40001);
    let s = lorentzian_dip(&grid, depth, hwhm);
    // max |d/df| of a Lorentzian dip is 3√3·depth/(8·HWHM) at f = ±HWHM/√3.
    let oracle = 3.0 * 3f64.sqrt() * depth / (8.0 * hwhm);
    assert!((max_slope(&s) / oracle - 1.0).abs() < 1e-4);
    assert!((scalar_factor(&s) / (oracle * GAMMA_NV) - 1.0).abs() < 1e-4);
}

#[test]
fn scalar_factor_scales_with_signal() {
    let grid = linear_grid(-100e3, 100e3, 401);
    let s = lorentzian_dip(&grid, 0.01, 15e3);
    let k = 3.7;
    assert!((scalar_factor(&s.scaled(k)) / scalar_factor(&s) - k).abs() < 1e-12);
}

#[test]
fn steepest_point_of_simulated_line_sits_near_hwhm_over_root_three() {
    let p = KineticsParams::default().with_rabi(2.0 * PI * 5e3);
    let hwhm = cw_half_width(&p).unwrap();
    let grid = linear_grid(-6.0 * hwhm, 6.0 * hwhm, 601);
    let s = cw_spectrum(&p, &grid).unwrap();
    let slopes: Vec<f64> = (1..grid.len() - 1)
        .map(|i| ((s.signal[i + 1] - s.signal[i - 1]) / (grid[i + 1] - grid[i - 1])).abs())
        .collect();
    let i = slopes.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0 + 1;
    let at = grid[i].abs();
    assert!(
        (at / (hwhm / 3f64.sqrt()) - 1.0).abs() < 0.1,
        "steepest at {at}, hwhm {hwhm}"
    );
}

#[test]
fn fitted_center_of_cw_spectrum_is_resonance() {
    let p = KineticsParams::default().with_rabi(2.0 * PI * 10e3);
    let grid = linear_grid(-200e3, 200e3, 161);
    let s = cw_spectrum(&p, &grid).unwrap();
    assert!(s.center.unwrap().abs() < 10.0);
    assert!(s.contrast > 0.0 && s.contrast < 1.0);
    let csv = s.to_csv_string(&[]);
    assert!(csv.starts_with("freq_hz,signal\n"));
    assert_eq!(csv.lines().count(), grid.len() + 1);
}

#[test]
fn unsorted_grid_rejected() {
    let p = KineticsParams::default().with_rabi(2.0 * PI * 10e3);
    assert!(cw_spectrum(&p, &[0.0, -1e5, 1e5]).is_err());
    let am = MWModulation::am(0.0, 1e3).unwrap();
    assert!(lockin_odmr_spectrum(&p, &am, &linear_grid(-1e5, 1e5, 11)).is_err());
}

#[test]
fn response_rolls_off_with_modulation_frequency() {
    let p = KineticsParams::default().with_rabi(2.0 * PI * 3e3);
    let r = frequency_response(&p, &[200.0, 2e3, 20e3]).unwrap();
    assert!(r.normalized[0] > 0.95 && r.normalized[0] <= 1.01, "{:?}", r.normalized);
    assert!(r.normalized.windows(2).all(|w| w[1] < w[0]), "{:?}", r.normalized);
    assert!(r.bandwidth_3db.is_some());
}

#[test]
fn tenfold_shorter_t1_barely_widens_bandwidth() {
    let f_m = log_grid(100.0, 50e3, 28);
    let base = KineticsParams::default().with_rabi(2.0 * PI * 3e3);
    let fast = KineticsParams {
        gamma_1: 10.0 * base.gamma_1,
        ..base.clone()
    };
    let bw = frequency_response(&base, &f_m).unwrap().bandwidth_3db.unwrap();
    let bw_fast = frequency_response(&fast, &f_m).unwrap().bandwidth_3db.unwrap();
    println!("bandwidth {bw:.0} Hz, with T1/10 {bw_fast:.0} Hz");
    assert!(bw_fast >= bw, "{bw_fast} vs {bw}");
    assert!((bw_fast / 1.7e3 - 1.0).abs() <= 0.3, "{bw_fast}");
}

#[test]
fn modulation_penalty_is_above_one() {
    let p = KineticsParams::default().with_rabi(2.0 * PI * 17e3);
    let grid = linear_grid(-150e3, 150e3, 31);
    let fd = finite_difference_spectrum(&p, 18e3, &grid).unwrap();
    let li = lockin_odmr_spectrum(&p, &MWModulation::pm(0.0, 9e3, 2.0).unwrap(), &grid).unwrap();
    let penalty = fd.peak_to_peak() / li.peak_to_peak();
    println!("modulation penalty at 9 kHz / 18 kHz: {penalty:.2}");
    assert!(penalty > 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn linewidth_monotone_in_drive(
        gp in 0.0f64..1e6,
        om in 0.0f64..1e6,
        dgp in 1.0f64..1e5,
        dom in 1.0f64..1e5,
    ) {
        let (g1, g2s) = (1.0 / 6e-3, 1.0 / 8.5e-6);
        let w = cw_linewidth(g1, g2s, gp, om).unwrap();
        prop_assert!(cw_linewidth(g1, g2s, gp, om + dom).unwrap() >= w);
        // Pumping alone only broadens; with drive it also relieves saturation.
        let w0 = cw_linewidth(g1, g2s, gp, 0.0).unwrap();
        prop_assert!(cw_linewidth(g1, g2s, gp + dgp, 0.0).unwrap() > w0);
        prop_assert!(w >= g2s / (2.0 * PI) * (1.0 - 1e-12));
    }
}
