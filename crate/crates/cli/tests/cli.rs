use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const OPTIMIZE: &str = "\
[optimize]
t1_s = 6e-3
t2_star_s = 8.5e-6
s_points = 12
rabi_points = 12
";

const ANALYZE: &str = "\
seed = 3

[analyze]
band_min_hz = 1
band_max_hz = 20

[synthetic]
samples = 16384
noise_sigma = 2e-12
ramp_per_s = 1e-12
";

fn nvmag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvmag"))
        .args(args)
        .env("NVMAG_THREADS", "1")
        .output()
        .expect("run nvmag")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_ok(mode: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        mode,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = nvmag(&args);
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn empty_config_exits_one_and_lists_missing_fields() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "empty.toml", "");
    let o = nvmag(&[
        "optimize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("missing field `optimize.t1_s`"), "{err}");
    assert!(err.contains("missing field `optimize.t2_star_s`"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_field_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        "[optimize]\nt1_s = 6e-3\nt2_star_s = 8.5e-6\nt3_s = 1\n",
    );
    let o = nvmag(&[
        "optimize",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("t3_s") && err.contains("line 4"), "{err}");
}

#[test]
fn out_of_range_value_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "neg.toml", "[optimize]\nt1_s = -1\nt2_star_s = 8.5e-6\n");
    let o = nvmag(&[
        "optimize",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t1"));
}

#[test]
fn missing_config_file_and_bad_mode_exit_one() {
    let o = nvmag(&["optimize", "--config", "/nonexistent/nvmag.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let o = nvmag(&["fly", "--config", "x.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(nvmag(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_thread_count_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "opt.toml", OPTIMIZE);
    let o = Command::new(env!("CARGO_BIN_EXE_nvmag"))
        .args([
            "optimize",
            "-c",
            cfg.to_str().unwrap(),
            "-o",
            dir.path().join("out").to_str().unwrap(),
        ])
        .env("NVMAG_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_two_with_error_report() {
    let dir = TempDir::new().unwrap();
    // Band far above Nyquist: valid config, but no bins to take a floor over.
    let cfg = write_config(
        dir.path(),
        "a.toml",
        "[analyze]\nband_min_hz = 5000\nband_max_hz = 6000\n",
    );
    let out = dir.path().join("out");
    let o = nvmag(&["analyze", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["status"], "error");
    assert!(r["error"].as_str().unwrap().contains("empty band"));
}

#[test]
fn optimize_report_has_sensitivity_fields() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "opt.toml", OPTIMIZE);
    let out = dir.path().join("out");
    run_ok("optimize", &cfg, &out, &[]);
    let r = report(&out);
    assert_eq!(r["status"], "ok");
    assert_eq!(r["mode"], "optimize");
    assert_eq!(r["config_sha256"].as_str().unwrap().len(), 64);
    let rep = &r["results"]["report"];
    for key in [
        "delta_b",
        "eta",
        "eta_v",
        "eta_enhanced",
        "contrast",
        "linewidth",
        "photon_rate",
    ] {
        let v = rep[key].as_f64().unwrap_or_else(|| panic!("{key} missing"));
        assert!(v.is_finite() && v > 0.0, "{key} = {v}");
    }
    assert!(rep["eta_enhanced"].as_f64().unwrap() < rep["eta"].as_f64().unwrap());
    assert_eq!(rep["fitted_parameters"].as_array().unwrap().len(), 2);
    let map = fs::read_to_string(out.join("sensitivity_map.csv")).unwrap();
    let rows = map.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 12 * 12);
    assert!(out.join("sensitivity_map.svg").exists());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("eta") && summary.contains("optimum Rabi frequency"));
}

#[test]
fn runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "a.toml", ANALYZE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok("analyze", &cfg, &a, &[]);
    run_ok("analyze", &cfg, &b, &[]);
    for f in [
        "spectrum.csv",
        "report.json",
        "summary.txt",
        "resolved_config.toml",
        "spectrum.svg",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "a.toml", ANALYZE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok("analyze", &cfg, &a, &[]);
    run_ok("analyze", &cfg, &b, &["--seed", "4"]);
    assert_ne!(
        fs::read(a.join("spectrum.csv")).unwrap(),
        fs::read(b.join("spectrum.csv")).unwrap()
    );
    let resolved = fs::read_to_string(b.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("seed = 4"), "{resolved}");
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "a.toml", ANALYZE);
    let first = dir.path().join("first");
    run_ok("analyze", &cfg, &first, &[]);
    let resolved = first.join("resolved_config.toml");
    let second = dir.path().join("second");
    run_ok("analyze", &resolved, &second, &[]);
    for f in ["spectrum.csv", "report.json", "resolved_config.toml"] {
        assert_eq!(
            fs::read(first.join(f)).unwrap(),
            fs::read(second.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn csv_header_carries_resolved_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "a.toml", ANALYZE);
    let out = dir.path().join("out");
    run_ok("analyze", &cfg, &out, &[]);
    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let header: Vec<&str> = csv.lines().take_while(|l| l.starts_with('#')).collect();
    assert!(header[0].starts_with("# nvmag "));
    assert!(header.contains(&"# mode = \"analyze\""));
    assert!(header.contains(&"# window = \"rectangular\""));
    assert!(csv.lines().nth(header.len()).unwrap() == "freq_hz,amplitude_t");
}

#[test]
fn analyze_reads_trace_and_reports_flux_gain() {
    let dir = TempDir::new().unwrap();
    let write_trace = |name: &str, slope: f64| {
        let mut s = String::from("time_s,value_v\n");
        for i in 0..4096 {
            let t = i as f64 / 100.0;
            let v = slope * t + 1e-3 * ((i * 7919) % 13) as f64;
            s += &format!("{t:?},{v:?}\n");
        }
        fs::write(dir.path().join(name), s).unwrap();
    };
    write_trace("with.csv", 14e-3);
    write_trace("without.csv", 1e-3);
    let cfg = write_config(
        dir.path(),
        "a.toml",
        "[analyze]\ninput = \"with.csv\"\nflux_reference = \"without.csv\"\nband_min_hz = 1\nband_max_hz = 20\nscalar_factor_v_per_t = 2970\n",
    );
    let out = dir.path().join("out");
    run_ok("analyze", &cfg, &out, &[]);
    let r = report(&out);
    assert_eq!(r["results"]["unit"], "T");
    let gain = r["results"]["flux_gain"].as_f64().unwrap();
    assert!((gain - 14.0).abs() < 0.05, "{gain}");
}

#[test]
fn calibrate_summary_lists_recovered_tones() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "mode = \"calibrate\"\n");
    let out = dir.path().join("out");
    let o = run_ok("calibrate", &cfg, &out, &[]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    for f in ["tone 2 Hz", "tone 5 Hz", "tone 10 Hz"] {
        assert!(stdout.contains(f), "{stdout}");
    }
    let r = report(&out);
    for t in r["results"]["tones"].as_array().unwrap() {
        let a = t["amplitude"].as_f64().unwrap();
        assert!((a / 150e-12 - 1.0).abs() < 0.05, "{t}");
    }
    assert!(out.join("baseband.csv").exists());
}

#[test]
fn mode_mismatch_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "mode = \"calibrate\"\n");
    let o = nvmag(&[
        "analyze",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradiometer_cancels_common_mode() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.toml",
        "[gradiometer]\nband_min_hz = 1\nband_max_hz = 20\nsamples = 16384\n",
    );
    let out = dir.path().join("out");
    run_ok("gradiometer", &cfg, &out, &[]);
    let r = &report(&out)["results"];
    let cm_in = r["common_mode_channel1"].as_f64().unwrap();
    let cm_out = r["common_mode_difference"].as_f64().unwrap();
    assert!(cm_out < 1e-3 * cm_in, "{cm_out} vs {cm_in}");
    let d = r["differential_tone"].as_f64().unwrap();
    assert!((d / 10e-12 - 1.0).abs() < 0.1, "{d}");
}

#[test]
fn cw_odmr_and_repolarization_write_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "o.toml",
        "[kinetics]\nrabi_hz = 10e3\n[odmr]\nfreq_min_hz = -150e3\nfreq_max_hz = 150e3\npoints = 61\n",
    );
    let out = dir.path().join("odmr");
    run_ok("simulate-odmr", &cfg, &out, &[]);
    let r = report(&out);
    let lw = r["results"]["analytic_linewidth_hz"].as_f64().unwrap();
    assert!(lw > 0.0);
    let csv = fs::read_to_string(out.join("odmr_spectrum.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 62);

    let cfg = write_config(
        dir.path(),
        "r.toml",
        "[repolarization]\nduration_s = 50e-6\nsamples = 500\n",
    );
    let out = dir.path().join("repol");
    run_ok("simulate-repolarization", &cfg, &out, &[]);
    let r = report(&out);
    assert!(r["results"]["final_fluorescence"].as_f64().unwrap() > 0.0);
    assert!(out.join("repolarization.svg").exists());
}

#[test]
fn infeasible_ramsey_schedule_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.toml",
        "[ramsey]\nrabi_hz = 4e6\ntau_m_s = 60e-6\nt_seq_s = 110e-6\n",
    );
    let o = nvmag(&[
        "simulate-ramsey",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible schedule"));
}

#[test]
fn shipped_configs_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let mut cfg = nvmag::run::load_config(&path).unwrap();
        let mode = cfg.mode.unwrap_or_else(|| panic!("{} has no mode", path.display()));
        if let Err(e) = cfg.resolve(mode, &dir) {
            panic!("{}: {e:?}", path.display());
        }
        n += 1;
    }
    assert!(n >= 7);
}
