use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn qpnls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpnls")).args(args).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_in(dir: &Path, sub: &str, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    qpnls(&args)
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn empty_config_is_a_schema_error_listing_required_fields() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let out = run_in(&tmp.path().join("run"), "solve", &["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8(out.stderr).unwrap();
    for f in qpnls::config::REQUIRED {
        assert!(err.contains(f), "{err}");
    }
}

#[test]
fn measure_with_gamma_list_writes_csv_and_fit_exponent() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), "measure", &["--gamma-list", "0.1,0.05,0.025"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(tmp.path(), "measure.csv");
    assert_eq!(csv.lines().count(), 4);
    let m: serde_json::Value = serde_json::from_str(&read(tmp.path(), "measure.json")).unwrap();
    let b = m["table"]["fit_exponent"].as_f64().unwrap();
    assert!((b - 1.0).abs() <= 0.2, "{b}");
    assert!(read(tmp.path(), "intervals.csv").lines().count() > 1);
}

#[test]
fn solve_on_the_desk_case_writes_trace_and_solution() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("case_d1.toml");
    let out = run_in(tmp.path(), "solve", &["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = read(tmp.path(), "residual_trace.csv");
    assert!(trace.starts_with("n,N_n,residual_s0"));
    let last: f64 = trace.lines().last().unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(last <= 1e-8);
    let u: serde_json::Value = serde_json::from_str(&read(tmp.path(), "u_inf.json")).unwrap();
    assert!(!u.as_array().unwrap().is_empty());
    let manifest: serde_json::Value = serde_json::from_str(&read(tmp.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["subcommand"], "solve");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    for f in manifest["files"].as_array().unwrap() {
        assert!(tmp.path().join(f.as_str().unwrap()).exists(), "{f}");
    }
}

#[test]
fn identical_config_and_seed_give_identical_reports() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for sub in ["solve", "reduce"] {
        for d in [&a, &b] {
            let out = run_in(&d.join(sub), sub, &["--seed", "3", "--truncation", "6,6", "--threads", "2"]);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        }
    }
    for f in ["solve/report.json", "solve/residual_trace.csv", "solve/u_inf.json", "solve/config.toml", "reduce/eigenvalues.json", "reduce/kam_trace.csv"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
}

#[test]
fn run_directory_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let first = tmp.path().join("first");
    assert_eq!(run_in(&first, "measure", &["--epsilon", "2e-3", "--gamma-list", "0.08,0.04"]).status.code(), Some(0));
    let snap = first.join("config.toml");
    let second = tmp.path().join("second");
    assert_eq!(run_in(&second, "measure", &["--config", snap.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(read(&first, "measure.json"), read(&second, "measure.json"));
    assert_eq!(read(&first, "config.toml"), read(&second, "config.toml"));
}

#[test]
fn resonant_grid_exits_with_empty_cantor_set() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("resonant.toml");
    // lambda sqrt2 = 1 hits the unperturbed eigenvalue at l = 1, j = 1
    std::fs::write(
        &cfg,
        "[model]\nomega_bar = [1.4142135623730951]\nepsilon = 1e-3\n[truncation]\nnphi = 4\nnx = 4\n[grid]\nlambdas = [0.7071067811865476]\n",
    )
    .unwrap();
    let out = run_in(&tmp.path().join("run"), "solve", &["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_truncation_flag_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), "measure", &["--truncation", "8"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NPHI,NX"));
    let out = run_in(tmp.path(), "measure", &["--truncation", "0,8"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn stability_reports_exponent_and_traces() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), "stability", &["--truncation", "6,6"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&read(tmp.path(), "report.json")).unwrap();
    assert_eq!(r["runs"].as_array().unwrap().len(), 2);
    assert!(r["exponent"].as_f64().unwrap() > 0.0);
    assert_eq!(read(tmp.path(), "norm_trace_0.csv").lines().count(), 101);
}

#[test]
fn verify_norms_writes_a_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("n.toml");
    std::fs::write(&cfg, "[model]\nomega_bar = [1.0]\nepsilon = 0.0\n[truncation]\nnphi = 4\nnx = 4\n[norms]\ncases = 20\n").unwrap();
    let out = run_in(&tmp.path().join("run"), "verify-norms", &["--config", cfg.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&tmp.path().join("run"), "norms.csv");
    assert_eq!(csv.lines().count(), 26);
}
