use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dpam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpam"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("DPAM_OUT_DIR")
        .output()
        .unwrap()
}

fn csv_field(text: &str, column: &str) -> String {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap();
    lines.next().unwrap().split(',').nth(idx).unwrap().to_string()
}

#[test]
fn verify_subset_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["verify", "--only", "1,9", "--workers", "1"];
    assert_eq!(dpam(a.path(), &args).status.code(), Some(0));
    let wide = ["verify", "--only", "1,9", "--workers", "8"];
    assert_eq!(dpam(b.path(), &wide).status.code(), Some(0));
    let x = fs::read(a.path().join("verify.csv")).unwrap();
    let y = fs::read(b.path().join("verify.csv")).unwrap();
    assert_eq!(x, y);

    let c = tempfile::tempdir().unwrap();
    dpam(c.path(), &args);
    assert_eq!(x, fs::read(c.path().join("verify.csv")).unwrap());
}

#[test]
fn estimate_with_zero_gamma_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpam(dir.path(), &["estimate", "--gamma", "0", "--env", "poisson", "--nu", "1", "--n", "200", "--t", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("estimate.csv")).unwrap();
    assert_eq!(csv_field(&csv, "mean"), "1");
    assert_eq!(csv_field(&csv, "stderr"), "0");
    assert_eq!(String::from_utf8_lossy(&out.stdout), csv);
}

#[test]
fn estimate_depends_only_on_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let base = ["estimate", "--gamma", "-1", "--env", "bernoulli", "--p", "0.3", "--n", "2000", "--t", "2", "--seed", "7"];
    dpam(a.path(), &[&base[..], &["--workers", "1"]].concat());
    dpam(b.path(), &[&base[..], &["--workers", "6"]].concat());
    assert_eq!(fs::read(a.path().join("estimate.csv")).unwrap(), fs::read(b.path().join("estimate.csv")).unwrap());
}

#[test]
fn config_file_keys_match_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"gamma": "neg_inf", "s0": 1.0, "s1": 1.0, "env": "poisson", "nu": 0.5}"#).unwrap();
    let out = dpam(dir.path(), &["rates", "--formula", "lambda-tilde", "--d", "3", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    assert_eq!(csv_field(&csv, "gamma"), "neg_inf");
    assert_eq!(csv_field(&csv, "master_seed"), "20240611");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
    assert_eq!(dpam(dir.path(), &["rates", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(dpam(dir.path(), &["estimate", "--s0", "-1"]).status.code(), Some(2));
    assert_eq!(dpam(dir.path(), &["verify", "--only", "14"]).status.code(), Some(2));
    let red = dpam(dir.path(), &["verify", "--only", "2"]);
    assert_eq!(red.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&red.stdout).contains("FAIL"));
    assert_eq!(dpam(dir.path(), &["figures", "--figure", "fig2"]).status.code(), Some(0));
    assert!(dir.path().join("fig2.csv").exists());
}
