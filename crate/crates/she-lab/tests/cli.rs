//! Exit-code and output contract of the command-line binary.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_she-lab"))
}

#[test]
fn classify_prints_regime_and_tag() {
    let out = bin()
        .args(["classify", "--alpha", "2", "--exponent", "2", "--noise", "noncompensated"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("no-global-solution\t"), "{text}");
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // A syntactically valid config with dt <= 0 must be rejected before any
    // output is produced.
    let preset = she_lab::config::load_preset("lipschitz-baseline").unwrap();
    let mut config = preset.config;
    config.time.dt = 0.0;
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, toml::to_string(&config).unwrap()).unwrap();
    let out_dir = dir.path().join("runs");
    let out = bin()
        .args(["--out-dir", out_dir.to_str().unwrap(), "simulate", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.exists(), "outputs written despite config error");
}

#[test]
fn bounds_emits_closed_form_rows() {
    let out = bin()
        .args(["bounds", "--noise", "noncompensated", "--exponent", "2", "--rows", "4", "--horizon", "0.5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,bound"));
    // Unit constants, gamma = 2: F(t) = 1/(1 - t).
    let row: Vec<&str> = lines.nth(3).unwrap().split(',').collect();
    let (t, f): (f64, f64) = (row[0].parse().unwrap(), row[1].parse().unwrap());
    assert!((f - 1.0 / (1.0 - t)).abs() < 1e-12);
}
