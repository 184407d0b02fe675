use std::f64::consts::{FRAC_PI_2, LN_2};
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semitoric"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn lists_builtins() {
    let o = Command::new(env!("CARGO_BIN_EXE_semitoric")).arg("systems").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for id in ["spin-oscillator", "spherical-pendulum", "s2xs2-hyperbolic", "cp2-toric"] {
        assert!(text.contains(id), "{text}");
    }
}

#[test]
fn analyze_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = ["analyze", "--system", "spin-oscillator", "--window", "-2,2,-1.5,1.5"];
    assert!(run(&args, &a).status.success());
    assert!(run(&args, &b).status.success());
    let ja = std::fs::read(a.join("critical_points.json")).unwrap();
    assert_eq!(ja, std::fs::read(b.join("critical_points.json")).unwrap());
    let v = json(&a.join("critical_points.json"));
    assert_eq!(v["result"]["critical_points"].as_array().unwrap().len(), 2);
    assert!(v["meta"]["config_hash"].as_str().unwrap().len() == 64);
    let csv = std::fs::read_to_string(a.join("bifurcation.csv")).unwrap();
    assert!(csv.starts_with("# tool="));
    assert!(a.join("bifurcation.svg").exists());
}

#[test]
fn empty_window_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--window", "1,1,0,1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let e = json(&dir.path().join("error.json"));
    assert_eq!(e["error"]["exit_code"], 2);
}

#[test]
fn spin_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["invariants", "--system", "spin-oscillator"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("invariants.json"));
    let r = &v["result"];
    assert_eq!(r["m_f"], 1);
    let t = &r["taylor_linear"][0];
    let (x, y) = (t[0].as_f64().unwrap(), t[1].as_f64().unwrap());
    assert!((x - 5.0 * LN_2).abs() < 0.02 * 5.0 * LN_2);
    assert!((y - FRAC_PI_2).abs() < 0.02 * FRAC_PI_2);
    assert!(dir.path().join("polygon.json").exists() && dir.path().join("polygon.svg").exists());
}

#[test]
fn toric_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["invariants", "--system", "cp2-toric"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("invariants.json"));
    assert_eq!(v["result"]["m_f"], 0);
}

#[test]
fn non_semitoric_refused_with_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["invariants", "--system", "s2xs2-hyperbolic", "--window", "-1.5,1.5,-1.5,1.5"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    let e = json(&dir.path().join("error.json"));
    assert_eq!(e["error"]["details"]["semitoric"], false);
    assert!(!e["error"]["details"]["certificate"].as_array().unwrap().is_empty());
}

#[test]
fn spectrum_study() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["spectrum", "--hbar", "0.125", "--hbar", "0.0625"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("convergence.json"));
    assert_eq!(v["result"]["counts_preserved"], true);
    assert!(dir.path().join("comparison.svg").exists());
}

#[test]
fn bad_hbar_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    for h in ["0", "-1"] {
        let o = run(&["spectrum", "--hbar", h], dir.path());
        assert_eq!(o.status.code(), Some(2), "ħ = {h}");
    }
}

#[test]
fn spectrum_needs_the_spin_oscillator() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["spectrum", "--system", "cp2-toric"], dir.path());
    assert_eq!(o.status.code(), Some(4));
}
