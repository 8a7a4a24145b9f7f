use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cascadelab::clt::{ComparisonReport, EnsembleSample};
use cascadelab::moments::{Depth, Method, MomentTable};
use cascadelab::regime::{Regime, RegimeReport};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascadelab"))
        .args(args)
        .env_remove("CASCADELAB_THREADS")
        .output()
        .unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_spec(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn error_of(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    v["error"].clone()
}

#[test]
fn classify_identity_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "id.json", r#"{"b": 2, "weights": {"kind": "deterministic", "values": [0.5, 0.5]}}"#);
    let text = stdout(&["classify", "--spec", &spec]);
    let report: RegimeReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.regime, Regime::ConvergentLp);
    assert_eq!(report.beta, Some(1.0));
    assert_eq!(report.p0, f64::INFINITY);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["p0"], "inf");
    let table = v["phi_table"].as_array().unwrap();
    assert_eq!(table.len(), 33);
    assert_eq!(table[0]["phi"], -1.0);
    assert_eq!(table[8]["p"], 2.0);
}

#[test]
fn simulate_levy_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("path.csv");
    let spec = write_spec(
        dir.path(),
        "levyc.json",
        r#"{"b": 2, "weights": {"kind": "deterministic", "values": [[0.5, 0.5], [0.5, -0.5]]}}"#,
    );
    stdout(&["simulate", "--spec", &spec, "--depth", "12", "--seed", "7", "--out", out.to_str().unwrap()]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,re,im"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4097);
    assert_eq!(rows[0], "0,0,0");
    assert_eq!(rows[4096], "1,1,0");
    assert!(!text.contains('\r'));
}

#[test]
fn moments_limit_entry() {
    let text = stdout(&["moments", "--spec", "@clt", "--order", "4"]);
    let table: MomentTable = serde_json::from_str(&text).unwrap();
    let v = table.find(4, Depth::Limit, Method::Eq45).unwrap();
    assert!((v - 6.521739).abs() < 1e-6);
    assert!(text.contains("\"method\": \"eq45\""));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_spec(dir.path(), "bad.json", r#"{"b": 2, "weights": {"kind": "deterministic", "values": [0.5, 0.6]}}"#);
    let out = run(&["classify", "--spec", &bad]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_of(&out);
    assert_eq!(e["class"], "validation");
    assert_eq!(e["kind"], "MeanNotOne");

    let out = run(&["classify", "--spec", "/definitely/missing.json"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["ensemble", "--spec", "@critical", "--depth", "4"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_of(&out)["kind"], "WrongRegime");

    let out = run(&["simulate", "--spec", "@clt", "--depth", "30"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_of(&out)["class"], "resource");

    let out = run(&["moments", "--spec", "@critical", "--order", "40"]);
    assert_eq!(out.status.code(), Some(4));

    let out = run(&["simulate", "--spec", "@clt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn force_marks_regime_violation() {
    // Fails (C) with p0 in (1, 2]: unbounded, so no normalized CLT is claimed.
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "div.json",
        r#"{"b": 2, "weights": {"kind": "iid", "atoms": [{"p": 0.35, "value": 1.8}, {"p": 0.65, "value": -0.2}]}}"#,
    );
    let args = ["ensemble", "--spec", &spec, "--kind", "zn", "--depth", "4", "--count", "10"];
    let out = run(&args);
    assert_eq!(out.status.code(), Some(3));
    let text = stdout(&[&args[..], &["--force"]].concat());
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["notes"][0], "regime_violation");
    let sample: EnsembleSample = serde_json::from_str(&text).unwrap();
    assert_eq!(sample.values.len(), 10);

    // Forcing cannot invent a normalization that does not exist.
    let out = run(&["ensemble", "--spec", "@convergent", "--depth", "4", "--count", "10", "--force"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn clt_report_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("z.csv");
    let text = stdout(&[
        "clt", "--spec", "@sign", "--depth", "8", "--count", "300", "--seed", "4", "--dump", dump.to_str().unwrap(),
    ]);
    let report: ComparisonReport = serde_json::from_str(&text).unwrap();
    let ks = report.ks_statistic.unwrap();
    assert!((0.0..=1.0).contains(&ks));
    assert_eq!(report.moments.len(), 4);
    assert!(report.moments.iter().all(|m| m.std_error > 0.0 && m.target.is_some()));
    let csv = fs::read_to_string(&dump).unwrap();
    assert_eq!(csv.lines().count(), 301);

    let text = stdout(&["clt", "--spec", "@convergent", "--kind", "rn", "--depth", "4", "--tail", "3", "--count", "200"]);
    let report: ComparisonReport = serde_json::from_str(&text).unwrap();
    assert!(report.notes.iter().any(|n| n.contains("truncated")));
}

#[test]
fn tau_and_timechange() {
    let text = stdout(&["tau", "--spec", "@sign", "--depth", "10", "--q", "1,2"]);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["q"].as_array().unwrap().len(), 2);
    assert_eq!(v["level_lo"], 2);
    assert_eq!(v["level_hi"], 6);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let text = stdout(&["timechange", "--spec", "@levy_c", "--depth", "10", "--out", out.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert!((v["beta"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!(v["holder"]["slope"].as_f64().unwrap() > 0.3);
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next(), Some("g,re,im"));
    assert_eq!(csv.lines().count(), 1025 + 1);

    // No beta solves phi(beta) = 0 outside (C), unless one is given.
    let out = run(&["timechange", "--spec", "@clt", "--depth", "6"]);
    assert_eq!(out.status.code(), Some(3));
    let csv = stdout(&["timechange", "--spec", "@clt", "--depth", "6", "--beta", "2"]);
    assert_eq!(csv.lines().count(), 65 + 1);
}

#[test]
fn output_does_not_depend_on_threads() {
    let args = ["ensemble", "--spec", "@clt", "--depth", "9", "--count", "64", "--seed", "5"];
    let one = stdout(&[&args[..], &["--threads", "1"]].concat());
    let three = stdout(&[&args[..], &["--threads", "3"]].concat());
    assert_eq!(one, three);
    let env = Command::new(env!("CARGO_BIN_EXE_cascadelab"))
        .args(args)
        .env("CASCADELAB_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(env.stdout).unwrap(), one);
}
