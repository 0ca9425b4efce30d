use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noisestab"))
}

fn sample(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "partitions", name].iter().collect();
    p.display().to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json report")
}

#[test]
fn half_space_file_gives_two_thirds() {
    let out = run(&["stability", &sample("halfspace.json"), "--rho", "0.5", "--per-cell"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["schema"], "1");
    assert!((v["stability"]["value"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-9);
    assert_eq!(v["cells"].as_array().unwrap().len(), 2);
}

#[test]
fn near_independence_gives_one_third() {
    let out = run(&["stability", &sample("simplex3.json"), "--rho", "1e-6"]);
    let v = json(&out);
    assert!((v["stability"]["value"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-5);
}

#[test]
fn default_seed_is_reported() {
    let out = run(&["stability", &sample("simplex3.json"), "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# noisestab schema=1 command=stability seed=1592598564\n"));
    let v = json(&run(&["stability", &sample("simplex3.json"), "--seed", "17"]));
    assert_eq!(v["seed"], 17);
}

#[test]
fn exit_codes() {
    let dir = std::env::temp_dir().join(format!("noisestab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{\"dimension\": 2, \"cells\": [").unwrap();
    let out = run(&["stability", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let overlap = dir.join("overlap.json");
    std::fs::write(&overlap, r#"{"dimension": 1, "cells": [{"kind": "half-space", "normal": [1.0], "offset": 0.0}, {"kind": "half-space", "normal": [1.0], "offset": 1.0}]}"#).unwrap();
    assert_eq!(run(&["stability", overlap.to_str().unwrap()]).status.code(), Some(3));

    assert_eq!(run(&["stability", &sample("halfspace.json"), "--rho", "1.5"]).status.code(), Some(3));
    assert_eq!(run(&["sweep", &sample("simplex3.json"), "--grid", ""]).status.code(), Some(3));
    assert_eq!(run(&["sweep", &sample("simplex3.json"), "--grid", "0.2,1.2"]).status.code(), Some(3));
    assert_eq!(run(&["verify", "no-such-suite"]).status.code(), Some(4));
    assert_eq!(run(&["stability"]).status.code(), Some(2));
}

#[test]
fn sweep_is_monotone_and_reproducible() {
    let args = ["sweep", &sample("simplex3.json"), "--format", "csv", "--seed", "5"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    let vals: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn propeller_suite_checks_the_sector_value() {
    let out = run(&["verify", "propeller"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["passed"], true);
    let first = &v["checks"][0];
    assert!((first["reference"].as_f64().unwrap() - 9.0 / (8.0 * std::f64::consts::PI)).abs() < 1e-15);
    assert!((first["value"].as_f64().unwrap() - first["reference"].as_f64().unwrap()).abs() < 1e-3);
}

#[test]
fn every_suite_passes() {
    for suite in ["gaussian-core", "first-variation", "translation-eigen", "dilation-eigen", "second-variation", "bilinear", "hyperstability"] {
        let out = run(&["verify", suite]);
        assert_eq!(out.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn hyperstability_flags_the_perturbed_partition() {
    let v = json(&run(&["verify", "hyperstability"]));
    let check = v["checks"].as_array().unwrap().iter().find(|c| c["name"].as_str().unwrap().starts_with("perturbed")).unwrap();
    assert!(check["value"].as_f64().unwrap() > 0.0);
    assert_eq!(check["passed"], true);
}

#[test]
fn shrunken_tolerances_fail_with_code_five() {
    let out = run(&["verify", "translation-eigen", "--tolerance-scale", "1e-30"]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(json(&out)["passed"], false);
}

#[test]
fn plurality_table() {
    let out = run(&["plurality", "--m", "3", "--n", "1,3,5", "--rho", "0", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines().skip(1);
    assert_eq!(lines.next(), Some("m,n,rho,value,std_error,method"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    for r in &rows[..3] {
        let v: f64 = r.split(',').nth(3).unwrap().parse().unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
    }
    assert!(rows[3].ends_with("simplex-cones"));
}
