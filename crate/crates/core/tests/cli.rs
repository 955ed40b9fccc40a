use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use kinvlap::dataset::Dataset;
use kinvlap::spectral::eigvec_file_name;

fn kinvlap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinvlap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn bundle(dir: &Path, name: &str, config: &str) -> PathBuf {
    let cfg = write(dir, &format!("{name}.json"), config);
    let out = dir.join(name);
    let o = kinvlap(&["generate", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

const Z8: &str = r#"{"manifold": {"name": "torus_r4", "radii": [1.0, 2.0]}, "n": 4, "seed": 11,
    "group": {"kind": "cyclic", "order": 8, "pairs": [[0, 1]]}}"#;

#[test]
fn generate_writes_bundle_and_prints_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "t.json",
        r#"{"manifold": {"name": "torus_r4", "radii": [1.0, 2.0]}, "n": 128, "seed": 5}"#,
    );
    let a = kinvlap(&["generate", s(&cfg), "--out", s(&dir.path().join("a"))]);
    let b = kinvlap(&["generate", s(&cfg), "--out", s(&dir.path().join("b"))]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let hash = String::from_utf8(a.stdout).unwrap();
    assert_eq!(hash.trim().len(), 64);
    let csv = std::fs::read_to_string(dir.path().join("a/points.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.is_empty()).collect();
    assert!(rows.len() == 128 || rows.len() == 129, "{} rows", rows.len());
    assert_eq!(rows.last().unwrap().split(',').count(), 4);
    for f in ["points.csv", "group.json", "meta.json"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }
    let ds = Dataset::load_bundle(&dir.path().join("a")).unwrap();
    assert_eq!(ds.hash(), hash.trim());
}

#[test]
fn generate_rejects_unknown_manifold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"manifold": {"name": "mobius"}, "n": 8, "seed": 1}"#);
    let o = kinvlap(&["generate", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("mobius") || err.contains("name"), "{err}");
    let o = kinvlap(&["generate", s(&dir.path().join("missing.json")), "--out", "x"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn spectrum_is_deterministic_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let ds = bundle(
        dir.path(),
        "so2",
        r#"{"manifold": {"name": "torus_r4", "radii": [1.0, 2.0]}, "n": 12, "seed": 2, "quadrature_order": 32}"#,
    );
    let (a, b) = (dir.path().join("sa"), dir.path().join("sb"));
    for out in [&a, &b] {
        let o = kinvlap(&["spectrum", s(&ds), "--epsilon", "0.5", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = std::fs::read(a.join("spectrum.csv")).unwrap();
    assert_eq!(csv, std::fs::read(b.join("spectrum.csv")).unwrap());
    let names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".bin"))
        .collect();
    assert!(!names.is_empty());
    for n in &names {
        assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap(), "{n}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["epsilon"], 0.5);
    assert_eq!(manifest["epsilon_source"], "user");
    assert!(manifest["truncation"]["truncation"].is_u64());
    assert!(manifest["tolerances"]["hermitian_hard"].is_f64());

    // median heuristic is reported when ε is omitted
    let c = dir.path().join("sc");
    assert_eq!(code(&kinvlap(&["spectrum", s(&ds), "--lmax", "3", "--out", s(&c)])), 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(c.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["epsilon_source"], "median_heuristic");
    assert_eq!(manifest["truncation"]["truncation"], 3);
}

fn eigenvalues(csv: &Path) -> Vec<f64> {
    std::fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn normalized_flag_changes_spectrum_but_keeps_zero_mode() {
    let dir = tempfile::tempdir().unwrap();
    let ds = bundle(dir.path(), "z8", Z8);
    let (u, n) = (dir.path().join("u"), dir.path().join("n"));
    assert_eq!(code(&kinvlap(&["spectrum", s(&ds), "--out", s(&u)])), 0);
    assert_eq!(code(&kinvlap(&["spectrum", s(&ds), "--normalized", "--out", s(&n)])), 0);
    let (lu, ln) = (eigenvalues(&u.join("spectrum.csv")), eigenvalues(&n.join("spectrum.csv")));
    assert_eq!(lu.len(), ln.len());
    assert!(lu[0].abs() < 1e-10 && ln[0].abs() < 1e-10);
    assert!(lu.iter().zip(&ln).any(|(a, b)| (a - b).abs() > 1e-6));
    assert!(ln.iter().all(|v| *v < 2.0 + 1e-10));
}

#[test]
fn trivial_group_matches_classical_laplacian() {
    let dir = tempfile::tempdir().unwrap();
    let ds = bundle(
        dir.path(),
        "triv",
        r#"{"manifold": {"name": "torus_r4", "radii": [1.0, 2.0]}, "n": 30, "seed": 9, "group": {"kind": "trivial"}}"#,
    );
    let o = kinvlap(&["validate", s(&ds), "--epsilon", "0.7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["max_abs_dev"].as_f64().unwrap() < 1e-8);
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ds = bundle(dir.path(), "z8", Z8);
    let report_path = dir.path().join("report.json");
    let o = kinvlap(&["validate", s(&ds), "--out", s(&report_path)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report["max_abs_dev"].as_f64().unwrap() < 1e-8);
    assert_eq!(report["passed"], true);

    // an impossible tolerance is a mismatch
    let o = kinvlap(&["validate", s(&ds), "--tol", "0"]);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    if report["max_abs_dev"].as_f64().unwrap() > 0.0 {
        assert_eq!(code(&o), 4);
    }

    // truncating irreps leaves dense eigenvalues unmatched but still passes
    let so2 = bundle(
        dir.path(),
        "so2",
        r#"{"manifold": {"name": "torus_r4", "radii": [1.0, 2.0]}, "n": 3, "seed": 4, "quadrature_order": 16}"#,
    );
    let o = kinvlap(&["validate", s(&so2), "--epsilon", "0.8"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    // spectrum directory check, then corruption
    let spec = dir.path().join("spec");
    assert_eq!(code(&kinvlap(&["spectrum", s(&ds), "--out", s(&spec)])), 0);
    assert_eq!(code(&kinvlap(&["validate", s(&ds), "--spectrum", s(&spec)])), 0);
    let bin = spec.join(eigvec_file_name(1));
    let mut bytes = std::fs::read(&bin).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(&bin, bytes).unwrap();
    let o = kinvlap(&["validate", s(&ds), "--spectrum", s(&spec)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn validate_rejects_oversized_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let ds = bundle(
        dir.path(),
        "big",
        r#"{"manifold": {"name": "torus_r4", "radii": [1.0, 2.0]}, "n": 400, "seed": 1, "quadrature_order": 64}"#,
    );
    let o = kinvlap(&["validate", s(&ds)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("limit"));
}

const SMOKE: &str = r#"{"manifold": {"name": "torus_r4", "radii": [1.0, 2.0]}, "test_function": "x3",
    "cells": [{"n": 64, "epsilon": 0.3}], "trials": 4, "seed": 7, "bootstrap": 100}"#;

#[test]
fn converge_smoke_is_fast_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMOKE);
    let t = Instant::now();
    let o = kinvlap(&["converge", s(&cfg), "--out", s(&dir.path().join("a"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(t.elapsed().as_secs_f64() < 10.0);
    assert_eq!(code(&kinvlap(&["converge", s(&cfg), "--out", s(&dir.path().join("b"))])), 0);
    for f in ["report.json", "cells.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn converge_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMOKE);
    // a path below a regular file cannot be created, even by root
    let blocker = write(dir.path(), "file", "");
    let o = kinvlap(&["converge", s(&cfg), "--out", s(&blocker.join("out"))]);
    assert_eq!(code(&o), 2);

    let tiny = write(dir.path(), "tiny.json", &SMOKE.replace("0.3", "1e-6"));
    let o = kinvlap(&["converge", s(&tiny), "--out", s(&dir.path().join("t"))]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));

    let bad = write(dir.path(), "bad.json", &SMOKE.replace("\"seed\"", "\"density\": \"beta\", \"seed\""));
    assert_eq!(code(&kinvlap(&["converge", s(&bad), "--out", s(&dir.path().join("b"))])), 2);
}

#[test]
fn bad_thread_cap_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "z.json", Z8);
    let o = Command::new(env!("CARGO_BIN_EXE_kinvlap"))
        .args(["generate", s(&cfg), "--out", s(&dir.path().join("d"))])
        .env("KINVLAP_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_kinvlap"))
        .args(["generate", s(&cfg), "--out", s(&dir.path().join("d"))])
        .env("KINVLAP_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}
