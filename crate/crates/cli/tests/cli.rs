use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cash(args: &[&str], password: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cash"));
    cmd.args(args).env_remove("CASH_PASSWORD").env("CASH_THREADS", "2");
    if let Some(p) = password {
        cmd.env("CASH_PASSWORD", p);
    }
    cmd.output().expect("spawn cash")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn create(dir: &Path, account: &str, pwd: &str, extra: &[&str]) -> Output {
    let mut args = vec!["create", "alice", account, "--k", "8", "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    cash(&args, Some(pwd))
}

#[test]
fn create_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = create(dir.path(), "mail", "correct horse", &["--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(stdout(&out).contains("k = 8"));
    assert!(stdout(&out).contains("expected rounds"));

    let client = dir.path().join("mail.client.json");
    let server = dir.path().join("mail.server.json");
    let (c, s) = (client.to_str().unwrap(), server.to_str().unwrap());

    let ok = cash(&["verify", c, s], Some("correct horse"));
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(stdout(&ok).trim(), "accept");

    let bad = cash(&["verify", c, s], Some("correct horsf"));
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(stdout(&bad).trim(), "reject");

    let d1 = cash(&["derive", c], Some("correct horse"));
    let d2 = cash(&["derive", c], Some("correct horse"));
    assert_eq!(d1.status.code(), Some(0));
    assert_eq!(stdout(&d1), stdout(&d2));
    assert_eq!(stdout(&d1).trim().len(), 64);
    let record = fs::read_to_string(&server).unwrap();
    assert!(record.contains(stdout(&d1).trim()));
}

#[test]
fn seeded_create_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = create(dir.path(), "x", "pw", &["--seed", "9", "--mech", "opt", "--cost-ratio", "40"]);
        assert_eq!(out.status.code(), Some(0), "{out:?}");
    }
    for name in ["x.client.json", "x.server.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap()
        );
    }
}

#[test]
fn uniform_mechanism_leaks_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = create(dir.path(), "u", "pw", &["--epsilon", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("leak = 0.0000 bits"));
}

#[test]
fn invalid_parameters_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [
        vec!["create", "a", "b", "--cost-ratio", "1", "--n", "3", "--out-dir", d],
        vec!["create", "a", "b", "--epsilon", "-1", "--out-dir", d],
        vec!["create", "a", "b", "--n", "1", "--out-dir", d],
        vec!["create", "a", "b", "--n", "3", "--moduli", "3", "--out-dir", d],
        vec!["curve", "--budget-points", "0", "--out", d],
        vec!["bogus"],
    ] {
        let out = cash(&args, Some("pw"));
        assert_eq!(out.status.code(), Some(2), "{args:?}: {out:?}");
    }
    assert!(!dir.path().join("b.client.json").exists());
}

#[test]
fn io_failures_exit_3() {
    let out = cash(&["derive", "/nonexistent/record.json"], Some("pw"));
    assert_eq!(out.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = create(&blocker.join("sub"), "a", "pw", &[]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn malformed_record_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\"user\": 1}").unwrap();
    let out = cash(&["derive", path.to_str().unwrap()], Some("pw"));
    assert_eq!(out.status.code(), Some(2));
}

fn read_curves(dir: &Path) -> Vec<(String, Vec<Vec<f64>>)> {
    let mut files: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next(), Some("det_ratio,p_det,p_adv,gain"));
            let rows = lines
                .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
                .collect();
            (p.file_name().unwrap().to_string_lossy().into_owned(), rows)
        })
        .collect()
}

fn max_gain(curves: &[(String, Vec<Vec<f64>>)]) -> f64 {
    curves
        .iter()
        .flat_map(|(_, rows)| rows.iter().map(|r| r[3]))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn exponential_curves_two_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = cash(
        &["curve", "--mech", "exp", "--n", "2", "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let curves = read_curves(dir.path());
    assert_eq!(curves.len(), 5);
    assert!(curves.iter().any(|(name, _)| name == "exp_n2_eps1.609.csv"));
    assert_eq!(curves.iter().map(|(_, r)| r.len()).sum::<usize>(), 200 * 5);
    let g = max_gain(&curves);
    assert!((0.10..=0.14).contains(&g), "max gain {g}");
}

#[test]
fn optimal_curves_three_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = cash(&["curve", "--mech", "opt", "--n", "3", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let curves = read_curves(dir.path());
    assert_eq!(curves.iter().map(|(_, r)| r.len()).sum::<usize>(), 200 * 5);
    let g = max_gain(&curves);
    assert!((0.19..=0.23).contains(&g), "max gain {g}");
}

#[test]
fn small_curve_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = cash(
        &[
            "curve", "--mech", "opt", "--epsilon-list", "0.5,1", "--n", "3", "--budget-points", "7",
            "--cost-ratio", "60", "--out", dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let curves = read_curves(dir.path());
    assert_eq!(curves.len(), 2);
    assert!(curves.iter().all(|(_, rows)| rows.len() == 7));
}

const SMALL_MATRIX: &str = r#"{
  "pwd_space": 1000,
  "k": 2,
  "trials": 2000,
  "salt_pool": 8,
  "cells": [
    {"rounds": 2, "epsilon": 0.5, "beta": 1.0},
    {"rounds": 3, "epsilon": 1.609, "beta": 1.4}
  ]
}"#;

#[test]
fn simulate_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("matrix.json");
    fs::write(&cfg, SMALL_MATRIX).unwrap();
    let c = cfg.to_str().unwrap();
    let a = cash(&["simulate", "--config", c, "--seed", "5"], None);
    let b = cash(&["simulate", "--config", c, "--seed", "5"], None);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().filter(|l| l.starts_with("PASS")).count(), 2);
}

#[test]
fn simulate_perturbed_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("matrix.json");
    fs::write(&cfg, SMALL_MATRIX).unwrap();
    let out = cash(&["simulate", "--config", cfg.to_str().unwrap(), "--perturb", "0.1"], None);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn simulate_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("matrix.json");
    fs::write(&cfg, "{\"trails\": 10}").unwrap();
    let out = cash(&["simulate", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
}
