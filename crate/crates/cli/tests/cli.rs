use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn cnoidal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnoidal")).args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = cnoidal(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cnoidal-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn csv_rows(path: &PathBuf) -> (String, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn critical_reports_both_moduli() {
    let v = json(&["critical", "--L", "6.283185307"]);
    let kstar = v["kstar"].as_f64().unwrap();
    let k1 = v["k1"].as_f64().unwrap();
    assert!((kstar - 0.9089).abs() < 1e-4, "{kstar}");
    assert!((k1 - 0.8024).abs() < 1e-4, "{k1}");
    for key in ["cstar", "omegastar"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn d3_sweep_is_negative_with_fixed_header() {
    let path = scratch("d3.csv");
    let out = cnoidal(&[
        "sweep", "--quantity", "d3", "--L", "6.283185307", "--kmin", "0.72", "--kmax", "0.99",
        "--steps", "20", "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let (header, rows) = csv_rows(&path);
    assert_eq!(header, "k,D3");
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r[1] < 0.0));
    assert!(rows.windows(2).all(|w| w[0][0] < w[1][0]));
}

#[test]
fn failed_sweep_points_go_to_the_log() {
    // Below k_min at L = 2 pi the KG speed is not real.
    let path = scratch("dpp.csv");
    let out = cnoidal(&[
        "sweep", "--quantity", "dpp", "--kmin", "0.80", "--kmax", "0.95", "--steps", "4", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let (header, rows) = csv_rows(&path);
    assert_eq!(header, "k,dpp");
    assert!(rows.iter().all(|r| r[1].is_finite() && r[1] < 0.0));
    let log = std::fs::read_to_string(path.with_extension("csv.log")).unwrap();
    assert_eq!(rows.len() + log.lines().count(), 4);
    assert!(log.contains("k=8.0000000000000004e-1"));
}

#[test]
fn exit_codes() {
    assert_eq!(cnoidal(&["elliptic", "--k", "0"]).status.code(), Some(1));
    assert_eq!(cnoidal(&["elliptic", "--k", "0.5", "--bogus"]).status.code(), Some(64));
    assert_eq!(cnoidal(&["nonsense"]).status.code(), Some(64));
    assert_eq!(cnoidal(&["--help"]).status.code(), Some(0));
    // Mutually exclusive parameters.
    let both = cnoidal(&["verdict", "--model", "nls", "--k", "0.8", "--omega", "1.0"]);
    assert_eq!(both.status.code(), Some(64));
    assert!(!both.stderr.is_empty());
    // Operator from the other model.
    assert_eq!(cnoidal(&["spectrum", "--model", "kg", "--op", "L3", "--k", "0.9"]).status.code(), Some(64));
}

#[test]
fn output_is_deterministic() {
    let a = scratch("run-a.csv");
    let b = scratch("run-b.csv");
    for path in [&a, &b] {
        let out = cnoidal(&[
            "evolve", "--model", "nls", "--k", "0.85", "--T", "0.5", "--N", "64", "--seed", "7",
            "--out", path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (header, rows) = csv_rows(&a);
    assert_eq!(header, "t,distance,energy_drift,second_invariant_drift");
    assert_eq!(rows.len(), 6);

    let args = ["index", "--model", "kg", "--k", "0.93", "--N", "128"];
    assert_eq!(cnoidal(&args).stdout, cnoidal(&args).stdout);
}

#[test]
fn json_round_trips_exactly() {
    let out = cnoidal(&["elliptic", "--k", "0.5"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let k = v["K"].as_f64().unwrap();
    assert!((k - 1.685_750_354_812_596).abs() < 1e-15);
    // 17 significant digits survive a parse/format cycle unchanged.
    assert!(text.contains(&format!("{k:.16e}")));
}

#[test]
fn wave_profile_csv() {
    let path = scratch("wave.csv");
    let out = cnoidal(&["wave", "--model", "nls", "--k", "0.9", "--samples", "64", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let (header, rows) = csv_rows(&path);
    assert_eq!(header, "x,phi");
    assert_eq!(rows.len(), 64);
    let mean: f64 = rows.iter().map(|r| r[1]).sum::<f64>() / 64.0;
    assert!(mean.abs() < 1e-10);
}

/// Every modelled quantity must be reachable from some subcommand.
#[test]
fn coverage_audit() {
    let e = json(&["elliptic", "--k", "0.7"]);
    assert!(e["K"].is_number() && e["E"].is_number());

    let c = json(&["critical"]);
    for key in ["kstar", "k1", "cstar", "c_k1", "omegastar", "kg_k_min"] {
        assert!(c.get(key).is_some(), "critical lacks {key}");
    }

    for (model, op) in [("kg", "L1"), ("kg", "block"), ("nls", "L2"), ("nls", "L3")] {
        for constrained in [false, true] {
            let mut args = vec!["spectrum", "--model", model, "--op", op, "--k", "0.93", "--N", "64"];
            if constrained {
                args.push("--constrained");
            }
            let s = json(&args);
            assert!(s["eigenvalues"].as_array().unwrap().len() == 10);
            assert!(s["n"].is_u64() && s["z"].is_u64());
        }
    }

    let kg = json(&["index", "--model", "kg", "--k", "0.93", "--N", "64"]);
    assert_eq!(kg["reports"].as_array().unwrap().len(), 2);
    assert!(kg["d_matrix"].is_array());
    let nls = json(&["index", "--model", "nls", "--k", "0.93", "--N", "64"]);
    assert_eq!(nls["reports"].as_array().unwrap().len(), 2);
    assert!(nls["block"]["constrained_n"].is_u64());
    for field in ["unconstrained_n", "unconstrained_z", "d_value", "n0", "z0", "constrained_n", "constrained_z"] {
        assert!(nls["reports"][0].get(field).is_some(), "index lacks {field}");
    }

    let vk = json(&["verdict", "--model", "kg", "--L", "4", "--c", "0.1", "--N", "64"]);
    assert_eq!(vk["verdict"], "OrbitallyUnstable");
    let vn = json(&["verdict", "--model", "nls", "--k", "0.85", "--N", "64"]);
    assert_eq!(vn["verdict"], "OrbitallyStable");

    for (q, header) in [("d1", "k,D1"), ("d2", "k,D2"), ("d3", "k,D3"), ("dpp", "k,dpp"), ("dpp-omega", "k,dpp_omega"), ("well", "k,P")] {
        let path = scratch(&format!("cov-{q}.csv"));
        let out = cnoidal(&[
            "sweep", "--quantity", q, "--kmin", "0.9", "--kmax", "0.95", "--steps", "2", "--N", "64",
            "--out", path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "sweep {q}");
        let (h, rows) = csv_rows(&path);
        assert_eq!(h, header);
        assert_eq!(rows.len(), 2, "sweep {q}");
    }

    let path = scratch("cov-evolve.csv");
    let out = cnoidal(&[
        "evolve", "--model", "kg", "--L", "4", "--c", "0.1", "--T", "0.2", "--N", "64", "--dt", "1e-3",
        "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv_rows(&path).1.len(), 3);
}
