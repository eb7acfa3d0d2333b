use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noisy-consensus"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_methods_agree_on_ring() {
    let v = json(&run(&["analyze", "--family", "ring", "--n", "8", "--sigma2", "2"]));
    let methods: Vec<&str> = v["methods"].as_array().unwrap().iter().map(|m| m.as_str().unwrap()).collect();
    for m in ["theorem1", "kemeny", "spectral", "resistance", "oracle"] {
        assert!(methods.contains(&m), "{m} missing from {methods:?}");
    }
    let reference = v["delta_ss"]["theorem1"].as_f64().unwrap();
    for m in methods {
        let x = v["delta_ss"][m].as_f64().unwrap();
        assert!((x - reference).abs() <= 1e-8 * reference, "{m}: {x} vs {reference}");
    }
    assert!(v["max_relative_spread"].as_f64().unwrap() <= 1e-8);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["resolved"]["n"], 8);
}

#[test]
fn analyze_nonreversible_matrix_uses_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("p.csv");
    fs::write(&m, "0.5,0.5,0\n0,0.5,0.5\n0.5,0,0.5\n0.25,0.25,0.5\n").unwrap();
    assert_eq!(run(&["analyze", "--matrix", path(&m)]).status.code(), Some(2));
    fs::write(&m, "0.5,0.5,0\n0,0.5,0.5\n0.5,0,0.5\n").unwrap();
    // doubly stochastic with a cyclic drift
    let v = json(&run(&["analyze", "--matrix", path(&m)]));
    assert_eq!(v["chain"]["reversible"], false);
    assert_eq!(v["primary_method"], "oracle");
    assert!(v["delta_ss"]["theorem1"].is_null());
    assert!(v["delta_ss"]["oracle"].as_f64().unwrap() > 0.0);
}

#[test]
fn single_node_is_zero() {
    let v = json(&run(&["analyze", "--family", "complete", "--n", "1"]));
    assert_eq!(v["delta_ss"]["value"], 0.0);
    assert_eq!(v["delta_uni_upper"], 0.0);
}

#[test]
fn disconnected_custom_graph_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("edges.txt");
    fs::write(&edges, "4\n0 1\n2 3\n").unwrap();
    let out = run(&["analyze", "--family", "custom", "--edges", path(&edges)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not connected"));
}

#[test]
fn periodic_chain_is_numerical_error() {
    let out = run(&["analyze", "--family", "ring", "--n", "6", "--walk", "simple"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("period 2"));
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(run(&["analyze", "--family", "hypercube", "--n", "4"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "--family", "tree", "--n", "10"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "--family", "ring"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "--family", "ring", "--n", "5", "--sigma2-node", "9=1"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn sweep_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let status = run(&["sweep", "--family", "ring", "--sizes", "3,5,8", "--out", path(&out)]);
    assert!(status.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines[0], "family,n,delta_ss,delta_uni_lower,delta_uni_upper,kemeny_p2,max_resistance");
    assert_eq!(lines.len(), 4);
    assert!(text.starts_with("# noisy-consensus "));
    assert!(text.contains("# config: "));
    let row: Vec<&str> = lines[3].split(',').collect();
    assert_eq!(row[0], "ring");
    assert_eq!(row[1], "8");
    let delta: f64 = row[2].parse().unwrap();
    let v = json(&run(&["analyze", "--family", "ring", "--n", "8"]));
    assert_eq!(delta, v["delta_ss"]["theorem1"].as_f64().unwrap());
}

#[test]
fn sweep_records_failed_rows() {
    let out = run(&["sweep", "--family", "tree", "--sizes", "7,8"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# error tree n=8"));
    assert_eq!(run(&["sweep", "--family", "tree", "--sizes", "8"]).status.code(), Some(2));
}

#[test]
fn simulation_is_seed_reproducible() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, seed) in dirs.iter().zip(["11", "11", "12"]) {
        let out = bin()
            .current_dir(dir.path())
            .args([
                "simulate", "--family", "line", "--n", "6", "--horizon", "400", "--trials", "8", "--seed", seed,
                "--record-every", "20", "--out", "trace.csv", "--summary", "summary.json",
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |k: usize, f: &str| fs::read(dirs[k].path().join(f)).unwrap();
    assert_eq!(read(0, "trace.csv"), read(1, "trace.csv"));
    assert_eq!(read(0, "summary.json"), read(1, "summary.json"));
    assert_ne!(read(0, "trace.csv"), read(2, "trace.csv"));
    let summary: Value = serde_json::from_slice(&read(0, "summary.json")).unwrap();
    assert_eq!(summary["seed"], 11);
    assert!(summary["estimate"]["delta_ss"].as_f64().unwrap() > 0.0);
    assert!(summary["config"]["resolved"]["burn_in"].as_u64().is_some());
    let trace = String::from_utf8(read(0, "trace.csv")).unwrap();
    assert!(trace.lines().any(|l| l == "t,delta_hat,delta_uni_hat,stderr"));
}

#[test]
fn formation_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.csv");
    let v = json(&run(&[
        "formation", "--family", "star", "--n", "7", "--lambda", "0.02", "--horizon", "600", "--trials", "4",
        "--record-every", "100", "--out", path(&traj),
    ]));
    let exact = v["form_exact"].as_f64().unwrap();
    assert!((exact - v["form_via_delta"].as_f64().unwrap()).abs() <= 1e-12);
    assert!((exact - 0.003716).abs() < 5e-7);
    assert!(v["form_simulated"].as_f64().unwrap() > 0.0);
    let text = fs::read_to_string(&traj).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "t,node,x1,x2");
    // 7 recorded steps (0, 100, .., 600) of 7 nodes
    assert_eq!(rows.len(), 1 + 7 * 7);
}

#[test]
fn formation_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"n": 3, "dim": 1, "edges": [[0, 1, [1.0]], [1, 2, [1.0]]], "weights": "default", "lambda2": 0.5}"#,
    )
    .unwrap();
    let v = json(&run(&["formation", "--spec", path(&spec), "--exact-only"]));
    assert_eq!(v["n"], 3);
    assert!(v["form_exact"].as_f64().unwrap() > 0.0);
    fs::write(
        &spec,
        r#"{"n": 3, "dim": 1, "edges": [[0, 1, [1.0]], [1, 2, [1.0]], [0, 2, [5.0]]], "weights": "default", "lambda2": 0.5}"#,
    )
    .unwrap();
    assert_eq!(run(&["formation", "--spec", path(&spec), "--exact-only"]).status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let out = run(&["selftest"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}
