//! End-to-end checks of the binary: simulation, pipeline artifacts,
//! reproducibility and error reporting.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seqtrans"))
}

fn chain_dag_json() -> &'static str {
    r#"{
        "nodes": [
            {"name": "A", "kind": "treatment"},
            {"name": "X1", "kind": "mediator-numeric"},
            {"name": "X2", "kind": "mediator-numeric"},
            {"name": "Y", "kind": "outcome"}
        ],
        "edges": [["A","X1"],["A","X2"],["X1","X2"],["X1","Y"],["X2","Y"],["A","Y"]],
        "treatment": "A",
        "outcome": "Y"
    }"#
}

fn simulate_toy(dir: &Path, n: usize, seed: u64) -> std::path::PathBuf {
    let data = dir.join("toy.csv");
    let out = bin()
        .args([
            "simulate",
            "gaussian-toy",
            "--n",
            &n.to_string(),
            "--seed",
            &seed.to_string(),
            "--out",
        ])
        .arg(&data)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data
}

#[test]
fn simulate_writes_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_toy(dir.path(), 100, 1);
    let text = fs::read_to_string(&data).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 101);
    assert_eq!(lines[0], "A,X1,X2,Y");
}

#[test]
fn decompose_pipeline_artifacts_and_identity() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_toy(dir.path(), 300, 2);
    let dag = dir.path().join("dag.json");
    fs::write(&dag, chain_dag_json()).unwrap();
    let out_dir = dir.path().join("run");
    let out = bin()
        .args(["decompose", "--method", "st", "--seed", "7", "--data"])
        .arg(&data)
        .arg("--dag")
        .arg(&dag)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    for key in ["delta_bar", "zeta_bar", "tau_bar", "eta_hat", "method", "seed", "n0", "n1"] {
        assert!(summary.get(key).is_some(), "summary missing `{key}`");
    }
    let d = summary["delta_bar"].as_f64().unwrap();
    let z = summary["zeta_bar"].as_f64().unwrap();
    let t = summary["tau_bar"].as_f64().unwrap();
    assert_eq!(t, d + z);
    assert_eq!(summary["method"], "st");

    // effects.csv has per-unit rows with attribution increments for st
    let effects = fs::read_to_string(out_dir.join("effects.csv")).unwrap();
    let mut lines = effects.lines();
    assert_eq!(lines.next().unwrap(), "unit,delta,zeta,tau,incr_X1,incr_X2");
    let first = lines.next().unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields.len(), 6);
    let delta: f64 = fields[1].parse().unwrap();
    let zeta: f64 = fields[2].parse().unwrap();
    let tau: f64 = fields[3].parse().unwrap();
    assert_eq!(tau, delta + zeta);

    // counterfactuals.csv: header carries factual and transported mediators
    let cfs = fs::read_to_string(out_dir.join("counterfactuals.csv")).unwrap();
    assert!(cfs.lines().next().unwrap().starts_with("unit,X1,X2,X1_star,X2_star"));
}

#[test]
fn identical_config_gives_byte_identical_summary() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_toy(dir.path(), 200, 5);
    let dag = dir.path().join("dag.json");
    fs::write(&dag, chain_dag_json()).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out_dir = dir.path().join(format!("run{run}"));
        let out = bin()
            .args(["decompose", "--method", "st", "--seed", "3", "--data"])
            .arg(&data)
            .arg("--dag")
            .arg(&dag)
            .arg("--out-dir")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success());
        outputs.push(fs::read(out_dir.join("summary.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn mc_row_count_is_b_times_methods() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("mc.csv");
    let out = bin()
        .args([
            "mc", "--dgp", "gaussian-toy", "--methods", "st1,ot", "--b", "3", "--n", "120",
            "--seed", "9", "--out",
        ])
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,rep,delta_bar,zeta_bar,tau_bar,eta_hat");
    assert_eq!(lines.len(), 1 + 3 * 2);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        let d: f64 = fields[2].parse().unwrap();
        let z: f64 = fields[3].parse().unwrap();
        let t: f64 = fields[4].parse().unwrap();
        assert_eq!(t, d + z);
    }
}

#[test]
fn transport_only_writes_counterfactuals() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_toy(dir.path(), 150, 4);
    let dag = dir.path().join("dag.json");
    fs::write(&dag, chain_dag_json()).unwrap();
    let out_dir = dir.path().join("t");
    let out = bin()
        .args(["transport", "--method", "ot", "--data"])
        .arg(&data)
        .arg("--dag")
        .arg(&dag)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("counterfactuals.csv").exists());
    assert!(!out_dir.join("effects.csv").exists());
}

#[test]
fn non_binary_treatment_fails_with_report_and_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "A,X1,X2,Y\n0,1,2,3\n2,1,2,3\n1,0,1,2\n").unwrap();
    let dag = dir.path().join("dag.json");
    fs::write(&dag, chain_dag_json()).unwrap();
    let out_dir = dir.path().join("bad_run");
    let out = bin()
        .args(["decompose", "--method", "st", "--data"])
        .arg(&data)
        .arg("--dag")
        .arg(&dag)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert!(err["error"].as_str().unwrap().contains("binary"));
    assert!(!out_dir.join("counterfactuals.csv").exists());
    assert!(!out_dir.join("summary.json").exists());
}

#[test]
fn reverse_direction_flips_indirect_effect_sign() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_toy(dir.path(), 400, 11);
    let dag = dir.path().join("dag.json");
    fs::write(&dag, chain_dag_json()).unwrap();
    let mut deltas = Vec::new();
    for (name, flag) in [("fwd", "0to1"), ("rev", "1to0")] {
        let out_dir = dir.path().join(name);
        let out = bin()
            .args(["decompose", "--method", "st", "--direction", flag, "--data"])
            .arg(&data)
            .arg("--dag")
            .arg(&dag)
            .arg("--out-dir")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap())
                .unwrap();
        deltas.push(summary["delta_bar"].as_f64().unwrap());
    }
    assert!(deltas[0] > 0.5, "forward delta_bar = {}", deltas[0]);
    assert!(deltas[1] < -0.5, "reverse delta_bar = {}", deltas[1]);
}

#[test]
fn attribute_requires_sequential_method() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_toy(dir.path(), 120, 6);
    let dag = dir.path().join("dag.json");
    fs::write(&dag, chain_dag_json()).unwrap();
    let out = bin()
        .args(["attribute", "--method", "ot", "--data"])
        .arg(&data)
        .arg("--dag")
        .arg(&dag)
        .arg("--out-dir")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn three_mediator_pipeline_with_categorical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("three.csv");
    let out = bin()
        .args([
            "simulate", "three-mediator", "--n0", "150", "--n1", "100", "--seed", "8", "--out",
        ])
        .arg(&data)
        .output()
        .unwrap();
    assert!(out.status.success());
    let dag = dir.path().join("dag.json");
    fs::write(
        &dag,
        r#"{
            "nodes": [
                {"name": "A", "kind": "treatment"},
                {"name": "X1", "kind": "mediator-numeric"},
                {"name": "X2", "kind": "mediator-numeric"},
                {"name": "X3", "kind": "mediator-categorical"},
                {"name": "Y", "kind": "outcome"}
            ],
            "edges": [["A","X1"],["A","X2"],["A","X3"],["X1","X2"],["X1","X3"],["X2","X3"],
                      ["X1","Y"],["X2","Y"],["X3","Y"],["A","Y"]]
        }"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run3");
    let out = bin()
        .args(["decompose", "--method", "st", "--data"])
        .arg(&data)
        .arg("--dag")
        .arg(&dag)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // transported categorical values are level strings
    let cfs = fs::read_to_string(out_dir.join("counterfactuals.csv")).unwrap();
    let header = cfs.lines().next().unwrap();
    assert!(header.contains("X3_star"));
    let row = cfs.lines().nth(1).unwrap();
    let idx = header.split(',').position(|h| h == "X3_star").unwrap();
    let val = row.split(',').nth(idx).unwrap();
    assert!(["A", "B", "C"].contains(&val), "unexpected level `{val}`");
}
