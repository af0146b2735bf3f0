use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn qrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrec"))
        .args(args)
        .env_remove("QREC_SEED")
        .output()
        .expect("spawn qrec")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ingest(dir: &TempDir, name: &str, triplets: &str) -> std::path::PathBuf {
    let input = dir.path().join(format!("{name}.csv"));
    let store = dir.path().join(format!("{name}.qrs"));
    fs::write(&input, triplets).unwrap();
    let out = qrec(&["ingest", path_str(&input), "-o", path_str(&store)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    store
}

#[test]
fn help_lists_every_subcommand() {
    let out = qrec(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["ingest", "sve", "project", "recommend", "experiment"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
}

#[test]
fn ingest_is_insertion_order_independent() {
    let dir = TempDir::new().unwrap();
    let a = ingest(&dir, "a", "0,0,0.4\n0,1,0.4\n0,2,0.8\n0,3,0.2\n");
    let b = ingest(&dir, "b", "0,3,0.2\n0,1,0.4\n0,0,0.4\n0,2,0.8\n");
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn ingest_reports_shape_and_norm() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("fig.csv");
    fs::write(&input, "0,0,0.4\n0,1,0.4\n0,2,0.8\n0,3,0.2\n").unwrap();
    let out = qrec(&["ingest", path_str(&input), "-o", path_str(&dir.path().join("s"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("rows=1 cols=4 entries=4"), "{text}");
}

#[test]
fn ingest_rejects_bad_input() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "0,0,1\n1,zz,2\n").unwrap();
    let out = qrec(&["ingest", path_str(&input), "-o", path_str(&dir.path().join("s"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn sve_on_the_identity_recovers_equal_singular_values() {
    let dir = TempDir::new().unwrap();
    let store = ingest(&dir, "id", "0,0,1\n1,1,1\n2,2,1\n");
    let out = qrec(&["sve", "--store", path_str(&store), "--vector", "1,2,-2", "--epsilon", "0.05"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,alpha_sq,sigma,estimate,bin"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    let fro = 3f64.sqrt();
    let total: f64 = rows.iter().map(|r| r[1]).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for r in rows {
        assert!((r[2] - 1.0).abs() < 1e-12);
        assert!((r[3] - 1.0).abs() <= 0.05 * fro);
    }
}

#[test]
fn project_emits_json() {
    let dir = TempDir::new().unwrap();
    let store = ingest(&dir, "d", "0,0,3\n1,1,1\n");
    let out = qrec(&["project", "--store", path_str(&store), "--vector", "1,1", "--sigma", "2", "--samples", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["outcome"]["kept"], serde_json::json!([0]));
    assert_eq!(doc["samples"], serde_json::json!([0, 0, 0, 0, 0]));
}

#[test]
fn recommend_cold_start_and_determinism() {
    let dir = TempDir::new().unwrap();
    let store = ingest(&dir, "r", "0,0,1\n0,1,1\n0,3,1\n2,1,1\n2,2,1\n3,0,1\n3,3,1\n");
    let s = path_str(&store);
    let cold = qrec(&["recommend", "--store", s, "--user", "1", "--sigma", "0.5"]);
    assert_eq!(cold.status.code(), Some(3));
    let run = |seed: &str| {
        let out = qrec(&["--seed", seed, "recommend", "--store", s, "--user", "0", "--sigma", "0.5", "--count", "10"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    assert_eq!(run("7"), run("7"));
    let env_run = Command::new(env!("CARGO_BIN_EXE_qrec"))
        .args(["recommend", "--store", s, "--user", "0", "--sigma", "0.5", "--count", "10"])
        .env("QREC_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(env_run.stdout, run("7"));
}

#[test]
fn experiment_smoke_run_writes_report_and_csvs() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"users": 32, "products": 32, "rank": 2, "recommendations_per_user": 5, "p_sweep": [0.5, 1.0], "sweep_trials": 2}"#).unwrap();
    let report = dir.path().join("report.json");
    let users = dir.path().join("users.csv");
    let sweep = dir.path().join("sweep.csv");
    let out = qrec(&[
        "--seed", "3", "experiment", path_str(&config), "-o", path_str(&report),
        "--users-csv", path_str(&users), "--sweep-csv", path_str(&sweep),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["schema"], "qrec.experiment.report/v1");
    assert_eq!(doc["config"]["seed"], 3);
    assert_eq!(fs::read_to_string(&users).unwrap().lines().count(), 33);
    assert_eq!(fs::read_to_string(&sweep).unwrap().lines().count(), 3);
}

#[test]
fn experiment_rejects_unknown_config_keys() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"userz": 32}"#).unwrap();
    let out = qrec(&["experiment", path_str(&config)]);
    assert_eq!(out.status.code(), Some(1));
}
