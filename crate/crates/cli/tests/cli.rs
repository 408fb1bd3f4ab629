use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CASH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../models/cash.json");

fn lqmfg(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lqmfg"));
    cmd.args(args).env_remove("MFG_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    lqmfg(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn validate_prints_dimensions() {
    let out = run(&["validate", "--model", CASH]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n"], 1);
    assert_eq!(v["k"], 1);
    assert_eq!(v["n_steps"], 1000);
    assert_eq!(v["monotonicity"]["satisfied"], false);
}

#[test]
fn riccati_writes_one_row_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["riccati", "--model", CASH, "--steps", "200", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for (file, header) in [("P.csv", "t,P_11"), ("Pi.csv", "t,Pi_11")] {
        let text = fs::read_to_string(dir.path().join(file)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], header);
        assert_eq!(lines.len(), 202);
        // 17 significant digits: one leading digit and 16 after the point.
        let value = lines[1].split(',').nth(1).unwrap();
        let mantissa = value.split('e').next().unwrap();
        assert_eq!(mantissa.trim_start_matches('-').len(), 18, "{value}");
    }
    let last = fs::read_to_string(dir.path().join("P.csv")).unwrap();
    assert!(last.lines().last().unwrap().ends_with(",1.0000000000000000e0"));
    let manifest = read_json(dir.path().join("run_manifest.json"));
    assert_eq!(manifest["subcommand"], "riccati");
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    for o in manifest["outputs"].as_array().unwrap() {
        assert_eq!(o["rows"], 201);
    }
    assert!(manifest["wall_time"].as_f64().unwrap() >= 0.0);
}

#[test]
fn cc_writes_paths_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["cc", "--model", CASH, "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    for file in ["m.csv", "X.csv", "psi.csv"] {
        assert_eq!(fs::read_to_string(dir.path().join(file)).unwrap().lines().count(), 1002);
    }
    let r = read_json(dir.path().join("residuals.json"));
    assert_eq!(r["method"], "decoupled");
    assert!(r["residual"]["m_res"].as_f64().unwrap() < 1e-9);
    assert!(r["residual"]["forward_res"].as_f64().unwrap() < 1e-3);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["riccati", "--model", CASH]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--model", CASH, "--N", "x", "--out-dir", "o"]).status.code(), Some(2));
    assert_eq!(run(&["--threads", "0", "validate", "--model", CASH]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let mut model: serde_json::Value = serde_json::from_str(&fs::read_to_string(CASH).unwrap()).unwrap();
    model["cost"]["R"] = serde_json::json!(-1.0);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, model.to_string()).unwrap();

    let out = run(&["validate", "--model", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.trim_end().lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(stderr.trim_end()).unwrap();
    assert_eq!(v["error"], "NotPositiveDefinite");
    assert_eq!(v["module"], "model");
    assert!(v["detail"].as_str().unwrap().contains('R'));

    let out = run(&["riccati", "--model", "/nonexistent/model.json", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "Io");

    let out = run(&["simulate", "--model", CASH, "--N", "1", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

fn simulate_csv(seed_flag: Option<&str>, env: Option<&str>) -> (Vec<u8>, String) {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--model", CASH, "--steps", "100", "--N", "4", "--out-dir", s(dir.path())];
    if let Some(seed) = seed_flag {
        args.extend(["--seed", seed]);
    }
    let mut cmd = lqmfg(&args);
    if let Some(v) = env {
        cmd.env("MFG_SEED", v);
    }
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let digest = read_json(dir.path().join("run_manifest.json"))["config_digest"]
        .as_str()
        .unwrap()
        .to_string();
    (fs::read(dir.path().join("agents.csv")).unwrap(), digest)
}

#[test]
fn seed_precedence_is_flag_then_env_then_zero() {
    let default = simulate_csv(None, None);
    let zero = simulate_csv(Some("0"), None);
    let env7 = simulate_csv(None, Some("7"));
    let flag7 = simulate_csv(Some("7"), None);
    let both = simulate_csv(Some("7"), Some("9"));
    let env9 = simulate_csv(None, Some("9"));
    assert_eq!(default, zero);
    assert_eq!(env7, flag7);
    assert_eq!(both, flag7);
    assert_ne!(env9.0, flag7.0);
    assert_ne!(env9.1, flag7.1);
}

#[test]
fn simulate_output_is_long_format() {
    let (bytes, _) = simulate_csv(Some("3"), None);
    let text = String::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("agent,t,X_1,Xhat_1,u_1"));
    assert_eq!(lines.count(), 4 * 101);
}

#[test]
fn nash_sweep_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("sweep/scaling.csv");
    let out = run(&[
        "nash-sweep", "--model", CASH, "--steps", "100", "--Ns", "4,8,16", "--replicates", "3", "--seed", "2",
        "--threads", "1", "--out", s(&out_csv),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&out_csv).unwrap();
    assert_eq!(text.lines().next(), Some("N,replicate,state_gap,cost_gap,avg_gap"));
    assert_eq!(text.lines().count(), 1 + 9);
    let report = read_json(dir.path().join("sweep/scaling.json"));
    assert_eq!(report["ns"], serde_json::json!([4, 8, 16]));
    assert!(report["slopes"]["state_gap"]["slope"].is_number());
    assert!(dir.path().join("sweep/scaling_manifest.json").exists());
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn cash_example_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&["cash-example", "--steps", "50", "--N", "20", "--seed", "4", "--out-dir", s(dir.path())]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    assert_eq!(fa.len(), 7);
    assert!(fa == fb, "CSV outputs differ between identical runs");

    let cash = read_json(a.path().join("manifest.json"));
    let artifacts = cash["artifacts"].as_array().unwrap();
    assert!(artifacts.iter().all(|x| x["figure"].is_string()));
    let ra = read_json(a.path().join("run_manifest.json"));
    let rb = read_json(b.path().join("run_manifest.json"));
    assert_eq!(ra["config_digest"], rb["config_digest"]);
}
