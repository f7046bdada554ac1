use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lab(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_parisi-lab"))
        .arg("--config")
        .arg(&cfg)
        .args(extra)
        .env_remove("PARISI_LAB_OUT")
        .output()
        .unwrap()
}

fn out_arg(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn malformed_config_exits_two_with_key() {
    let t = TempDir::new().unwrap();
    let o = lab(
        t.path(),
        r#"{"command": "gaussian", "params": {"c": [3.0], "u": [0.5], "beta": 1.0, "colour": 1}}"#,
        &["--out", &out_arg(t.path(), "o")],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("colour"), "{err}");

    let o = lab(t.path(), "{not json", &[]);
    assert_eq!(o.status.code(), Some(2));

    let o = lab(
        t.path(),
        r#"{"command": "sk", "params": {"ns": [4], "betas": [1.0], "replicas": 2}}"#,
        &["--out", &out_arg(t.path(), "o")],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn gaussian_table_and_equivalence() {
    let t = TempDir::new().unwrap();
    let cfg = r#"{"command": "gaussian", "params": {"c": [3.0, 4.0], "u": [0.5], "beta": 1.0,
        "equivalence": {"c": 3.0, "u": 0.5, "levels": [1, 2]}}}"#;
    let o = lab(t.path(), cfg, &["--out", &out_arg(t.path(), "g")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(t.path().join("g/rs_table.csv")).unwrap();
    assert!(table.starts_with("c,u,beta,q_star,value,regime"));
    assert!(table.contains("0.15546510810"), "{table}");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("g/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "gaussian");
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 3);
}

#[test]
fn manifests_are_byte_identical() {
    let t = TempDir::new().unwrap();
    let cfg = r#"{"command": "sk", "seed": 11, "params": {"ns": [4, 6], "betas": [0.5, 1.0], "replicas": 5}}"#;
    let a = lab(t.path(), cfg, &["--out", &out_arg(t.path(), "a"), "--workers", "1"]);
    let b = lab(t.path(), cfg, &["--out", &out_arg(t.path(), "b"), "--workers", "1"]);
    assert!(a.status.success() && b.status.success());
    let ma = fs::read(t.path().join("a/manifest.json")).unwrap();
    let mb = fs::read(t.path().join("b/manifest.json")).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(
        fs::read(t.path().join("a/sk.csv")).unwrap(),
        fs::read(t.path().join("b/sk.csv")).unwrap()
    );
    let c = lab(t.path(), cfg, &["--out", &out_arg(t.path(), "c"), "--seed", "12"]);
    assert!(c.status.success());
    assert_ne!(ma, fs::read(t.path().join("c/manifest.json")).unwrap());
}

#[test]
fn output_directory_falls_back_to_env() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("config.json");
    fs::write(&cfg, r#"{"command": "gaussian", "params": {"c": [3.0], "u": [0.5], "beta": 1.0}}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_parisi-lab"))
        .arg("--config")
        .arg(&cfg)
        .env("PARISI_LAB_OUT", t.path().join("env-out"))
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(t.path().join("env-out/manifest.json").exists());
}

#[test]
fn eval_pde_rpc_and_saddle_commands() {
    let t = TempDir::new().unwrap();
    let eval = r#"{"command": "eval", "seed": 1, "params": {"measure": {"kind": "rademacher"}, "beta": 0.0,
        "paths": [{"d": 1, "x": [0.5], "Q": [[[0.3]]], "U": [[1.0]]}]}}"#;
    let o = lab(t.path(), eval, &["--out", &out_arg(t.path(), "e")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = fs::read_to_string(t.path().join("e/eval.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert!((first["value"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-12);
    assert!(first["inputs_sha256"].as_str().unwrap().len() == 64);

    let pde = r#"{"command": "pde", "params": {"beta": 0.5, "x": [0.3, 0.7], "q": [0.25, 0.6], "h": [0.02]}}"#;
    let o = lab(t.path(), pde, &["--out", &out_arg(t.path(), "p")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(t.path().join("p/pde.csv")).unwrap();
    assert!(csv.starts_with("h,pde,recursion,error"));
    assert!(t.path().join("p/pde_grid_0.csv").exists());

    let rpc = r#"{"command": "rpc", "seed": 3, "params": {"x": [0.25, 0.6], "m": 32, "replicas": 64}}"#;
    let o = lab(t.path(), rpc, &["--out", &out_arg(t.path(), "r")]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(1));
    assert!(fs::read_to_string(t.path().join("r/rpc_overlap.csv")).unwrap().starts_with("k,estimate,se,target"));

    let saddle = r#"{"command": "saddle", "seed": 4, "params": {"beta": 1.0, "levels": 1,
        "measure": {"kind": "gaussian", "C": [[3.0]]}, "domain": {"kind": "fixed", "u": [[0.5]]}, "residual": true}}"#;
    let o = lab(t.path(), saddle, &["--out", &out_arg(t.path(), "s")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("s/saddle.json")).unwrap()).unwrap();
    assert!((2.0 * r["value"].as_f64().unwrap() - 0.1554651081).abs() < 1e-3);
}

#[test]
fn verify_all_with_default_seed_passes() {
    let t = TempDir::new().unwrap();
    let o = lab(t.path(), r#"{"command": "verify-all"}"#, &["--out", &out_arg(t.path(), "v")]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS criterion")).count(), 11, "{stdout}");
    let table = fs::read_to_string(t.path().join("v/verify.csv")).unwrap();
    assert_eq!(table.lines().count(), 12);
}
