use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn lqg() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lqg"));
    c.env_remove("LQG_SEED");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("not JSON ({e}): {}", String::from_utf8_lossy(bytes)))
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    lqg()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

const SMALL_BULK: &str = r#"{"n_replicas": 128, "grid": {"core_rings": 3, "bands": 4}}"#;

#[test]
fn successful_run_reports_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bulk.json", SMALL_BULK);
    let out = tmp.path().join("bulk");
    let o = run("gmc-bulk", &cfg, &out, &["--seed", "3", "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&o.stdout);
    assert_eq!(report["status"], "ok");
    let summary = &report["summary"];
    assert_eq!(summary["n_replicas"], 128);
    assert!(summary["estimate"].as_f64().unwrap() > 0.0);

    let manifest = json(&std::fs::read(out.join("manifest.json")).unwrap());
    assert_eq!(manifest["command"], "gmc-bulk");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["workers"], 2);
    let files = manifest["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        let bytes = std::fs::read(out.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"], bytes.len());
        assert_eq!(
            f["sha256"].as_str().unwrap(),
            Sha256::digest(&bytes)
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect::<String>()
        );
    }
    assert!(out.join("summary.json").exists());
}

#[test]
fn config_hash_depends_on_seed_and_config_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bulk.json", SMALL_BULK);
    let hash = |tag: &str, seed: &str, workers: &str| {
        let out = tmp.path().join(tag);
        let o = run("gmc-bulk", &cfg, &out, &["--seed", seed, "--workers", workers]);
        assert!(o.status.success());
        json(&std::fs::read(out.join("manifest.json")).unwrap())["config_hash"].clone()
    };
    let a = hash("a", "1", "1");
    assert_eq!(a, hash("b", "1", "3"));
    assert_ne!(a, hash("c", "2", "1"));
}

#[test]
fn seed_precedence_is_flag_then_config_then_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let plain = write_config(tmp.path(), "plain.json", SMALL_BULK);
    let seeded = write_config(
        tmp.path(),
        "seeded.json",
        r#"{"seed": 11, "n_replicas": 128, "grid": {"core_rings": 3, "bands": 4}}"#,
    );
    let seed_of = |cfg: &Path, tag: &str, flag: Option<&str>, env: Option<&str>| {
        let out = tmp.path().join(tag);
        let mut c = lqg();
        c.arg("gmc-bulk").arg("--config").arg(cfg).arg("--out").arg(&out);
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        if let Some(s) = env {
            c.env("LQG_SEED", s);
        }
        assert!(c.output().unwrap().status.success());
        json(&std::fs::read(out.join("manifest.json")).unwrap())["seed"]
            .as_u64()
            .unwrap()
    };
    assert_eq!(seed_of(&plain, "none", None, None), 0);
    assert_eq!(seed_of(&plain, "env", None, Some("5")), 5);
    assert_eq!(seed_of(&seeded, "config", None, Some("5")), 11);
    assert_eq!(seed_of(&seeded, "flag", Some("9"), Some("5")), 9);
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "ladder.json",
        r#"{"k_min": 6, "k_max": 9, "n_replicas": 100}"#,
    );
    let read = |workers: &str| {
        let out = tmp.path().join(format!("w{workers}"));
        assert!(
            run("critical-ladder", &cfg, &out, &["--seed", "4", "--workers", workers])
                .status
                .success()
        );
        (
            std::fs::read(out.join("ladder.csv")).unwrap(),
            std::fs::read(out.join("summary.json")).unwrap(),
        )
    };
    assert_eq!(read("1"), read("4"));
}

#[test]
fn unknown_fields_and_bad_flags_are_configuration_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.json", r#"{"n_replicas": 10, "nope": 1}"#);
    let o = run("gmc-bulk", &bad, &tmp.path().join("x"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = json(&o.stderr);
    assert_eq!(err["kind"], "configuration");
    assert!(err["message"].as_str().unwrap().contains("nope"));

    let ok = write_config(tmp.path(), "ok.json", SMALL_BULK);
    assert_eq!(
        run("gmc-bulk", &ok, &tmp.path().join("y"), &["--workers", "0"])
            .status
            .code(),
        Some(2)
    );
    let missing = tmp.path().join("missing.json");
    assert_eq!(
        run("gmc-bulk", &missing, &tmp.path().join("z"), &[]).status.code(),
        Some(2)
    );
}

const ALPHA_AT_Q: &str = r#"{"gamma": 1.0, "insertions": [{"kind": "bulk", "position": [0.1, 0.0], "weight": 2.5}]}"#;

#[test]
fn inadmissible_insertions_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "q.json", ALPHA_AT_Q);
    let o = run("partition", &cfg, &tmp.path().join("p"), &[]);
    assert_eq!(o.status.code(), Some(3));
    let err = json(&o.stderr);
    assert_eq!(err["kind"], "inadmissible");
    assert_eq!(err["verdict"]["verdict"]["bound2_ok"], false);

    let out = tmp.path().join("sv");
    let o = run("seiberg-validate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json(&o.stdout)["status"], "rejected");
    let verdict = json(&std::fs::read(out.join("verdict.json")).unwrap());
    assert_eq!(verdict["verdict"]["admissible"], false);
}

#[test]
fn repeated_marked_points_are_numerical_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "dup.json",
        r#"{"gamma": 1.0, "n_replicas": 128, "insertions": [
            {"kind": "bulk", "position": [0.2, 0.0], "weight": 0.5},
            {"kind": "bulk", "position": [0.2, 0.0], "weight": 0.5}]}"#,
    );
    let o = run("partition", &cfg, &tmp.path().join("p"), &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

fn validate(experiment: &str, config: &Path) -> Value {
    let o = lqg()
        .args(["validate", experiment, "--config"])
        .arg(config)
        .output()
        .unwrap();
    assert!(o.status.success());
    json(&o.stdout)
}

#[test]
fn validate_reports_findings_without_running() {
    let tmp = tempfile::tempdir().unwrap();
    let q = write_config(tmp.path(), "q.json", ALPHA_AT_Q);
    let v = validate("volume-law", &q);
    assert_eq!(v["ok"], false);
    let findings = v["findings"].as_array().unwrap();
    assert!(
        findings
            .iter()
            .any(|f| f.as_str().unwrap().starts_with("bound2 violated")),
        "{findings:?}"
    );

    let close = write_config(
        tmp.path(),
        "close.json",
        r#"{"points": [[0.0, 0.0], [0.01, 0.0]], "eps": 0.02}"#,
    );
    let v = validate("field-sample", &close);
    assert_eq!(v["ok"], false);
    assert!(v["findings"][0].as_str().unwrap().contains("separation rule violated"));

    let fine = write_config(tmp.path(), "fine.json", SMALL_BULK);
    let v = validate("gmc-bulk", &fine);
    assert_eq!(v["ok"], true);
    assert_eq!(v["findings"].as_array().unwrap().len(), 0);
}
