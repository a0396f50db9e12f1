use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn gemi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gemi"))
        .args(args)
        .env_remove("GEMI_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(path: &Path, text: &str) -> PathBuf {
    fs::write(path, text).unwrap();
    path.to_path_buf()
}

/// Small planted experiment that finishes in well under a second.
fn quick_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"{{"seed": 4, "output_dir": "out", "data": {{"planted": {{"items": 60}}}},
            "train": {{"epochs": 15, "hidden": 16, "latent": 8, "graph": {{"k": 5}}}},
            "eval": {{"baseline_draws": 100}}{extra}}}"#
    );
    write(&dir.join("config.json"), &text)
}

fn labels_file(dir: &Path, n: usize) -> PathBuf {
    let mut s = String::from("id,animal,mythology,tree\n");
    for i in 0..n {
        s.push_str(&format!("p{i},{},{},{}\n", (i % 2 == 0) as u8, (i % 3 == 0) as u8, (i % 5 == 0) as u8));
    }
    write(&dir.join("labels.csv"), &s)
}

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let o = gemi(&["run", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/not/here.json"));
}

#[test]
fn missing_dataset_file_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("c.json"), r#"{"data": {"labels": "nope/labels.csv", "embeddings": "nope/emb.csv"}}"#);
    let o = gemi(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("nope/labels.csv"), "{}", stderr(&o));
}

#[test]
fn bad_config_field_reports_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("c.json"), r#"{"data": {"planted": {}}, "train": {"lr": "fast"}}"#);
    let o = gemi(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.lr"), "{}", stderr(&o));
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(gemi(&["users", "synth", "--num", "many"]).status.code(), Some(2));
    assert_eq!(gemi(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn default_gcn_config_resolves_published_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("c.json"), r#"{"output_dir": "out", "data": {"planted": {}}, "eval": {"baseline_draws": 100}}"#);
    let o = gemi(&["run", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let resolved: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/config.resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved["model"], "gcn");
    assert_eq!(resolved["train"]["epochs"], 450);
    assert_eq!(resolved["train"]["lr"], 3e-4);
    assert_eq!(resolved["train"]["graph"]["k"], 30);
    for f in ["train_report.json", "metrics.json", "metrics.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "model,label,mean,std,U,K_rec,seed");
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn repeated_runs_give_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), r#", "model": "vgae""#);
    let mut seen = Vec::new();
    for out in ["a", "b"] {
        let o = gemi(&["run", cfg.to_str().unwrap(), "--output-dir", dir.path().join(out).to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        seen.push(fs::read(dir.path().join(out).join("metrics.json")).unwrap());
    }
    assert_eq!(seen[0], seen[1]);
}

#[test]
fn seed_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "");
    let o = Command::new(env!("CARGO_BIN_EXE_gemi"))
        .args(["run", cfg.to_str().unwrap()])
        .env("GEMI_SEED", "77")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let resolved: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/config.resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 77);
}

#[test]
fn gamma_sweep_writes_fifteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "");
    let o = gemi(&["sweep", cfg.to_str().unwrap(), "--param", "gamma", "--values", "0,0.5,1,2,5", "--jobs", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "param,value,label,mean,std,seed");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 15);
    assert!(rows[0].starts_with("train.loss.gamma,0,animal,"));
    assert!(dir.path().join("out/train.loss.gamma=5/metrics.json").exists());

    // Serial execution yields the same table.
    let serial = gemi(&["sweep", cfg.to_str().unwrap(), "--param", "gamma", "--values", "0,0.5,1,2,5", "--output-dir", dir.path().join("serial").to_str().unwrap()]);
    assert!(serial.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("serial/sweep.csv")).unwrap(), csv);
}

#[test]
fn sweep_rejects_empty_lists_and_non_scalar_targets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), "");
    assert_eq!(gemi(&["sweep", cfg.to_str().unwrap(), "--param", "gamma", "--values", ""]).status.code(), Some(2));
    let o = gemi(&["sweep", cfg.to_str().unwrap(), "--param", "train.graph", "--values", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scalar"));
}

#[test]
fn users_synth_writes_requested_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let labels = labels_file(dir.path(), 40);
    let mut outputs = Vec::new();
    for out in ["x", "y"] {
        let out_dir = dir.path().join(out);
        let o = gemi(&[
            "users", "synth", "--labels", labels.to_str().unwrap(), "--num", "50", "--k", "5", "--tau", "0.2", "--seed", "7", "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let prefs = fs::read_to_string(out_dir.join("preferences.csv")).unwrap();
        assert_eq!(prefs.lines().next().unwrap(), "user_id,animal,mythology,tree");
        assert_eq!(prefs.lines().count(), 51);
        outputs.push((prefs, fs::read_to_string(out_dir.join("interactions.csv")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn users_real_with_augmentation() {
    let dir = tempfile::tempdir().unwrap();
    let labels = labels_file(dir.path(), 30);
    let mut s = String::from("user_id,panel_id,rating\n");
    for u in 0..6 {
        for p in 0..8 {
            s.push_str(&format!("r{u},p{},{}\n", (u * 5 + p * 3) % 30, (u + p) % 5 + 1));
        }
    }
    let inter = write(&dir.path().join("ratings.csv"), &s);
    let out_dir = dir.path().join("real");
    let o = gemi(&[
        "users", "real", "--interactions", inter.to_str().unwrap(), "--labels", labels.to_str().unwrap(), "--augment", "10000", "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let prefs = fs::read_to_string(out_dir.join("preferences.csv")).unwrap();
    assert_eq!(prefs.lines().count(), 10_001);
    for line in prefs.lines().skip(1) {
        for v in line.split(',').skip(1) {
            let p: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }

    let plain = dir.path().join("plain");
    let o = gemi(&["users", "real", "--interactions", inter.to_str().unwrap(), "--labels", labels.to_str().unwrap(), "--out", plain.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(plain.join("preferences.csv")).unwrap().lines().count(), 7);
}

#[test]
fn check_subcommand_passes() {
    let o = gemi(&["check", "--seeds", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("[PASS] gradient vgae focal"));
    assert!(!out.contains("FAIL"));
}
