use std::path::Path;
use std::process::{Command, Output};

fn stepstone(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stepstone"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = stepstone(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gen_data_writes_one_record_per_line_and_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--gait", "trot", "--n", "10", "--seed", "3", "--out", "a.jsonl"]);
    ok(d, &["gen-data", "--gait", "trot", "--n", "10", "--seed", "3", "--out", "b.jsonl"]);
    let a = std::fs::read_to_string(d.join("a.jsonl")).unwrap();
    assert_eq!(a.lines().count(), 10);
    assert_eq!(a, std::fs::read_to_string(d.join("b.jsonl")).unwrap());

    ok(d, &["gen-data", "--gait", "trot", "--n", "10", "--seed", "3", "--out", "t.jsonl", "--val-n", "4", "--val-out", "v.jsonl"]);
    let t = std::fs::read_to_string(d.join("t.jsonl")).unwrap();
    let v = std::fs::read_to_string(d.join("v.jsonl")).unwrap();
    assert_eq!((t.lines().count(), v.lines().count()), (6, 4));
    assert_eq!(format!("{t}{v}"), a);
}

#[test]
fn plan_prints_a_result_for_a_saved_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-env", "--seed", "2", "--out", "env.json"]);
    let out = ok(
        d,
        &["plan", "--env-file", "env.json", "--gait", "jump", "--no-dyn", "--no-adjust", "--max-iterations", "50", "--no-timing"],
    );
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["iterations"].as_u64().unwrap() <= 50);
    assert_eq!(v["wall_time_s"].as_f64(), Some(0.0));
}

#[test]
fn missing_models_and_bad_input_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-env", "--out", "env.json"]);
    // dynamic pruning is on by default and needs a classifier
    let out = stepstone(d, &["plan", "--env-file", "env.json", "--gait", "trot"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("classifier"));

    std::fs::write(d.join("bad.jsonl"), "{\"x\": [1.0]}\n").unwrap();
    let out = stepstone(d, &["train", "--dataset", "bad.jsonl", "--network", "classifier", "--out", "m.json"]);
    assert!(!out.status.success());
    assert!(!d.join("m.json").exists());

    let out = stepstone(d, &["campaign", "--config", "missing.json", "--out", "r.csv"]);
    assert!(!out.status.success());
}

#[test]
fn train_writes_model_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--gait", "jump", "--n", "600", "--seed", "1", "--out", "d.jsonl"]);
    ok(d, &["train", "--dataset", "d.jsonl", "--network", "classifier", "--out", "c.json", "--epochs", "2"]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("c.metrics.json")).unwrap()).unwrap();
    assert_eq!(m["network"], "classifier");
    assert_eq!(m["n_train"].as_u64().unwrap() + m["n_val"].as_u64().unwrap(), 600);
    assert!(m["val_roc_auc"].as_f64().is_some());
    assert!(d.join("c.json").exists());
}
