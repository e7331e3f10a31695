use std::path::Path;
use std::process::{Command, Output};

fn biasbench(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biasbench"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("BIASBENCH_SEED")
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn induce_writes_selection_and_shift() {
    let dir = tempfile::tempdir().unwrap();
    let out = biasbench(&["induce", "--k", "20"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sel = json(&dir.path().join("selection.json"));
    assert_eq!(sel["per_class_counts"], serde_json::json!([20, 20]));
    assert_eq!(sel["indices"].as_array().unwrap().len(), 40);
    assert_eq!(sel["config_hash"].as_str().unwrap().len(), 16);
    let shift = json(&dir.path().join("shift.json"));
    assert_eq!(shift["classes"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(biasbench(&["induce", "--bias", "sideways"], dir.path()).status.code(), Some(2));
    assert_eq!(biasbench(&["induce", "--b", "1.5"], dir.path()).status.code(), Some(2));
    assert_eq!(biasbench(&["induce", "--k", "5000"], dir.path()).status.code(), Some(3));
    assert_eq!(biasbench(&["train", "--dataset", "missing.csv", "--label-col", "y"], dir.path()).status.code(), Some(3));
    assert_eq!(biasbench(&["train", "--dataset", "x.csv"], dir.path()).status.code(), Some(2));
}

#[test]
fn train_reports_failures_in_result_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = biasbench(&["train", "--k", "400"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let result = json(&dir.path().join("result.json"));
    assert!(result["error"].as_str().unwrap().contains("400"));
}

#[test]
fn train_dcast_with_unit_diversity_equals_cast() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let common = ["train", "--model", "logreg", "--m", "15", "--run", "2"];
    assert!(biasbench(&[&common[..], &["--strategy", "cast"]].concat(), &a).status.success());
    assert!(biasbench(&[&common[..], &["--strategy", "dcast", "--d", "1"]].concat(), &b).status.success());
    let trace_a = std::fs::read_to_string(a.join("trace.jsonl")).unwrap();
    assert_eq!(trace_a, std::fs::read_to_string(b.join("trace.jsonl")).unwrap());
    assert!(trace_a.lines().count() <= 16);
    assert_eq!(json(&a.join("model.json")), json(&b.join("model.json")));
    let result = json(&a.join("result.json"));
    assert!(result["test_accuracy"].as_f64().unwrap() > 0.5);
}

#[test]
fn flags_override_config_file_and_env_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"k": 12, "b": 0.5, "seed": 4}"#).unwrap();
    let cfg = cfg.to_str().unwrap();

    let from_file = dir.path().join("file");
    assert!(biasbench(&["--config", cfg, "induce"], &from_file).status.success());
    let sel = json(&from_file.join("selection.json"));
    assert_eq!(sel["per_class_counts"], serde_json::json!([12, 12]));
    assert_eq!(sel["seed"], 4);

    let flagged = dir.path().join("flag");
    assert!(biasbench(&["--config", cfg, "induce", "--k", "9"], &flagged).status.success());
    let sel = json(&flagged.join("selection.json"));
    assert_eq!(sel["per_class_counts"], serde_json::json!([9, 9]));
    assert_eq!(sel["params"]["b"], 0.5);

    let env = dir.path().join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_biasbench"))
        .args(["--config", cfg, "induce", "--out"])
        .arg(&env)
        .env("BIASBENCH_SEED", "11")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json(&env.join("selection.json"))["seed"], 11);

    std::fs::write(dir.path().join("bad.json"), r#"{"kay": 3}"#).unwrap();
    let bad = dir.path().join("bad.json");
    assert_eq!(biasbench(&["--config", bad.to_str().unwrap(), "induce"], dir.path()).status.code(), Some(2));
}

#[test]
fn benchmark_writes_reports_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "benchmark", "--runs", "2", "--seeds", "1", "--model", "logreg", "--m", "5", "--keep-traces", "true",
    ];
    let out = biasbench(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 2);
    let hash = json(&dir.path().join("report.json"))["config_hash"].as_str().unwrap().to_string();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(&hash)));
    let traces = std::fs::read_to_string(dir.path().join("traces.jsonl")).unwrap();
    for line in traces.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(["st", "cast", "dcast_d10"].contains(&v["strategy"].as_str().unwrap()));
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("dcast_d10"));
}
