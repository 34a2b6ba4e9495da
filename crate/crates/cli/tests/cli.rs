use std::path::Path;
use std::process::{Command, Output};

fn shiftvit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shiftvit")).args(args).env_remove("SHIFTVIT_SEED").output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn prove_lemma1_passes() {
    let out = shiftvit(&["prove", "--suite", "lemma1", "--n", "8", "--l", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["config"]["mode"], "prove");
    assert_eq!(report["suites"][0]["failures"], 0);
}

#[test]
fn run_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = shiftvit(&["run", "--suite", "end2end", "--trials", "20", "--seed", "3", "--out", path(out)]);
        assert_eq!(o.status.code(), Some(0));
    }
    let (ja, jb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ja, jb);
    let report: serde_json::Value = serde_json::from_slice(&ja).unwrap();
    let c_cons = report["metrics"].as_array().unwrap().iter().find(|m| m["report"]["metric"] == "c_cons").unwrap();
    assert_eq!(c_cons["report"]["aggregate"], 1.0);
    assert_eq!(report["config"]["seed"], 3);

    let o = shiftvit(&["replay", path(&a)]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn seed_comes_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_shiftvit"))
        .args(["run", "--suite", "claim3", "--trials", "2"])
        .env("SHIFTVIT_SEED", "41")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["config"]["seed"], 41);
}

#[test]
fn ablation_counterexample_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ablation.json");
    let o = shiftvit(&["run", "--suite", "ablation", "--disable", "a_pmerge", "--trials", "100", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let cx = &report["counterexamples"][0];
    assert_eq!(cx["property"], "ablation_breaks");
    let metric = &report["metrics"][0]["report"];
    assert!(metric["aggregate"].as_f64().unwrap() < 1.0);

    // a single counterexample replays to the recorded divergence
    let single = dir.path().join("cx.json");
    std::fs::write(&single, serde_json::to_string(cx).unwrap()).unwrap();
    let o = shiftvit(&["replay", path(&single)]);
    assert_eq!(o.status.code(), Some(1));
    let line = String::from_utf8(o.stdout).unwrap();
    let recorded = cx["divergence"].as_f64().unwrap();
    assert!(line.contains(&format!("replayed={recorded:e}")), "{line}");

    // turning the switch back on makes it pass
    let mut fixed = cx.clone();
    fixed["model"]["switches"]["a_pmerge"] = true.into();
    std::fs::write(&single, serde_json::to_string(&fixed).unwrap()).unwrap();
    assert_eq!(shiftvit(&["replay", path(&single)]).status.code(), Some(0));
}

#[test]
fn failing_run_exits_one() {
    let o = shiftvit(&["run", "--suite", "end2end", "--disable", "a_token", "--trials", "10"]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], false);
    assert!(!report["counterexamples"].as_array().unwrap().is_empty());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"input_shape\": [10]}").unwrap();
    assert_eq!(shiftvit(&["run", "--config", path(&bad)]).status.code(), Some(2));
    assert_eq!(shiftvit(&["run", "--config", "/nonexistent.json"]).status.code(), Some(2));
    assert_eq!(shiftvit(&["run", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(shiftvit(&["run", "--suite", "nope"]).status.code(), Some(2));
    assert_eq!(shiftvit(&["prove", "--suite", "lemma1", "--n", "6", "--l", "4"]).status.code(), Some(2));
    assert_eq!(shiftvit(&["replay", path(&bad)]).status.code(), Some(2));
    assert_eq!(shiftvit(&["replay", "/nonexistent.json"]).status.code(), Some(2));
}

#[test]
fn config_file_is_used() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/rank2.json");
    let o = shiftvit(&["run", "--config", path(&cfg), "--suite", "claim1", "--trials", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["config"]["model"]["input_shape"], serde_json::json!([48, 48]));
}
