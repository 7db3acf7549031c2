use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfnav::report::MetricsReport;
use cfnav::Trace;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn cfnav(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfnav"))
        .args(args)
        .current_dir(cwd)
        .env("CFNAV_CONFIG_DIR", scenarios())
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("spawn cfnav")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_trace_and_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = cfnav(&["run", "--scenario", "crossing", "--out", "t.jsonl", "--csv-dir", "csv"], dir.path());
    ok(&out);
    let trace = Trace::load(&dir.path().join("t.jsonl")).unwrap();
    assert_eq!(trace.header.scenario, "crossing");
    for name in ["belief_timeline.csv", "goal_posterior.csv", "predictions.csv"] {
        let text = std::fs::read_to_string(dir.path().join("csv").join(name)).unwrap();
        assert!(text.lines().count() > 1, "{name} is empty");
    }
    let header = std::fs::read_to_string(dir.path().join("csv/belief_timeline.csv")).unwrap();
    assert!(header.starts_with("time,agent,goal,posterior,likelihood,true_goal"));
}

#[test]
fn cli_run_matches_library_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cfnav(&["run", "--scenario", "async3", "--mode", "full", "--seed", "4", "--drop-prob", "0.3", "--kill-node", "2@6.5", "--out", "t.cbor"], dir.path()));
    let from_cli = Trace::load(&dir.path().join("t.cbor")).unwrap();

    let s = cfnav::Scenario::load(&scenarios().join("async3.json")).unwrap();
    let mut opts = cfnav::RunOptions::new(cfnav::Mode::FullPipeline);
    opts.seed = Some(4);
    opts.drop_prob = Some(0.3);
    opts.kills = vec![cfnav::scenario::NodeEvent { node: 2, at: 6.5 }];
    assert_eq!(from_cli, cfnav::run_scenario(&s, &opts).unwrap());
}

#[test]
fn eval_reports_per_node_metrics() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cfnav(&["run", "--scenario", "fusion2", "--mode", "full-pipeline", "--out", "t.jsonl"], dir.path()));
    let out = cfnav(&["eval", "--trace", "t.jsonl"], dir.path());
    ok(&out);
    let report: MetricsReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.nodes.iter().filter(|n| n.report.mota.is_finite()).count(), report.nodes.len());
    assert!(report.mean_mota > 0.5, "{}", report.mean_mota);

    let out = cfnav(&["eval", "--scenario", "fusion2", "--out", "m.json"], dir.path());
    ok(&out);
    let again: MetricsReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(again, report);
}

#[test]
fn eval_refuses_trace_without_trackers() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cfnav(&["run", "--scenario", "crossing", "--out", "t.jsonl"], dir.path()));
    let out = cfnav(&["eval", "--trace", "t.jsonl"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("full-pipeline"));
}

#[test]
fn bench_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = cfnav(&["bench", "--agents", "2,4", "--goals", "3", "--iterations", "5"], dir.path());
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert!(v[1]["median_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn validate_reports_field() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cfnav(&["validate", "--scenario", "lab4"], dir.path()));

    let mut s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(scenarios().join("crossing.json")).unwrap()).unwrap();
    s["agents"][0]["max_speed"] = serde_json::json!(-1.0);
    std::fs::write(dir.path().join("bad.json"), s.to_string()).unwrap();
    let out = cfnav(&["validate", "--scenario", "bad.json"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_speed"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["run", "--scenario", "crossing", "--out", "t.jsonl", "--kill-node", "1"][..],
        &["run", "--scenario", "crossing", "--out", "t.jsonl", "--kill-node", "1@-2"],
        &["run", "--scenario", "crossing", "--out", "t.jsonl", "--mode", "sideways"],
        &["run", "--scenario", "no-such-scenario", "--out", "t.jsonl"],
        &["eval"],
    ] {
        let out = cfnav(args, dir.path());
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn config_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let s = std::fs::read_to_string(scenarios().join("empty.json")).unwrap();
    std::fs::write(dir.path().join("mine.json"), s.replace("\"empty\"", "\"mine\"")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cfnav"))
        .args(["validate", "--scenario", "mine"])
        .env("CFNAV_CONFIG_DIR", dir.path())
        .output()
        .unwrap();
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("mine: ok"));
}
