use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &[&str] = &[
    "--set", "hidden_dim=8", "--set", "heads=2", "--set", "fanout=5", "--set", "time_dim=4",
    "--set", "forecaster_hidden=8", "--set", "k=50", "--set", "lr=0.01", "--set", "baseline_epochs=2",
];

fn cep3(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cep3")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cep3(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn with_small(mut args: Vec<String>) -> Vec<String> {
    args.extend(SMALL.iter().map(|s| s.to_string()));
    args
}

fn run_small(args: &[String]) -> String {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&refs)
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Simulated Poisson preset with communities and a one-epoch checkpoint.
struct Pipeline {
    _dir: tempfile::TempDir,
    root: PathBuf,
    events: PathBuf,
    communities: PathBuf,
    model: PathBuf,
}

fn pipeline() -> Pipeline {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    ok(&["--out", &s(&root.join("sim")), "--seed", "1", "simulate", "--preset", "poisson"]);
    let events = root.join("sim/events.csv");
    ok(&["--out", &s(&root.join("comm")), "communities", "--input", &s(&events)]);
    let communities = root.join("comm/communities.csv");
    run_small(&with_small(vec![
        "--out".into(), s(&root.join("train")), "train".into(), "--input".into(), s(&events),
        "--communities".into(), s(&communities), "--epochs".into(), "1".into(),
    ]));
    let model = root.join("train/model.bin");
    Pipeline { _dir: dir, root, events, communities, model }
}

#[test]
fn simulate_train_evaluate_gives_finite_metrics() {
    let p = pipeline();
    let line = run_small(&with_small(vec![
        "--out".into(), s(&p.root.join("eval")), "evaluate".into(), "--input".into(), s(&p.events),
        "--communities".into(), s(&p.communities), "--checkpoint".into(), s(&p.model),
    ]));
    assert!(line.starts_with("model=cep3 split=test pp="), "{line}");
    let m = manifest(&p.root.join("eval"));
    assert!(m["summary"]["pp"].as_f64().unwrap().is_finite());
    assert!(m["summary"]["mae"].as_f64().unwrap().is_finite());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(p.root.join("eval/report.json")).unwrap()).unwrap();
    assert_eq!(report["per_community"].as_object().unwrap().len(), 2);
}

#[test]
fn every_baseline_evaluates() {
    let p = pipeline();
    for model in ["poisson", "hawkes", "rmtpp", "rmtpp-hrchy", "gru-gaussian"] {
        let line = run_small(&with_small(vec![
            "--out".into(), s(&p.root.join(format!("eval-{model}"))), "evaluate".into(), "--input".into(), s(&p.events),
            "--communities".into(), s(&p.communities), "--model".into(), model.into(),
        ]));
        assert!(line.starts_with(&format!("model={model} ")), "{line}");
        assert!(!line.contains("pp=NaN"), "{line}");
    }
}

#[test]
fn forecast_writes_steps_in_original_units() {
    let p = pipeline();
    let out = p.root.join("fc");
    run_small(&with_small(vec![
        "--out".into(), s(&out), "forecast".into(), "--input".into(), s(&p.events), "--communities".into(), s(&p.communities),
        "--checkpoint".into(), s(&p.model), "--community".into(), "0".into(), "--steps".into(), "7".into(), "--json".into(),
    ]));
    let csv = std::fs::read_to_string(out.join("forecast.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "step,source,dest,dt,t_abs");
    assert_eq!(rows.len(), 8);
    let times: Vec<f64> = rows[1..].iter().map(|r| r.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[1] >= w[0]));
    let steps: Value = serde_json::from_str(&std::fs::read_to_string(out.join("forecast.json")).unwrap()).unwrap();
    assert_eq!(steps.as_array().unwrap().len(), 7);
}

#[test]
fn export_viz_keeps_at_most_a_third() {
    let p = pipeline();
    let out = p.root.join("viz");
    run_small(&with_small(vec![
        "--out".into(), s(&out), "export-viz".into(), "--input".into(), s(&p.events), "--communities".into(), s(&p.communities),
        "--checkpoint".into(), s(&p.model), "--community".into(), "1".into(), "--steps".into(), "40".into(),
    ]));
    let csv = std::fs::read_to_string(out.join("viz.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    let m = manifest(&out);
    let candidates = m["summary"]["candidates"].as_u64().unwrap() as usize;
    assert!(!rows.is_empty());
    assert!(rows.len() as f64 <= 0.33 * candidates as f64);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1).to_string());
    }
    let counts: Vec<u64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn bench_scaling_ratio_grows() {
    let dir = tempfile::tempdir().unwrap();
    let line = ok(&["--out", &s(dir.path()), "bench-scaling", "--sizes", "32,128,512", "--steps", "1", "--repeats", "2"]);
    assert!(line.contains("strictly_increasing=true"), "{line}");
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(csv.contains("512,joint,") && csv.contains(",262144\n"));
}

#[test]
fn manifest_hashes_outputs_and_runs_reproduce() {
    let p = pipeline();
    let again = p.root.join("train2");
    let before = std::fs::read(&p.events).unwrap();
    run_small(&with_small(vec![
        "--out".into(), s(&again), "train".into(), "--input".into(), s(&p.events),
        "--communities".into(), s(&p.communities), "--epochs".into(), "1".into(),
    ]));
    assert_eq!(std::fs::read(&p.events).unwrap(), before, "inputs are never modified");
    let (a, b) = (manifest(&p.root.join("train")), manifest(&again));
    let hash = |m: &Value, name: &str| {
        m["outputs"].as_array().unwrap().iter().find(|o| o["path"].as_str().unwrap().ends_with(name)).unwrap()["sha256"].clone()
    };
    assert_eq!(hash(&a, "model.bin"), hash(&b, "model.bin"));
    assert_eq!(a["config"], b["config"]);
    assert_eq!(a["inputs"], b["inputs"]);
    assert!(a["wall_clock_secs"].as_f64().unwrap() >= 0.0);
    assert_eq!(a["config"]["epochs"], 1);
}

#[test]
fn exit_codes_and_error_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("x"));
    let usage = cep3(&["--out", &out, "train", "--bogus"]);
    assert_eq!(usage.status.code(), Some(1));
    let missing = cep3(&["--out", &out, "train", "--input", "/definitely/missing.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    let line = String::from_utf8(missing.stderr).unwrap();
    assert!(line.starts_with("error kind=data code=2 reason=") && line.trim_end().lines().count() == 1, "{line}");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "source,dest,time\n0,1,abc\n").unwrap();
    let data = cep3(&["--out", &out, "ingest", "--input", &s(&bad)]);
    assert_eq!(data.status.code(), Some(2));
    assert!(String::from_utf8(data.stderr).unwrap().contains("line 2"));

    let p = pipeline();
    let runtime = cep3(&[
        "--out", &s(&p.root.join("budget")), "--set", "pair_budget=4", "--set", "baseline_epochs=1",
        "evaluate", "--input", &s(&p.events), "--communities", &s(&p.communities), "--model", "rmtpp",
    ]);
    assert_eq!(runtime.status.code(), Some(3), "{}", String::from_utf8_lossy(&runtime.stderr));
    let no_ckpt = cep3(&["--out", &s(&p.root.join("nock")), "evaluate", "--input", &s(&p.events)]);
    assert_eq!(no_ckpt.status.code(), Some(1));
}

#[test]
fn help_documents_formats() {
    let out = ok(&["--help"]);
    for needle in ["source,dest,time", "node,community", "step,source,dest,dt,t_abs", "epoch,batch,time_nll,entity_nll,total", "u,v,mu,alpha", "EXIT CODES"] {
        assert!(out.contains(needle), "{needle}");
    }
}

#[test]
fn ingest_rewrites_sorted_stream_with_split_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, "source,dest,time\n10,20,2.0\n20,30,1.0\n10,30,3.0\n").unwrap();
    let out = dir.path().join("out");
    let line = ok(&["--out", &s(&out), "ingest", "--input", &s(&input)]);
    assert_eq!(line.trim(), "events=3 nodes=3 feature_dim=0");
    assert_eq!(std::fs::read_to_string(out.join("events.csv")).unwrap(), "source,dest,time\n20,30,1\n10,20,2\n10,30,3\n");
    let split: Value = serde_json::from_str(&std::fs::read_to_string(out.join("split.json")).unwrap()).unwrap();
    assert_eq!(split["boundaries"], serde_json::json!([2, 2]));
}
