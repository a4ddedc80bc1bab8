use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use twohop_core::taskgen::{validate_example, SymbolicExample, VocabSpec};
use twohop_core::training::MetricsRecord;
use twohop_lab::io::read_jsonl;

fn twohop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twohop")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = twohop(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Metrics with the wall-clock field removed.
fn timeless(path: &Path) -> Vec<MetricsRecord> {
    let mut records: Vec<MetricsRecord> = read_jsonl(path).unwrap();
    records.iter_mut().for_each(|r| r.wall_time = 0.0);
    records
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{"model": {"d_model": 16}, "optimizer": {"batch_size": 8}, "eval": {"interval": 5, "batch_size": 16}}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_symbolic_writes_valid_examples() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("data");
    ok(&["gen-symbolic", "--seed", "1", "--n", "256", "--chains", "5", "--out", p(&out)]);
    let examples: Vec<SymbolicExample> = read_jsonl(&out.join("dataset.jsonl")).unwrap();
    assert_eq!(examples.len(), 256);
    assert!(examples.iter().all(|e| validate_example(e, &VocabSpec::new(24)).is_ok()));
    assert!(out.join("manifest.json").is_file());
    let text = fs::read_to_string(out.join("dataset.jsonl")).unwrap();
    assert!(text.lines().next().unwrap().contains("\"roles\":[\"bos\""));
}

#[test]
fn too_few_entities_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = twohop(&["gen-symbolic", "--chains", "5", "--entities", "14", "--out", p(&tmp.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("entity_count"));
}

#[test]
fn gen_nl_writes_prompts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("nl");
    ok(&["gen-nl", "--template", "father", "--k", "2", "--n", "10", "--out", p(&out)]);
    let text = fs::read_to_string(out.join("prompts.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 10);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let prompt = v["prompt"].as_str().unwrap();
        assert_eq!(prompt.matches(" is the father of ").count(), 4);
        assert!(prompt.ends_with("is the grandfather of"));
        assert_eq!(v["template_id"], "father");
        assert_eq!(v["k_chains"], 2);
    }
    let bad = twohop(&["gen-nl", "--template", "cousin", "--out", p(&tmp.path().join("x"))]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn short_training_runs_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["train", "--config", &cfg, "--seed", "1", "--steps", "10", "--out", p(&a)]);
    ok(&["train", "--config", &cfg, "--seed", "1", "--steps", "10", "--out", p(&b)]);
    let ra = timeless(&a.join("metrics.jsonl"));
    assert_eq!(ra.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 5, 10]);
    assert_eq!(ra, timeless(&b.join("metrics.jsonl")));
    for step in [0, 10] {
        let name = format!("checkpoints/step_{step:06}.json");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 1);
    assert!(manifest["finished_at"].is_string());
}

#[test]
fn run_directories_are_never_overwritten() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("run");
    ok(&["train", "--config", &cfg, "--steps", "2", "--out", p(&out)]);
    let before = fs::read(out.join("metrics.jsonl")).unwrap();
    let again = twohop(&["train", "--config", &cfg, "--steps", "2", "--out", p(&out)]);
    assert_eq!(again.status.code(), Some(1));
    assert_eq!(fs::read(out.join("metrics.jsonl")).unwrap(), before);
}

#[test]
fn missing_resume_checkpoint_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let out = twohop(&["train", "--steps", "2", "--resume", p(&tmp.path().join("nope.json")), "--out", p(&tmp.path().join("r"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));
    assert!(!tmp.path().join("r").exists());
}

#[test]
fn resumed_run_continues_the_stream() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let (full, first, rest) = (tmp.path().join("full"), tmp.path().join("first"), tmp.path().join("rest"));
    ok(&["train", "--config", &cfg, "--steps", "10", "--out", p(&full)]);
    ok(&["train", "--config", &cfg, "--steps", "5", "--out", p(&first)]);
    let ck = first.join("checkpoints/step_000005.json");
    ok(&["train", "--config", &cfg, "--steps", "10", "--resume", p(&ck), "--out", p(&rest)]);
    let tail: Vec<MetricsRecord> = timeless(&full.join("metrics.jsonl")).into_iter().filter(|r| r.step > 5).collect();
    assert_eq!(timeless(&rest.join("metrics.jsonl")), tail);
    let name = "checkpoints/step_000010.json";
    assert_eq!(fs::read(full.join(name)).unwrap(), fs::read(rest.join(name)).unwrap());
}

#[test]
fn interp_exports_heatmaps_and_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let (run, data, out) = (tmp.path().join("run"), tmp.path().join("data"), tmp.path().join("interp"));
    ok(&["train", "--config", &cfg, "--steps", "5", "--out", p(&run)]);
    ok(&["gen-symbolic", "--n", "8", "--out", p(&data)]);
    ok(&[
        "interp",
        "--checkpoint",
        p(&run.join("checkpoints/step_000005.json")),
        "--dataset",
        p(&data.join("dataset.jsonl")),
        "--metrics",
        p(&run.join("metrics.jsonl")),
        "--example-maps",
        "2",
        "--out",
        p(&out),
    ]);
    for layer in 0..3 {
        let mean = fs::read_to_string(out.join(format!("attention/layer{layer}_mean_logits.csv"))).unwrap();
        assert_eq!(mean.lines().count(), 24);
        // the first query row sees only the first key
        let row: Vec<&str> = mean.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row.len(), 24);
        assert!(!row[1].is_empty() && row[2..].iter().all(|c| c.is_empty()));
        assert!(out.join(format!("attention/layer{layer}_example1_logits.csv")).is_file());
        assert!(!out.join(format!("attention/layer{layer}_example2_logits.csv")).exists());
    }
    let lens = fs::read_to_string(out.join("logit_lens.csv")).unwrap();
    assert_eq!(lens.lines().next().unwrap(), ",B1,B2,B3,B4,B5,E1,E2,E3,E4,E5");
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["step"], 5);
    assert_eq!(summary["examples"], 8);
    assert!(out.join("transition.json").is_file());
}

#[test]
fn threeparam_trajectory_and_comparison() {
    let tmp = TempDir::new().unwrap();
    let traj = tmp.path().join("traj.csv");
    ok(&["threeparam", "--xi", "30", "--n", "10", "--v", "65", "--lr", "0.1", "--steps", "3000", "--out", p(&traj)]);
    let text = fs::read_to_string(&traj).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,alpha,beta,gamma,w1,w2,w3,loss");
    assert_eq!(text.lines().count(), 3002);
    assert!(text.lines().nth(1).unwrap().starts_with("0,0.0,0.0,0.0,"));

    let cfg = small_config(tmp.path());
    let run = tmp.path().join("run");
    ok(&["train", "--config", &cfg, "--steps", "5", "--out", p(&run)]);
    let out = tmp.path().join("cmp.json");
    let stdout = ok(&["threeparam-compare", "--trajectory", p(&traj), "--metrics", p(&run.join("metrics.jsonl")), "--out", p(&out)]);
    assert!(String::from_utf8_lossy(&stdout.stdout).contains("hypothesis 1"));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["synchrony"]["synchronized"], true);
    assert_eq!(v["hypothesis2"], false);
}

#[test]
fn report_on_an_untrained_run_flags_failures_deterministically() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let run = tmp.path().join("run");
    ok(&["train", "--config", &cfg, "--steps", "10", "--out", p(&run)]);
    let (a, b) = (tmp.path().join("a.json"), tmp.path().join("b.json"));
    let args = |out: &Path| vec!["report".to_string(), "--run".into(), p(&run).into(), "--slow-step".into(), "0".into(), "--analysis-examples".into(), "16".into(), "--out".into(), p(out).into()];
    let first = twohop(&args(&a).iter().map(String::as_str).collect::<Vec<_>>());
    assert!(first.status.success(), "failed checks are report content, not errors");
    ok(&args(&b).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let stdout = String::from_utf8_lossy(&first.stdout);
    assert!(stdout.contains("[FAIL] structured circuits"));
    assert!(stdout.contains("[FAIL] convergence"));
    assert!(stdout.contains("[pass] three-parameter model"));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert!(v["dynamics"]["hypothesis1"].is_boolean());
    assert!(v["dynamics"]["hypothesis2"].is_boolean());

    let missing = twohop(&["report", "--run", p(&run), "--out", p(&tmp.path().join("c.json"))]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("800"));
}
