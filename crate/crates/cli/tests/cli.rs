//! End-to-end runs of the `ecg-jepa` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
model.preset = tiny
train.total_steps = 20
train.batch_size = 8
train.warmup_steps = 4
train.crop_seconds = 2.0
train.checkpoint_every = 10
train.log_every = 5
";

const QUICK_EVAL: [&str; 8] = [
    "--set",
    "eval.steps=20",
    "--set",
    "eval.eval_every=10",
    "--set",
    "eval.batch_size=8",
    "--set",
    "eval.warmup_steps=2",
];

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecg-jepa"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = cli(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn prepare(cwd: &Path, out: &str, n: usize) {
    ok(
        &["prepare", "--synthetic", &n.to_string(), "--seconds", "10", "--classes", "2", "--seed", "5", "--out", out],
        cwd,
    );
}

/// Prepared data plus a 20-step tiny pre-training run in a fresh directory.
fn pretrained() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "data", 40);
    fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    ok(
        &["pretrain", "--config", "tiny.cfg", "--manifest", "data/manifest.txt", "--out", "run"],
        dir.path(),
    );
    let ck = dir.path().join("run/checkpoints/step-00000020");
    (dir, ck)
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut all: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .flat_map(|p| if p.is_dir() { files(&p) } else { vec![(p.clone(), fs::read(&p).unwrap())] })
        .collect();
    all.sort();
    all
}

#[test]
fn prepare_writes_deterministic_records_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "a", 24);
    prepare(dir.path(), "b", 24);
    let a = files(&dir.path().join("a"));
    let b = files(&dir.path().join("b"));
    let strip = |v: &[(PathBuf, Vec<u8>)], root: &str| {
        v.iter()
            .map(|(p, d)| (p.strip_prefix(dir.path().join(root)).unwrap().to_path_buf(), d.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a, "a"), strip(&b, "b"));

    let ecg: Vec<_> = a.iter().filter(|(p, _)| p.extension().is_some_and(|e| e == "ecg")).collect();
    assert_eq!(ecg.len(), 24);
    assert!(ecg.iter().all(|(_, d)| d.len() == 12 * 5000 * 4));
    let stats = fs::read_to_string(dir.path().join("a/stats.txt")).unwrap();
    let lines: Vec<&str> = stats.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0].starts_with("synthetic "));
}

#[test]
fn pretrain_writes_checkpoints_metrics_and_resolved_config() {
    let (dir, ck) = pretrained();
    let run = dir.path().join("run");
    assert!(ck.join("manifest.txt").exists());
    assert!(run.join("checkpoints/step-00000010").exists());
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("step,loss,lr,wd,momentum,mean_std,eff_rank"));
    let resolved = fs::read_to_string(run.join("config.resolved")).unwrap();
    assert!(resolved.contains("train.total_steps = 20"));
    assert!(resolved.contains("model.encoder_dim = 32"));
}

#[test]
fn resume_continues_the_step_counter() {
    let (dir, _) = pretrained();
    ok(
        &[
            "pretrain",
            "--config",
            "tiny.cfg",
            "--manifest",
            "data/manifest.txt",
            "--out",
            "more",
            "--resume",
            "run/checkpoints/step-00000010",
            "--set",
            "train.total_steps=30",
        ],
        dir.path(),
    );
    let metrics = fs::read_to_string(dir.path().join("more/metrics.csv")).unwrap();
    let first_step = metrics.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(first_step, "10");
    assert!(dir.path().join("more/checkpoints/step-00000030").exists());
    assert!(!dir.path().join("more/checkpoints/step-00000010").exists());
}

fn eval_args<'a>(mode: &'a str, ck: &'a str, out: &'a str, seeds: &'a str) -> Vec<&'a str> {
    let mut v = vec!["eval", "--mode", mode, "--checkpoint", ck, "--data", "data/manifest.txt", "--out", out, "--seeds", seeds];
    v.extend(QUICK_EVAL);
    v
}

#[test]
fn eval_reports_every_seed_with_mean_and_std() {
    let (dir, ck) = pretrained();
    let ck = ck.to_str().unwrap();
    ok(&eval_args("linear", ck, "lin", "3"), dir.path());
    let out = dir.path().join("lin");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    let aucs = json["aucs"].as_array().unwrap();
    assert_eq!(aucs.len(), 3);
    let values: Vec<f64> = aucs.iter().map(|a| a.as_f64().unwrap()).collect();
    let mean = values.iter().sum::<f64>() / 3.0;
    assert!((json["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!(json["std"].as_f64().unwrap() >= 0.0);
    for s in 0..3 {
        let preds = fs::read_to_string(out.join(format!("predictions/seed-{s}.csv"))).unwrap();
        assert_eq!(preds.lines().next(), Some("record_id,class_0,class_1"));
        assert_eq!(preds.lines().count(), 1 + 4);
        assert!(out.join(format!("heads/seed-{s}/manifest.txt")).exists());
    }
}

#[test]
fn two_stage_needs_a_linear_run() {
    let (dir, ck) = pretrained();
    let ck = ck.to_str().unwrap();
    let out = cli(&eval_args("two_stage", ck, "ts", "1"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("requires a linear-evaluation artifact"), "{err}");

    ok(&eval_args("linear", ck, "lin", "1"), dir.path());
    let mut args = eval_args("two_stage", ck, "ts", "1");
    args.extend(["--linear", "lin"]);
    ok(&args, dir.path());
    assert!(dir.path().join("ts/results.json").exists());
}

#[test]
fn linear_eval_is_reproducible() {
    let (dir, ck) = pretrained();
    let ck = ck.to_str().unwrap();
    ok(&eval_args("linear", ck, "first", "2"), dir.path());
    ok(&eval_args("linear", ck, "second", "2"), dir.path());
    let read = |d: &str| fs::read(dir.path().join(d).join("results.json")).unwrap();
    assert_eq!(read("first"), read("second"));
}

#[test]
fn exit_codes_separate_usage_data_and_divergence() {
    let (dir, _) = pretrained();
    let code = |args: &[&str]| cli(args, dir.path()).status.code();
    assert_eq!(code(&["pretrain", "--bogus"]), Some(1));
    assert_eq!(code(&["pretrain", "--manifest", "data/manifest.txt", "--set", "train.nope=1"]), Some(1));
    assert_eq!(code(&["pretrain", "--manifest", "missing.txt", "--out", "x"]), Some(2));
    let diverging = [
        "pretrain",
        "--config",
        "tiny.cfg",
        "--manifest",
        "data/manifest.txt",
        "--out",
        "div",
        "--set",
        "train.lr_start=1e30",
        "--set",
        "train.lr_end=1e30",
    ];
    assert_eq!(code(&diverging), Some(3));
}

#[test]
fn csv_import_produces_a_loadable_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("I,II,V1\n");
    for i in 0..100 {
        text.push_str(&format!("{},{},{}\n", i as f32 * 0.5, -(i as f32), if i == 3 { String::new() } else { "1.5".into() }));
    }
    fs::write(dir.path().join("rec.csv"), text).unwrap();
    ok(
        &["import-csv", "--input", "rec.csv", "--rate", "250", "--database", "ptb-xl", "--out", "raw", "--labels", "0,1"],
        dir.path(),
    );
    let rec = ecg_jepa::ingest::read_record(&dir.path().join("raw/rec.ecg")).unwrap();
    assert_eq!((rec.leads, rec.len(), rec.sampling_rate), (3, 100, 250.0));
    assert_eq!(rec.lead(0)[4], 2.0);
    assert_eq!(rec.lead(1)[4], -4.0);
    assert!(rec.lead(2)[3].is_nan());
    assert_eq!(rec.labels, Some(vec![0, 1]));
    assert_eq!(rec.database, ecg_jepa::ingest::DatabaseId::PtbXl);
}
