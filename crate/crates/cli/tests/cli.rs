use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use riskbench::features::Task;
use riskbench::model::{BackboneKind, ModelConfig};
use riskbench::pipeline::{RunConfig, RUN_CONFIG};
use riskbench::train::TrainConfig;

fn riskbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskbench"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn tiny_config(dir: &Path) -> PathBuf {
    let mut cfg = RunConfig {
        tasks: vec![Task::Mortality],
        models: vec![ModelConfig::for_kind(BackboneKind::Resnet)],
        folds: 2,
        train: TrainConfig {
            max_epochs: 1,
            max_batches_per_epoch: Some(2),
            ..TrainConfig::default()
        },
        ig_samples: 4,
        tsne_max_points: 40,
        ..RunConfig::default()
    };
    cfg.generator.n_patients = 300;
    cfg.ig.steps = 16;
    cfg.tsne.perplexity = 5.0;
    cfg.tsne.iters = 100;
    let path = dir.join("tiny.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn missing_upstream_exits_nonzero_with_path() {
    let out = tempfile::tempdir().unwrap();
    let o = riskbench(&["train", "--out", out.path().to_str().unwrap(), "--task", "cpe"]);
    assert!(!o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("stages/featurize.json"), "{stderr}");
}

#[test]
fn unknown_model_is_a_config_error() {
    let o = riskbench(&["config", "--model", "xgboost"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("xgboost"));
}

#[test]
fn flags_override_the_config() {
    let o = riskbench(&["config", "--task", "cpe,los", "--model", "tabnet", "--seed", "7", "--folds", "3", "--ig-steps", "64"]);
    assert!(o.status.success());
    let cfg: RunConfig = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cfg.tasks, vec![Task::Cpe, Task::Los]);
    assert_eq!(cfg.models.len(), 1);
    assert_eq!(cfg.models[0].backbone.kind, BackboneKind::Tabnet);
    assert_eq!((cfg.seed, cfg.folds, cfg.ig.steps), (7, 3, 64));
}

#[test]
fn full_run_then_report_from_run_config() {
    let out = tempfile::tempdir().unwrap();
    let cfg = tiny_config(out.path());
    let o = riskbench(&["all", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run_dir = PathBuf::from(String::from_utf8_lossy(&o.stdout).trim());
    assert!(run_dir.join("metrics.csv").is_file());
    let before = std::fs::read(run_dir.join("metrics.csv")).unwrap();

    std::fs::remove_dir_all(run_dir.join("report")).unwrap();
    let saved = run_dir.join(RUN_CONFIG);
    let o = riskbench(&["report", "--config", saved.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(PathBuf::from(String::from_utf8_lossy(&o.stdout).trim()), run_dir);
    assert!(run_dir.join("report/table.csv").is_file());
    assert_eq!(std::fs::read(run_dir.join("metrics.csv")).unwrap(), before);
}
