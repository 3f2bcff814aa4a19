use std::fs;
use std::path::Path;

use riskbench::explain::{IgConfig, TsneConfig};
use riskbench::features::Task;
use riskbench::model::{BackboneKind, ModelConfig};
use riskbench::pipeline::{Run, RunConfig, Stage, RUN_CONFIG};
use riskbench::report::{MetricRow, SummaryRow};
use riskbench::synthgen::GeneratorConfig;
use riskbench::train::TrainConfig;
use riskbench::Error;

fn tiny(models: &[BackboneKind], tasks: &[Task]) -> RunConfig {
    RunConfig {
        tasks: tasks.to_vec(),
        models: models.iter().map(|&k| ModelConfig::for_kind(k)).collect(),
        generator: GeneratorConfig {
            n_patients: 400,
            n_wards: 8,
            cpe_prevalence: 0.04,
            screening_rate: 1.0,
            ..GeneratorConfig::default()
        },
        folds: 2,
        train: TrainConfig {
            max_epochs: 2,
            max_batches_per_epoch: Some(3),
            ..TrainConfig::default()
        },
        ig: IgConfig {
            steps: 16,
            ..IgConfig::default()
        },
        ig_samples: 6,
        tsne_max_points: 40,
        tsne: TsneConfig {
            perplexity: 5.0,
            iters: 150,
            exaggeration_iters: 50,
            ..TsneConfig::default()
        },
        ..RunConfig::default()
    }
}

fn exists(dir: &Path, rel: &str) -> bool {
    dir.join(rel).is_file()
}

#[test]
fn full_pipeline_emits_every_artifact() {
    let out = tempfile::tempdir().unwrap();
    let run = Run::create(out.path(), tiny(&BackboneKind::ALL, &Task::ALL)).unwrap();
    run.run_all().unwrap();
    for rel in [
        RUN_CONFIG,
        "corpus/episodes.csv",
        "corpus/beddays.csv",
        "cohort/cohort.json",
        "network/ward_metrics.csv",
        "network/network_features.csv",
        "features/cpe/schema.json",
        "models/readmit30/tabnet/fold1/schema.json",
        "metrics.csv",
        "predictions.csv",
        "attributions.csv",
        "agg_ranks.csv",
        "explain/completeness.csv",
        "explain/projections.csv",
        "explain/code_agg_ranks.csv",
        "report/table.csv",
        "report/ranks_los.svg",
        "report/code_ranks_cpe.svg",
    ] {
        assert!(exists(&run.dir, rel), "missing {rel}");
    }
    let metrics: Vec<MetricRow> = riskbench::io::read_csv(&run.path("metrics.csv")).unwrap();
    assert_eq!(metrics.len(), 4 * 3 * 2);
    assert!(metrics.iter().filter(|m| m.task == "los").all(|m| m.rmse.is_some() && m.auroc.is_none()));
    let table: Vec<SummaryRow> = riskbench::io::read_csv(&run.path("report/table.csv")).unwrap();
    assert_eq!(table.len(), 12);
    assert!(table.iter().all(|r| r.folds == 2));
}

#[test]
fn single_model_single_fold_report_has_one_block() {
    let out = tempfile::tempdir().unwrap();
    let run = Run::create(out.path(), tiny(&[BackboneKind::Resnet], &[Task::Mortality])).unwrap();
    for stage in [Stage::Generate, Stage::Cohort, Stage::Network, Stage::Featurize, Stage::Train] {
        run.run_stage(stage).unwrap();
    }
    let rows: Vec<MetricRow> = riskbench::io::read_csv(&run.path("metrics.csv")).unwrap();
    let fold0: Vec<MetricRow> = rows.into_iter().filter(|r| r.fold == 0).collect();
    let table = riskbench::report::summary_table(&fold0);
    assert_eq!(table.len(), 1);
    assert_eq!(table[0].folds, 1);
    assert!(table[0].auroc.ends_with("(0.000)"));
}

#[test]
fn missing_upstream_names_the_path() {
    let out = tempfile::tempdir().unwrap();
    let run = Run::create(out.path(), tiny(&[BackboneKind::Resnet], &[Task::Cpe])).unwrap();
    match run.run_stage(Stage::Train) {
        Err(Error::MissingArtifact(p)) => assert!(p.ends_with("stages/featurize.json"), "{}", p.display()),
        other => panic!("expected a missing artifact, got {other:?}"),
    }
}

#[test]
fn stages_from_another_config_are_refused() {
    let out = tempfile::tempdir().unwrap();
    let run = Run::create(out.path(), tiny(&[BackboneKind::Resnet], &[Task::Cpe])).unwrap();
    run.run_stage(Stage::Generate).unwrap();
    run.run_stage(Stage::Cohort).unwrap();

    let mut other_cfg = run.config.clone();
    other_cfg.seed = 99;
    let other = Run {
        dir: run.dir.clone(),
        hash: other_cfg.hash(),
        config: other_cfg,
    };
    assert!(matches!(other.run_stage(Stage::Network), Err(Error::Schema(_))));

    let mut edited: RunConfig = riskbench::io::read_json(&run.path(RUN_CONFIG)).unwrap();
    edited.folds = 3;
    let collide = run.dir.parent().unwrap();
    riskbench::io::write_json(&run.path(RUN_CONFIG), &edited).unwrap();
    assert!(matches!(Run::create(collide, run.config.clone()), Err(Error::Schema(_))));
}

#[test]
fn rerun_reproduces_metrics_and_keeps_upstream() {
    let out = tempfile::tempdir().unwrap();
    let cfg = tiny(&[BackboneKind::Tabtransformer], &[Task::Cpe]);
    let run = Run::create(out.path(), cfg).unwrap();
    run.run_all().unwrap();
    let metrics = fs::read(run.path("metrics.csv")).unwrap();
    let cohort = fs::read(run.path("cohort/cohort.json")).unwrap();

    fs::remove_dir_all(run.path("report")).unwrap();
    fs::remove_file(run.path("agg_ranks.csv")).unwrap();
    assert!(matches!(run.run_stage(Stage::Report), Err(Error::MissingArtifact(_))));
    assert_eq!(fs::read(run.path("cohort/cohort.json")).unwrap(), cohort);

    let again = Run::open(&run.dir).unwrap();
    again.run_stage(Stage::Train).unwrap();
    again.run_stage(Stage::Explain).unwrap();
    again.run_stage(Stage::Report).unwrap();
    assert_eq!(fs::read(run.path("metrics.csv")).unwrap(), metrics);
    assert!(exists(&run.dir, "report/table.csv"));
}

#[test]
fn invalid_configs_are_rejected() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = tiny(&[BackboneKind::Resnet], &[Task::Cpe]);
    cfg.folds = 1;
    assert!(matches!(Run::create(out.path(), cfg), Err(Error::Config(_))));
    let mut cfg = tiny(&[BackboneKind::Resnet, BackboneKind::Resnet], &[Task::Cpe]);
    cfg.ig.steps = 256;
    assert!(matches!(Run::create(out.path(), cfg), Err(Error::Config(_))));
    let mut cfg = tiny(&[BackboneKind::Resnet], &[Task::Cpe]);
    cfg.ig.steps = 4;
    assert!(matches!(Run::create(out.path(), cfg), Err(Error::Config(_))));
}
