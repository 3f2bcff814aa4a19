//! Cross-validated training, sampling, losses, and evaluation metrics.

pub mod folds;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod sampling;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::features::{assemble, FeatureMatrix, FeatureSchema, RawRow, Task};
use crate::model::vectors::VectorTable;
use crate::model::{is_frozen_param, Batch, Model, ModelConfig};
use loss::FocalLossConfig;
use metrics::MetricReport;
use optim::{Adam, OptimizerConfig};

pub const THREADS_ENV: &str = "RISKBENCH_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// Class-balanced batches for classification tasks.
    pub balanced: bool,
    pub focal: FocalLossConfig,
    pub optimizer: OptimizerConfig,
    pub threshold: f64,
    /// Caps batches per epoch; unset means `ceil(n / batch_size)`.
    pub max_batches_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            patience: 10,
            batch_size: 256,
            balanced: true,
            focal: FocalLossConfig::default(),
            optimizer: OptimizerConfig::default(),
            threshold: 0.5,
            max_batches_per_epoch: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation AUROC, or negative RMSE for regression; higher is better.
    pub val_score: f64,
}

#[derive(Clone, Debug)]
pub struct Trained {
    /// Parameters from the best validation epoch.
    pub model: Model,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Higher-is-better validation score.
fn validation_score(model: &Model, val: &FeatureMatrix) -> Result<f64> {
    let scores = model.predict(val)?;
    if model.task.is_regression() {
        Ok(-metrics::rmse(&scores, &val.targets())?)
    } else {
        let labels = val.labels(model.task);
        if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
            // no ranking signal; fall back to mean cross-entropy
            let n = labels.len().max(1) as f64;
            Ok(-scores
                .iter()
                .zip(&labels)
                .map(|(&p, &y)| loss::binary_cross_entropy(p, y))
                .sum::<f64>()
                / n)
        } else {
            metrics::auroc(&scores, &labels)
        }
    }
}

/// Trains `model` on `train`, early-stopping on `val`.
pub fn fit(mut model: Model, train: &FeatureMatrix, val: &FeatureMatrix, cfg: &TrainConfig, seed: u64) -> Result<Trained> {
    model.check_matrix(train)?;
    if train.is_empty() {
        return Err(Error::Validation("empty training matrix".into()));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::Config("batch size and epochs must be positive".into()));
    }
    let task = model.task;
    let labels = train.labels(task);
    let targets: Vec<f64> = train.targets().iter().map(|t| t.ln_1p()).collect();
    let mut opt = Adam::new(&model.params, cfg.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (f64::NEG_INFINITY, model.params.clone(), 0usize);
    let mut history = Vec::new();
    let mut since_best = 0;
    for epoch in 0..cfg.max_epochs {
        let epoch_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64);
        let mut batches = if cfg.balanced && !task.is_regression() {
            sampling::balanced_batches(&labels, cfg.batch_size.max(2), epoch_seed)?
        } else {
            sampling::shuffled_batches(train.len(), cfg.batch_size, epoch_seed)
        };
        if let Some(cap) = cfg.max_batches_per_epoch {
            batches.truncate(cap);
        }
        let mut total = 0.0;
        for (bi, idx) in batches.iter().enumerate() {
            let mut g = Graph::new();
            let bound = model.params.bind(&mut g);
            let batch = Batch::from_matrix(train, idx);
            let fw = model.forward(&mut g, &bound, &batch, true, &mut rng)?;
            let loss = if task.is_regression() {
                let pred = g.softplus(fw.logit);
                let t: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
                g.mse(pred, &t)?
            } else {
                let y: Vec<f64> = idx.iter().map(|&i| f64::from(u8::from(labels[i]))).collect();
                g.focal_loss(fw.logit, &y, cfg.focal.gamma, cfg.focal.alpha)?
            };
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {lv} at epoch {epoch}, batch {bi}"
                )));
            }
            total += lv;
            let grads = g.backward(loss)?;
            let grads = model.params.collect_grads(&bound, &grads);
            opt.step(&mut model.params, &grads, is_frozen_param);
        }
        let val_score = validation_score(&model, val)?;
        let train_loss = total / batches.len().max(1) as f64;
        log::debug!("epoch {epoch}: loss {train_loss:.5}, validation {val_score:.4}");
        history.push(EpochLog {
            epoch,
            train_loss,
            val_score,
        });
        if val_score > best.0 {
            best = (val_score, model.params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    model.params = best.1;
    Ok(Trained {
        model,
        history,
        best_epoch: best.2,
    })
}

/// Evaluates scores against the task's labels or targets.
pub fn evaluate(task: Task, scores: &[f64], m: &FeatureMatrix, threshold: f64) -> Result<MetricReport> {
    if task.is_regression() {
        return MetricReport::regression(scores, &m.targets());
    }
    let labels = m.labels(task);
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        // ranking metrics are undefined on a single class
        let (sens, spec) = metrics::sens_spec(scores, &labels, threshold);
        return Ok(MetricReport {
            sensitivity: (positives > 0).then_some(sens),
            specificity: (positives < labels.len()).then_some(spec),
            ..MetricReport::default()
        });
    }
    MetricReport::classification(scores, &labels, threshold)
}

/// Worker count: `RISKBENCH_THREADS` when set, else the machine's parallelism.
pub fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
}

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
/// Results keep index order.
pub fn par_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let threads = thread_cap();
        if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
    }
    (0..n).map(f).collect()
}

#[derive(Clone, Debug)]
pub struct CvSpec<'a> {
    pub task: Task,
    pub model: &'a ModelConfig,
    pub train: &'a TrainConfig,
    pub folds: usize,
    pub seed: u64,
    pub code_vectors: Option<&'a VectorTable>,
    pub text_vectors: Option<&'a VectorTable>,
}

#[derive(Clone, Debug)]
pub struct FoldOutput {
    pub fold: usize,
    pub model: Model,
    /// Schema fitted on this fold's training rows only.
    pub schema: FeatureSchema,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub validation_ids: Vec<String>,
    pub validation: MetricReport,
    pub test: MetricReport,
    pub test_ids: Vec<String>,
    pub test_scores: Vec<f64>,
    /// Test matrix under this fold's schema.
    pub test_matrix: FeatureMatrix,
}

/// Seed for one fold's initialisation and batching.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(fold as u64)
}

/// Patient-grouped K-fold training on `train_rows`, each fold scored on
/// `test_rows`. Rows must already be restricted to the task.
pub fn cross_validate(train_rows: &[RawRow], test_rows: &[RawRow], spec: &CvSpec) -> Result<Vec<FoldOutput>> {
    let labels: Vec<bool> = train_rows
        .iter()
        .map(|r| match spec.task {
            Task::Readmit30 => r.readmit_30d,
            Task::Mortality => r.mortality,
            Task::Cpe => r.cpe_positive.unwrap_or(false),
            Task::Los => r.next_los.is_some_and(|v| v > 7.0),
        })
        .collect();
    let patients: Vec<&str> = train_rows.iter().map(|r| r.patient_id.as_str()).collect();
    let plan = folds::make_folds(&patients, &labels, spec.folds, spec.seed)?;
    par_map(spec.folds, |f| {
        let pick = |idx: Vec<usize>| -> Vec<RawRow> { idx.into_iter().map(|i| train_rows[i].clone()).collect() };
        let fold_train = pick(plan.train(f));
        let fold_val = pick(plan.validation(f));
        let (train_m, schema) = assemble(&fold_train, spec.task, None)?;
        let (val_m, _) = assemble(&fold_val, spec.task, Some(&schema))?;
        let (test_m, _) = assemble(test_rows, spec.task, Some(&schema))?;
        let seed = fold_seed(spec.seed, f);
        let model = Model::new(spec.model.clone(), &schema, spec.code_vectors, spec.text_vectors, seed)?;
        let trained = fit(model, &train_m, &val_m, spec.train, seed)?;
        let val_scores = trained.model.predict(&val_m)?;
        let test_scores = trained.model.predict(&test_m)?;
        log::info!(
            "{} {} fold {f}: best epoch {} of {}",
            spec.task.name(),
            spec.model.backbone.kind.name(),
            trained.best_epoch,
            trained.history.len()
        );
        Ok(FoldOutput {
            fold: f,
            validation: evaluate(spec.task, &val_scores, &val_m, spec.train.threshold)?,
            test: evaluate(spec.task, &test_scores, &test_m, spec.train.threshold)?,
            validation_ids: val_m.episode_ids.clone(),
            test_ids: test_m.episode_ids.clone(),
            test_scores,
            test_matrix: test_m,
            model: trained.model,
            schema,
            history: trained.history,
            best_epoch: trained.best_epoch,
        })
    })
}
