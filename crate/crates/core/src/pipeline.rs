//! Stage orchestration over a run directory keyed by the config hash.
//!
//! Layout of a run directory:
//!
//! ```text
//! run_config.json   stages/<stage>.json
//! corpus/   cohort/   network/   features/<task>/   models/<task>/<model>/fold<k>/
//! metrics.csv   predictions.csv   attributions.csv   agg_ranks.csv
//! explain/   report/
//! ```

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::ranks::{align_runs, code_scores, mean_abs};
use crate::explain::{
    aggregate_ranks, integrated_gradients, nn1_accuracy, patient_heatmap, project_embeddings, AggregateRank,
    IgConfig, RunRanks, TsneConfig,
};
use crate::features::{assemble, features_csv, raw_rows, task_rows, ward_transfer_counts, FeatureMatrix, FeatureSchema, RawRow, Task};
use crate::io::{read_csv, read_json, sha256_hex, write_atomic, write_csv, write_json};
use crate::model::vectors::VectorTable;
use crate::model::{BackboneKind, Model, ModelConfig};
use crate::network::{compute_network_features, daily_edges_csv, NetworkFeatures, PageRankConfig, WardMetrics};
use crate::records::{apply_filters, chronological_split, derive_labels, parse_records, Cohort};
use crate::report::{rank_boxplot, summary_table, svg, AggRankRow, AttributionRow, MetricRow, PredictionRow};
use crate::synthgen::{generate, GeneratorConfig};
use crate::train::{cross_validate, par_map, CvSpec, TrainConfig};

pub const RUN_CONFIG: &str = "run_config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Directory with `episodes.csv` and `beddays.csv`; a corpus is
    /// generated when unset.
    pub input: Option<PathBuf>,
    pub tasks: Vec<Task>,
    pub models: Vec<ModelConfig>,
    pub seed: u64,
    pub folds: usize,
    pub train_fraction: f64,
    pub generator: GeneratorConfig,
    pub pagerank: PageRankConfig,
    pub train: TrainConfig,
    pub ig: IgConfig,
    /// Test episodes explained per fold model.
    pub ig_samples: usize,
    pub tsne: TsneConfig,
    /// Cap on projected episodes per model.
    pub tsne_max_points: usize,
    pub heatmap_patients: usize,
    /// Also write one contact-edge CSV per day.
    pub emit_graphs: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            tasks: Task::ALL.to_vec(),
            models: BackboneKind::ALL.iter().map(|&k| ModelConfig::for_kind(k)).collect(),
            seed: 0,
            folds: 5,
            train_fraction: 0.9,
            generator: GeneratorConfig::default(),
            pagerank: PageRankConfig::default(),
            train: TrainConfig::default(),
            ig: IgConfig::default(),
            ig_samples: 200,
            tsne: TsneConfig::default(),
            tsne_max_points: 600,
            heatmap_patients: 1,
            emit_graphs: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() || self.models.is_empty() {
            return Err(Error::Config("at least one task and one model are required".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction {} outside (0, 1)", self.train_fraction)));
        }
        let mut kinds = HashSet::new();
        for m in &self.models {
            m.validate()?;
            if !kinds.insert(m.backbone.kind) {
                return Err(Error::Config(format!("model {} listed twice", m.backbone.kind.name())));
            }
        }
        self.ig.validate()?;
        if self.input.is_none() {
            self.generator.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Generate,
    Cohort,
    Network,
    Featurize,
    Train,
    Explain,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Generate,
        Stage::Cohort,
        Stage::Network,
        Stage::Featurize,
        Stage::Train,
        Stage::Explain,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Cohort => "cohort",
            Stage::Network => "network",
            Stage::Featurize => "featurize",
            Stage::Train => "train",
            Stage::Explain => "explain",
            Stage::Report => "report",
        }
    }

    /// Stages whose outputs this one reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Generate => &[],
            Stage::Cohort => &[],
            Stage::Network => &[Stage::Cohort],
            Stage::Featurize => &[Stage::Cohort, Stage::Network],
            Stage::Train => &[Stage::Featurize],
            Stage::Explain => &[Stage::Featurize, Stage::Train],
            Stage::Report => &[Stage::Train, Stage::Explain],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StageRecord {
    stage: Stage,
    config_hash: String,
}

/// A run directory and its configuration.
#[derive(Clone, Debug)]
pub struct Run {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub hash: String,
}

impl Run {
    /// `out/run-<hash prefix>`, writing `run_config.json` on first use.
    pub fn create(out: &Path, config: RunConfig) -> Result<Self> {
        config.validate()?;
        let hash = config.hash();
        let dir = out.join(format!("run-{}", &hash[..12]));
        let path = dir.join(RUN_CONFIG);
        if path.exists() {
            let existing: RunConfig = read_json(&path)?;
            if existing.hash() != hash {
                return Err(Error::Schema(format!("{} belongs to a different configuration", path.display())));
            }
        } else {
            write_json(&path, &config)?;
        }
        Ok(Self { dir, config, hash })
    }

    /// Opens the run whose `run_config.json` lives in `dir`.
    pub fn open(dir: &Path) -> Result<Self> {
        let config: RunConfig = read_json(&dir.join(RUN_CONFIG))?;
        config.validate()?;
        let hash = config.hash();
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            hash,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn corpus_dir(&self) -> PathBuf {
        self.config.input.clone().unwrap_or_else(|| self.path("corpus"))
    }

    fn stage_path(&self, stage: Stage) -> PathBuf {
        self.path(&format!("stages/{}.json", stage.name()))
    }

    fn require(&self, stage: Stage) -> Result<()> {
        let rec: StageRecord = read_json(&self.stage_path(stage))?;
        if rec.config_hash != self.hash {
            return Err(Error::Schema(format!(
                "stage `{}` was produced under config {} but this run is {}; refusing to mix",
                stage.name(),
                &rec.config_hash[..12.min(rec.config_hash.len())],
                &self.hash[..12]
            )));
        }
        Ok(())
    }

    fn mark(&self, stage: Stage) -> Result<()> {
        write_json(
            &self.stage_path(stage),
            &StageRecord {
                stage,
                config_hash: self.hash.clone(),
            },
        )
    }

    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        for &up in stage.upstream() {
            self.require(up)?;
        }
        log::info!("stage {}", stage.name());
        match stage {
            Stage::Generate => self.generate()?,
            Stage::Cohort => self.cohort()?,
            Stage::Network => self.network()?,
            Stage::Featurize => self.featurize()?,
            Stage::Train => self.train()?,
            Stage::Explain => self.explain()?,
            Stage::Report => self.report()?,
        }
        self.mark(stage)
    }

    /// Every stage in order; generation is skipped when an input is given.
    pub fn run_all(&self) -> Result<()> {
        for stage in Stage::ALL {
            if stage == Stage::Generate && self.config.input.is_some() {
                continue;
            }
            self.run_stage(stage)?;
        }
        Ok(())
    }

    fn generate(&self) -> Result<()> {
        if self.config.input.is_some() {
            return Err(Error::Config("an input corpus is configured; nothing to generate".into()));
        }
        let corpus = generate(&self.config.generator)?;
        corpus.write(&self.path("corpus"))
    }

    fn cohort(&self) -> Result<()> {
        if self.config.input.is_none() {
            self.require(Stage::Generate)?;
        }
        let (episodes, _) = parse_records(&self.corpus_dir())?;
        let labeled = derive_labels(&episodes)?;
        let filtered = apply_filters(&labeled);
        let cohort = chronological_split(&filtered, self.config.train_fraction)?;
        let summary = serde_json::json!({
            "raw_episodes": episodes.len(),
            "cohort_episodes": cohort.episodes.len(),
            "train_episodes": cohort.train_ids.len(),
            "test_episodes": cohort.test_ids.len(),
            "split_date": cohort.split_date,
        });
        write_json(&self.path("cohort/summary.json"), &summary)?;
        write_json(&self.path("cohort/cohort.json"), &cohort)
    }

    fn network(&self) -> Result<()> {
        let (episodes, beddays) = parse_records(&self.corpus_dir())?;
        let cohort: Cohort = read_json(&self.path("cohort/cohort.json"))?;
        let window: HashSet<&str> = cohort.train_ids.iter().map(String::as_str).collect();
        let (features, contacts, wards) = compute_network_features(&episodes, &beddays, &window, &self.config.pagerank)?;
        let metrics = WardMetrics::compute(&wards, &self.config.pagerank)?;

        #[derive(Serialize)]
        struct WardRow<'a> {
            ward: &'a str,
            pagerank: f64,
            degree_centrality: f64,
            closeness_centrality: f64,
        }
        let ward_rows: Vec<WardRow> = metrics
            .pagerank
            .iter()
            .map(|(w, &pr)| WardRow {
                ward: w,
                pagerank: pr,
                degree_centrality: metrics.degree.get(w).copied().unwrap_or(0.0),
                closeness_centrality: metrics.closeness.get(w).copied().unwrap_or(0.0),
            })
            .collect();
        write_csv(&self.path("network/ward_metrics.csv"), &ward_rows)?;

        #[derive(Serialize)]
        struct TransferRow<'a> {
            from: &'a str,
            to: &'a str,
            weight: f64,
        }
        let mut transfers = Vec::new();
        for a in wards.wards() {
            for b in wards.wards() {
                let weight = wards.weight(a, b);
                if weight > 0.0 {
                    transfers.push(TransferRow { from: a, to: b, weight });
                }
            }
        }
        write_csv(&self.path("network/ward_transfers.csv"), &transfers)?;

        let mut text = String::from("episode_id");
        for n in NetworkFeatures::NAMES {
            text.push(',');
            text.push_str(n);
        }
        text.push('\n');
        for (id, f) in &features {
            text.push_str(id);
            for v in f.values() {
                text.push(',');
                text.push_str(&v.to_string());
            }
            text.push('\n');
        }
        write_atomic(&self.path("network/network_features.csv"), text.as_bytes())?;
        write_json(&self.path("network/network_features.json"), &features)?;
        if self.config.emit_graphs {
            for day in contacts.days() {
                write_atomic(
                    &self.path(&format!("network/daily/{}.csv", day.date)),
                    daily_edges_csv(day)?.as_bytes(),
                )?;
            }
        }
        Ok(())
    }

    fn featurize(&self) -> Result<()> {
        let (episodes, beddays) = parse_records(&self.corpus_dir())?;
        let labeled = derive_labels(&episodes)?;
        let cohort: Cohort = read_json(&self.path("cohort/cohort.json"))?;
        let network: BTreeMap<String, NetworkFeatures> = read_json(&self.path("network/network_features.json"))?;
        let transfers = ward_transfer_counts(&beddays);
        let train: Vec<_> = cohort.train().cloned().collect();
        let test: Vec<_> = cohort.test().cloned().collect();
        let train_rows = raw_rows(&train, &labeled, &network, &transfers)?;
        let test_rows = raw_rows(&test, &labeled, &network, &transfers)?;
        for &task in &self.config.tasks {
            let tr = task_rows(&train_rows, task);
            let te = task_rows(&test_rows, task);
            let dir = format!("features/{}", task.name());
            let (m, schema) = assemble(&tr, task, None)?;
            write_json(&self.path(&format!("{dir}/train_rows.json")), &tr)?;
            write_json(&self.path(&format!("{dir}/test_rows.json")), &te)?;
            write_json(&self.path(&format!("{dir}/schema.json")), &schema)?;
            write_atomic(&self.path(&format!("{dir}/features.csv")), features_csv(&m, &schema)?.as_bytes())?;
        }
        Ok(())
    }

    fn rows(&self, task: Task, split: &str) -> Result<Vec<RawRow>> {
        read_json(&self.path(&format!("features/{}/{split}_rows.json", task.name())))
    }

    fn fold_dir(&self, task: Task, kind: BackboneKind, fold: usize) -> PathBuf {
        self.path(&format!("models/{}/{}/fold{fold}", task.name(), kind.name()))
    }

    fn train(&self) -> Result<()> {
        let cfg = &self.config;
        let mut metrics = Vec::new();
        let mut predictions = Vec::new();
        for &task in &cfg.tasks {
            let train_rows = self.rows(task, "train")?;
            let test_rows = self.rows(task, "test")?;
            for mc in &cfg.models {
                let code_vectors = mc.encoder.code_vectors.as_deref().map(VectorTable::load).transpose()?;
                let text_vectors = mc.encoder.text_vectors.as_deref().map(VectorTable::load).transpose()?;
                let spec = CvSpec {
                    task,
                    model: mc,
                    train: &cfg.train,
                    folds: cfg.folds,
                    seed: cfg.seed,
                    code_vectors: code_vectors.as_ref(),
                    text_vectors: text_vectors.as_ref(),
                };
                let kind = mc.backbone.kind;
                for out in cross_validate(&train_rows, &test_rows, &spec)? {
                    let dir = self.fold_dir(task, kind, out.fold);
                    out.model.save(&dir)?;
                    write_json(&dir.join("schema.json"), &out.schema)?;
                    write_json(&dir.join("validation_ids.json"), &out.validation_ids)?;
                    write_csv(&dir.join("history.csv"), &out.history)?;
                    metrics.push(MetricRow::new(task.name(), kind.name(), out.fold, &out.test));
                    predictions.extend(out.test_ids.iter().zip(&out.test_scores).map(|(id, &score)| PredictionRow {
                        episode_id: id.clone(),
                        task: task.name().to_string(),
                        model: kind.name().to_string(),
                        fold: out.fold,
                        score,
                    }));
                }
            }
        }
        write_csv(&self.path("metrics.csv"), &metrics)?;
        write_csv(&self.path("predictions.csv"), &predictions)
    }

    fn load_fold(&self, task: Task, kind: BackboneKind, fold: usize) -> Result<(Model, FeatureSchema)> {
        let dir = self.fold_dir(task, kind, fold);
        let model = Model::load(&dir)?;
        let schema: FeatureSchema = read_json(&dir.join("schema.json"))?;
        Ok((model, schema))
    }

    fn explain(&self) -> Result<()> {
        let cfg = &self.config;
        let mut attributions = Vec::new();
        let mut agg_rows = Vec::new();
        let mut code_attr = Vec::new();
        let mut code_agg = Vec::new();
        let mut completeness = Vec::new();
        let mut projections = Vec::new();
        for &task in &cfg.tasks {
            let test_rows = self.rows(task, "test")?;
            let mut runs = Vec::new();
            let mut code_runs = Vec::new();
            for mc in &cfg.models {
                let kind = mc.backbone.kind;
                let per_fold = par_map(cfg.folds, |fold| {
                    let (model, schema) = self.load_fold(task, kind, fold)?;
                    let (m, _) = assemble(&test_rows, task, Some(&schema))?;
                    let rows = ig_rows(&m, task, cfg.ig_samples, cfg.seed ^ fold as u64);
                    let attrs = integrated_gradients(&model, &m, &rows, &cfg.ig)?;
                    let names = model.dims.feature_names();
                    let per_row: Vec<Vec<f64>> = attrs.iter().map(|a| a.features.clone()).collect();
                    let scores = mean_abs(&per_row, names.len());
                    let (mut code_names, mut codes) = code_scores(&attrs, &schema);
                    if cfg.ig.joint_code_ranking {
                        code_names.splice(0..0, names.iter().cloned());
                        codes.splice(0..0, scores.iter().copied());
                    }
                    let run = RunRanks::new(kind.name(), fold, names, scores)?;
                    let code_run = RunRanks::new(kind.name(), fold, code_names, codes)?;
                    let worst = attrs.iter().map(|a| a.residual).fold(0.0, f64::max);
                    let worst_rel = attrs
                        .iter()
                        .map(|a| a.residual / (1.0 + (a.output - a.baseline_output).abs()))
                        .fold(0.0, f64::max);
                    let check = CompletenessRow {
                        task: task.name().to_string(),
                        model: kind.name().to_string(),
                        fold,
                        samples: attrs.len(),
                        steps: cfg.ig.steps,
                        max_residual: worst,
                        max_relative_residual: worst_rel,
                    };
                    Ok((run, code_run, check))
                })?;
                for (run, code_run, check) in per_fold {
                    runs.push(run);
                    code_runs.push(code_run);
                    completeness.push(check);
                }
                if !task.is_regression() {
                    projections.push(self.projection(task, kind)?);
                }
            }
            attributions.extend(attribution_rows(task, &runs));
            agg_rows.extend(agg_rank_rows(task, &aggregate_ranks(&runs)?));
            let code_runs = align_runs(code_runs)?;
            code_attr.extend(attribution_rows(task, &code_runs));
            code_agg.extend(agg_rank_rows(task, &aggregate_ranks(&code_runs)?));
            if task == Task::Readmit30 {
                self.heatmaps(&test_rows)?;
            }
        }
        write_csv(&self.path("attributions.csv"), &attributions)?;
        write_csv(&self.path("agg_ranks.csv"), &agg_rows)?;
        write_csv(&self.path("explain/code_attributions.csv"), &code_attr)?;
        write_csv(&self.path("explain/code_agg_ranks.csv"), &code_agg)?;
        write_csv(&self.path("explain/completeness.csv"), &completeness)?;
        write_csv(&self.path("explain/projections.csv"), &projections)
    }

    /// t-SNE of fold-0 representations for the task's cohort episodes: all
    /// positives and as many sampled negatives.
    fn projection(&self, task: Task, kind: BackboneKind) -> Result<ProjectionRow> {
        let cfg = &self.config;
        let (model, schema) = self.load_fold(task, kind, 0)?;
        let mut rows = self.rows(task, "train")?;
        rows.extend(self.rows(task, "test")?);
        let (m, _) = assemble(&rows, task, Some(&schema))?;
        let labels = m.labels(task);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.tsne.seed);
        let mut pos: Vec<usize> = (0..m.len()).filter(|&i| labels[i]).collect();
        let mut neg: Vec<usize> = (0..m.len()).filter(|&i| !labels[i]).collect();
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let k = pos.len().min(neg.len()).min(cfg.tsne_max_points / 2);
        let mut pick: Vec<usize> = pos[..k].iter().chain(&neg[..k]).copied().collect();
        pick.sort_unstable();
        let sub = m.select(&pick);
        let reps = model.representations(&sub)?;
        let n = pick.len();
        let perplexity = cfg.tsne.perplexity.min(n as f64 / 3.0 - 1.0);
        let tag = format!("{}_{}", task.name(), kind.name());
        if perplexity < 1.0 {
            log::warn!("{tag}: {n} points are too few to project");
            return Ok(ProjectionRow {
                task: task.name().to_string(),
                model: kind.name().to_string(),
                points: n,
                perplexity: f64::NAN,
                kl: f64::NAN,
                nn1_accuracy: f64::NAN,
            });
        }
        let tcfg = TsneConfig {
            perplexity,
            ..cfg.tsne.clone()
        };
        let proj = project_embeddings(&reps, &tcfg)?;
        let sub_labels = sub.labels(task);
        let acc = nn1_accuracy(&proj.coords, &sub_labels);

        #[derive(Serialize)]
        struct Coord<'a> {
            episode_id: &'a str,
            x: f64,
            y: f64,
            label: bool,
        }
        let coords: Vec<Coord> = proj
            .coords
            .iter()
            .zip(&sub.episode_ids)
            .zip(&sub_labels)
            .map(|((c, id), &label)| Coord {
                episode_id: id,
                x: c[0],
                y: c[1],
                label,
            })
            .collect();
        write_csv(&self.path(&format!("explain/tsne_{tag}.csv")), &coords)?;
        let points: Vec<([f64; 2], bool)> = proj.coords.iter().copied().zip(sub_labels.iter().copied()).collect();
        write_atomic(
            &self.path(&format!("explain/tsne_{tag}.svg")),
            svg::scatter(&format!("t-SNE of {} representations ({}), positives in red", kind.name(), task.name()), &points)
                .as_bytes(),
        )?;
        Ok(ProjectionRow {
            task: task.name().to_string(),
            model: kind.name().to_string(),
            points: n,
            perplexity,
            kl: proj.kl,
            nn1_accuracy: acc,
        })
    }

    /// Heatmaps for the test patients with the most episodes, explained by
    /// the first configured model's fold 0.
    fn heatmaps(&self, test_rows: &[RawRow]) -> Result<()> {
        let cfg = &self.config;
        let kind = cfg.models[0].backbone.kind;
        let (model, schema) = self.load_fold(Task::Readmit30, kind, 0)?;
        let (m, _) = assemble(test_rows, Task::Readmit30, Some(&schema))?;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &m.patient_ids {
            *counts.entry(p).or_default() += 1;
        }
        let mut patients: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= 2).collect();
        patients.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        for (patient, _) in patients.into_iter().take(cfg.heatmap_patients) {
            let hm = patient_heatmap(&model, &schema, &m, patient, &cfg.ig)?;
            let cols: Vec<String> = hm
                .episode_ids
                .iter()
                .zip(&hm.admission_dates)
                .map(|(e, d)| format!("{d} {e}"))
                .collect();
            let mut text = String::from("group");
            for c in &hm.episode_ids {
                text.push(',');
                text.push_str(c);
            }
            text.push('\n');
            for (g, row) in hm.groups.iter().zip(&hm.cells) {
                text.push_str(g);
                for v in row {
                    text.push(',');
                    text.push_str(&v.to_string());
                }
                text.push('\n');
            }
            write_atomic(&self.path(&format!("explain/heatmap_{patient}.csv")), text.as_bytes())?;
            write_atomic(
                &self.path(&format!("explain/heatmap_{patient}.svg")),
                svg::heatmap(
                    &format!("Readmission IG by ICD chapter, patient {patient}"),
                    &hm.groups,
                    &cols,
                    &hm.cells,
                )
                .as_bytes(),
            )?;
        }
        Ok(())
    }

    fn report(&self) -> Result<()> {
        let metrics: Vec<MetricRow> = read_csv(&self.path("metrics.csv"))?;
        write_csv(&self.path("report/table.csv"), &summary_table(&metrics))?;
        let attributions: Vec<AttributionRow> = read_csv(&self.path("attributions.csv"))?;
        let agg: Vec<AggRankRow> = read_csv(&self.path("agg_ranks.csv"))?;
        for task in &self.config.tasks {
            write_atomic(
                &self.path(&format!("report/ranks_{}.svg", task.name())),
                rank_boxplot(task.name(), &attributions, &agg, 20).as_bytes(),
            )?;
        }
        let code_attr: Vec<AttributionRow> = read_csv(&self.path("explain/code_attributions.csv"))?;
        let code_agg: Vec<AggRankRow> = read_csv(&self.path("explain/code_agg_ranks.csv"))?;
        for task in &self.config.tasks {
            write_atomic(
                &self.path(&format!("report/code_ranks_{}.svg", task.name())),
                rank_boxplot(task.name(), &code_attr, &code_agg, 20).as_bytes(),
            )?;
        }
        Ok(())
    }
}

/// Integrated Gradients completeness summary for one fold model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletenessRow {
    pub task: String,
    pub model: String,
    pub fold: usize,
    pub samples: usize,
    pub steps: usize,
    pub max_residual: f64,
    pub max_relative_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub task: String,
    pub model: String,
    pub points: usize,
    pub perplexity: f64,
    pub kl: f64,
    pub nn1_accuracy: f64,
}

/// Rows to explain: for classification up to half positives, the rest
/// negatives; for regression a plain sample. Returned in matrix order.
pub fn ig_rows(m: &FeatureMatrix, task: Task, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = if task.is_regression() {
        let mut all: Vec<usize> = (0..m.len()).collect();
        all.shuffle(&mut rng);
        all.truncate(n);
        all
    } else {
        let labels = m.labels(task);
        let mut pos: Vec<usize> = (0..m.len()).filter(|&i| labels[i]).collect();
        let mut neg: Vec<usize> = (0..m.len()).filter(|&i| !labels[i]).collect();
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        pos.truncate(n / 2);
        neg.truncate(n - pos.len());
        pos.extend(neg);
        pos
    };
    pick.sort_unstable();
    pick
}

fn attribution_rows(task: Task, runs: &[RunRanks]) -> Vec<AttributionRow> {
    runs.iter()
        .flat_map(|r| {
            r.features.iter().zip(&r.mean_abs).zip(&r.ranks).map(move |((f, &v), &rank)| AttributionRow {
                task: task.name().to_string(),
                model: r.model.clone(),
                fold: r.fold,
                feature: f.clone(),
                mean_abs_attr: v,
                rank,
            })
        })
        .collect()
}

fn agg_rank_rows(task: Task, agg: &[AggregateRank]) -> Vec<AggRankRow> {
    agg.iter()
        .map(|a| AggRankRow {
            task: task.name().to_string(),
            feature: a.feature.clone(),
            median_rank: a.median_rank,
            iqr_lo: a.iqr_lo,
            iqr_hi: a.iqr_hi,
        })
        .collect()
}
