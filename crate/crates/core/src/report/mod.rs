//! Output record types and the cross-fold summary tables.

pub mod svg;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::train::metrics::{mean_std, MetricReport};

/// One line of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub task: String,
    pub model: String,
    pub fold: usize,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub rmse: Option<f64>,
}

impl MetricRow {
    pub fn new(task: &str, model: &str, fold: usize, m: &MetricReport) -> Self {
        Self {
            task: task.to_string(),
            model: model.to_string(),
            fold,
            auroc: m.auroc,
            auprc: m.auprc,
            sensitivity: m.sensitivity,
            specificity: m.specificity,
            rmse: m.rmse,
        }
    }
}

/// One line of `predictions.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub episode_id: String,
    pub task: String,
    pub model: String,
    pub fold: usize,
    pub score: f64,
}

/// One line of `attributions.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionRow {
    pub task: String,
    pub model: String,
    pub fold: usize,
    pub feature: String,
    pub mean_abs_attr: f64,
    pub rank: usize,
}

/// One line of `agg_ranks.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggRankRow {
    pub task: String,
    pub feature: String,
    pub median_rank: f64,
    pub iqr_lo: f64,
    pub iqr_hi: f64,
}

/// `mean (std)` cells per (task, model), the shape of a benchmark table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub model: String,
    pub folds: usize,
    pub auroc: String,
    pub auprc: String,
    pub sensitivity: String,
    pub specificity: String,
    pub rmse: String,
}

fn cell(values: impl IntoIterator<Item = Option<f64>>) -> String {
    match mean_std(values.into_iter().flatten()) {
        Some((m, s)) => format!("{m:.3} ({s:.3})"),
        None => String::new(),
    }
}

/// Groups fold rows by (task, model), sorted by task then model.
pub fn summary_table(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(&str, &str), Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((&r.task, &r.model)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((task, model), g)| SummaryRow {
            task: task.to_string(),
            model: model.to_string(),
            folds: g.len(),
            auroc: cell(g.iter().map(|r| r.auroc)),
            auprc: cell(g.iter().map(|r| r.auprc)),
            sensitivity: cell(g.iter().map(|r| r.sensitivity)),
            specificity: cell(g.iter().map(|r| r.specificity)),
            rmse: cell(g.iter().map(|r| r.rmse)),
        })
        .collect()
}

/// Boxplot of per-run ranks for the `top` features with the best median
/// rank.
pub fn rank_boxplot(task: &str, attributions: &[AttributionRow], agg: &[AggRankRow], top: usize) -> String {
    let rows: Vec<(String, Vec<f64>)> = agg
        .iter()
        .filter(|a| a.task == task)
        .take(top)
        .map(|a| {
            let ranks = attributions
                .iter()
                .filter(|r| r.task == task && r.feature == a.feature)
                .map(|r| r.rank as f64)
                .collect();
            (a.feature.clone(), ranks)
        })
        .collect();
    svg::boxplot(
        &format!("Integrated Gradients feature ranks ({task})"),
        "rank across models and folds (lower is more important)",
        &rows,
    )
}
