//! Per-run feature ranks and their aggregation across models and folds.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ig::EpisodeAttribution;
use crate::error::{Error, Result};
use crate::features::FeatureSchema;

/// Mean absolute attribution per feature for one (model, fold) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRanks {
    pub model: String,
    pub fold: usize,
    pub features: Vec<String>,
    pub mean_abs: Vec<f64>,
    /// 1 is most important.
    pub ranks: Vec<usize>,
}

impl RunRanks {
    pub fn new(model: impl Into<String>, fold: usize, features: Vec<String>, mean_abs: Vec<f64>) -> Result<Self> {
        let ranks = rank_scores(&features, &mean_abs)?;
        Ok(Self {
            model: model.into(),
            fold,
            features,
            mean_abs,
            ranks,
        })
    }
}

/// Extends every run to the union of feature names, scoring names a run
/// lacks as zero. Used for codes, whose vocabulary is fitted per fold.
pub fn align_runs(runs: Vec<RunRanks>) -> Result<Vec<RunRanks>> {
    let all: BTreeSet<String> = runs.iter().flat_map(|r| r.features.iter().cloned()).collect();
    runs.into_iter()
        .map(|r| {
            let have: BTreeMap<&str, f64> = r.features.iter().map(String::as_str).zip(r.mean_abs.iter().copied()).collect();
            let names: Vec<String> = all.iter().cloned().collect();
            let scores = names.iter().map(|n| have.get(n.as_str()).copied().unwrap_or(0.0)).collect();
            RunRanks::new(r.model, r.fold, names, scores)
        })
        .collect()
}

/// Column means of `|rows|`.
pub fn mean_abs(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut acc = vec![0.0; width];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v.abs();
        }
    }
    let n = rows.len().max(1) as f64;
    acc.iter().map(|a| a / n).collect()
}

/// Ranks by descending score, ties broken by name, giving a permutation of
/// `1..=n`.
pub fn rank_scores(names: &[String], scores: &[f64]) -> Result<Vec<usize>> {
    if names.len() != scores.len() {
        return Err(Error::Validation(format!(
            "{} feature names for {} scores",
            names.len(),
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("attribution score for `{}`", names[i])));
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| names[a].cmp(&names[b])));
    let mut ranks = vec![0; names.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    Ok(ranks)
}

/// Quantile of sorted data with linear interpolation between order
/// statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = q * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRank {
    pub feature: String,
    pub median_rank: f64,
    pub iqr_lo: f64,
    pub iqr_hi: f64,
}

/// Median and quartiles of each feature's rank over runs, sorted by median
/// rank then name.
pub fn aggregate_ranks(runs: &[RunRanks]) -> Result<Vec<AggregateRank>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Validation("rank aggregation needs at least one run".into()))?;
    let names: BTreeSet<&String> = first.features.iter().collect();
    let mut per_feature: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for run in runs {
        let these: BTreeSet<&String> = run.features.iter().collect();
        if these != names || these.len() != run.features.len() {
            return Err(Error::Schema(format!(
                "feature names of {} fold {} differ from {} fold {}",
                run.model, run.fold, first.model, first.fold
            )));
        }
        for (name, &r) in run.features.iter().zip(&run.ranks) {
            per_feature.entry(name).or_default().push(r as f64);
        }
    }
    let mut out: Vec<AggregateRank> = per_feature
        .into_iter()
        .map(|(feature, mut r)| {
            r.sort_by(f64::total_cmp);
            AggregateRank {
                feature: feature.to_string(),
                median_rank: quantile(&r, 0.5),
                iqr_lo: quantile(&r, 0.25),
                iqr_hi: quantile(&r, 0.75),
            }
        })
        .collect();
    out.sort_by(|a, b| a.median_rank.total_cmp(&b.median_rank).then_with(|| a.feature.cmp(&b.feature)));
    Ok(out)
}

/// `field:code` label for a code token.
pub fn code_label(field: &str, token: &str) -> String {
    format!("{field}:{token}")
}

/// Mean absolute per-code attribution over `attrs`, one entry per known code
/// of every code field (codes absent from an episode contribute zero).
pub fn code_scores(attrs: &[EpisodeAttribution], schema: &FeatureSchema) -> (Vec<String>, Vec<f64>) {
    let mut names = Vec::new();
    let mut offsets = Vec::new();
    for v in &schema.codes {
        offsets.push(names.len());
        names.extend(v.tokens.iter().skip(2).map(|t| code_label(&v.name, t)));
    }
    let mut scores = vec![0.0; names.len()];
    for a in attrs {
        for c in &a.codes {
            if c.token >= 2 {
                scores[offsets[c.field] + c.token - 2] += c.value.abs();
            }
        }
    }
    let n = attrs.len().max(1) as f64;
    scores.iter_mut().for_each(|s| *s /= n);
    (names, scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_runs_share_names() {
        let a = RunRanks::new("m", 0, vec!["x".into(), "y".into()], vec![1.0, 2.0]).unwrap();
        let b = RunRanks::new("m", 1, vec!["y".into(), "z".into()], vec![0.5, 3.0]).unwrap();
        let aligned = align_runs(vec![a, b]).unwrap();
        assert_eq!(aligned[0].features, vec!["x", "y", "z"]);
        assert_eq!(aligned[0].mean_abs, vec![1.0, 2.0, 0.0]);
        assert_eq!(aligned[1].ranks, vec![3, 2, 1]);
        assert!(aggregate_ranks(&aligned).is_ok());
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn ranks_are_a_permutation_with_name_ties() {
        let r = rank_scores(&names(4), &[0.5, 2.0, 0.5, 0.0]).unwrap();
        assert_eq!(r, vec![2, 1, 3, 4]);
    }

    #[test]
    fn single_run_median_is_its_rank() {
        let run = RunRanks::new("m", 0, names(3), vec![1.0, 3.0, 2.0]).unwrap();
        let agg = aggregate_ranks(std::slice::from_ref(&run)).unwrap();
        for a in agg {
            let i = run.features.iter().position(|f| *f == a.feature).unwrap();
            assert_eq!(a.median_rank, run.ranks[i] as f64);
        }
    }

    #[test]
    fn three_run_quartiles() {
        let mut sorted = [9.0, 2.0, 5.0];
        sorted.sort_by(f64::total_cmp);
        assert_eq!(quantile(&sorted, 0.5), 5.0);
        assert_eq!(quantile(&sorted, 0.25), 3.5);
        assert_eq!(quantile(&sorted, 0.75), 7.0);
    }

    #[test]
    fn zero_attribution_ranks_last() {
        let run = RunRanks::new("m", 0, names(3), vec![0.0, 0.1, 0.2]).unwrap();
        assert_eq!(run.ranks[0], 3);
    }

    #[test]
    fn name_mismatch_is_rejected() {
        let a = RunRanks::new("m", 0, names(2), vec![1.0, 2.0]).unwrap();
        let b = RunRanks::new("m", 1, vec!["f0".into(), "g".into()], vec![1.0, 2.0]).unwrap();
        assert!(matches!(aggregate_ranks(&[a, b]), Err(Error::Schema(_))));
    }
}
