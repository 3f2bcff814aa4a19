//! Threshold-free ranking metrics and confusion-matrix rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y).count();
    (pos, labels.len() - pos)
}

fn check_inputs(scores: &[f64], labels: &[bool], what: &str) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{what}: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("{what}: score")));
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::Validation(format!(
            "{what} needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    Ok((pos, neg))
}

/// Indices sorted by score, with `[start, end)` runs of tied scores.
fn tie_groups(scores: &[f64], descending: bool) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let c = scores[a].total_cmp(&scores[b]);
        if descending {
            c.reverse()
        } else {
            c
        }
    });
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || scores[order[i]] != scores[order[start]] {
            groups.push((start, i));
            start = i;
        }
    }
    (order, groups)
}

/// Area under the ROC curve via the Mann–Whitney U statistic with mid-ranks
/// for ties.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels, "auroc")?;
    let (order, groups) = tie_groups(scores, false);
    let mut pos_rank_sum = 0.0;
    for (start, end) in groups {
        let mid_rank = (start + end + 1) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&i| labels[i]).count();
        pos_rank_sum += mid_rank * positives as f64;
    }
    let u = pos_rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Average precision: sum over distinct thresholds of the recall increment
/// times precision at that threshold.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels, "auprc")?;
    let (order, groups) = tie_groups(scores, true);
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for (start, end) in groups {
        let new_tp = order[start..end].iter().filter(|&&i| labels[i]).count();
        tp += new_tp;
        seen += end - start;
        if new_tp > 0 {
            ap += (new_tp as f64 / pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

/// `(TP / (TP + FN), TN / (TN + FP))`, predicting positive when
/// `score >= threshold`. A rate with an empty denominator is NaN.
pub fn sens_spec(scores: &[f64], labels: &[bool], threshold: f64) -> (f64, f64) {
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => tp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
        }
    }
    let rate = |a: usize, b: usize| {
        if a + b == 0 {
            f64::NAN
        } else {
            a as f64 / (a + b) as f64
        }
    };
    (rate(tp, fn_), rate(tn, fp))
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::Validation(format!(
            "rmse: {} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let mse = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predictions.len() as f64;
    Ok(mse.sqrt())
}

/// Metrics of one (task, model, fold) evaluation. Classification tasks
/// leave `rmse` unset, regression leaves the rest unset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub rmse: Option<f64>,
}

impl MetricReport {
    pub fn classification(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Self> {
        let (sens, spec) = sens_spec(scores, labels, threshold);
        Ok(Self {
            auroc: Some(auroc(scores, labels)?),
            auprc: Some(auprc(scores, labels)?),
            sensitivity: Some(sens),
            specificity: Some(spec),
            rmse: None,
        })
    }

    pub fn regression(predictions: &[f64], targets: &[f64]) -> Result<Self> {
        Ok(Self {
            rmse: Some(rmse(predictions, targets)?),
            ..Self::default()
        })
    }
}

/// Mean and sample standard deviation of the present values.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let s = [0.9, 0.8, 0.3, 0.2];
        let y = [true, true, false, false];
        assert_eq!(auroc(&s, &y).unwrap(), 1.0);
        assert_eq!(auprc(&s, &y).unwrap(), 1.0);
    }

    #[test]
    fn half_concordant() {
        let s = [0.9, 0.3, 0.8, 0.2];
        let y = [true, false, false, true];
        assert_eq!(auroc(&s, &y).unwrap(), 0.5);
    }

    #[test]
    fn all_tied_scores() {
        let s = [0.4; 6];
        let y = [true, false, true, false, false, false];
        assert_eq!(auroc(&s, &y).unwrap(), 0.5);
        assert!((auprc(&s, &y).unwrap() - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(auprc(&[0.1, 0.2], &[false, false]).is_err());
    }

    #[test]
    fn sensitivity_specificity_examples() {
        let y = [true, true, false, false];
        assert_eq!(sens_spec(&[0.9, 0.8, 0.1, 0.2], &y, 0.5), (1.0, 1.0));
        assert_eq!(sens_spec(&[0.1, 0.2, 0.1, 0.2], &y, 0.5), (0.0, 1.0));
        let mut scores = vec![0.9, 0.1];
        scores.extend([0.2; 8]);
        let mut labels = vec![true, true];
        labels.extend([false; 8]);
        assert_eq!(sens_spec(&scores, &labels, 0.5), (0.5, 1.0));
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
        let t = [1.0, 4.0, 7.0, 10.0];
        let mean = 5.5;
        let pop_std = (t.iter().map(|x: &f64| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((rmse(&[mean; 4], &t).unwrap() - pop_std).abs() < 1e-12);
        assert!(rmse(&[], &[]).is_err());
    }
}
