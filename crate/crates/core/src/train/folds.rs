use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Patient-grouped, outcome-stratified K-fold assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index of each row, aligned with the input rows.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn validation(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

/// Assigns whole patients to folds. Patients are visited by descending
/// positive count (seeded shuffle within equal counts); a patient with
/// positives joins the fold with the fewest positives so far, others join
/// the fold with the fewest rows. Ties go to the lowest fold index.
pub fn make_folds(patients: &[&str], labels: &[bool], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if patients.len() != labels.len() {
        return Err(Error::Validation("patients and labels differ in length".into()));
    }
    let mut rows_of: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in patients.iter().enumerate() {
        rows_of.entry(p).or_default().push(i);
    }
    if rows_of.len() < k {
        return Err(Error::Validation(format!(
            "{} patients cannot fill {k} folds",
            rows_of.len()
        )));
    }
    let mut groups: Vec<(&str, usize, usize)> = rows_of
        .iter()
        .map(|(p, rows)| (*p, rows.iter().filter(|&&r| labels[r]).count(), rows.len()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    groups.sort_by(|a, b| b.1.cmp(&a.1));

    let mut fold_pos = vec![0usize; k];
    let mut fold_rows = vec![0usize; k];
    let mut assignment = vec![0usize; patients.len()];
    for (patient, positives, n) in groups {
        let fold = if positives > 0 {
            (0..k)
                .min_by_key(|&f| (fold_pos[f], fold_rows[f], f))
                .expect("k >= 2")
        } else {
            (0..k).min_by_key(|&f| (fold_rows[f], f)).expect("k >= 2")
        };
        fold_pos[fold] += positives;
        fold_rows[fold] += n;
        for &r in &rows_of[patient] {
            assignment[r] = fold;
        }
    }
    Ok(FoldPlan { k, assignment })
}
