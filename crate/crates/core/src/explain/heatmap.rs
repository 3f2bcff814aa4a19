//! Per-patient episode-by-chapter attribution heatmaps.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::ig::{integrated_gradients, IgConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSchema, Task};
use crate::model::Model;

pub const DIAGNOSIS_FIELD: &str = "diagnosis_codes";

/// ICD-10 chapter key: the code's leading letter.
pub fn icd_chapter(code: &str) -> String {
    code.chars().next().map(|c| c.to_ascii_uppercase().to_string()).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeatmap {
    pub patient_id: String,
    /// Columns, in admission order.
    pub episode_ids: Vec<String>,
    pub admission_dates: Vec<NaiveDate>,
    /// Rows: ICD chapters of the model's diagnosis vocabulary.
    pub groups: Vec<String>,
    /// `cells[group][episode]`: summed `|IG|` of that chapter's codes.
    pub cells: Vec<Vec<f64>>,
}

/// One IG run per episode of `patient_id` toward readmission probability,
/// pooled to ICD chapters.
pub fn patient_heatmap(
    model: &Model,
    schema: &FeatureSchema,
    m: &FeatureMatrix,
    patient_id: &str,
    cfg: &IgConfig,
) -> Result<EpisodeHeatmap> {
    if model.task != Task::Readmit30 {
        return Err(Error::Config(format!(
            "heatmaps explain readmission models, got a {} model",
            model.task.name()
        )));
    }
    let field = model
        .dims
        .codes
        .iter()
        .position(|(n, _)| n == DIAGNOSIS_FIELD)
        .ok_or_else(|| Error::Schema(format!("model has no `{DIAGNOSIS_FIELD}` input")))?;
    let mut rows: Vec<usize> = (0..m.len()).filter(|&i| m.patient_ids[i] == patient_id).collect();
    if rows.len() < 2 {
        return Err(Error::Validation(format!(
            "patient {patient_id} has {} episode(s); a heatmap needs at least 2",
            rows.len()
        )));
    }
    rows.sort_by(|&a, &b| (m.admission_dates[a], &m.episode_ids[a]).cmp(&(m.admission_dates[b], &m.episode_ids[b])));

    if schema.hash() != model.schema_hash {
        return Err(Error::Schema("heatmap schema differs from the model's".into()));
    }
    let vocab = schema
        .codes
        .iter()
        .find(|v| v.name == DIAGNOSIS_FIELD)
        .ok_or_else(|| Error::Schema(format!("schema has no `{DIAGNOSIS_FIELD}` vocabulary")))?;
    let chapter_of: Vec<String> = vocab.tokens.iter().map(|t| icd_chapter(t)).collect();
    let groups: Vec<String> = chapter_of.iter().skip(2).cloned().collect::<BTreeSet<_>>().into_iter().collect();

    let attrs = integrated_gradients(model, m, &rows, cfg)?;
    let mut cells = vec![vec![0.0; rows.len()]; groups.len()];
    for (col, a) in attrs.iter().enumerate() {
        for c in a.codes.iter().filter(|c| c.field == field && c.token >= 2) {
            let g = groups.binary_search(&chapter_of[c.token]).expect("chapter listed");
            cells[g][col] += c.value.abs();
        }
    }
    Ok(EpisodeHeatmap {
        patient_id: patient_id.to_string(),
        episode_ids: rows.iter().map(|&i| m.episode_ids[i].clone()).collect(),
        admission_dates: rows.iter().map(|&i| m.admission_dates[i]).collect(),
        groups,
        cells,
    })
}
