//! Per-episode feature rows, train-fitted schemas, and the standardized
//! feature matrix fed to the models.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkFeatures;
use crate::records::{generalize_code, BedDayRecord, CodeKind, CpeResult, LabeledEpisode, MISSING};

pub const UNK: &str = "UNK";
pub const STD_FLOOR: f64 = 1e-6;
/// Admission wards whose id starts with this count as acute-department visits.
pub const ACUTE_WARD_PREFIX: &str = "AMU";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Readmit30,
    Mortality,
    Los,
    Cpe,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Readmit30, Task::Mortality, Task::Los, Task::Cpe];

    pub fn name(self) -> &'static str {
        match self {
            Task::Readmit30 => "readmit30",
            Task::Mortality => "mortality",
            Task::Los => "los",
            Task::Cpe => "cpe",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }

    pub fn is_regression(self) -> bool {
        self == Task::Los
    }
}

pub const DEMOGRAPHIC_NUMERIC: [&str; 1] = ["age"];
pub const CURRENT_NUMERIC: [&str; 5] = [
    "los_days",
    "emergency_admission",
    "no_diagnoses",
    "no_procedures",
    "no_ward_transfers",
];
pub const PAST_NUMERIC: [&str; 7] = [
    "no_previous_admissions",
    "no_previous_readmissions",
    "no_previous_diagnoses",
    "no_previous_comorbidities",
    "no_previous_procedures",
    "no_previous_ward_transfers",
    "previous_los_total",
];
pub const WARD_NUMERIC: [&str; 4] = [
    "admission_ward_frequency",
    "discharge_ward_frequency",
    "no_acute_department_visits",
    "no_emergency_department_visits",
];
pub const CPE_NUMERIC: [&str; 2] = ["cpe_screened", "cpe_positive_ever"];
pub const CATEGORICAL: [&str; 5] = [
    "sex",
    "area_of_residence",
    "admission_ward",
    "discharge_ward",
    "cpe_result",
];
pub const CPE_CATEGORICAL: [&str; 1] = ["cpe_result"];
pub const CODE_FIELDS: [&str; 2] = ["diagnosis_codes", "procedure_codes"];
pub const LABEL_COLUMNS: [&str; 4] = ["readmit_30d", "mortality", "next_los", "cpe_positive"];

/// Every column produced by [`cpe_features`].
pub fn cpe_feature_names() -> BTreeSet<&'static str> {
    CPE_NUMERIC.iter().chain(&CPE_CATEGORICAL).copied().collect()
}

/// Numeric column names for a task, in matrix order.
pub fn numeric_names(task: Task) -> Vec<&'static str> {
    let mut v: Vec<&str> = DEMOGRAPHIC_NUMERIC
        .iter()
        .chain(&CURRENT_NUMERIC)
        .chain(&PAST_NUMERIC)
        .chain(&WARD_NUMERIC)
        .copied()
        .collect();
    if task != Task::Cpe {
        v.extend(CPE_NUMERIC);
    }
    v.extend(NetworkFeatures::NAMES);
    v
}

pub fn categorical_names(task: Task) -> Vec<&'static str> {
    CATEGORICAL
        .iter()
        .copied()
        .filter(|c| task != Task::Cpe || !CPE_CATEGORICAL.contains(c))
        .collect()
}

/// Coarse grouping used in reports.
pub fn feature_group(name: &str) -> &'static str {
    if DEMOGRAPHIC_NUMERIC.contains(&name) || ["sex", "area_of_residence"].contains(&name) {
        "demographics"
    } else if PAST_NUMERIC.contains(&name) {
        "past_episode"
    } else if NetworkFeatures::NAMES.contains(&name) {
        "network"
    } else if CPE_NUMERIC.contains(&name) || CPE_CATEGORICAL.contains(&name) {
        "cpe"
    } else {
        "current_episode"
    }
}

/// Cumulative history counts over episodes strictly before the index one.
pub fn past_episode_features(history: &[&LabeledEpisode], transfers: &HashMap<String, usize>) -> BTreeMap<&'static str, f64> {
    let mut codes: BTreeSet<String> = BTreeSet::new();
    let mut m = BTreeMap::new();
    let mut diag = 0usize;
    let mut proc_ = 0usize;
    let mut readmits = 0usize;
    let mut ward_transfers = 0usize;
    let mut los = 0i64;
    for h in history {
        diag += h.episode.diagnosis_codes.len();
        proc_ += h.episode.procedure_codes.len();
        readmits += usize::from(h.readmit_30d);
        ward_transfers += transfers.get(&h.episode.episode_id).copied().unwrap_or(0);
        los += h.los_days;
        codes.extend(
            h.episode
                .diagnosis_codes
                .iter()
                .map(|c| generalize_code(c, CodeKind::Diagnosis)),
        );
    }
    m.insert("no_previous_admissions", history.len() as f64);
    m.insert("no_previous_readmissions", readmits as f64);
    m.insert("no_previous_diagnoses", diag as f64);
    m.insert("no_previous_comorbidities", codes.len() as f64);
    m.insert("no_previous_procedures", proc_ as f64);
    m.insert("no_previous_ward_transfers", ward_transfers as f64);
    m.insert("previous_los_total", los as f64);
    m
}

/// Ward-visit counts; frequencies are filled in from the schema's
/// training-set table at assembly time.
pub fn ward_transition_counts(episode: &LabeledEpisode, history: &[&LabeledEpisode]) -> BTreeMap<&'static str, f64> {
    let all = history.iter().copied().chain(std::iter::once(episode));
    let (mut acute, mut ed) = (0usize, 0usize);
    for e in all {
        acute += usize::from(e.episode.admission_ward.starts_with(ACUTE_WARD_PREFIX));
        ed += usize::from(e.episode.emergency_admission);
    }
    BTreeMap::from([
        ("no_acute_department_visits", acute as f64),
        ("no_emergency_department_visits", ed as f64),
    ])
}

#[derive(Clone, Debug, PartialEq)]
pub struct CpeFeatures {
    pub cpe_screened: bool,
    pub cpe_result: CpeResult,
    pub cpe_positive_ever: bool,
}

/// Screening status of this episode and whether any screen up to and
/// including it was positive.
pub fn cpe_features(episode: &LabeledEpisode, history: &[&LabeledEpisode]) -> CpeFeatures {
    let prior = history
        .iter()
        .any(|h| h.episode.cpe_result == CpeResult::Positive);
    CpeFeatures {
        cpe_screened: episode.episode.cpe_screened,
        cpe_result: episode.episode.cpe_result,
        cpe_positive_ever: prior || episode.episode.cpe_result == CpeResult::Positive,
    }
}

/// Unstandardized features of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub episode_id: String,
    pub patient_id: String,
    pub admission_date: NaiveDate,
    pub numeric: BTreeMap<String, f64>,
    pub categorical: BTreeMap<String, String>,
    pub codes: BTreeMap<String, Vec<String>>,
    pub readmit_30d: bool,
    pub mortality: bool,
    pub next_los: Option<f64>,
    /// Label for the CPE task; absent when the episode was not screened.
    pub cpe_positive: Option<bool>,
}

/// Builds raw rows for `rows` (usually the filtered cohort). History is
/// looked up in `all_episodes`, the unfiltered labeled set.
pub fn raw_rows(
    rows: &[LabeledEpisode],
    all_episodes: &[LabeledEpisode],
    network: &BTreeMap<String, NetworkFeatures>,
    ward_transfers: &HashMap<String, usize>,
) -> Result<Vec<RawRow>> {
    let mut by_patient: HashMap<&str, Vec<&LabeledEpisode>> = HashMap::new();
    for e in all_episodes {
        by_patient.entry(e.episode.patient_id.as_str()).or_default().push(e);
    }
    for v in by_patient.values_mut() {
        v.sort_by(|a, b| {
            (a.episode.admission_date, &a.episode.episode_id)
                .cmp(&(b.episode.admission_date, &b.episode.episode_id))
        });
    }
    rows.iter()
        .map(|e| {
            let ep = &e.episode;
            let all = by_patient.get(ep.patient_id.as_str()).map_or(&[][..], Vec::as_slice);
            let history: Vec<&LabeledEpisode> = all
                .iter()
                .copied()
                .filter(|h| h.episode.admission_date < ep.admission_date)
                .collect();
            let net = network.get(&ep.episode_id).ok_or_else(|| {
                Error::Validation(format!("no network features for episode {}", ep.episode_id))
            })?;
            let mut numeric: BTreeMap<String, f64> = BTreeMap::new();
            let mut put = |k: &str, v: f64| {
                numeric.insert(k.to_string(), v);
            };
            put("age", f64::from(ep.age));
            put("los_days", e.los_days as f64);
            put("emergency_admission", f64::from(u8::from(ep.emergency_admission)));
            put("no_diagnoses", ep.diagnosis_codes.len() as f64);
            put("no_procedures", ep.procedure_codes.len() as f64);
            put(
                "no_ward_transfers",
                ward_transfers.get(&ep.episode_id).copied().unwrap_or(0) as f64,
            );
            for (k, v) in past_episode_features(&history, ward_transfers) {
                put(k, v);
            }
            for (k, v) in ward_transition_counts(e, &history) {
                put(k, v);
            }
            put("admission_ward_frequency", 0.0);
            put("discharge_ward_frequency", 0.0);
            let cpe = cpe_features(e, &history);
            put("cpe_screened", f64::from(u8::from(cpe.cpe_screened)));
            put("cpe_positive_ever", f64::from(u8::from(cpe.cpe_positive_ever)));
            for (k, v) in NetworkFeatures::NAMES.iter().zip(net.values()) {
                put(k, v);
            }
            let categorical = BTreeMap::from([
                ("sex".to_string(), ep.sex.clone()),
                ("area_of_residence".to_string(), ep.area_of_residence.clone()),
                ("admission_ward".to_string(), ep.admission_ward.clone()),
                ("discharge_ward".to_string(), ep.discharge_ward.clone()),
                ("cpe_result".to_string(), cpe.cpe_result.as_str().to_string()),
            ]);
            let mut diag: BTreeSet<String> = BTreeSet::new();
            let mut proc_: BTreeSet<String> = BTreeSet::new();
            for h in history.iter().map(|h| &h.episode).chain(std::iter::once(ep)) {
                diag.extend(
                    h.diagnosis_codes
                        .iter()
                        .map(|c| generalize_code(c, CodeKind::Diagnosis)),
                );
                proc_.extend(
                    h.procedure_codes
                        .iter()
                        .map(|c| generalize_code(c, CodeKind::Procedure)),
                );
            }
            let codes = BTreeMap::from([
                ("diagnosis_codes".to_string(), diag.into_iter().collect()),
                ("procedure_codes".to_string(), proc_.into_iter().collect()),
            ]);
            Ok(RawRow {
                episode_id: ep.episode_id.clone(),
                patient_id: ep.patient_id.clone(),
                admission_date: ep.admission_date,
                numeric,
                categorical,
                codes,
                readmit_30d: e.readmit_30d,
                mortality: e.mortality,
                next_los: e.next_los.map(|v| v as f64),
                cpe_positive: ep
                    .cpe_screened
                    .then_some(ep.cpe_result == CpeResult::Positive),
            })
        })
        .collect()
}

/// Ward changes within each episode, from its bed-days in date order.
pub fn ward_transfer_counts(beddays: &[BedDayRecord]) -> HashMap<String, usize> {
    let mut stays: HashMap<&str, Vec<(NaiveDate, &str)>> = HashMap::new();
    for b in beddays {
        stays
            .entry(b.episode_id.as_str())
            .or_default()
            .push((b.date, b.ward_id.as_str()));
    }
    stays
        .into_iter()
        .map(|(id, mut days)| {
            days.sort();
            let n = days.windows(2).filter(|w| w[0].1 != w[1].1).count();
            (id.to_string(), n)
        })
        .collect()
}

/// Rows eligible for a task: the LOS task needs a next episode, the CPE task
/// a screening result.
pub fn task_rows(rows: &[RawRow], task: Task) -> Vec<RawRow> {
    rows.iter()
        .filter(|r| match task {
            Task::Los => r.next_los.is_some(),
            Task::Cpe => r.cpe_positive.is_some(),
            _ => true,
        })
        .cloned()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericStat {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Token vocabulary; index 0 is `UNK`, index 1 is `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub name: String,
    pub tokens: Vec<String>,
}

impl Vocab {
    fn fit<'a>(name: &str, values: impl Iterator<Item = &'a str>) -> Self {
        let mut set: BTreeSet<&str> = values.collect();
        set.remove(UNK);
        set.remove(MISSING);
        let mut tokens = vec![UNK.to_string(), MISSING.to_string()];
        tokens.extend(set.into_iter().map(str::to_string));
        Self {
            name: name.to_string(),
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index(&self, token: &str) -> usize {
        // tokens[2..] are sorted
        match self.tokens[2..].binary_search_by(|t| t.as_str().cmp(token)) {
            Ok(i) => i + 2,
            Err(_) if token == MISSING => 1,
            Err(_) => 0,
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index(token) != 0 || token == UNK
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub task: Task,
    pub numeric: Vec<NumericStat>,
    pub categorical: Vec<Vocab>,
    pub codes: Vec<Vocab>,
    /// Training-row admission counts per ward.
    pub ward_frequency: BTreeMap<String, f64>,
}

impl FeatureSchema {
    pub fn numeric_names(&self) -> Vec<&str> {
        self.numeric.iter().map(|s| s.name.as_str()).collect()
    }

    /// Feature names in attribution order: numeric, categorical, code fields.
    pub fn feature_names(&self) -> Vec<String> {
        self.numeric
            .iter()
            .map(|s| s.name.clone())
            .chain(self.categorical.iter().map(|v| v.name.clone()))
            .chain(self.codes.iter().map(|v| v.name.clone()))
            .collect()
    }

    pub fn hash(&self) -> String {
        crate::io::sha256_hex(&serde_json::to_vec(self).expect("schema serializes"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub episode_ids: Vec<String>,
    pub patient_ids: Vec<String>,
    pub admission_dates: Vec<NaiveDate>,
    /// `(rows, numeric)` standardized values.
    pub numeric: crate::autodiff::Tensor,
    /// Vocabulary index per row per categorical column.
    pub categorical: Vec<Vec<usize>>,
    /// Per code field, per row: vocabulary indices (unseen codes dropped).
    pub codes: Vec<Vec<Vec<usize>>>,
    pub readmit_30d: Vec<bool>,
    pub mortality: Vec<bool>,
    pub next_los: Vec<Option<f64>>,
    pub cpe_positive: Vec<Option<bool>>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.episode_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episode_ids.is_empty()
    }

    /// Binary label for classification tasks.
    pub fn labels(&self, task: Task) -> Vec<bool> {
        match task {
            Task::Readmit30 => self.readmit_30d.clone(),
            Task::Mortality => self.mortality.clone(),
            Task::Cpe => self.cpe_positive.iter().map(|v| v.unwrap_or(false)).collect(),
            Task::Los => self.next_los.iter().map(|v| v.is_some()).collect(),
        }
    }

    /// Regression target in days (LOS task).
    pub fn targets(&self) -> Vec<f64> {
        self.next_los.iter().map(|v| v.unwrap_or(0.0)).collect()
    }

    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        let pick = |v: &Vec<String>| idx.iter().map(|&i| v[i].clone()).collect();
        FeatureMatrix {
            episode_ids: pick(&self.episode_ids),
            patient_ids: pick(&self.patient_ids),
            admission_dates: idx.iter().map(|&i| self.admission_dates[i]).collect(),
            numeric: self.numeric.select_rows(idx),
            categorical: idx.iter().map(|&i| self.categorical[i].clone()).collect(),
            codes: self
                .codes
                .iter()
                .map(|f| idx.iter().map(|&i| f[i].clone()).collect())
                .collect(),
            readmit_30d: idx.iter().map(|&i| self.readmit_30d[i]).collect(),
            mortality: idx.iter().map(|&i| self.mortality[i]).collect(),
            next_los: idx.iter().map(|&i| self.next_los[i]).collect(),
            cpe_positive: idx.iter().map(|&i| self.cpe_positive[i]).collect(),
        }
    }

    pub fn n_numeric(&self) -> usize {
        self.numeric.cols()
    }
}

fn ward_frequencies(rows: &[RawRow]) -> BTreeMap<String, f64> {
    let mut m: BTreeMap<String, f64> = BTreeMap::new();
    for r in rows {
        if let Some(w) = r.categorical.get("admission_ward") {
            *m.entry(w.clone()).or_insert(0.0) += 1.0;
        }
    }
    m
}

fn numeric_value(row: &RawRow, name: &str, schema_wards: &BTreeMap<String, f64>) -> Result<f64> {
    let ward_freq = |col: &str| {
        row.categorical
            .get(col)
            .and_then(|w| schema_wards.get(w))
            .copied()
            .unwrap_or(0.0)
    };
    match name {
        "admission_ward_frequency" => Ok(ward_freq("admission_ward")),
        "discharge_ward_frequency" => Ok(ward_freq("discharge_ward")),
        _ => row.numeric.get(name).copied().ok_or_else(|| {
            Error::Schema(format!("row {} lacks numeric column `{name}`", row.episode_id))
        }),
    }
}

/// Fits a schema on `rows` (vocabularies, ward frequencies, z-score stats).
pub fn fit_schema(rows: &[RawRow], task: Task) -> Result<FeatureSchema> {
    if rows.is_empty() {
        return Err(Error::Validation("cannot fit a schema on zero rows".into()));
    }
    let ward_frequency = ward_frequencies(rows);
    let mut numeric = Vec::new();
    for name in numeric_names(task) {
        let vals: Vec<f64> = rows
            .iter()
            .map(|r| numeric_value(r, name, &ward_frequency))
            .collect::<Result<_>>()?;
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        numeric.push(NumericStat {
            name: name.to_string(),
            mean,
            std: var.sqrt().max(STD_FLOOR),
        });
    }
    let categorical = categorical_names(task)
        .into_iter()
        .map(|name| {
            Vocab::fit(
                name,
                rows.iter()
                    .map(|r| r.categorical.get(name).map_or(MISSING, String::as_str)),
            )
        })
        .collect();
    let codes = CODE_FIELDS
        .iter()
        .map(|name| {
            Vocab::fit(
                name,
                rows.iter()
                    .flat_map(|r| r.codes.get(*name).into_iter().flatten().map(String::as_str)),
            )
        })
        .collect();
    Ok(FeatureSchema {
        task,
        numeric,
        categorical,
        codes,
        ward_frequency,
    })
}

/// Applies a frozen schema to `rows`.
pub fn transform(rows: &[RawRow], schema: &FeatureSchema) -> Result<FeatureMatrix> {
    let n_num = schema.numeric.len();
    let mut numeric = Vec::with_capacity(rows.len() * n_num);
    let mut categorical = Vec::with_capacity(rows.len());
    let mut codes: Vec<Vec<Vec<usize>>> = vec![Vec::with_capacity(rows.len()); schema.codes.len()];
    for r in rows {
        for stat in &schema.numeric {
            let v = numeric_value(r, &stat.name, &schema.ward_frequency)?;
            let z = (v - stat.mean) / stat.std;
            if !z.is_finite() {
                return Err(Error::NonFinite(format!(
                    "feature `{}` of episode {}",
                    stat.name, r.episode_id
                )));
            }
            numeric.push(z);
        }
        let cats = schema
            .categorical
            .iter()
            .map(|voc| {
                r.categorical
                    .get(&voc.name)
                    .map(|v| voc.index(v))
                    .ok_or_else(|| {
                        Error::Schema(format!(
                            "row {} lacks categorical column `{}`",
                            r.episode_id, voc.name
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        categorical.push(cats);
        for (f, voc) in schema.codes.iter().enumerate() {
            let bag = r.codes.get(&voc.name).ok_or_else(|| {
                Error::Schema(format!("row {} lacks code field `{}`", r.episode_id, voc.name))
            })?;
            codes[f].push(
                bag.iter()
                    .map(|c| voc.index(c))
                    .filter(|&i| i >= 2)
                    .collect(),
            );
        }
    }
    Ok(FeatureMatrix {
        episode_ids: rows.iter().map(|r| r.episode_id.clone()).collect(),
        patient_ids: rows.iter().map(|r| r.patient_id.clone()).collect(),
        admission_dates: rows.iter().map(|r| r.admission_date).collect(),
        numeric: crate::autodiff::Tensor::new(vec![rows.len(), n_num], numeric)?,
        categorical,
        codes,
        readmit_30d: rows.iter().map(|r| r.readmit_30d).collect(),
        mortality: rows.iter().map(|r| r.mortality).collect(),
        next_los: rows.iter().map(|r| r.next_los).collect(),
        cpe_positive: rows.iter().map(|r| r.cpe_positive).collect(),
    })
}

/// Fits on `rows` when `schema` is absent, otherwise transforms with it.
pub fn assemble(rows: &[RawRow], task: Task, schema: Option<&FeatureSchema>) -> Result<(FeatureMatrix, FeatureSchema)> {
    let schema = match schema {
        Some(s) => {
            if s.task != task {
                return Err(Error::Schema(format!(
                    "schema fitted for task {} used for {}",
                    s.task.name(),
                    task.name()
                )));
            }
            s.clone()
        }
        None => fit_schema(rows, task)?,
    };
    Ok((transform(rows, &schema)?, schema))
}

/// `features.csv`: episode id, standardized numerics, categorical tokens,
/// `|`-joined code tokens, then label columns.
pub fn features_csv(m: &FeatureMatrix, schema: &FeatureSchema) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["episode_id".to_string()];
    header.extend(schema.feature_names());
    header.extend(LABEL_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    let b = |v: bool| if v { "1" } else { "0" }.to_string();
    for i in 0..m.len() {
        let mut rec = vec![m.episode_ids[i].clone()];
        rec.extend(m.numeric.row(i).iter().map(|v| format!("{v:?}")));
        for (j, voc) in schema.categorical.iter().enumerate() {
            rec.push(voc.tokens[m.categorical[i][j]].clone());
        }
        for (f, voc) in schema.codes.iter().enumerate() {
            rec.push(
                m.codes[f][i]
                    .iter()
                    .map(|&c| voc.tokens[c].as_str())
                    .collect::<Vec<_>>()
                    .join("|"),
            );
        }
        rec.push(b(m.readmit_30d[i]));
        rec.push(b(m.mortality[i]));
        rec.push(m.next_los[i].map_or(String::new(), |v| v.to_string()));
        rec.push(m.cpe_positive[i].map_or(String::new(), b));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::tests::episode;
    use crate::records::derive_labels;

    fn labeled_history() -> Vec<LabeledEpisode> {
        let mut a = episode("a", "P", "2019-01-01", "2019-01-03");
        a.diagnosis_codes = vec!["A41.9".into(), "I10".into(), "E11.2".into()];
        a.emergency_admission = true;
        let mut b = episode("b", "P", "2019-02-01", "2019-02-06");
        b.diagnosis_codes = vec!["A41.0".into(), "J18".into(), "N17".into(), "I10".into()];
        b.emergency_admission = true;
        b.cpe_screened = true;
        b.cpe_result = CpeResult::Positive;
        let mut c = episode("c", "P", "2020-01-01", "2020-01-04");
        c.emergency_admission = true;
        c.cpe_screened = true;
        c.cpe_result = CpeResult::Negative;
        derive_labels(&[a, b, c]).unwrap()
    }

    #[test]
    fn no_history_is_all_zero() {
        let f = past_episode_features(&[], &HashMap::new());
        assert!(f.values().all(|&v| v == 0.0));
        assert_eq!(f.len(), PAST_NUMERIC.len());
    }

    #[test]
    fn history_sums() {
        let l = labeled_history();
        let hist: Vec<&LabeledEpisode> = l[..2].iter().collect();
        let f = past_episode_features(&hist, &HashMap::from([("a".to_string(), 2usize)]));
        assert_eq!(f["no_previous_diagnoses"], 7.0);
        assert_eq!(f["previous_los_total"], 7.0);
        assert_eq!(f["no_previous_admissions"], 2.0);
        assert_eq!(f["no_previous_ward_transfers"], 2.0);
        // A41, I10, E11, J18, N17
        assert_eq!(f["no_previous_comorbidities"], 5.0);
    }

    #[test]
    fn emergency_visits_include_current_episode() {
        let l = labeled_history();
        let mut l = l.clone();
        l[0].episode.emergency_admission = false;
        let hist: Vec<&LabeledEpisode> = l[..2].iter().collect();
        let f = ward_transition_counts(&l[2], &hist);
        assert_eq!(f["no_emergency_department_visits"], 2.0);
        l[0].episode.emergency_admission = true;
        let hist: Vec<&LabeledEpisode> = l[..2].iter().collect();
        assert_eq!(ward_transition_counts(&l[2], &hist)["no_emergency_department_visits"], 3.0);
    }

    #[test]
    fn cpe_history_examples() {
        let l = labeled_history();
        let none: Vec<&LabeledEpisode> = vec![];
        let f = cpe_features(&l[0], &none);
        assert_eq!((f.cpe_screened, f.cpe_result), (false, CpeResult::NotTested));
        assert!(!f.cpe_positive_ever);
        assert!(cpe_features(&l[1], &[&l[0]]).cpe_positive_ever);
        let f = cpe_features(&l[2], &[&l[0], &l[1]]);
        assert_eq!(f.cpe_result, CpeResult::Negative);
        assert!(f.cpe_positive_ever);
    }

    fn raw(id: &str, ward: &str, area: &str, age: f64) -> RawRow {
        let mut numeric: BTreeMap<String, f64> = numeric_names(Task::Readmit30)
            .into_iter()
            .map(|n| (n.to_string(), 1.0))
            .collect();
        numeric.insert("age".into(), age);
        RawRow {
            episode_id: id.into(),
            patient_id: id.into(),
            admission_date: crate::records::tests::d("2020-01-01"),
            numeric,
            categorical: CATEGORICAL
                .iter()
                .map(|c| (c.to_string(), "x".to_string()))
                .chain([
                    ("admission_ward".to_string(), ward.to_string()),
                    ("area_of_residence".to_string(), area.to_string()),
                ])
                .collect(),
            codes: CODE_FIELDS
                .iter()
                .map(|c| (c.to_string(), vec!["A41".to_string()]))
                .collect(),
            readmit_30d: false,
            mortality: false,
            next_los: None,
            cpe_positive: None,
        }
    }

    #[test]
    fn constant_column_standardizes_to_zero() {
        let rows = vec![raw("a", "W1", "R1", 30.0), raw("b", "W2", "R2", 50.0)];
        let (m, s) = assemble(&rows, Task::Readmit30, None).unwrap();
        let los = s.numeric.iter().position(|n| n.name == "los_days").unwrap();
        assert_eq!(s.numeric[los].std, STD_FLOOR);
        assert_eq!(m.numeric.get(0, los), 0.0);
        assert_eq!(m.numeric.get(1, los), 0.0);
        let age = s.numeric.iter().position(|n| n.name == "age").unwrap();
        assert_eq!(m.numeric.get(0, age), -1.0);
    }

    #[test]
    fn unseen_category_maps_to_unk() {
        let train = vec![raw("a", "W1", "R1", 30.0), raw("b", "W2", "R2", 50.0)];
        let (_, s) = assemble(&train, Task::Readmit30, None).unwrap();
        let test = vec![raw("c", "W9", "R9", 40.0)];
        let (m, _) = assemble(&test, Task::Readmit30, Some(&s)).unwrap();
        let area = s.categorical.iter().position(|v| v.name == "area_of_residence").unwrap();
        assert_eq!(m.categorical[0][area], 0);
        let freq = s.numeric.iter().position(|n| n.name == "admission_ward_frequency").unwrap();
        let stat = &s.numeric[freq];
        assert_eq!(m.numeric.get(0, freq), (0.0 - stat.mean) / stat.std);
        let none_row = raw("d", "None", "None", 1.0);
        let (m, _) = assemble(&[none_row], Task::Readmit30, Some(&s)).unwrap();
        assert_eq!(m.categorical[0][area], 1);
    }

    #[test]
    fn vocab_always_has_unk_and_none() {
        let v = Vocab::fit("x", ["b", "a", "None"].into_iter());
        assert_eq!(v.tokens, vec!["UNK", "None", "a", "b"]);
        assert_eq!(v.index("a"), 2);
        assert_eq!(v.index("zzz"), 0);
    }

    #[test]
    fn cpe_task_drops_cpe_columns() {
        let names: BTreeSet<&str> = numeric_names(Task::Cpe)
            .into_iter()
            .chain(categorical_names(Task::Cpe))
            .collect();
        assert!(names.is_disjoint(&cpe_feature_names()));
        let label_cols: BTreeSet<&str> = LABEL_COLUMNS.into_iter().collect();
        assert!(names.is_disjoint(&label_cols));
        assert_eq!(names.len() + CODE_FIELDS.len(), 34);
    }

    #[test]
    fn frozen_schema_rejects_other_task() {
        let rows = vec![raw("a", "W1", "R1", 30.0)];
        let (_, s) = assemble(&rows, Task::Readmit30, None).unwrap();
        assert!(assemble(&rows, Task::Mortality, Some(&s)).is_err());
    }
}
