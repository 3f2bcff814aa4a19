//! Episode and bed-day records: parsing, label derivation, cohort filters and
//! the chronological train/test split.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MISSING: &str = "None";
pub const READMISSION_WINDOW_DAYS: i64 = 30;
pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub const EPISODE_HEADER: [&str; 15] = [
    "episode_id",
    "patient_id",
    "admission_date",
    "discharge_date",
    "age",
    "sex",
    "area_of_residence",
    "admission_ward",
    "discharge_ward",
    "diagnosis_codes",
    "procedure_codes",
    "cpe_screened",
    "cpe_result",
    "discharge_status",
    "emergency_admission",
];

pub const BEDDAY_HEADER: [&str; 4] = ["patient_id", "episode_id", "ward_id", "date"];

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BedDayRecord {
    pub patient_id: String,
    pub episode_id: String,
    pub ward_id: String,
    pub date: NaiveDate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpeResult {
    Positive,
    Negative,
    NotTested,
}

impl CpeResult {
    pub fn as_str(self) -> &'static str {
        match self {
            CpeResult::Positive => "positive",
            CpeResult::Negative => "negative",
            CpeResult::NotTested => "not_tested",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DischargeStatus {
    Alive,
    Died,
}

impl DischargeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DischargeStatus::Alive => "alive",
            DischargeStatus::Died => "died",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodeKind {
    Diagnosis,
    Procedure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub patient_id: String,
    pub admission_date: NaiveDate,
    pub discharge_date: NaiveDate,
    pub age: u32,
    pub sex: String,
    pub area_of_residence: String,
    pub admission_ward: String,
    pub discharge_ward: String,
    pub diagnosis_codes: Vec<String>,
    pub procedure_codes: Vec<String>,
    pub cpe_screened: bool,
    pub cpe_result: CpeResult,
    pub discharge_status: DischargeStatus,
    pub emergency_admission: bool,
}

impl Episode {
    pub fn los_days(&self) -> i64 {
        (self.discharge_date - self.admission_date).num_days()
    }

    /// Invariants that hold for a single episode in isolation.
    pub fn validate(&self) -> Result<()> {
        if self.discharge_date < self.admission_date {
            return Err(Error::Validation(format!(
                "episode {}: discharge {} precedes admission {}",
                self.episode_id, self.discharge_date, self.admission_date
            )));
        }
        if (self.cpe_result == CpeResult::NotTested) == self.cpe_screened {
            return Err(Error::Validation(format!(
                "episode {}: cpe_result {} inconsistent with cpe_screened {}",
                self.episode_id,
                self.cpe_result.as_str(),
                self.cpe_screened
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledEpisode {
    pub episode: Episode,
    pub los_days: i64,
    pub readmit_30d: bool,
    pub mortality: bool,
    pub next_los: Option<i64>,
    pub cpe_positive_ever: bool,
    /// Admissions of the same patient strictly before this one in the raw data.
    pub prior_admissions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub episodes: Vec<LabeledEpisode>,
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    pub split_date: NaiveDate,
}

impl Cohort {
    pub fn train(&self) -> impl Iterator<Item = &LabeledEpisode> {
        self.episodes
            .iter()
            .filter(|e| self.train_ids.contains(&e.episode.episode_id))
    }

    pub fn test(&self) -> impl Iterator<Item = &LabeledEpisode> {
        self.episodes
            .iter()
            .filter(|e| self.test_ids.contains(&e.episode.episode_id))
    }
}

/// Coarsens a code: diagnoses to 3 characters and procedures to 5, after
/// stripping separators. Shorter codes pass through.
pub fn generalize_code(code: &str, kind: CodeKind) -> String {
    let (keep, strip): (usize, &[char]) = match kind {
        CodeKind::Diagnosis => (3, &['.']),
        CodeKind::Procedure => (5, &['-', '.', ' ', '/']),
    };
    code.trim()
        .chars()
        .filter(|c| !strip.contains(c))
        .take(keep)
        .collect()
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|e| format!("`{s}`: {e}"))
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(format!("expected 0/1, got `{other}`")),
    }
}

fn categorical(s: &str) -> String {
    let t = s.trim();
    if t.is_empty() {
        MISSING.to_string()
    } else {
        t.to_string()
    }
}

fn code_list(s: &str) -> Vec<String> {
    s.split('|')
        .map(str::trim)
        .filter(|c| !c.is_empty() && *c != MISSING)
        .map(str::to_string)
        .collect()
}

struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(headers: &csv::StringRecord, required: &[&str], path: &str) -> Result<Self> {
        let index: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        for r in required {
            if !index.contains_key(*r) {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: 1,
                    field: (*r).to_string(),
                    message: "missing column".into(),
                });
            }
        }
        Ok(Self { index })
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, name: &str) -> &'r str {
        self.index
            .get(name)
            .and_then(|&i| rec.get(i))
            .unwrap_or("")
    }
}

fn read_all(mut reader: impl Read) -> Result<String> {
    let mut s = String::new();
    reader.read_to_string(&mut s)?;
    Ok(s)
}

/// Parses `episodes.csv` content. Identical duplicate rows collapse to one.
pub fn parse_episodes(reader: impl Read, path: &str) -> Result<Vec<Episode>> {
    let text = read_all(reader)?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(text.as_bytes());
    let cols = Columns::new(rdr.headers()?, &EPISODE_HEADER, path)?;
    let mut out: Vec<Episode> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |field: &str, message: String| Error::Parse {
            path: path.to_string(),
            line,
            field: field.to_string(),
            message,
        };
        let required = |field: &str| -> Result<String> {
            let v = cols.get(&rec, field).trim();
            if v.is_empty() {
                Err(err(field, "empty value".into()))
            } else {
                Ok(v.to_string())
            }
        };
        let cpe_result = match cols.get(&rec, "cpe_result").trim() {
            "positive" => CpeResult::Positive,
            "negative" => CpeResult::Negative,
            "not_tested" | "" | MISSING => CpeResult::NotTested,
            other => return Err(err("cpe_result", format!("unknown value `{other}`"))),
        };
        let discharge_status = match cols.get(&rec, "discharge_status").trim() {
            "alive" | "" | MISSING => DischargeStatus::Alive,
            "died" => DischargeStatus::Died,
            other => return Err(err("discharge_status", format!("unknown value `{other}`"))),
        };
        let ep = Episode {
            episode_id: required("episode_id")?,
            patient_id: required("patient_id")?,
            admission_date: parse_date(cols.get(&rec, "admission_date"))
                .map_err(|m| err("admission_date", m))?,
            discharge_date: parse_date(cols.get(&rec, "discharge_date"))
                .map_err(|m| err("discharge_date", m))?,
            age: cols
                .get(&rec, "age")
                .trim()
                .parse()
                .map_err(|e| err("age", format!("{e}")))?,
            sex: categorical(cols.get(&rec, "sex")),
            area_of_residence: categorical(cols.get(&rec, "area_of_residence")),
            admission_ward: categorical(cols.get(&rec, "admission_ward")),
            discharge_ward: categorical(cols.get(&rec, "discharge_ward")),
            diagnosis_codes: code_list(cols.get(&rec, "diagnosis_codes")),
            procedure_codes: code_list(cols.get(&rec, "procedure_codes")),
            cpe_screened: parse_bool(cols.get(&rec, "cpe_screened"))
                .map_err(|m| err("cpe_screened", m))?,
            cpe_result,
            discharge_status,
            emergency_admission: parse_bool(cols.get(&rec, "emergency_admission"))
                .map_err(|m| err("emergency_admission", m))?,
        };
        ep.validate()?;
        match seen.get(&ep.episode_id) {
            Some(&i) if out[i] == ep => continue,
            Some(_) => {
                return Err(Error::Validation(format!(
                    "episode id {} appears twice with different content",
                    ep.episode_id
                )))
            }
            None => {
                seen.insert(ep.episode_id.clone(), out.len());
                out.push(ep);
            }
        }
    }
    Ok(out)
}

/// Parses `beddays.csv` content, keeping the first row per (patient, ward, date).
pub fn parse_beddays(reader: impl Read, path: &str) -> Result<Vec<BedDayRecord>> {
    let text = read_all(reader)?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let cols = Columns::new(rdr.headers()?, &BEDDAY_HEADER, path)?;
    let mut out = Vec::new();
    let mut seen: HashSet<(String, String, NaiveDate)> = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |name: &str| -> Result<String> {
            let v = cols.get(&rec, name).trim();
            if v.is_empty() {
                Err(Error::Parse {
                    path: path.to_string(),
                    line,
                    field: name.to_string(),
                    message: "empty value".into(),
                })
            } else {
                Ok(v.to_string())
            }
        };
        let date = parse_date(cols.get(&rec, "date")).map_err(|message| Error::Parse {
            path: path.to_string(),
            line,
            field: "date".into(),
            message,
        })?;
        let row = BedDayRecord {
            patient_id: field("patient_id")?,
            episode_id: field("episode_id")?,
            ward_id: field("ward_id")?,
            date,
        };
        if seen.insert((row.patient_id.clone(), row.ward_id.clone(), row.date)) {
            out.push(row);
        }
    }
    Ok(out)
}

/// Checks every bed-day against its owning episode.
pub fn validate_beddays(episodes: &[Episode], beddays: &[BedDayRecord]) -> Result<()> {
    let by_id: HashMap<&str, &Episode> =
        episodes.iter().map(|e| (e.episode_id.as_str(), e)).collect();
    for b in beddays {
        let ep = by_id.get(b.episode_id.as_str()).ok_or_else(|| {
            Error::Validation(format!("bed-day references unknown episode {}", b.episode_id))
        })?;
        if ep.patient_id != b.patient_id {
            return Err(Error::Validation(format!(
                "bed-day patient {} does not own episode {}",
                b.patient_id, b.episode_id
            )));
        }
        if b.date < ep.admission_date || b.date > ep.discharge_date {
            return Err(Error::Validation(format!(
                "bed-day {} for episode {} outside stay {}..={}",
                b.date, b.episode_id, ep.admission_date, ep.discharge_date
            )));
        }
    }
    Ok(())
}

/// Reads `episodes.csv` and `beddays.csv` from `dir`.
pub fn parse_records(dir: &Path) -> Result<(Vec<Episode>, Vec<BedDayRecord>)> {
    let open = |name: &str| -> Result<(std::fs::File, String)> {
        let p = dir.join(name);
        let f = std::fs::File::open(&p).map_err(|_| Error::MissingArtifact(p.clone()))?;
        Ok((f, p.display().to_string()))
    };
    let (ef, ep) = open("episodes.csv")?;
    let episodes = parse_episodes(ef, &ep)?;
    let (bf, bp) = open("beddays.csv")?;
    let beddays = parse_beddays(bf, &bp)?;
    validate_beddays(&episodes, &beddays)?;
    Ok((episodes, beddays))
}

pub fn write_episodes_csv(episodes: &[Episode]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EPISODE_HEADER)?;
    for e in episodes {
        let b = |v: bool| if v { "1" } else { "0" };
        w.write_record([
            e.episode_id.as_str(),
            e.patient_id.as_str(),
            &e.admission_date.format(DATE_FORMAT).to_string(),
            &e.discharge_date.format(DATE_FORMAT).to_string(),
            &e.age.to_string(),
            e.sex.as_str(),
            e.area_of_residence.as_str(),
            e.admission_ward.as_str(),
            e.discharge_ward.as_str(),
            &e.diagnosis_codes.join("|"),
            &e.procedure_codes.join("|"),
            b(e.cpe_screened),
            e.cpe_result.as_str(),
            e.discharge_status.as_str(),
            b(e.emergency_admission),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

pub fn write_beddays_csv(beddays: &[BedDayRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BEDDAY_HEADER)?;
    for b in beddays {
        w.write_record([
            b.patient_id.as_str(),
            b.episode_id.as_str(),
            b.ward_id.as_str(),
            &b.date.format(DATE_FORMAT).to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

/// Groups episodes per patient, each group sorted by admission date.
pub fn by_patient<'a, T, F>(items: &'a [T], key: F) -> BTreeMap<&'a str, Vec<&'a T>>
where
    F: Fn(&'a T) -> (&'a str, NaiveDate, &'a str),
{
    let mut map: BTreeMap<&str, Vec<&T>> = BTreeMap::new();
    for it in items {
        map.entry(key(it).0).or_default().push(it);
    }
    for v in map.values_mut() {
        v.sort_by(|a, b| {
            let (ka, kb) = (key(a), key(b));
            (ka.1, ka.2).cmp(&(kb.1, kb.2))
        });
    }
    map
}

/// Derives outcome labels per patient history. Output is sorted by
/// (admission date, patient id, episode id).
pub fn derive_labels(episodes: &[Episode]) -> Result<Vec<LabeledEpisode>> {
    let groups = by_patient(episodes, |e| {
        (
            e.patient_id.as_str(),
            e.admission_date,
            e.episode_id.as_str(),
        )
    });
    let mut out = Vec::with_capacity(episodes.len());
    for (patient, eps) in groups {
        let mut positive_so_far = false;
        for (i, ep) in eps.iter().enumerate() {
            ep.validate()?;
            let next = eps.get(i + 1);
            if let Some(n) = next {
                if n.admission_date < ep.discharge_date {
                    return Err(Error::Validation(format!(
                        "patient {patient}: episodes {} and {} overlap",
                        ep.episode_id, n.episode_id
                    )));
                }
            }
            positive_so_far |= ep.cpe_result == CpeResult::Positive;
            out.push(LabeledEpisode {
                los_days: ep.los_days(),
                readmit_30d: next.is_some_and(|n| {
                    (n.admission_date - ep.discharge_date).num_days() <= READMISSION_WINDOW_DAYS
                }),
                mortality: ep.discharge_status == DischargeStatus::Died,
                next_los: next.map(|n| n.los_days()),
                cpe_positive_ever: positive_so_far,
                prior_admissions: i,
                episode: (*ep).clone(),
            });
        }
    }
    out.sort_by(|a, b| {
        (
            a.episode.admission_date,
            &a.episode.patient_id,
            &a.episode.episode_id,
        )
            .cmp(&(
                b.episode.admission_date,
                &b.episode.patient_id,
                &b.episode.episode_id,
            ))
    });
    Ok(out)
}

pub const MIN_AGE: u32 = 18;
pub const MIN_LOS_DAYS: i64 = 2;

/// Adults with stays of at least 48 hours and at least one earlier admission.
pub fn apply_filters(episodes: &[LabeledEpisode]) -> Vec<LabeledEpisode> {
    episodes
        .iter()
        .filter(|e| {
            e.episode.age >= MIN_AGE && e.los_days >= MIN_LOS_DAYS && e.prior_admissions >= 1
        })
        .cloned()
        .collect()
}

pub const MIN_SPLIT_EPISODES: usize = 10;

/// Splits at the `train_fraction` quantile of admission dates; episodes tied
/// on the boundary date go to train.
pub fn chronological_split(episodes: &[LabeledEpisode], train_fraction: f64) -> Result<Cohort> {
    if episodes.len() < MIN_SPLIT_EPISODES {
        return Err(Error::Validation(format!(
            "chronological split needs at least {MIN_SPLIT_EPISODES} episodes, got {}",
            episodes.len()
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut sorted: Vec<LabeledEpisode> = episodes.to_vec();
    sorted.sort_by(|a, b| {
        (a.episode.admission_date, &a.episode.episode_id)
            .cmp(&(b.episode.admission_date, &b.episode.episode_id))
    });
    let n = sorted.len();
    let k = ((train_fraction * n as f64).round() as usize).clamp(1, n);
    let split_date = sorted[k - 1].episode.admission_date;
    let (mut train_ids, mut test_ids) = (BTreeSet::new(), BTreeSet::new());
    for e in &sorted {
        if e.episode.admission_date <= split_date {
            train_ids.insert(e.episode.episode_id.clone());
        } else {
            test_ids.insert(e.episode.episode_id.clone());
        }
    }
    if test_ids.is_empty() {
        return Err(Error::Validation(format!(
            "all episodes admitted on or before split date {split_date}; test set empty"
        )));
    }
    Ok(Cohort {
        episodes: sorted,
        train_ids,
        test_ids,
        split_date,
    })
}
