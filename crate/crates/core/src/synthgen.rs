//! Synthetic EMR corpora with a planted causal structure.
//!
//! CPE positivity is drawn per episode from a logistic model whose terms are
//! listed in [`GeneratorConfig::planted_effects`]. Exposure is evaluated in
//! discharge order, so a positive can only influence later ward-mates once
//! its result is known (discharge plus [`RESULT_TURNAROUND_DAYS`]).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::RESULT_TURNAROUND_DAYS;
use crate::records::{
    write_beddays_csv, write_episodes_csv, BedDayRecord, CpeResult, DischargeStatus, Episode,
    MISSING,
};

pub const ACUTE_WARD: &str = "AMU";
pub const HOT_WARD: &str = "W01";
pub const HOT_AREA: &str = "AREA01";

/// Planted-effect keys and the indicator each weight multiplies.
pub const EFFECT_RULES: [(&str, &str); 5] = [
    ("area_of_residence", "area_of_residence == AREA01"),
    ("admission_ward", "admission_ward == W01"),
    ("emergency_admission", "emergency_admission"),
    ("age", "(age - 65) / 15"),
    ("network_exposed", "shared a ward-day with a patient already known CPE-positive"),
];

const CHAPTERS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTVWXYZ";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub date_range: (NaiveDate, NaiveDate),
    pub n_wards: usize,
    pub n_areas: usize,
    pub n_diag_codes: usize,
    pub n_proc_codes: usize,
    /// Expected share of all episodes that are CPE-positive.
    pub cpe_prevalence: f64,
    /// Share of CPE-negative episodes that are screened; positives always are.
    pub screening_rate: f64,
    /// Daily probability of moving to another ward.
    pub transfer_prob: f64,
    /// Probability that a patient returns after each discharge.
    pub continue_prob: f64,
    pub planted_effects: BTreeMap<String, f64>,
    /// Diagnosis chapter (first code letter) that raises 30-day readmission.
    pub readmission_chapter: char,
    pub readmission_effect: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_patients: 2000,
            date_range: (
                NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
                NaiveDate::from_ymd_opt(2020, 12, 31).expect("valid date"),
            ),
            n_wards: 20,
            n_areas: 12,
            n_diag_codes: 400,
            n_proc_codes: 150,
            cpe_prevalence: 0.002,
            screening_rate: 0.5,
            transfer_prob: 0.15,
            continue_prob: 0.7,
            planted_effects: BTreeMap::from([
                ("area_of_residence".to_string(), 2.0),
                ("admission_ward".to_string(), 2.0),
                ("emergency_admission".to_string(), 1.5),
                ("network_exposed".to_string(), 2.0),
            ]),
            readmission_chapter: 'I',
            readmission_effect: 1.5,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_patients == 0 {
            return bad("n_patients must be positive".into());
        }
        if self.n_wards < 2 {
            return bad(format!("need at least 2 wards, got {}", self.n_wards));
        }
        if self.n_areas == 0 || self.n_diag_codes == 0 || self.n_proc_codes == 0 {
            return bad("areas and code vocabularies must be non-empty".into());
        }
        if self.date_range.1 <= self.date_range.0 {
            return bad(format!(
                "empty date range {}..{}",
                self.date_range.0, self.date_range.1
            ));
        }
        if !(self.cpe_prevalence > 0.0 && self.cpe_prevalence < 1.0) {
            return bad(format!("cpe_prevalence {} outside (0, 1)", self.cpe_prevalence));
        }
        for (name, v) in [
            ("screening_rate", self.screening_rate),
            ("transfer_prob", self.transfer_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.continue_prob) {
            return bad(format!("continue_prob {} outside [0, 1)", self.continue_prob));
        }
        for (k, w) in &self.planted_effects {
            if !EFFECT_RULES.iter().any(|(name, _)| name == k) {
                return bad(format!("unknown planted effect `{k}`"));
            }
            if !w.is_finite() {
                return bad(format!("planted effect `{k}` is not finite"));
            }
        }
        Ok(())
    }

    fn effect(&self, key: &str) -> f64 {
        self.planted_effects.get(key).copied().unwrap_or(0.0)
    }

    fn wards(&self) -> Vec<String> {
        std::iter::once(ACUTE_WARD.to_string())
            .chain((1..self.n_wards).map(|i| format!("W{i:02}")))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted_effects: BTreeMap<String, f64>,
    pub rules: BTreeMap<String, String>,
    pub cpe_intercept: f64,
    pub readmission_chapter: char,
    pub readmission_effect: f64,
    pub n_episodes: usize,
    pub n_positive: usize,
    pub n_exposed: usize,
    pub expected_positives: f64,
    pub config: GeneratorConfig,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub episodes: Vec<Episode>,
    pub beddays: Vec<BedDayRecord>,
    pub ground_truth: GroundTruth,
    /// Generator-side exposure flag per episode id.
    pub exposed: BTreeMap<String, bool>,
}

impl Corpus {
    /// Writes `episodes.csv`, `beddays.csv` and `ground_truth.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        crate::io::write_atomic(&dir.join("episodes.csv"), write_episodes_csv(&self.episodes)?.as_bytes())?;
        crate::io::write_atomic(&dir.join("beddays.csv"), write_beddays_csv(&self.beddays)?.as_bytes())?;
        crate::io::write_json(&dir.join("ground_truth.json"), &self.ground_truth)
    }
}

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (1..=n).map(|k| 1.0 / (k as f64).powf(s)).collect()
}

fn diag_code(k: usize) -> String {
    let letter = CHAPTERS[k % CHAPTERS.len()] as char;
    format!("{letter}{:02}.{}", (k / CHAPTERS.len()) % 100, (k * 3) % 10)
}

fn proc_code(k: usize) -> String {
    format!("{:05}-{:02}", 10_000 + (k * 613) % 90_000, k % 7)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Ward-mate contacts of every episode: `(other patient index, date)`.
struct Contacts {
    patients: Vec<String>,
    patient_of: Vec<usize>,
    per_episode: Vec<Vec<(usize, NaiveDate)>>,
}

impl Contacts {
    fn build(episodes: &[Episode], beddays: &[BedDayRecord]) -> Self {
        let mut patient_idx: BTreeMap<&str, usize> = BTreeMap::new();
        for e in episodes {
            let n = patient_idx.len();
            patient_idx.entry(e.patient_id.as_str()).or_insert(n);
        }
        let mut patients = vec![String::new(); patient_idx.len()];
        for (p, &i) in &patient_idx {
            patients[i] = (*p).to_string();
        }
        let ep_idx: HashMap<&str, usize> = episodes
            .iter()
            .enumerate()
            .map(|(i, e)| (e.episode_id.as_str(), i))
            .collect();
        let mut occupancy: BTreeMap<(NaiveDate, &str), Vec<usize>> = BTreeMap::new();
        for b in beddays {
            if let Some(&i) = ep_idx.get(b.episode_id.as_str()) {
                occupancy.entry((b.date, b.ward_id.as_str())).or_default().push(i);
            }
        }
        let patient_of: Vec<usize> = episodes
            .iter()
            .map(|e| patient_idx[e.patient_id.as_str()])
            .collect();
        let mut per_episode = vec![Vec::new(); episodes.len()];
        for ((date, _), occ) in &occupancy {
            for &a in occ {
                for &b in occ {
                    if patient_of[a] != patient_of[b] {
                        per_episode[a].push((patient_of[b], *date));
                    }
                }
            }
        }
        for v in &mut per_episode {
            v.sort();
            v.dedup();
        }
        Self {
            patients,
            patient_of,
            per_episode,
        }
    }

    fn exposed(&self, i: usize, flags: &[Option<NaiveDate>]) -> bool {
        self.per_episode[i]
            .iter()
            .any(|&(p, d)| flags[p].is_some_and(|known| known <= d))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExposureOutcome {
    pub exposed: bool,
    pub logit: f64,
    pub probability: f64,
}

/// Adds `effect` to the log-odds of every episode that shared a ward-day
/// with a patient whose positive flag date (`positives`) is on or before
/// that day. Episodes missing from `base_logits` start at log-odds 0.
pub fn inject_exposure_signal(
    episodes: &[Episode],
    beddays: &[BedDayRecord],
    positives: &HashMap<String, NaiveDate>,
    base_logits: &BTreeMap<String, f64>,
    effect: f64,
) -> BTreeMap<String, ExposureOutcome> {
    let contacts = Contacts::build(episodes, beddays);
    let flags: Vec<Option<NaiveDate>> = contacts
        .patients
        .iter()
        .map(|p| positives.get(p).copied())
        .collect();
    episodes
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let exposed = contacts.exposed(i, &flags);
            let base = base_logits.get(&e.episode_id).copied().unwrap_or(0.0);
            let logit = base + if exposed { effect } else { 0.0 };
            (
                e.episode_id.clone(),
                ExposureOutcome {
                    exposed,
                    logit,
                    probability: sigmoid(logit),
                },
            )
        })
        .collect()
}

struct Simulation {
    positive: Vec<bool>,
    exposed: Vec<bool>,
    expected: f64,
}

/// Sequential CPE draw in discharge order with fixed uniforms `u`.
fn simulate_cpe(
    episodes: &[Episode],
    order: &[usize],
    contacts: &Contacts,
    base: &[f64],
    u: &[f64],
    intercept: f64,
    exposure_effect: f64,
) -> Simulation {
    let mut flags: Vec<Option<NaiveDate>> = vec![None; contacts.patients.len()];
    let mut positive = vec![false; episodes.len()];
    let mut exposed = vec![false; episodes.len()];
    let mut expected = 0.0;
    for &i in order {
        exposed[i] = contacts.exposed(i, &flags);
        let logit = intercept + base[i] + if exposed[i] { exposure_effect } else { 0.0 };
        let p = sigmoid(logit);
        expected += p;
        if u[i] < p {
            positive[i] = true;
            let known = episodes[i].discharge_date + Duration::days(RESULT_TURNAROUND_DAYS);
            let slot = &mut flags[contacts.patient_of[i]];
            *slot = Some(slot.map_or(known, |d| d.min(known)));
        }
    }
    Simulation {
        positive,
        exposed,
        expected,
    }
}

/// Generates a corpus; identical configs give identical corpora.
pub fn generate(cfg: &GeneratorConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let wards = cfg.wards();
    let general_wards = WeightedIndex::new(zipf_weights(wards.len() - 1, 1.0))
        .map_err(|e| Error::Config(e.to_string()))?;
    let areas: Vec<String> = (1..=cfg.n_areas).map(|i| format!("AREA{i:02}")).collect();
    let area_dist = WeightedIndex::new(zipf_weights(cfg.n_areas, 0.7))
        .map_err(|e| Error::Config(e.to_string()))?;
    let diag_codes: Vec<String> = (0..cfg.n_diag_codes).map(diag_code).collect();
    let proc_codes: Vec<String> = (0..cfg.n_proc_codes).map(proc_code).collect();
    let diag_dist = WeightedIndex::new(zipf_weights(cfg.n_diag_codes, 0.8))
        .map_err(|e| Error::Config(e.to_string()))?;
    let proc_dist = WeightedIndex::new(zipf_weights(cfg.n_proc_codes, 0.8))
        .map_err(|e| Error::Config(e.to_string()))?;
    let los_dist = LogNormal::new(4f64.ln(), 0.7).map_err(|e| Error::Config(e.to_string()))?;
    let age_dist = Normal::new(62.0, 17.0).map_err(|e| Error::Config(e.to_string()))?;
    let gap_dist = Exp::new(1.0 / 180.0).map_err(|e| Error::Config(e.to_string()))?;
    let (start, end) = cfg.date_range;
    let span = (end - start).num_days();

    let mut episodes: Vec<Episode> = Vec::new();
    let mut beddays: Vec<BedDayRecord> = Vec::new();
    for p in 0..cfg.n_patients {
        let patient_id = format!("P{p:06}");
        let base_age = if rng.random_bool(0.03) {
            rng.random_range(5.0..18.0)
        } else {
            Distribution::<f64>::sample(&age_dist, &mut rng).clamp(18.0, 99.0)
        };
        let sex = match rng.random_range(0..100) {
            0 => MISSING.to_string(),
            k if k % 2 == 0 => "F".to_string(),
            _ => "M".to_string(),
        };
        let area = if rng.random_bool(0.02) {
            MISSING.to_string()
        } else {
            areas[area_dist.sample(&mut rng)].clone()
        };
        let first = start + Duration::days(rng.random_range(0..span));
        let mut admission = first;
        loop {
            let los = if rng.random_bool(0.1) {
                rng.random_range(0..2)
            } else {
                (los_dist.sample(&mut rng).floor() as i64 + 1).min(60)
            };
            let discharge = admission + Duration::days(los);
            if discharge > end {
                break;
            }
            let emergency = rng.random_bool(0.6);
            let first_ward = if emergency && rng.random_bool(0.5) {
                0
            } else {
                1 + general_wards.sample(&mut rng)
            };
            let episode_id = format!("E{:07}", episodes.len());
            let mut ward = first_ward;
            let nights = los.max(1);
            for day in 0..nights {
                if day > 0 && rng.random_bool(cfg.transfer_prob) {
                    let mut next = 1 + general_wards.sample(&mut rng);
                    if next == ward {
                        next = 1 + (next % (wards.len() - 1));
                    }
                    ward = next;
                }
                beddays.push(BedDayRecord {
                    patient_id: patient_id.clone(),
                    episode_id: episode_id.clone(),
                    ward_id: wards[ward].clone(),
                    date: admission + Duration::days(day),
                });
            }
            let n_diag = rng.random_range(1..=6);
            let mut diagnosis_codes: Vec<String> = (0..n_diag)
                .map(|_| diag_codes[diag_dist.sample(&mut rng)].clone())
                .collect();
            diagnosis_codes.dedup();
            let n_proc = rng.random_range(0..=3);
            let procedure_codes: Vec<String> = (0..n_proc)
                .map(|_| proc_codes[proc_dist.sample(&mut rng)].clone())
                .collect();
            let years = (admission - first).num_days() as f64 / 365.25;
            let age = (base_age + years).floor() as u32;
            let died = rng.random_bool(sigmoid(-4.5 + 0.05 * (f64::from(age) - 70.0)));
            let chapter_hit = diagnosis_codes
                .iter()
                .any(|c| c.starts_with(cfg.readmission_chapter));
            episodes.push(Episode {
                episode_id,
                patient_id: patient_id.clone(),
                admission_date: admission,
                discharge_date: discharge,
                age,
                sex: sex.clone(),
                area_of_residence: area.clone(),
                admission_ward: wards[first_ward].clone(),
                discharge_ward: wards[ward].clone(),
                diagnosis_codes,
                procedure_codes,
                cpe_screened: false,
                cpe_result: CpeResult::NotTested,
                discharge_status: if died {
                    DischargeStatus::Died
                } else {
                    DischargeStatus::Alive
                },
                emergency_admission: emergency,
            });
            if died || !rng.random_bool(cfg.continue_prob) {
                break;
            }
            let soon = rng.random_bool(sigmoid(
                -1.5 + if chapter_hit { cfg.readmission_effect } else { 0.0 },
            ));
            let gap = if soon {
                rng.random_range(1..=30)
            } else {
                31 + Distribution::<f64>::sample(&gap_dist, &mut rng).floor() as i64
            };
            admission = discharge + Duration::days(gap);
        }
    }
    if episodes.is_empty() {
        return Err(Error::Config("configuration produced no episodes".into()));
    }

    let base: Vec<f64> = episodes
        .iter()
        .map(|e| {
            let ind = |b: bool| if b { 1.0 } else { 0.0 };
            cfg.effect("area_of_residence") * ind(e.area_of_residence == HOT_AREA)
                + cfg.effect("admission_ward") * ind(e.admission_ward == HOT_WARD)
                + cfg.effect("emergency_admission") * ind(e.emergency_admission)
                + cfg.effect("age") * (f64::from(e.age) - 65.0) / 15.0
        })
        .collect();
    let u: Vec<f64> = (0..episodes.len()).map(|_| rng.random::<f64>()).collect();
    let screen_u: Vec<f64> = (0..episodes.len()).map(|_| rng.random::<f64>()).collect();
    let contacts = Contacts::build(&episodes, &beddays);
    let mut order: Vec<usize> = (0..episodes.len()).collect();
    order.sort_by_key(|&i| (episodes[i].discharge_date, i));
    let exposure = cfg.effect("network_exposed");
    let target = cfg.cpe_prevalence * episodes.len() as f64;
    let (mut lo, mut hi) = (-30.0f64, 10.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let s = simulate_cpe(&episodes, &order, &contacts, &base, &u, mid, exposure);
        if s.expected < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let intercept = 0.5 * (lo + hi);
    let sim = simulate_cpe(&episodes, &order, &contacts, &base, &u, intercept, exposure);
    for (i, e) in episodes.iter_mut().enumerate() {
        if sim.positive[i] {
            e.cpe_screened = true;
            e.cpe_result = CpeResult::Positive;
        } else if screen_u[i] < cfg.screening_rate {
            e.cpe_screened = true;
            e.cpe_result = CpeResult::Negative;
        }
    }
    let exposed: BTreeMap<String, bool> = episodes
        .iter()
        .zip(&sim.exposed)
        .map(|(e, &x)| (e.episode_id.clone(), x))
        .collect();
    episodes.sort_by(|a, b| {
        (a.admission_date, &a.episode_id).cmp(&(b.admission_date, &b.episode_id))
    });
    beddays.sort_by(|a, b| {
        (a.date, &a.ward_id, &a.patient_id).cmp(&(b.date, &b.ward_id, &b.patient_id))
    });
    let ground_truth = GroundTruth {
        planted_effects: cfg.planted_effects.clone(),
        rules: EFFECT_RULES
            .iter()
            .filter(|(k, _)| cfg.planted_effects.contains_key(*k))
            .map(|(k, r)| (k.to_string(), r.to_string()))
            .collect(),
        cpe_intercept: intercept,
        readmission_chapter: cfg.readmission_chapter,
        readmission_effect: cfg.readmission_effect,
        n_episodes: episodes.len(),
        n_positive: sim.positive.iter().filter(|&&p| p).count(),
        n_exposed: sim.exposed.iter().filter(|&&x| x).count(),
        expected_positives: sim.expected,
        config: cfg.clone(),
    };
    log::info!(
        "generated {} episodes, {} positive, {} exposed",
        ground_truth.n_episodes,
        ground_truth.n_positive,
        ground_truth.n_exposed
    );
    Ok(Corpus {
        episodes,
        beddays,
        ground_truth,
        exposed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::tests::{d, episode};
    use crate::records::{derive_labels, validate_beddays};

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            n_patients: 300,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn zero_wards_rejected() {
        let cfg = GeneratorConfig {
            n_wards: 0,
            ..small()
        };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_effect_rejected() {
        let mut cfg = small();
        cfg.planted_effects.insert("shoe_size".into(), 1.0);
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn output_passes_record_validation() {
        let c = generate(&small()).unwrap();
        validate_beddays(&c.episodes, &c.beddays).unwrap();
        derive_labels(&c.episodes).unwrap();
        for e in &c.episodes {
            e.validate().unwrap();
        }
        let mut keys: Vec<_> = c
            .beddays
            .iter()
            .map(|b| (&b.patient_id, &b.ward_id, b.date))
            .collect();
        let n = keys.len();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), n);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(
            write_episodes_csv(&a.episodes).unwrap(),
            write_episodes_csv(&b.episodes).unwrap()
        );
        assert_eq!(
            write_beddays_csv(&a.beddays).unwrap(),
            write_beddays_csv(&b.beddays).unwrap()
        );
        let other = generate(&GeneratorConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(
            write_episodes_csv(&a.episodes).unwrap(),
            write_episodes_csv(&other.episodes).unwrap()
        );
    }

    fn shared_ward_pair() -> (Vec<Episode>, Vec<BedDayRecord>) {
        let eps = vec![
            episode("e1", "A", "2020-01-01", "2020-01-05"),
            episode("e2", "B", "2020-01-03", "2020-01-06"),
        ];
        let bd = |p: &str, e: &str, day: &str| BedDayRecord {
            patient_id: p.into(),
            episode_id: e.into(),
            ward_id: "W1".into(),
            date: d(day),
        };
        (eps, vec![bd("A", "e1", "2020-01-04"), bd("B", "e2", "2020-01-04")])
    }

    #[test]
    fn exposure_effect_follows_logistic_formula() {
        let (eps, beds) = shared_ward_pair();
        let positives = HashMap::from([("A".to_string(), d("2020-01-02"))]);
        let base = BTreeMap::from([("e2".to_string(), -3.0)]);
        let out = inject_exposure_signal(&eps, &beds, &positives, &base, 2.0);
        assert!(out["e2"].exposed);
        assert!(!out["e1"].exposed);
        let oracle = 1.0 / (1.0 + (1.0f64).exp());
        assert!((out["e2"].probability - oracle).abs() < 1e-15);
        let null = inject_exposure_signal(&eps, &beds, &positives, &base, 0.0);
        assert_eq!(null["e2"].logit, -3.0);
    }

    #[test]
    fn flag_after_contact_day_does_not_expose() {
        let (eps, beds) = shared_ward_pair();
        let positives = HashMap::from([("A".to_string(), d("2020-01-05"))]);
        let out = inject_exposure_signal(&eps, &beds, &positives, &BTreeMap::new(), 2.0);
        assert!(out.values().all(|o| !o.exposed));
    }

    #[test]
    fn no_colocation_no_exposure() {
        let (eps, mut beds) = shared_ward_pair();
        beds[1].ward_id = "W2".into();
        let positives = HashMap::from([("A".to_string(), d("2020-01-01"))]);
        let out = inject_exposure_signal(&eps, &beds, &positives, &BTreeMap::new(), 2.0);
        assert!(out.values().all(|o| !o.exposed));
    }

    #[test]
    fn null_model_hits_prevalence() {
        let cfg = GeneratorConfig {
            n_patients: 3000,
            cpe_prevalence: 0.02,
            planted_effects: BTreeMap::new(),
            ..GeneratorConfig::default()
        };
        let c = generate(&cfg).unwrap();
        let n = c.episodes.len() as f64;
        let k = c
            .episodes
            .iter()
            .filter(|e| e.cpe_result == CpeResult::Positive)
            .count() as f64;
        let sd = (n * 0.02 * 0.98).sqrt();
        assert!((k - 0.02 * n).abs() <= 3.0 * sd, "{k} of {n}");
    }
}
