//! Ward-level contact networks: one patient co-location graph per day and a
//! directed ward-transfer graph, plus the per-episode features built on them.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{BedDayRecord, CpeResult, Episode, DATE_FORMAT};

/// Simple undirected graph over string-labelled nodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContactGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    adj: Vec<BTreeSet<usize>>,
}

impl ContactGraph {
    pub fn new(nodes: impl IntoIterator<Item = String>) -> Self {
        let mut g = Self::default();
        for n in nodes {
            g.add_node(&n);
        }
        g
    }

    pub fn add_node(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.nodes.push(name.to_string());
        self.adj.push(BTreeSet::new());
        self.index.insert(name.to_string(), self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    /// Adds an undirected edge; self-loops are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.adj[a].insert(b);
            self.adj[b].insert(a);
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[i].iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Unordered edges as index pairs with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, ns) in self.adj.iter().enumerate() {
            out.extend(ns.iter().filter(|&&b| a < b).map(|&b| (a, b)));
        }
        out
    }

    fn lookup(&self, node: &str) -> Result<usize> {
        self.node_index(node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))
    }

    pub fn degree(&self, node: &str) -> Result<usize> {
        Ok(self.adj[self.lookup(node)?].len())
    }

    /// `(k - 1) / sum of distances` within the node's component of size `k`;
    /// zero for an isolated node.
    pub fn closeness(&self, node: &str) -> Result<f64> {
        Ok(self.closeness_at(self.lookup(node)?))
    }

    pub(crate) fn closeness_at(&self, src: usize) -> f64 {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        let (mut reached, mut total) = (0usize, 0usize);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    reached += 1;
                    total += dist[v];
                    queue.push_back(v);
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            reached as f64 / total as f64
        }
    }
}

/// Patients co-located in at least one ward on `date`.
#[derive(Clone, Debug, PartialEq)]
pub struct DailyContactGraph {
    pub date: NaiveDate,
    pub graph: ContactGraph,
    /// `(patient_a, patient_b, ward)` per shared ward, `a < b` by node index.
    pub ward_edges: Vec<(usize, usize, String)>,
}

pub fn build_daily_graphs(beddays: &[BedDayRecord]) -> Vec<DailyContactGraph> {
    let mut by_day: BTreeMap<NaiveDate, BTreeMap<&str, BTreeSet<&str>>> = BTreeMap::new();
    for b in beddays {
        by_day
            .entry(b.date)
            .or_default()
            .entry(b.ward_id.as_str())
            .or_default()
            .insert(b.patient_id.as_str());
    }
    by_day
        .into_iter()
        .map(|(date, wards)| {
            let mut patients: BTreeSet<&str> = BTreeSet::new();
            for ps in wards.values() {
                patients.extend(ps.iter().copied());
            }
            let mut graph = ContactGraph::new(patients.into_iter().map(str::to_string));
            let mut ward_edges = Vec::new();
            for (ward, ps) in &wards {
                let idx: Vec<usize> = ps
                    .iter()
                    .map(|p| graph.node_index(p).expect("node added"))
                    .collect();
                for (i, &a) in idx.iter().enumerate() {
                    for &b in &idx[i + 1..] {
                        graph.add_edge(a, b);
                        ward_edges.push((a.min(b), a.max(b), (*ward).to_string()));
                    }
                }
            }
            DailyContactGraph {
                date,
                graph,
                ward_edges,
            }
        })
        .collect()
}

/// CSV edge list for one day: `date,patient_a,patient_b,ward_id`.
pub fn daily_edges_csv(day: &DailyContactGraph) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["date", "patient_a", "patient_b", "ward_id"])?;
    let date = day.date.format(DATE_FORMAT).to_string();
    let nodes = day.graph.nodes();
    for (a, b, ward) in &day.ward_edges {
        w.write_record([date.as_str(), &nodes[*a], &nodes[*b], ward])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

/// Directed ward graph weighted by observed consecutive-ward transfers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WardTransferGraph {
    wards: Vec<String>,
    index: HashMap<String, usize>,
    out: Vec<BTreeMap<usize, f64>>,
}

impl WardTransferGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_ward(&mut self, ward: &str) -> usize {
        if let Some(&i) = self.index.get(ward) {
            return i;
        }
        self.wards.push(ward.to_string());
        self.out.push(BTreeMap::new());
        self.index.insert(ward.to_string(), self.wards.len() - 1);
        self.wards.len() - 1
    }

    pub fn add_transfer(&mut self, from: &str, to: &str, weight: f64) {
        let (a, b) = (self.add_ward(from), self.add_ward(to));
        *self.out[a].entry(b).or_insert(0.0) += weight;
    }

    pub fn wards(&self) -> &[String] {
        &self.wards
    }

    pub fn weight(&self, from: &str, to: &str) -> f64 {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&a), Some(&b)) => self.out[a].get(&b).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Counts consecutive ward changes along each episode's bed-days, using
    /// only episodes in `window`. Every ward seen in the window is a node.
    pub fn from_beddays(beddays: &[BedDayRecord], window: &HashSet<&str>) -> Self {
        let mut per_episode: BTreeMap<&str, Vec<(NaiveDate, &str)>> = BTreeMap::new();
        for b in beddays {
            if window.contains(b.episode_id.as_str()) {
                per_episode
                    .entry(b.episode_id.as_str())
                    .or_default()
                    .push((b.date, b.ward_id.as_str()));
            }
        }
        let mut g = Self::new();
        for days in per_episode.values_mut() {
            days.sort();
            let mut prev: Option<&str> = None;
            for &(_, ward) in days.iter() {
                g.add_ward(ward);
                if let Some(p) = prev {
                    if p != ward {
                        g.add_transfer(p, ward, 1.0);
                    }
                }
                prev = Some(ward);
            }
        }
        g
    }

    /// Distinct in- plus out-neighbours over `n - 1`.
    pub fn degree_centrality(&self) -> BTreeMap<String, f64> {
        let n = self.wards.len();
        let mut nbrs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (a, outs) in self.out.iter().enumerate() {
            for &b in outs.keys() {
                if a != b {
                    nbrs[a].insert(b);
                    nbrs[b].insert(a);
                }
            }
        }
        let mut in_out = vec![0usize; n];
        for (a, outs) in self.out.iter().enumerate() {
            for &b in outs.keys() {
                if a != b {
                    in_out[a] += 1;
                    in_out[b] += 1;
                }
            }
        }
        let denom = (n.saturating_sub(1)).max(1) as f64;
        self.wards
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), in_out[i] as f64 / denom))
            .collect()
    }

    /// Closeness on the undirected skeleton, within-component convention.
    pub fn closeness_centrality(&self) -> BTreeMap<String, f64> {
        let mut g = ContactGraph::new(self.wards.iter().cloned());
        for (a, outs) in self.out.iter().enumerate() {
            for &b in outs.keys() {
                g.add_edge(a, b);
            }
        }
        self.wards
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), g.closeness_at(i)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// Power iteration with weight-proportional transitions; dangling mass is
/// spread uniformly. Returns scores and the L1 residual of every iteration.
pub fn pagerank_with_trace(
    graph: &WardTransferGraph,
    cfg: &PageRankConfig,
) -> Result<(BTreeMap<String, f64>, Vec<f64>)> {
    let n = graph.wards.len();
    if n == 0 {
        return Err(Error::Validation("pagerank needs at least one node".into()));
    }
    let out_weight: Vec<f64> = graph.out.iter().map(|o| o.values().sum()).collect();
    let nf = n as f64;
    let mut r = vec![1.0 / nf; n];
    let mut trace = Vec::new();
    for _ in 0..cfg.max_iter {
        let dangling: f64 = (0..n).filter(|&i| out_weight[i] <= 0.0).map(|i| r[i]).sum();
        let base = (1.0 - cfg.damping) / nf + cfg.damping * dangling / nf;
        let mut next = vec![base; n];
        for (i, outs) in graph.out.iter().enumerate() {
            if out_weight[i] <= 0.0 {
                continue;
            }
            let share = cfg.damping * r[i] / out_weight[i];
            for (&j, &w) in outs {
                next[j] += share * w;
            }
        }
        let residual: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
        trace.push(residual);
        r = next;
        if residual < cfg.tol {
            let scores = graph.wards.iter().cloned().zip(r).collect();
            return Ok((scores, trace));
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        residual: trace.last().copied().unwrap_or(f64::NAN),
    })
}

pub fn pagerank(graph: &WardTransferGraph, cfg: &PageRankConfig) -> Result<BTreeMap<String, f64>> {
    pagerank_with_trace(graph, cfg).map(|(s, _)| s)
}

/// Days after discharge before a positive screen is known to the ward.
pub const RESULT_TURNAROUND_DAYS: i64 = 1;

/// Earliest date each patient is known CPE-positive.
pub fn positive_flags<'a>(episodes: impl IntoIterator<Item = &'a Episode>) -> HashMap<String, NaiveDate> {
    let mut flags: HashMap<String, NaiveDate> = HashMap::new();
    for e in episodes {
        if e.cpe_result == CpeResult::Positive {
            let known = e.discharge_date + Duration::days(RESULT_TURNAROUND_DAYS);
            flags
                .entry(e.patient_id.clone())
                .and_modify(|d| *d = (*d).min(known))
                .or_insert(known);
        }
    }
    flags
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkFeatures {
    pub mean_degree: f64,
    pub max_degree: f64,
    pub mean_closeness: f64,
    pub max_closeness: f64,
    pub total_contacts: f64,
    pub unique_contacts: f64,
    pub exposed: bool,
    pub episode_isolated: bool,
    pub ward_pagerank: f64,
    pub ward_degree_centrality: f64,
    pub ward_closeness_centrality: f64,
}

impl NetworkFeatures {
    pub const NAMES: [&'static str; 11] = [
        "network_mean_degree",
        "network_max_degree",
        "network_mean_closeness",
        "network_max_closeness",
        "network_total_contacts",
        "network_unique_contacts",
        "network_exposed",
        "episode_isolated",
        "ward_pagerank",
        "ward_degree_centrality",
        "ward_closeness_centrality",
    ];

    pub fn values(&self) -> [f64; 11] {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        [
            self.mean_degree,
            self.max_degree,
            self.mean_closeness,
            self.max_closeness,
            self.total_contacts,
            self.unique_contacts,
            b(self.exposed),
            b(self.episode_isolated),
            self.ward_pagerank,
            self.ward_degree_centrality,
            self.ward_closeness_centrality,
        ]
    }
}

/// Scores of the ward-transfer graph, looked up by admission ward.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WardMetrics {
    pub pagerank: BTreeMap<String, f64>,
    pub degree: BTreeMap<String, f64>,
    pub closeness: BTreeMap<String, f64>,
}

impl WardMetrics {
    pub fn compute(graph: &WardTransferGraph, cfg: &PageRankConfig) -> Result<Self> {
        if graph.wards().is_empty() {
            return Ok(Self::default());
        }
        Ok(Self {
            pagerank: pagerank(graph, cfg)?,
            degree: graph.degree_centrality(),
            closeness: graph.closeness_centrality(),
        })
    }
}

/// Daily graphs keyed by date with cached per-node closeness.
pub struct ContactIndex {
    days: BTreeMap<NaiveDate, (DailyContactGraph, Vec<f64>)>,
}

impl ContactIndex {
    pub fn new(daily: Vec<DailyContactGraph>) -> Self {
        let days = daily
            .into_iter()
            .map(|d| {
                let closeness = (0..d.graph.nodes().len())
                    .map(|i| d.graph.closeness_at(i))
                    .collect();
                (d.date, (d, closeness))
            })
            .collect();
        Self { days }
    }

    pub fn day(&self, date: NaiveDate) -> Option<&DailyContactGraph> {
        self.days.get(&date).map(|(d, _)| d)
    }

    pub fn days(&self) -> impl Iterator<Item = &DailyContactGraph> {
        self.days.values().map(|(d, _)| d)
    }
}

/// Aggregates the patient's daily contact metrics over the stay (`stay_days`
/// are the dates with bed-day rows for the episode) and attaches the
/// admission ward's transfer-graph scores.
pub fn episode_network_features(
    episode: &Episode,
    stay_days: &[NaiveDate],
    contacts: &ContactIndex,
    wards: &WardMetrics,
    positives: &HashMap<String, NaiveDate>,
) -> NetworkFeatures {
    let mut degrees = Vec::with_capacity(stay_days.len());
    let mut closeness = Vec::with_capacity(stay_days.len());
    let mut unique: BTreeSet<&str> = BTreeSet::new();
    let mut exposed = false;
    for &date in stay_days {
        let Some((day, close)) = contacts.days.get(&date) else {
            degrees.push(0.0);
            closeness.push(0.0);
            continue;
        };
        let Some(i) = day.graph.node_index(&episode.patient_id) else {
            degrees.push(0.0);
            closeness.push(0.0);
            continue;
        };
        let mut deg = 0usize;
        for j in day.graph.neighbors(i) {
            deg += 1;
            let other = day.graph.nodes()[j].as_str();
            unique.insert(other);
            if positives.get(other).is_some_and(|&known| known <= date) {
                exposed = true;
            }
        }
        degrees.push(deg as f64);
        closeness.push(close[i]);
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let ward = &episode.admission_ward;
    NetworkFeatures {
        mean_degree: mean(&degrees),
        max_degree: max(&degrees),
        mean_closeness: mean(&closeness),
        max_closeness: max(&closeness),
        total_contacts: degrees.iter().sum(),
        unique_contacts: unique.len() as f64,
        exposed,
        episode_isolated: degrees.iter().all(|&d| d == 0.0),
        ward_pagerank: wards.pagerank.get(ward).copied().unwrap_or(0.0),
        ward_degree_centrality: wards.degree.get(ward).copied().unwrap_or(0.0),
        ward_closeness_centrality: wards.closeness.get(ward).copied().unwrap_or(0.0),
    }
}

/// Network features for every episode. The ward graph is built from the
/// episodes in `transfer_window` (normally the training split).
pub fn compute_network_features(
    episodes: &[Episode],
    beddays: &[BedDayRecord],
    transfer_window: &HashSet<&str>,
    cfg: &PageRankConfig,
) -> Result<(BTreeMap<String, NetworkFeatures>, ContactIndex, WardTransferGraph)> {
    let contacts = ContactIndex::new(build_daily_graphs(beddays));
    let ward_graph = WardTransferGraph::from_beddays(beddays, transfer_window);
    let wards = WardMetrics::compute(&ward_graph, cfg)?;
    let positives = positive_flags(episodes);
    let mut stay: HashMap<&str, Vec<NaiveDate>> = HashMap::new();
    for b in beddays {
        stay.entry(b.episode_id.as_str()).or_default().push(b.date);
    }
    for v in stay.values_mut() {
        v.sort();
        v.dedup();
    }
    let feats = episodes
        .iter()
        .map(|e| {
            let days = stay.get(e.episode_id.as_str()).map_or(&[][..], Vec::as_slice);
            (
                e.episode_id.clone(),
                episode_network_features(e, days, &contacts, &wards, &positives),
            )
        })
        .collect();
    Ok((feats, contacts, ward_graph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::tests::{d, episode};

    fn bd(p: &str, w: &str, date: &str) -> BedDayRecord {
        BedDayRecord {
            patient_id: p.into(),
            episode_id: format!("{p}-e"),
            ward_id: w.into(),
            date: d(date),
        }
    }

    fn path3() -> ContactGraph {
        let mut g = ContactGraph::new(["a", "b", "c"].map(String::from));
        g.add_edge(0, 1);
        g.add_edge(1, 2);
        g
    }

    #[test]
    fn same_ward_same_day_is_contact() {
        let days = build_daily_graphs(&[bd("A", "W", "2020-01-01"), bd("B", "W", "2020-01-01")]);
        assert_eq!(days.len(), 1);
        assert_eq!(days[0].graph.edge_count(), 1);
    }

    #[test]
    fn different_wards_no_contact() {
        let days = build_daily_graphs(&[bd("A", "W1", "2020-01-01"), bd("B", "W2", "2020-01-01")]);
        assert_eq!(days[0].graph.edge_count(), 0);
    }

    #[test]
    fn three_in_a_ward_form_a_triangle() {
        let days = build_daily_graphs(&[
            bd("A", "W", "2020-01-01"),
            bd("B", "W", "2020-01-01"),
            bd("C", "W", "2020-01-01"),
        ]);
        assert_eq!(days[0].graph.edge_count(), 3);
        assert_eq!(days[0].graph.degree("A").unwrap(), 2);
    }

    #[test]
    fn degree_examples() {
        let mut star = ContactGraph::new(["c", "x", "y", "z", "lone"].map(String::from));
        for i in 1..4 {
            star.add_edge(0, i);
        }
        assert_eq!(star.degree("c").unwrap(), 3);
        assert_eq!(star.degree("lone").unwrap(), 0);
        assert!(matches!(star.degree("nobody"), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn closeness_examples() {
        let g = path3();
        assert_eq!(g.closeness("b").unwrap(), 1.0);
        assert!((g.closeness("a").unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let lone = ContactGraph::new(["z".to_string()]);
        assert_eq!(lone.closeness("z").unwrap(), 0.0);
        assert!(lone.closeness("q").is_err());
    }

    #[test]
    fn pagerank_single_node_and_triangle() {
        let mut g = WardTransferGraph::new();
        g.add_ward("A");
        assert_eq!(pagerank(&g, &PageRankConfig::default()).unwrap()["A"], 1.0);
        let mut k3 = WardTransferGraph::new();
        for a in ["A", "B", "C"] {
            for b in ["A", "B", "C"] {
                if a != b {
                    k3.add_transfer(a, b, 1.0);
                }
            }
        }
        for v in pagerank(&k3, &PageRankConfig::default()).unwrap().values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pagerank_nonconvergence_reports_residual() {
        let mut g = WardTransferGraph::new();
        g.add_transfer("A", "B", 1.0);
        let cfg = PageRankConfig {
            max_iter: 2,
            tol: 1e-300,
            ..Default::default()
        };
        match pagerank(&g, &cfg) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transfers_counted_per_consecutive_change() {
        let mut rows = vec![
            bd("A", "W1", "2020-01-01"),
            bd("A", "W2", "2020-01-02"),
            bd("A", "W1", "2020-01-03"),
        ];
        rows.push(BedDayRecord {
            episode_id: "other".into(),
            ..bd("B", "W1", "2020-01-01")
        });
        rows.push(BedDayRecord {
            episode_id: "other".into(),
            ..bd("B", "W3", "2020-01-02")
        });
        let window: HashSet<&str> = ["A-e"].into_iter().collect();
        let g = WardTransferGraph::from_beddays(&rows, &window);
        assert_eq!(g.weight("W1", "W2"), 1.0);
        assert_eq!(g.weight("W2", "W1"), 1.0);
        assert_eq!(g.weight("W1", "W3"), 0.0);
        assert_eq!(g.wards().len(), 2);
    }

    fn contact_setup(rows: &[BedDayRecord]) -> ContactIndex {
        ContactIndex::new(build_daily_graphs(rows))
    }

    #[test]
    fn solo_patient_is_isolated() {
        let ep = episode("A-e", "A", "2020-01-01", "2020-01-02");
        let rows = [bd("A", "W", "2020-01-01"), bd("A", "W", "2020-01-02")];
        let f = episode_network_features(
            &ep,
            &[d("2020-01-01"), d("2020-01-02")],
            &contact_setup(&rows),
            &WardMetrics::default(),
            &HashMap::new(),
        );
        assert!(f.episode_isolated);
        assert!(!f.exposed);
        assert_eq!(f.total_contacts, 0.0);
        assert_eq!(f.max_degree, 0.0);
    }

    #[test]
    fn contact_with_known_positive_exposes() {
        let ep = episode("A-e", "A", "2020-01-01", "2020-01-02");
        let rows = [
            bd("A", "W", "2020-01-01"),
            bd("A", "W", "2020-01-02"),
            bd("B", "W", "2020-01-02"),
        ];
        let idx = contact_setup(&rows);
        let days = [d("2020-01-01"), d("2020-01-02")];
        let known_before: HashMap<String, NaiveDate> = [("B".to_string(), d("2019-06-01"))].into();
        let f = episode_network_features(&ep, &days, &idx, &WardMetrics::default(), &known_before);
        assert!(f.exposed);
        assert!(!f.episode_isolated);
        let known_later: HashMap<String, NaiveDate> = [("B".to_string(), d("2020-01-03"))].into();
        let f = episode_network_features(&ep, &days, &idx, &WardMetrics::default(), &known_later);
        assert!(!f.exposed);
    }

    #[test]
    fn degree_aggregation() {
        let ep = episode("A-e", "A", "2020-01-01", "2020-01-02");
        let mut rows = vec![bd("A", "W", "2020-01-01"), bd("A", "W", "2020-01-02")];
        rows.push(bd("B", "W", "2020-01-01"));
        for p in ["B", "C", "D"] {
            rows.push(bd(p, "W", "2020-01-02"));
        }
        let f = episode_network_features(
            &ep,
            &[d("2020-01-01"), d("2020-01-02")],
            &contact_setup(&rows),
            &WardMetrics::default(),
            &HashMap::new(),
        );
        assert_eq!(f.mean_degree, 2.0);
        assert_eq!(f.max_degree, 3.0);
        assert_eq!(f.total_contacts, 4.0);
        assert_eq!(f.unique_contacts, 3.0);
    }

    #[test]
    fn edge_csv_has_header_and_rows() {
        let days = build_daily_graphs(&[bd("A", "W", "2020-01-01"), bd("B", "W", "2020-01-01")]);
        let text = daily_edges_csv(&days[0]).unwrap();
        assert_eq!(text, "date,patient_a,patient_b,ward_id\n2020-01-01,A,B,W\n");
    }
}
