use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;

use riskbench::autodiff::sparsemax::sparsemax;
use riskbench::autodiff::{Graph, Tensor};
use riskbench::explain::ranks::quantile;
use riskbench::explain::{path_integral, rank_scores};
use riskbench::network::{pagerank, ContactGraph, PageRankConfig, WardTransferGraph};
use riskbench::train::folds::make_folds;
use riskbench::train::metrics::{auprc, auroc};
use riskbench::train::sampling::{balanced_batches, shuffled_batches};

fn scores_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(-50i32..50, n).prop_map(|v| v.into_iter().map(|x| x as f64 / 10.0).collect()),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_filter("both classes", |(_, y)| y.iter().any(|&v| v) && y.iter().any(|&v| !v))
    })
}

proptest! {
    #[test]
    fn sparsemax_lands_on_the_simplex(z in prop::collection::vec(-10.0f64..10.0, 1..20)) {
        let p = sparsemax(&z);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..z.len() {
            for j in 0..z.len() {
                if z[i] > z[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
    }

    #[test]
    fn sparsemax_ignores_shifts(z in prop::collection::vec(-5.0f64..5.0, 1..12), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        for (a, b) in sparsemax(&z).iter().zip(sparsemax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..5, cols in 1usize..7, seed in any::<u64>()) {
        let data: Vec<f64> = (0..rows * cols).map(|i| ((seed.wrapping_add(i as u64) % 97) as f64 - 48.0) / 7.0).collect();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![rows, cols], data).unwrap());
        let s = g.softmax(x, 1).unwrap();
        for r in 0..rows {
            prop_assert!((g.value(s).row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn auroc_is_a_probability_and_flips((s, y) in scores_and_labels()) {
        let a = auroc(&s, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((auroc(&neg, &y).unwrap() - (1.0 - a)).abs() < 1e-12);
        let p = auprc(&s, &y).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0 + 1e-12);
    }

    #[test]
    fn auroc_depends_only_on_order((s, y) in scores_and_labels()) {
        let squashed: Vec<f64> = s.iter().map(|v| v.tanh() * 3.0 + 1.0).collect();
        prop_assert_eq!(auroc(&s, &y).unwrap(), auroc(&squashed, &y).unwrap());
    }

    #[test]
    fn ranks_are_a_permutation(scores in prop::collection::vec(0.0f64..1.0, 1..40)) {
        let names: Vec<String> = (0..scores.len()).map(|i| format!("f{i:02}")).collect();
        let ranks = rank_scores(&names, &scores).unwrap();
        let set: BTreeSet<usize> = ranks.iter().copied().collect();
        prop_assert_eq!(set, (1..=scores.len()).collect::<BTreeSet<_>>());
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] > scores[j] {
                    prop_assert!(ranks[i] < ranks[j]);
                }
            }
        }
    }

    #[test]
    fn quantiles_are_monotone(mut v in prop::collection::vec(-1e3f64..1e3, 1..50), q in 0.0f64..1.0) {
        v.sort_by(f64::total_cmp);
        let lo = quantile(&v, 0.25);
        let mid = quantile(&v, q);
        prop_assert!(v[0] <= mid && mid <= v[v.len() - 1]);
        prop_assert!(lo <= quantile(&v, 0.75));
    }

    #[test]
    fn folds_keep_patients_whole(
        assignment in prop::collection::vec((0usize..15, any::<bool>()), 15..120),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let patients: Vec<String> = assignment.iter().map(|(p, _)| format!("P{p}")).collect();
        let refs: Vec<&str> = patients.iter().map(String::as_str).collect();
        let labels: Vec<bool> = assignment.iter().map(|&(_, y)| y).collect();
        let distinct: BTreeSet<&str> = refs.iter().copied().collect();
        prop_assume!(distinct.len() >= k);
        let plan = make_folds(&refs, &labels, k, seed).unwrap();
        let mut fold_of: HashMap<&str, usize> = HashMap::new();
        for (i, &f) in plan.assignment.iter().enumerate() {
            prop_assert!(f < k);
            prop_assert_eq!(*fold_of.entry(refs[i]).or_insert(f), f);
        }
        let total: usize = (0..k).map(|f| plan.validation(f).len()).sum();
        prop_assert_eq!(total, refs.len());
    }

    #[test]
    fn balanced_batches_are_balanced(
        labels in prop::collection::vec(any::<bool>(), 2..300),
        batch in 2usize..70,
        seed in any::<u64>(),
    ) {
        prop_assume!(labels.iter().any(|&v| v) && labels.iter().any(|&v| !v));
        let batches = balanced_batches(&labels, batch, seed).unwrap();
        prop_assert_eq!(batches.len(), labels.len().div_ceil(batch));
        for b in &batches {
            prop_assert_eq!(b.len(), batch);
            let pos = b.iter().filter(|&&i| labels[i]).count();
            prop_assert!(pos.abs_diff(b.len() - pos) <= 1);
        }
    }

    #[test]
    fn shuffled_batches_cover_every_row_once(n in 0usize..300, batch in 1usize..50, seed in any::<u64>()) {
        let mut seen: Vec<usize> = shuffled_batches(n, batch, seed).into_iter().flatten().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn pagerank_is_a_distribution(
        edges in prop::collection::vec((0usize..10, 0usize..10, 0.1f64..5.0), 0..40),
        damping in 0.5f64..0.95,
    ) {
        let mut g = WardTransferGraph::new();
        g.add_ward("w0");
        for (a, b, w) in edges {
            if a != b {
                g.add_transfer(&format!("w{a}"), &format!("w{b}"), w);
            }
        }
        let cfg = PageRankConfig { damping, max_iter: 2000, ..PageRankConfig::default() };
        let pr = pagerank(&g, &cfg).unwrap();
        prop_assert!(pr.values().all(|&v| v > 0.0));
        prop_assert!((pr.values().sum::<f64>() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn closeness_lies_in_unit_interval(edges in prop::collection::vec((0usize..8, 0usize..8), 0..20)) {
        let mut g = ContactGraph::new((0..8).map(|i| format!("p{i}")));
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        for i in 0..8 {
            let c = g.closeness(&format!("p{i}")).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert_eq!(c == 0.0, g.degree(&format!("p{i}")).unwrap() == 0);
        }
    }

    #[test]
    fn integrated_gradients_are_complete_on_smooth_functions(
        x in prop::collection::vec(-2.0f64..2.0, 4),
        b in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let xt = Tensor::new(vec![1, 4], x).unwrap();
        let bt = Tensor::new(vec![1, 4], b).unwrap();
        let pi = path_integral(&[xt], &[bt], 256, |g, v| {
            let t = g.tanh(v[0]);
            let w = g.constant(Tensor::new(vec![4, 1], vec![0.7, -1.2, 0.4, 2.0])?);
            let o = g.matmul(t, w)?;
            Ok(g.sigmoid(o))
        })
        .unwrap();
        let gap = (pi.outputs[0] - pi.baseline_outputs[0]).abs();
        prop_assert!(pi.residuals[0] <= 1e-3 * (1.0 + gap));
    }
}
