//! Randomized property tests against independent oracles.

use std::collections::{HashSet, VecDeque};

use proptest::prelude::*;

use uag::dub::{kl_gauss, GaussianNode};
use uag::graph::{
    khop_labeled_diversity, load_content_cites, normalize_adjacency, split_nodes,
    write_content_cites, Graph, SplitMasks,
};
use uag::matrix::Matrix;
use uag::uat::range_iqr;

/// Random small graph as (node count, edge bitmask choices, label choices).
fn arb_graph() -> impl Strategy<Value = Graph> {
    (2usize..=50).prop_flat_map(|n| {
        let pairs: Vec<(u32, u32)> = (0..n as u32)
            .flat_map(|a| ((a + 1)..n as u32).map(move |b| (a, b)))
            .collect();
        let m = pairs.len();
        (
            Just(n),
            Just(pairs),
            proptest::collection::vec(proptest::bool::weighted(0.15), m),
            proptest::collection::vec(0u32..3, n),
            proptest::collection::vec(proptest::bool::weighted(0.7), n),
        )
            .prop_map(|(n, pairs, picks, labels, labeled)| {
                let edges: Vec<(u32, u32)> = pairs
                    .into_iter()
                    .zip(picks)
                    .filter_map(|(e, keep)| keep.then_some(e))
                    .collect();
                let mut features = Matrix::zeros(n, 3);
                let labels: Vec<Option<u32>> = labels
                    .into_iter()
                    .zip(labeled)
                    .map(|(l, has)| has.then_some(l))
                    .collect();
                for v in 0..n {
                    features.set(v, labels[v].unwrap_or(0) as usize % 3, 1.0);
                }
                Graph::new(features, edges, labels, 3).unwrap()
            })
    })
}

/// Independent oracle: BFS shortest-path distances, then count distinct
/// labels among train-labeled nodes within distance k (excluding the node).
fn diversity_oracle(g: &Graph, masks: &SplitMasks, k: usize) -> Vec<u32> {
    let train: HashSet<usize> = masks.train.iter().copied().collect();
    (0..g.num_nodes)
        .map(|s| {
            let mut dist = vec![usize::MAX; g.num_nodes];
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(v) = q.pop_front() {
                for &u in g.neighbors(v) {
                    if dist[u as usize] == usize::MAX {
                        dist[u as usize] = dist[v] + 1;
                        q.push_back(u as usize);
                    }
                }
            }
            let mut seen = HashSet::new();
            for v in 0..g.num_nodes {
                if v != s && dist[v] <= k && train.contains(&v) {
                    if let Some(l) = g.labels[v] {
                        seen.insert(l);
                    }
                }
            }
            seen.len() as u32
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn diversity_matches_bfs_oracle(g in arb_graph(), seed in 0u64..1000, k in 1usize..4) {
        let masks = split_nodes(&g, seed);
        let ours = khop_labeled_diversity(&g, &masks, k);
        let oracle = diversity_oracle(&g, &masks, k);
        prop_assert_eq!(ours.0, oracle);
    }

    #[test]
    fn split_partitions_all_nodes(g in arb_graph(), seed in 0u64..1000) {
        let masks = split_nodes(&g, seed);
        let n = g.num_nodes;
        prop_assert_eq!(masks.train.len(), n.div_ceil(10));
        prop_assert_eq!(masks.val.len(), n.div_ceil(10));
        let mut all: Vec<usize> = masks
            .train
            .iter()
            .chain(&masks.val)
            .chain(&masks.test)
            .copied()
            .collect();
        all.sort_unstable();
        let expect: Vec<usize> = (0..n).collect();
        prop_assert_eq!(all, expect);
    }

    #[test]
    fn graph_roundtrips_through_content_cites(g in arb_graph()) {
        let dir = tempfile::tempdir().unwrap();
        let content = dir.path().join("g.content");
        let cites = dir.path().join("g.cites");
        write_content_cites(&g, &content, &cites).unwrap();
        let back = load_content_cites(&content, &cites).unwrap();
        prop_assert_eq!(back.num_nodes, g.num_nodes);
        prop_assert_eq!(&back.edges, &g.edges);
        // Class ids are assigned in order of first appearance on load, so
        // compare label *names*, which are what the files actually carry.
        let names = |g: &Graph| -> Vec<Option<String>> {
            g.labels
                .iter()
                .map(|l| l.map(|c| g.label_names[c as usize].clone()))
                .collect()
        };
        prop_assert_eq!(names(&back), names(&g));
        prop_assert_eq!(back.features.data(), g.features.data());
    }

    #[test]
    fn normalized_adjacency_is_symmetric_positive(g in arb_graph()) {
        let adj = normalize_adjacency(&g);
        for v in 0..adj.num_nodes {
            for e in adj.row_ptr[v]..adj.row_ptr[v + 1] {
                let u = adj.col[e] as usize;
                let w = adj.weight[e];
                prop_assert!(w > 0.0 && w <= 1.0);
                let back = adj.entry_index(u, v as u32).unwrap();
                prop_assert_eq!(adj.weight[back].to_bits(), w.to_bits());
            }
        }
    }

    #[test]
    fn kl_gauss_nonnegative_and_zero_at_equality(
        m1 in proptest::collection::vec(-3.0f64..3.0, 3),
        m2 in proptest::collection::vec(-3.0f64..3.0, 3),
        v1 in 0.05f64..5.0,
        v2 in 0.05f64..5.0,
    ) {
        let a = GaussianNode { mean: m1, var: v1 };
        let b = GaussianNode { mean: m2, var: v2 };
        prop_assert!(kl_gauss(&a, &b).unwrap() >= -1e-12);
        let self_kl = kl_gauss(&a, &a).unwrap();
        prop_assert!(self_kl.abs() < 1e-12);
    }

    #[test]
    fn iqr_within_value_span(values in proptest::collection::vec(-10.0f64..10.0, 1..40)) {
        let r = range_iqr(&values).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(r >= 0.0);
        prop_assert!(r <= hi - lo + 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one(data in proptest::collection::vec(-30.0f64..30.0, 12)) {
        let m = Matrix::from_vec(3, 4, data).softmax_rows();
        for r in 0..3 {
            let s: f64 = m.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(m.row(r).iter().all(|&p| p >= 0.0));
        }
    }
}
