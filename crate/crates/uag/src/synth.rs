//! Synthetic graphs: small separable fixtures for tests and deterministic
//! citation-style surrogate datasets written in the content/cites format.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, UagError};
use crate::graph::{write_content_cites, Graph};
use crate::matrix::Matrix;

/// Two homophilous clusters with one-hot cluster features and a single
/// bridge edge. Intra-cluster edges form a ring plus random chords, so 2-hop
/// neighborhoods vary across nodes.
pub fn two_cluster_graph(per_cluster: usize, seed: u64) -> Graph {
    assert!(per_cluster >= 3);
    let n = 2 * per_cluster;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: HashSet<(u32, u32)> = HashSet::new();
    for cluster in 0..2u32 {
        let base = cluster * per_cluster as u32;
        for i in 0..per_cluster as u32 {
            let a = base + i;
            let b = base + (i + 1) % per_cluster as u32;
            edges.insert((a.min(b), a.max(b)));
        }
        for i in 0..per_cluster as u32 {
            for j in (i + 2)..per_cluster as u32 {
                if rng.gen::<f64>() < 0.4 {
                    edges.insert((base + i, base + j));
                }
            }
        }
    }
    edges.insert((0, per_cluster as u32)); // bridge
    let mut features = Matrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for v in 0..n {
        let cluster = (v / per_cluster) as u32;
        features.set(v, cluster as usize, 1.0);
        labels.push(Some(cluster));
    }
    let mut edge_vec: Vec<(u32, u32)> = edges.into_iter().collect();
    edge_vec.sort_unstable();
    Graph::new(features, edge_vec, labels, 2).unwrap()
}

/// Shape of a citation-style surrogate dataset.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateSpec {
    pub name: &'static str,
    pub nodes: usize,
    pub feat_dim: usize,
    pub classes: usize,
    /// undirected edge count
    pub edges: usize,
    pub seed: u64,
}

/// Desk-scale citation surrogates with the standard benchmark shapes.
pub fn surrogate_spec(name: &str) -> Result<SurrogateSpec> {
    match name {
        "cora" => Ok(SurrogateSpec {
            name: "cora",
            nodes: 2708,
            feat_dim: 1433,
            classes: 7,
            edges: 5429,
            seed: 101,
        }),
        "citeseer" => Ok(SurrogateSpec {
            name: "citeseer",
            nodes: 3327,
            feat_dim: 3703,
            classes: 6,
            edges: 4732,
            seed: 102,
        }),
        "pubmed" => Ok(SurrogateSpec {
            name: "pubmed",
            nodes: 19717,
            feat_dim: 500,
            classes: 3,
            edges: 44338,
            seed: 103,
        }),
        other => Err(UagError::Config(format!("unknown dataset `{other}`"))),
    }
}

/// Generate the surrogate graph in memory: homophilous edges (exact count),
/// bag-of-words style binary features with class-specific topic blocks, and
/// full labels.
pub fn surrogate_graph(spec: &SurrogateSpec) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.nodes;
    let c = spec.classes;
    let labels: Vec<Option<u32>> = (0..n).map(|v| Some((v % c) as u32)).collect();

    // Per-node "breadth": broad papers use vocabulary from many topics and
    // cite across fields, narrow ones stay inside their own block. The
    // population is bimodal — most papers are narrow, a survey-like minority
    // is broad — so neighborhood label diversity spans its full range instead
    // of clumping in the middle. Breadth drives the word count, the feature
    // noise, the degree and the cross-class edge propensity below, so
    // diversity ends up carried by a signal the features can express.
    let breadth: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen::<f64>() < 0.35 {
                0.8 + 0.2 * rng.gen::<f64>()
            } else {
                0.2 * rng.gen::<f64>()
            }
        })
        .collect();

    // class-topic feature blocks; each node activates a handful of words,
    // mostly from its own block unless it is broad. Broad papers also use a
    // larger vocabulary, so the feature row mass itself carries the breadth
    // signal the data-uncertainty head has to regress.
    let block = spec.feat_dim / c;
    let mut features = Matrix::zeros(n, spec.feat_dim);
    for v in 0..n {
        let class = labels[v].unwrap() as usize;
        let own_block = 0.03 + 0.7 * (1.0 - breadth[v]);
        let words_per_node = (8.0 + 40.0 * breadth[v]).round() as usize;
        let words_per_node = words_per_node.min(spec.feat_dim);
        for _ in 0..words_per_node {
            let w = if rng.gen::<f64>() < own_block {
                class * block + rng.gen_range(0..block)
            } else {
                rng.gen_range(0..spec.feat_dim)
            };
            features.set(v, w, 1.0);
        }
    }

    // edge sampling with breadth-weighted endpoints until the exact
    // undirected count is reached; broad nodes both cite more (degree skew)
    // and cite across classes more, so neighborhood diversity tracks breadth
    let mut by_class: Vec<Vec<u32>> = vec![Vec::new(); c];
    for v in 0..n {
        by_class[labels[v].unwrap() as usize].push(v as u32);
    }
    // cumulative endpoint weights per class, and globally over all nodes
    let cumulate = |members: &[u32]| -> Vec<f64> {
        let mut acc = 0.0;
        members
            .iter()
            .map(|&v| {
                acc += 0.1 + 6.0 * breadth[v as usize];
                acc
            })
            .collect()
    };
    let sample = |members: &[u32], cum: &[f64], rng: &mut ChaCha8Rng| -> u32 {
        let x = rng.gen::<f64>() * cum[cum.len() - 1];
        let idx = cum.partition_point(|&v| v < x).min(members.len() - 1);
        members[idx]
    };
    let class_cum: Vec<Vec<f64>> = by_class.iter().map(|m| cumulate(m)).collect();
    let all_nodes: Vec<u32> = (0..n as u32).collect();
    let all_cum = cumulate(&all_nodes);
    let mut edges: HashSet<(u32, u32)> = HashSet::with_capacity(spec.edges);
    while edges.len() < spec.edges {
        let a = sample(&all_nodes, &all_cum, &mut rng);
        let homophily = 0.98 - 0.9 * breadth[a as usize];
        let b = if rng.gen::<f64>() < homophily {
            let cls = labels[a as usize].unwrap() as usize;
            sample(&by_class[cls], &class_cum[cls], &mut rng)
        } else {
            sample(&all_nodes, &all_cum, &mut rng)
        };
        if a == b {
            continue;
        }
        edges.insert((a.min(b), a.max(b)));
    }
    let mut edge_vec: Vec<(u32, u32)> = edges.into_iter().collect();
    edge_vec.sort_unstable();
    Graph::new(features, edge_vec, labels, c).unwrap()
}

/// Write `<dir>/<name>.content` and `<dir>/<name>.cites` for a named
/// surrogate. Returns the two paths.
pub fn write_surrogate(name: &str, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let spec = surrogate_spec(name)?;
    let graph = surrogate_graph(&spec);
    std::fs::create_dir_all(dir).map_err(|source| UagError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let content = dir.join(format!("{name}.content"));
    let cites = dir.join(format!("{name}.cites"));
    write_content_cites(&graph, &content, &cites)?;
    Ok((content, cites))
}
