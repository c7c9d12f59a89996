//! Graph data model: citation-format ingestion, splits, symmetric adjacency
//! normalization, and k-hop label diversity.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, UagError};
use crate::matrix::Matrix;

/// Undirected graph with dense node features and partial labels.
///
/// Edges are stored once with `u < v`; self-loops are never stored (they are
/// introduced only during normalization). Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub num_nodes: usize,
    pub features: Matrix,
    pub edges: Vec<(u32, u32)>,
    pub labels: Vec<Option<u32>>,
    pub num_classes: usize,
    /// Original node identifiers, in dense-id order.
    pub node_ids: Vec<String>,
    /// Original label strings, in dense class-id order.
    pub label_names: Vec<String>,
    /// Original whitespace-joined feature tokens per node, kept so attacked
    /// graphs serialize with bit-exact feature text.
    pub feature_text: Vec<String>,
    adjacency: Vec<Vec<u32>>,
}

impl Graph {
    /// Build a graph from parts, validating the edge-set invariants.
    pub fn new(
        features: Matrix,
        edges: Vec<(u32, u32)>,
        labels: Vec<Option<u32>>,
        num_classes: usize,
    ) -> Result<Graph> {
        let n = features.rows();
        if features.cols() == 0 || num_classes == 0 {
            return Err(UagError::Domain(
                "feat_dim and num_classes must be positive".into(),
            ));
        }
        if labels.len() != n {
            return Err(UagError::Domain("labels length must equal num_nodes".into()));
        }
        let mut canon: Vec<(u32, u32)> = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a as usize >= n || b as usize >= n {
                return Err(UagError::Domain(format!(
                    "edge ({a},{b}) endpoint out of range (n={n})"
                )));
            }
            if a == b {
                return Err(UagError::Domain(format!("self-loop ({a},{a}) not allowed")));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        canon.dedup();
        if canon.len() != edges.len() {
            return Err(UagError::Domain("duplicate edges in edge set".into()));
        }
        for l in labels.iter().flatten() {
            if *l as usize >= num_classes {
                return Err(UagError::Domain(format!("label {l} out of range")));
            }
        }
        let node_ids = (0..n).map(|i| i.to_string()).collect();
        let label_names = (0..num_classes).map(|c| c.to_string()).collect();
        let feature_text = (0..n)
            .map(|r| {
                features
                    .row(r)
                    .iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        Ok(Graph::assemble(
            features,
            canon,
            labels,
            num_classes,
            node_ids,
            label_names,
            feature_text,
        ))
    }

    fn assemble(
        features: Matrix,
        edges: Vec<(u32, u32)>,
        labels: Vec<Option<u32>>,
        num_classes: usize,
        node_ids: Vec<String>,
        label_names: Vec<String>,
        feature_text: Vec<String>,
    ) -> Graph {
        let n = features.rows();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a as usize].push(b);
            adjacency[b as usize].push(a);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Graph {
            num_nodes: n,
            features,
            edges,
            labels,
            num_classes,
            node_ids,
            label_names,
            feature_text,
            adjacency,
        }
    }

    pub fn feat_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        let (a, b) = (a.min(b), a.max(b));
        self.adjacency[a as usize].binary_search(&b).is_ok()
    }

    /// Replace the edge set, keeping nodes, features, and labels. Used by the
    /// attack generators.
    pub fn with_edges(&self, edges: Vec<(u32, u32)>) -> Result<Graph> {
        let mut canon: Vec<(u32, u32)> = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a == b || a as usize >= self.num_nodes || b as usize >= self.num_nodes {
                return Err(UagError::Domain(format!("bad edge ({a},{b})")));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        canon.dedup();
        if canon.len() != edges.len() {
            return Err(UagError::Domain("duplicate edges in edge set".into()));
        }
        Ok(Graph::assemble(
            self.features.clone(),
            canon,
            self.labels.clone(),
            self.num_classes,
            self.node_ids.clone(),
            self.label_names.clone(),
            self.feature_text.clone(),
        ))
    }

    /// Distances from `v` out to `max_hops`, grouped by exact hop count.
    /// Index 0 holds the 1-hop set. `v` itself is excluded.
    pub fn exact_hop_sets(&self, v: usize, max_hops: usize) -> Vec<Vec<u32>> {
        let mut sets = vec![Vec::new(); max_hops];
        let mut dist = vec![usize::MAX; self.num_nodes];
        dist[v] = 0;
        let mut queue = VecDeque::new();
        queue.push_back(v as u32);
        while let Some(u) = queue.pop_front() {
            let d = dist[u as usize];
            if d == max_hops {
                continue;
            }
            for &w in self.neighbors(u as usize) {
                if dist[w as usize] == usize::MAX {
                    dist[w as usize] = d + 1;
                    sets[d].push(w);
                    queue.push_back(w);
                }
            }
        }
        sets
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| UagError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Load a graph from the citation text format: one `<id> <feat...> <label>`
/// line per node in the content file, one `<id_a> <id_b>` line per edge in
/// the cites file. `#`-prefixed lines are comments. Duplicate and reversed
/// edge lines are deduplicated and self-loop lines dropped. Node ids are
/// remapped to `[0, N)` and labels to dense class ids, both in
/// first-appearance order.
pub fn load_content_cites(content_path: &Path, cites_path: &Path) -> Result<Graph> {
    let mut node_ids: Vec<String> = Vec::new();
    let mut id_index: HashMap<String, u32> = HashMap::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, u32> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<Option<u32>> = Vec::new();
    let mut feature_text: Vec<String> = Vec::new();
    let mut feat_dim: Option<usize> = None;

    for (lineno, line) in open(content_path)?.lines().enumerate() {
        let line = line.map_err(|source| UagError::Io {
            path: content_path.to_path_buf(),
            source,
        })?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() < 3 {
            return Err(UagError::Parse {
                path: content_path.to_path_buf(),
                line: lineno,
                msg: "expected `<id> <feat...> <label>`".into(),
            });
        }
        let id = tokens[0];
        let label = tokens[tokens.len() - 1];
        let feats = &tokens[1..tokens.len() - 1];
        match feat_dim {
            None => feat_dim = Some(feats.len()),
            Some(d) if d != feats.len() => {
                return Err(UagError::Parse {
                    path: content_path.to_path_buf(),
                    line: lineno,
                    msg: format!("expected {d} features, found {}", feats.len()),
                })
            }
            _ => {}
        }
        if id_index.contains_key(id) {
            return Err(UagError::Parse {
                path: content_path.to_path_buf(),
                line: lineno,
                msg: format!("duplicate node id `{id}`"),
            });
        }
        let mut row = Vec::with_capacity(feats.len());
        for t in feats {
            row.push(t.parse::<f64>().map_err(|e| UagError::Parse {
                path: content_path.to_path_buf(),
                line: lineno,
                msg: format!("bad feature `{t}`: {e}"),
            })?);
        }
        // `?` marks an unlabeled node and must not become a class of its own.
        let class = if label == "?" {
            None
        } else {
            Some(*label_index.entry(label.to_string()).or_insert_with(|| {
                label_names.push(label.to_string());
                (label_names.len() - 1) as u32
            }))
        };
        id_index.insert(id.to_string(), node_ids.len() as u32);
        node_ids.push(id.to_string());
        feature_text.push(feats.join(" "));
        rows.push(row);
        labels.push(class);
    }

    let n = rows.len();
    let d = feat_dim.unwrap_or(0);
    if n == 0 || d == 0 {
        return Err(UagError::Parse {
            path: content_path.to_path_buf(),
            line: 0,
            msg: "content file has no usable rows".into(),
        });
    }
    let mut data = Vec::with_capacity(n * d);
    for row in rows {
        data.extend(row);
    }
    let features = Matrix::from_vec(n, d, data);

    let mut edges: Vec<(u32, u32)> = Vec::new();
    for (lineno, line) in open(cites_path)?.lines().enumerate() {
        let line = line.map_err(|source| UagError::Io {
            path: cites_path.to_path_buf(),
            source,
        })?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let (a, b) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(UagError::Parse {
                    path: cites_path.to_path_buf(),
                    line: lineno,
                    msg: "expected `<id_a> <id_b>`".into(),
                })
            }
        };
        let resolve = |id: &str| {
            id_index.get(id).copied().ok_or_else(|| UagError::UnknownNodeId {
                path: cites_path.to_path_buf(),
                line: lineno,
                id: id.to_string(),
            })
        };
        let (a, b) = (resolve(a)?, resolve(b)?);
        if a == b {
            continue; // self-citation lines are dropped
        }
        edges.push((a.min(b), a.max(b)));
    }
    edges.sort_unstable();
    edges.dedup();

    Ok(Graph::assemble(
        features,
        edges,
        labels,
        label_names.len(),
        node_ids,
        label_names,
        feature_text,
    ))
}

/// Write a graph back out as a content/cites pair. Node order, label text,
/// and feature text are preserved, so `load -> write -> load` round-trips.
pub fn write_content_cites(graph: &Graph, content_path: &Path, cites_path: &Path) -> Result<()> {
    let io_err = |path: &Path| {
        let path: PathBuf = path.to_path_buf();
        move |source| UagError::Io {
            path: path.clone(),
            source,
        }
    };
    let mut content =
        BufWriter::new(File::create(content_path).map_err(io_err(content_path))?);
    for v in 0..graph.num_nodes {
        let label = match graph.labels[v] {
            Some(c) => graph.label_names[c as usize].as_str(),
            None => "?",
        };
        writeln!(
            content,
            "{}\t{}\t{}",
            graph.node_ids[v], graph.feature_text[v], label
        )
        .map_err(io_err(content_path))?;
    }
    content.flush().map_err(io_err(content_path))?;

    let mut cites = BufWriter::new(File::create(cites_path).map_err(io_err(cites_path))?);
    for &(a, b) in &graph.edges {
        writeln!(
            cites,
            "{}\t{}",
            graph.node_ids[a as usize], graph.node_ids[b as usize]
        )
        .map_err(io_err(cites_path))?;
    }
    cites.flush().map_err(io_err(cites_path))
}

/// Disjoint train/val/test node sets covering all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMasks {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitMasks {
    pub fn train_bitmap(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &v in &self.train {
            m[v] = true;
        }
        m
    }
}

/// 10/10/80 split from a seeded permutation, rounding toward train and val
/// (`ceil(N/10)` each), remainder to test.
pub fn split_nodes(graph: &Graph, seed: u64) -> SplitMasks {
    let n = graph.num_nodes;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let n_train = n.div_ceil(10);
    let n_val = n.div_ceil(10);
    let mut train: Vec<usize> = perm[..n_train].to_vec();
    let mut val: Vec<usize> = perm[n_train..n_train + n_val].to_vec();
    let mut test: Vec<usize> = perm[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    SplitMasks { train, val, test }
}

/// Symmetric degree-normalized adjacency with self-loops, in CSR form. Entry
/// `(v, u)` carries `1/sqrt((deg(u)+1)(deg(v)+1))`; the diagonal is present
/// for every node. Entry order (row-major, columns ascending) is the shared
/// layout for per-entry edge weights and dropout masks.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    pub num_nodes: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<u32>,
    pub weight: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    /// `out[v] = sum_u w(v,u) * factor(v,u) * x[u]` with optional per-entry
    /// factors aligned to CSR order.
    pub fn apply(&self, x: &Matrix, factors: Option<&[f64]>) -> Matrix {
        let cols = x.cols();
        let mut out = Matrix::zeros(self.num_nodes, cols);
        for v in 0..self.num_nodes {
            let dst_range = v * cols..(v + 1) * cols;
            let dst = &mut out.data_mut()[dst_range];
            for e in self.row_ptr[v]..self.row_ptr[v + 1] {
                let u = self.col[e] as usize;
                let w = match factors {
                    Some(f) => self.weight[e] * f[e],
                    None => self.weight[e],
                };
                let src = x.row(u);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// Transpose application: `out[u] += w(v,u) * factor(v,u) * y[v]`. With
    /// symmetric factors this equals `apply`.
    pub fn apply_transpose(&self, y: &Matrix, factors: Option<&[f64]>) -> Matrix {
        let cols = y.cols();
        let mut out = Matrix::zeros(self.num_nodes, cols);
        for v in 0..self.num_nodes {
            let src = y.row(v).to_vec();
            for e in self.row_ptr[v]..self.row_ptr[v + 1] {
                let u = self.col[e] as usize;
                let w = match factors {
                    Some(f) => self.weight[e] * f[e],
                    None => self.weight[e],
                };
                let dst = &mut out.data_mut()[u * cols..(u + 1) * cols];
                for (d, s) in dst.iter_mut().zip(&src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// CSR entry index of `(row, col)`, if present.
    pub fn entry_index(&self, row: usize, col: u32) -> Option<usize> {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        self.col[lo..hi].binary_search(&col).ok().map(|i| lo + i)
    }
}

/// Build `D^{-1/2} (A + I) D^{-1/2}` with `D = deg + 1`.
pub fn normalize_adjacency(graph: &Graph) -> NormalizedAdjacency {
    let n = graph.num_nodes;
    let inv_c: Vec<f64> = (0..n)
        .map(|v| 1.0 / ((graph.degree(v) + 1) as f64).sqrt())
        .collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col = Vec::new();
    let mut weight = Vec::new();
    row_ptr.push(0);
    for v in 0..n {
        let mut entries: Vec<u32> = graph.neighbors(v).to_vec();
        entries.push(v as u32);
        entries.sort_unstable();
        for u in entries {
            col.push(u);
            weight.push(inv_c[v] * inv_c[u as usize]);
        }
        row_ptr.push(col.len());
    }
    NormalizedAdjacency {
        num_nodes: n,
        row_ptr,
        col,
        weight,
    }
}

/// Per-node diversity targets: number of distinct labels among labeled k-hop
/// neighbors. Zero when no labeled neighbor exists.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityTargets(pub Vec<u32>);

/// Count distinct train-mask labels within BFS distance `k` of each node,
/// excluding the node itself.
pub fn khop_labeled_diversity(graph: &Graph, masks: &SplitMasks, k: usize) -> DiversityTargets {
    assert!(k >= 1, "k must be at least 1");
    let train = masks.train_bitmap(graph.num_nodes);
    let mut out = Vec::with_capacity(graph.num_nodes);
    let mut dist = vec![usize::MAX; graph.num_nodes];
    let mut touched: Vec<usize> = Vec::new();
    for v in 0..graph.num_nodes {
        let mut seen = vec![false; graph.num_classes];
        let mut count = 0u32;
        dist[v] = 0;
        touched.push(v);
        let mut queue = VecDeque::new();
        queue.push_back(v as u32);
        while let Some(u) = queue.pop_front() {
            let d = dist[u as usize];
            if d == k {
                continue;
            }
            for &w in graph.neighbors(u as usize) {
                let w = w as usize;
                if dist[w] == usize::MAX {
                    dist[w] = d + 1;
                    touched.push(w);
                    queue.push_back(w as u32);
                    if train[w] {
                        if let Some(l) = graph.labels[w] {
                            if !seen[l as usize] {
                                seen[l as usize] = true;
                                count += 1;
                            }
                        }
                    }
                }
            }
        }
        for &t in &touched {
            dist[t] = usize::MAX;
        }
        touched.clear();
        out.push(count);
    }
    DiversityTargets(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(edges: &[(u32, u32)], n: usize, labels: &[Option<u32>], classes: usize) -> Graph {
        let features = Matrix::from_vec(n, 2, (0..2 * n).map(|x| x as f64).collect());
        Graph::new(features, edges.to_vec(), labels.to_vec(), classes).unwrap()
    }

    #[test]
    fn rejects_self_loop_and_duplicates() {
        let features = Matrix::from_vec(2, 1, vec![1.0, 2.0]);
        assert!(Graph::new(features.clone(), vec![(0, 0)], vec![None, None], 2).is_err());
        assert!(Graph::new(features, vec![(0, 1), (1, 0)], vec![None, None], 2).is_err());
    }

    #[test]
    fn split_sizes_exact_tenths() {
        let g = tiny(&[], 100, &vec![None; 100], 2);
        let m = split_nodes(&g, 42);
        assert_eq!(m.train.len(), 10);
        assert_eq!(m.val.len(), 10);
        assert_eq!(m.test.len(), 80);
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let g = tiny(&[], 50, &vec![None; 50], 2);
        assert_eq!(split_nodes(&g, 7), split_nodes(&g, 7));
        assert_ne!(split_nodes(&g, 1).train, split_nodes(&g, 2).train);
    }

    #[test]
    fn split_partitions_all_nodes() {
        let g = tiny(&[], 37, &vec![None; 37], 2);
        let m = split_nodes(&g, 3);
        let mut all: Vec<usize> = m.train.iter().chain(&m.val).chain(&m.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn normalize_isolated_node_diagonal_one() {
        let g = tiny(&[], 1, &[None], 1);
        let adj = normalize_adjacency(&g);
        assert_eq!(adj.nnz(), 1);
        assert!((adj.weight[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_two_nodes_one_edge_all_half() {
        // D~ = diag(2,2); every entry of D^-1/2 (A+I) D^-1/2 is 0.5
        let g = tiny(&[(0, 1)], 2, &[None, None], 1);
        let adj = normalize_adjacency(&g);
        assert_eq!(adj.nnz(), 4);
        for &w in &adj.weight {
            assert!((w - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_star_center_leaf_weight() {
        // center 0 with degree 4: weight to a leaf is 1/sqrt(5*2)
        let edges = [(0, 1), (0, 2), (0, 3), (0, 4)];
        let g = tiny(&edges, 5, &[None; 5], 1);
        let adj = normalize_adjacency(&g);
        let e = adj.entry_index(0, 1).unwrap();
        assert!((adj.weight[e] - 1.0 / (10.0f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn normalize_symmetric_positive() {
        let edges = [(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)];
        let g = tiny(&edges, 4, &[None; 4], 1);
        let adj = normalize_adjacency(&g);
        for v in 0..4 {
            for e in adj.row_ptr[v]..adj.row_ptr[v + 1] {
                let u = adj.col[e] as usize;
                assert!(adj.weight[e] > 0.0);
                let back = adj.entry_index(u, v as u32).unwrap();
                assert_eq!(adj.weight[e].to_bits(), adj.weight[back].to_bits());
            }
        }
    }

    #[test]
    fn diversity_triangle_and_path() {
        // triangle a-b-c, b and c labeled 0 and 1: diversity(a, k=1) = 2
        let g = tiny(&[(0, 1), (1, 2), (0, 2)], 3, &[None, Some(0), Some(1)], 2);
        let masks = SplitMasks {
            train: vec![1, 2],
            val: vec![],
            test: vec![0],
        };
        assert_eq!(khop_labeled_diversity(&g, &masks, 1).0[0], 2);

        // path a-b-c, only c labeled: k=2 sees it, k=1 does not
        let g = tiny(&[(0, 1), (1, 2)], 3, &[None, None, Some(1)], 2);
        let masks = SplitMasks {
            train: vec![2],
            val: vec![],
            test: vec![0, 1],
        };
        assert_eq!(khop_labeled_diversity(&g, &masks, 2).0[0], 1);
        assert_eq!(khop_labeled_diversity(&g, &masks, 1).0[0], 0);
    }

    #[test]
    fn diversity_no_labeled_neighbors_is_zero() {
        let g = tiny(&[(0, 1)], 2, &[Some(0), None], 2);
        let masks = SplitMasks {
            train: vec![],
            val: vec![],
            test: vec![0, 1],
        };
        assert_eq!(khop_labeled_diversity(&g, &masks, 2).0, vec![0, 0]);
    }

    #[test]
    fn exact_hop_sets_on_path() {
        let g = tiny(&[(0, 1), (1, 2), (2, 3)], 4, &[None; 4], 1);
        let sets = g.exact_hop_sets(0, 3);
        assert_eq!(sets[0], vec![1]);
        assert_eq!(sets[1], vec![2]);
        assert_eq!(sets[2], vec![3]);
    }
}
