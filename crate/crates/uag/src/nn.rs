//! Two-layer GCN with hand-derived gradients, Adam, and checkpoint IO.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use std::sync::Arc;

use crate::error::{Result, UagError};
use crate::graph::{Graph, NormalizedAdjacency, SplitMasks};
use crate::matrix::{Matrix, SparseFeatures};

/// Weights of the 2-layer GCN.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w1: Matrix,
    pub w2: Matrix,
}

impl GcnParams {
    pub fn glorot(feat_dim: usize, hidden: usize, num_classes: usize, seed: u64) -> GcnParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GcnParams {
            w1: Matrix::glorot(feat_dim, hidden, &mut rng),
            w2: Matrix::glorot(hidden, num_classes, &mut rng),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_matrices(path, &[&self.w1, &self.w2])
    }

    pub fn load(path: &Path) -> Result<GcnParams> {
        let mut ms = load_matrices(path)?;
        if ms.len() != 2 {
            return Err(UagError::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("expected 2 matrices, found {}", ms.len()),
            });
        }
        let w2 = ms.pop().unwrap();
        let w1 = ms.pop().unwrap();
        Ok(GcnParams { w1, w2 })
    }
}

/// Forward intermediates retained for the backward pass.
#[derive(Debug, Clone)]
pub struct GcnTrace {
    /// sparse view of the input features, shared with the backward pass
    pub xs: Arc<SparseFeatures>,
    /// `X W1` before aggregation
    pub xw: Matrix,
    /// pre-relu layer-1 activations
    pub z1: Matrix,
    pub hidden: Matrix,
    /// `A_hat hidden`
    pub a2: Matrix,
    pub logits: Matrix,
    pub probs: Matrix,
}

/// `hidden = relu(A_hat X W1)`, `logits = A_hat hidden W2`, row-softmax probs.
/// `edge_weights`, when present, multiply each CSR entry of the normalized
/// adjacency at both layers. Builds a sparse view of `x` per call; loops that
/// reuse the same features should build it once and call
/// [`gcn_forward_sparse`].
pub fn gcn_forward(
    adj: &NormalizedAdjacency,
    x: &Matrix,
    params: &GcnParams,
    edge_weights: Option<&[f64]>,
) -> Result<GcnTrace> {
    gcn_forward_sparse(adj, &Arc::new(SparseFeatures::from_matrix(x)), params, edge_weights)
}

pub fn gcn_forward_sparse(
    adj: &NormalizedAdjacency,
    xs: &Arc<SparseFeatures>,
    params: &GcnParams,
    edge_weights: Option<&[f64]>,
) -> Result<GcnTrace> {
    if xs.cols() != params.w1.rows() {
        return Err(UagError::DimMismatch {
            op: "gcn_forward layer 1",
            lhs: format!("X {}x{}", xs.rows(), xs.cols()),
            rhs: format!("W1 {}x{}", params.w1.rows(), params.w1.cols()),
        });
    }
    if params.w1.cols() != params.w2.rows() {
        return Err(UagError::DimMismatch {
            op: "gcn_forward layer 2",
            lhs: format!("W1 {}x{}", params.w1.rows(), params.w1.cols()),
            rhs: format!("W2 {}x{}", params.w2.rows(), params.w2.cols()),
        });
    }
    let xw = xs.mm(&params.w1, None)?;
    let z1 = adj.apply(&xw, edge_weights);
    let hidden = z1.relu();
    let a2 = adj.apply(&hidden, edge_weights);
    let logits = a2.matmul(&params.w2)?;
    let probs = logits.softmax_rows();
    Ok(GcnTrace {
        xs: xs.clone(),
        xw,
        z1,
        hidden,
        a2,
        logits,
        probs,
    })
}

/// Mean masked negative log-likelihood, with the true-class probability
/// floored at 1e-12 before the log.
pub fn cross_entropy(probs: &Matrix, labels: &[Option<u32>], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(UagError::EmptyMask("cross_entropy"));
    }
    let mut total = 0.0;
    for &v in mask {
        let sum: f64 = probs.row(v).iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(UagError::Numeric(format!(
                "probs row {v} sums to {sum}, not 1"
            )));
        }
        let y = labels[v].ok_or_else(|| {
            UagError::Domain(format!("node {v} in loss mask has no label"))
        })? as usize;
        total -= probs.get(v, y).max(1e-12).ln();
    }
    Ok(total / mask.len() as f64)
}

/// Gradient of the softmax cross-entropy w.r.t. logits: `(P - Y)/|mask|` on
/// masked rows, zero elsewhere.
pub fn cross_entropy_logit_grad(
    probs: &Matrix,
    labels: &[Option<u32>],
    mask: &[usize],
) -> Matrix {
    let mut d = Matrix::zeros(probs.rows(), probs.cols());
    let inv = 1.0 / mask.len() as f64;
    for &v in mask {
        let y = labels[v].expect("masked node must be labeled") as usize;
        for c in 0..probs.cols() {
            let delta = if c == y { 1.0 } else { 0.0 };
            d.set(v, c, (probs.get(v, c) - delta) * inv);
        }
    }
    d
}

/// Analytic gradients of `cross_entropy + weight_decay/2 * ||W||^2` w.r.t.
/// W1 and W2, propagated through both adjacency applications and the relu.
pub fn gcn_backward(
    adj: &NormalizedAdjacency,
    trace: &GcnTrace,
    params: &GcnParams,
    labels: &[Option<u32>],
    mask: &[usize],
    weight_decay: f64,
    edge_weights: Option<&[f64]>,
) -> Result<(Matrix, Matrix)> {
    let d_logits = cross_entropy_logit_grad(&trace.probs, labels, mask);
    let mut d_w2 = trace.a2.matmul_tn(&d_logits)?;
    d_w2.add_scaled(&params.w2, weight_decay);
    let d_a2 = d_logits.matmul_nt(&params.w2)?;
    let d_hidden = adj.apply_transpose(&d_a2, edge_weights);
    let mut d_z1 = d_hidden;
    for (g, z) in d_z1.data_mut().iter_mut().zip(trace.z1.data()) {
        if *z <= 0.0 {
            *g = 0.0;
        }
    }
    let d_xw = adj.apply_transpose(&d_z1, edge_weights);
    let mut d_w1 = trace.xs.tr_mm(&d_xw, None)?;
    d_w1.add_scaled(&params.w1, weight_decay);
    Ok((d_w1, d_w2))
}

/// Bias-corrected Adam state over a fixed list of parameter matrices.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> AdamState {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    /// One Adam update over aligned parameter/gradient lists.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let p = params[i].data_mut();
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Training hyperparameters shared by all branches.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 16,
            epochs: 200,
            lr: 0.01,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

/// Full-batch Adam training of the 2-layer GCN on masked cross-entropy, with
/// optional fixed per-entry edge weights applied at both layers.
pub fn train_gcn_weighted(
    graph: &Graph,
    masks: &SplitMasks,
    adj: &NormalizedAdjacency,
    config: &TrainConfig,
    edge_weights: Option<&[f64]>,
) -> Result<GcnParams> {
    let mut params = GcnParams::glorot(
        graph.feat_dim(),
        config.hidden,
        graph.num_classes,
        config.seed,
    );
    let mut adam = AdamState::new(
        config.lr,
        &[
            (params.w1.rows(), params.w1.cols()),
            (params.w2.rows(), params.w2.cols()),
        ],
    );
    let xs = Arc::new(SparseFeatures::from_matrix(&graph.features));
    for _ in 0..config.epochs {
        let trace = gcn_forward_sparse(adj, &xs, &params, edge_weights)?;
        let (d_w1, d_w2) = gcn_backward(
            adj,
            &trace,
            &params,
            &graph.labels,
            &masks.train,
            config.weight_decay,
            edge_weights,
        )?;
        adam.step(&mut [&mut params.w1, &mut params.w2], &[&d_w1, &d_w2]);
    }
    if !params.w1.is_finite() || !params.w2.is_finite() {
        return Err(UagError::Numeric("non-finite parameters after training".into()));
    }
    Ok(params)
}

pub fn train_gcn(
    graph: &Graph,
    masks: &SplitMasks,
    adj: &NormalizedAdjacency,
    config: &TrainConfig,
) -> Result<GcnParams> {
    train_gcn_weighted(graph, masks, adj, config, None)
}

/// Row-wise argmax class predictions.
pub fn argmax_rows(probs: &Matrix) -> Vec<u32> {
    (0..probs.rows())
        .map(|r| {
            let row = probs.row(r);
            let mut best = 0usize;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best as u32
        })
        .collect()
}

/// Fraction of masked nodes whose prediction matches the label.
pub fn accuracy(preds: &[u32], labels: &[Option<u32>], mask: &[usize]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let hits = mask
        .iter()
        .filter(|&&v| labels[v] == Some(preds[v]))
        .count();
    hits as f64 / mask.len() as f64
}

const CKPT_MAGIC: &[u8; 8] = b"UAGCKPT\x01";

/// Versioned checkpoint: magic, matrix count, shape list, then row-major
/// little-endian f64 payloads.
pub fn save_matrices(path: &Path, matrices: &[&Matrix]) -> Result<()> {
    let err = |source| UagError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    let err = |source| UagError::Io {
        path: path.to_path_buf(),
        source,
    };
    w.write_all(CKPT_MAGIC).map_err(err)?;
    w.write_all(&(matrices.len() as u32).to_le_bytes()).map_err(err)?;
    for m in matrices {
        w.write_all(&(m.rows() as u64).to_le_bytes()).map_err(err)?;
        w.write_all(&(m.cols() as u64).to_le_bytes()).map_err(err)?;
    }
    for m in matrices {
        for v in m.data() {
            w.write_all(&v.to_le_bytes()).map_err(err)?;
        }
    }
    w.flush().map_err(err)
}

pub fn load_matrices(path: &Path) -> Result<Vec<Matrix>> {
    let io_err = |source| UagError::Io {
        path: path.to_path_buf(),
        source,
    };
    let parse_err = |msg: String| UagError::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg,
    };
    let mut r = BufReader::new(File::open(path).map_err(io_err)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CKPT_MAGIC {
        return Err(parse_err("bad checkpoint magic".into()));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4).map_err(io_err)?;
    let count = u32::from_le_bytes(buf4) as usize;
    let mut shapes = Vec::with_capacity(count);
    let mut buf8 = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf8).map_err(io_err)?;
        let rows = u64::from_le_bytes(buf8) as usize;
        r.read_exact(&mut buf8).map_err(io_err)?;
        let cols = u64::from_le_bytes(buf8) as usize;
        shapes.push((rows, cols));
    }
    let mut out = Vec::with_capacity(count);
    for (rows, cols) in shapes {
        let mut data = vec![0.0f64; rows * cols];
        for v in &mut data {
            r.read_exact(&mut buf8).map_err(io_err)?;
            *v = f64::from_le_bytes(buf8);
        }
        out.push(Matrix::from_vec(rows, cols, data));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalize_adjacency;

    fn path3() -> (Graph, NormalizedAdjacency) {
        let features = Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let g = Graph::new(
            features,
            vec![(0, 1), (1, 2)],
            vec![Some(0), Some(1), Some(0)],
            2,
        )
        .unwrap();
        let adj = normalize_adjacency(&g);
        (g, adj)
    }

    #[test]
    fn forward_isolated_node_is_self_loop_only() {
        let features = Matrix::from_vec(1, 2, vec![3.0, -2.0]);
        let g = Graph::new(features, vec![], vec![Some(0)], 2).unwrap();
        let adj = normalize_adjacency(&g);
        let params = GcnParams {
            w1: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            w2: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
        };
        let t = gcn_forward(&adj, &g.features, &params, None).unwrap();
        // self-loop weight 1, identity W1: hidden = relu(X)
        assert_eq!(t.hidden.data(), &[3.0, 0.0]);
    }

    #[test]
    fn forward_matches_straight_line_reference() {
        // Independent dense re-evaluation of relu(A X W1) and A H W2 on a
        // 3-node path with pinned small weights.
        let (g, adj) = path3();
        let params = GcnParams {
            w1: Matrix::from_vec(2, 2, vec![0.3, -0.1, 0.2, 0.4]),
            w2: Matrix::from_vec(2, 2, vec![0.5, -0.2, 0.1, 0.3]),
        };
        let t = gcn_forward(&adj, &g.features, &params, None).unwrap();

        // dense A_hat for path 0-1-2 (degrees 1,2,1)
        let c = [2.0f64.sqrt(), 3.0f64.sqrt(), 2.0f64.sqrt()];
        let mut a = [[0.0f64; 3]; 3];
        for i in 0..3 {
            a[i][i] = 1.0 / (c[i] * c[i]);
        }
        for &(u, v) in &[(0usize, 1usize), (1, 2)] {
            a[u][v] = 1.0 / (c[u] * c[v]);
            a[v][u] = a[u][v];
        }
        let x = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let w1 = [[0.3, -0.1], [0.2, 0.4]];
        let w2 = [[0.5, -0.2], [0.1, 0.3]];
        let mut ax = [[0.0f64; 2]; 3];
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..3 {
                    ax[i][j] += a[i][k] * x[k][j];
                }
            }
        }
        let mut h = [[0.0f64; 2]; 3];
        for i in 0..3 {
            for j in 0..2 {
                let mut z = 0.0;
                for k in 0..2 {
                    z += ax[i][k] * w1[k][j];
                }
                h[i][j] = z.max(0.0);
            }
        }
        let mut ah = [[0.0f64; 2]; 3];
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..3 {
                    ah[i][j] += a[i][k] * h[k][j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..2 {
                let mut z = 0.0;
                for k in 0..2 {
                    z += ah[i][k] * w2[k][j];
                }
                assert!(
                    (t.logits.get(i, j) - z).abs() < 1e-12,
                    "logit ({i},{j}) mismatch"
                );
            }
        }
    }

    #[test]
    fn cross_entropy_pinned_values() {
        let probs = Matrix::from_vec(2, 2, vec![0.9, 0.1, 0.2, 0.8]);
        let labels = vec![Some(0), Some(1)];
        let loss = cross_entropy(&probs, &labels, &[0, 1]).unwrap();
        let expected = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((loss - expected).abs() < 1e-12);
        assert!((expected - 0.16425).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_l() {
        let probs = Matrix::from_vec(1, 4, vec![0.25; 4]);
        let loss = cross_entropy(&probs, &[Some(2)], &[0]).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_perfect_is_near_zero() {
        let probs = Matrix::from_vec(1, 3, vec![1.0, 0.0, 0.0]);
        let loss = cross_entropy(&probs, &[Some(0)], &[0]).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_empty_mask_errors() {
        let probs = Matrix::from_vec(1, 2, vec![0.5, 0.5]);
        assert!(cross_entropy(&probs, &[Some(0)], &[]).is_err());
    }

    #[test]
    fn weight_decay_shifts_gradient_linearly() {
        let (g, adj) = path3();
        let params = GcnParams::glorot(2, 4, 2, 11);
        let trace = gcn_forward(&adj, &g.features, &params, None).unwrap();
        let mask = vec![0, 1, 2];
        let (g0_w1, g0_w2) =
            gcn_backward(&adj, &trace, &params, &g.labels, &mask, 0.0, None).unwrap();
        let lam = 0.37;
        let (g1_w1, g1_w2) =
            gcn_backward(&adj, &trace, &params, &g.labels, &mask, lam, None).unwrap();
        for i in 0..g0_w1.data().len() {
            let shift = g1_w1.data()[i] - g0_w1.data()[i];
            assert!((shift - lam * params.w1.data()[i]).abs() < 1e-12);
        }
        for i in 0..g0_w2.data().len() {
            let shift = g1_w2.data()[i] - g0_w2.data()[i];
            assert!((shift - lam * params.w2.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = Matrix::from_vec(2, 2, vec![1.0, -2.0, 3.0, 4.0]);
        let original = p.clone();
        let g = Matrix::zeros(2, 2);
        let mut adam = AdamState::new(0.01, &[(2, 2)]);
        adam.step(&mut [&mut p], &[&g]);
        assert_eq!(p, original);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        // constant gradient: m_hat/sqrt(v_hat) = sign(g) up to eps
        let mut p = Matrix::zeros(1, 3);
        let g = Matrix::from_vec(1, 3, vec![0.5, -2.0, 10.0]);
        let mut adam = AdamState::new(0.01, &[(1, 3)]);
        adam.step(&mut [&mut p], &[&g]);
        for (i, &gv) in g.data().iter().enumerate() {
            let expected = -0.01 * gv.signum();
            assert!((p.data()[i] - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn train_zero_epochs_returns_init() {
        let (g, adj) = path3();
        let masks = SplitMasks {
            train: vec![0, 1],
            val: vec![],
            test: vec![2],
        };
        let config = TrainConfig {
            epochs: 0,
            hidden: 4,
            seed: 9,
            ..Default::default()
        };
        let trained = train_gcn(&g, &masks, &adj, &config).unwrap();
        let init = GcnParams::glorot(2, 4, 2, 9);
        assert_eq!(trained, init);
    }

    #[test]
    fn training_is_deterministic() {
        let (g, adj) = path3();
        let masks = SplitMasks {
            train: vec![0, 1],
            val: vec![],
            test: vec![2],
        };
        let config = TrainConfig {
            epochs: 20,
            hidden: 4,
            seed: 5,
            ..Default::default()
        };
        let a = train_gcn(&g, &masks, &adj, &config).unwrap();
        let b = train_gcn(&g, &masks, &adj, &config).unwrap();
        assert_eq!(a, b);
    }
}
