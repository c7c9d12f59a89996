//! Data Uncertainty Branch: a 2-layer GCN trunk with a Gaussian head
//! (mean over classes, softplus variance), trained with a labeled KL loss
//! against diversity-anchored targets and an unlabeled energy loss over
//! sampled hop-pair triples.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, UagError};
use crate::graph::{DiversityTargets, Graph, NormalizedAdjacency, SplitMasks};
use crate::matrix::{Matrix, SparseFeatures};
use crate::nn::{load_matrices, save_matrices, AdamState, TrainConfig};
use crate::seeds::{fan_indexed, Role};

const VAR_FLOOR: f64 = 1e-6;

/// An L-dimensional isotropic Gaussian prediction for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNode {
    pub mean: Vec<f64>,
    pub var: f64,
}

/// Closed-form KL divergence between isotropic L-dimensional Gaussians:
/// `(L/2)(s_a/s_b - 1 - ln(s_a/s_b)) + ||mu_a - mu_b||^2 / (2 s_b)`.
pub fn kl_gauss(a: &GaussianNode, b: &GaussianNode) -> Result<f64> {
    if a.var <= 0.0 || b.var <= 0.0 {
        return Err(UagError::Domain(format!(
            "kl_gauss requires positive variances, got {} and {}",
            a.var, b.var
        )));
    }
    if a.mean.len() != b.mean.len() {
        return Err(UagError::DimMismatch {
            op: "kl_gauss",
            lhs: format!("{}", a.mean.len()),
            rhs: format!("{}", b.mean.len()),
        });
    }
    let l = a.mean.len() as f64;
    let ratio = a.var / b.var;
    let quad: f64 = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(0.5 * l * (ratio - 1.0 - ratio.ln()) + quad / (2.0 * b.var))
}

/// Branch weights: shared trunk `w1`, mean head, and scalar variance head.
#[derive(Debug, Clone, PartialEq)]
pub struct DubParams {
    pub w1: Matrix,
    pub w_mean: Matrix,
    pub w_var: Matrix,
}

impl DubParams {
    pub fn glorot(feat_dim: usize, hidden: usize, num_classes: usize, seed: u64) -> DubParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DubParams {
            w1: Matrix::glorot(feat_dim, hidden, &mut rng),
            w_mean: Matrix::glorot(hidden, num_classes, &mut rng),
            w_var: Matrix::glorot(hidden, 1, &mut rng),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_matrices(path, &[&self.w1, &self.w_mean, &self.w_var])
    }

    pub fn load(path: &Path) -> Result<DubParams> {
        let mut ms = load_matrices(path)?;
        if ms.len() != 3 {
            return Err(UagError::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("expected 3 matrices, found {}", ms.len()),
            });
        }
        let w_var = ms.pop().unwrap();
        let w_mean = ms.pop().unwrap();
        let w1 = ms.pop().unwrap();
        Ok(DubParams { w1, w_mean, w_var })
    }
}

/// Forward intermediates.
#[derive(Debug, Clone)]
pub struct DubTrace {
    /// sparse view of the input features, shared with the backward pass
    pub xs: Arc<SparseFeatures>,
    pub z1: Matrix,
    pub hidden: Matrix,
    /// second aggregation `A_hat hidden`
    pub hm: Matrix,
    pub mu: Matrix,
    /// pre-softplus variance logits, N x 1
    pub s: Matrix,
    /// `softplus(s) + floor`, strictly positive
    pub var: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn dub_forward(
    adj: &NormalizedAdjacency,
    x: &Matrix,
    params: &DubParams,
) -> Result<DubTrace> {
    dub_forward_sparse(adj, &Arc::new(SparseFeatures::from_matrix(x)), params)
}

pub fn dub_forward_sparse(
    adj: &NormalizedAdjacency,
    xs: &Arc<SparseFeatures>,
    params: &DubParams,
) -> Result<DubTrace> {
    let xw = xs.mm(&params.w1, None)?;
    let z1 = adj.apply(&xw, None);
    let hidden = z1.relu();
    let hm = adj.apply(&hidden, None);
    let mu = hm.matmul(&params.w_mean)?;
    let s = hm.matmul(&params.w_var)?;
    let var = s.data().iter().map(|&v| softplus(v) + VAR_FLOOR).collect();
    Ok(DubTrace {
        xs: xs.clone(),
        z1,
        hidden,
        hm,
        mu,
        s,
        var,
    })
}

impl DubTrace {
    pub fn gaussian(&self, v: usize) -> GaussianNode {
        GaussianNode {
            mean: self.mu.row(v).to_vec(),
            var: self.var[v],
        }
    }
}

/// Labeled KL loss: mean over masked nodes of
/// `KL(N(mu_v, var_v) || N(onehot(y_v), target_v + eps))`.
/// Returns the loss and accumulates gradients w.r.t. `mu` and `var` into the
/// given buffers (scaled by `weight`).
pub fn loss_labeled_grad(
    mu: &Matrix,
    var: &[f64],
    labels: &[Option<u32>],
    targets: &DiversityTargets,
    mask: &[usize],
    eps: f64,
    weight: f64,
    d_mu: &mut Matrix,
    d_var: &mut [f64],
) -> Result<f64> {
    if mask.is_empty() {
        return Err(UagError::EmptyMask("loss_labeled"));
    }
    let l = mu.cols() as f64;
    let inv = 1.0 / mask.len() as f64;
    let mut loss = 0.0;
    for &v in mask {
        let y = labels[v].ok_or_else(|| {
            UagError::Domain(format!("node {v} in labeled loss has no label"))
        })? as usize;
        let tau = targets.0[v] as f64 + eps;
        let sv = var[v];
        let ratio = sv / tau;
        let mut quad = 0.0;
        for c in 0..mu.cols() {
            let e = if c == y { 1.0 } else { 0.0 };
            let d = mu.get(v, c) - e;
            quad += d * d;
            *d_mu.row_mut(v).get_mut(c).unwrap() += weight * inv * d / tau;
        }
        loss += 0.5 * l * (ratio - 1.0 - ratio.ln()) + quad / (2.0 * tau);
        d_var[v] += weight * inv * 0.5 * l * (1.0 / tau - 1.0 / sv);
    }
    Ok(loss * inv)
}

/// Loss-only evaluation against explicit per-node Gaussians; composition
/// check helper.
pub fn loss_labeled(
    preds: &[GaussianNode],
    labels: &[Option<u32>],
    targets: &DiversityTargets,
    mask: &[usize],
    eps: f64,
) -> Result<f64> {
    if mask.is_empty() {
        return Err(UagError::EmptyMask("loss_labeled"));
    }
    let mut loss = 0.0;
    for &v in mask {
        let y = labels[v]
            .ok_or_else(|| UagError::Domain(format!("node {v} has no label")))?
            as usize;
        let mut truth = vec![0.0; preds[v].mean.len()];
        truth[y] = 1.0;
        let target = GaussianNode {
            mean: truth,
            var: targets.0[v] as f64 + eps,
        };
        loss += kl_gauss(&preds[v], &target)?;
    }
    Ok(loss / mask.len() as f64)
}

/// One energy-loss triple: anchor, exact near-hop node, exact far-hop node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub anchor: u32,
    pub near: u32,
    pub far: u32,
}

/// Sample up to `budget` triples per anchor for each `(k, l)` hop pair,
/// skipping anchors lacking either exact-distance set.
pub fn sample_triples(
    graph: &Graph,
    hop_pairs: &[(usize, usize)],
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Triple> {
    let max_hop = hop_pairs.iter().map(|&(_, l)| l).max().unwrap_or(0);
    let mut triples = Vec::new();
    for v in 0..graph.num_nodes {
        let sets = graph.exact_hop_sets(v, max_hop);
        for &(k, l) in hop_pairs {
            debug_assert!(k < l, "hop pairs must satisfy k < l");
            let near_set = &sets[k - 1];
            let far_set = &sets[l - 1];
            if near_set.is_empty() || far_set.is_empty() {
                continue;
            }
            for _ in 0..budget {
                let near = near_set[rng.gen_range(0..near_set.len())];
                let far = far_set[rng.gen_range(0..far_set.len())];
                triples.push(Triple {
                    anchor: v as u32,
                    near,
                    far,
                });
            }
        }
    }
    triples
}

/// Every valid triple, for the exhaustive oracle.
pub fn enumerate_triples(graph: &Graph, hop_pairs: &[(usize, usize)]) -> Vec<Triple> {
    let max_hop = hop_pairs.iter().map(|&(_, l)| l).max().unwrap_or(0);
    let mut triples = Vec::new();
    for v in 0..graph.num_nodes {
        let sets = graph.exact_hop_sets(v, max_hop);
        for &(k, l) in hop_pairs {
            for &near in &sets[k - 1] {
                for &far in &sets[l - 1] {
                    triples.push(Triple {
                        anchor: v as u32,
                        near,
                        far,
                    });
                }
            }
        }
    }
    triples
}

fn kl_terms(
    mu: &Matrix,
    var: &[f64],
    j: usize,
    i: usize,
) -> (f64, f64, Vec<f64>) {
    // E_ij = KL(N_j || N_i); returns (E, quad, mean difference)
    let l = mu.cols() as f64;
    let sj = var[j];
    let si = var[i];
    let ratio = sj / si;
    let mut diff = Vec::with_capacity(mu.cols());
    let mut quad = 0.0;
    for c in 0..mu.cols() {
        let d = mu.get(j, c) - mu.get(i, c);
        quad += d * d;
        diff.push(d);
    }
    let e = 0.5 * l * (ratio - 1.0 - ratio.ln()) + quad / (2.0 * si);
    (e, quad, diff)
}

/// Energy loss over explicit triples:
/// `mean over triples of E(i,near)^2 + exp(-E(i,far))` with
/// `E(i,j) = KL(N_j || N_i)`. Gradients w.r.t. `mu`/`var` accumulate into the
/// buffers, scaled by `weight`.
pub fn loss_unlabeled_grad(
    mu: &Matrix,
    var: &[f64],
    triples: &[Triple],
    weight: f64,
    d_mu: &mut Matrix,
    d_var: &mut [f64],
) -> f64 {
    if triples.is_empty() {
        return 0.0;
    }
    let l = mu.cols() as f64;
    let inv = 1.0 / triples.len() as f64;
    let mut loss = 0.0;
    for t in triples {
        let i = t.anchor as usize;
        for (j, coeff_of) in [(t.near as usize, 0u8), (t.far as usize, 1u8)] {
            let (e, quad, diff) = kl_terms(mu, var, j, i);
            let (term, de) = if coeff_of == 0 {
                (e * e, 2.0 * e)
            } else {
                let ex = (-e).exp();
                (ex, -ex)
            };
            loss += term;
            let si = var[i];
            let sj = var[j];
            let g = weight * inv * de;
            for c in 0..mu.cols() {
                let dmu_j = diff[c] / si;
                *d_mu.row_mut(j).get_mut(c).unwrap() += g * dmu_j;
                *d_mu.row_mut(i).get_mut(c).unwrap() -= g * dmu_j;
            }
            d_var[j] += g * 0.5 * l * (1.0 / si - 1.0 / sj);
            d_var[i] += g * (0.5 * l * (1.0 / si - sj / (si * si)) - quad / (2.0 * si * si));
        }
    }
    loss * inv
}

/// Sampled energy loss per the branch's default: returns the value and the
/// number of triples used (zero means every anchor was skipped).
pub fn loss_unlabeled(
    preds: &[GaussianNode],
    graph: &Graph,
    hop_pairs: &[(usize, usize)],
    budget: usize,
    seed: u64,
) -> Result<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triples = sample_triples(graph, hop_pairs, budget, &mut rng);
    if triples.is_empty() {
        return Ok((0.0, 0));
    }
    let mut loss = 0.0;
    for t in &triples {
        let e1 = kl_gauss(&preds[t.near as usize], &preds[t.anchor as usize])?;
        let e2 = kl_gauss(&preds[t.far as usize], &preds[t.anchor as usize])?;
        loss += e1 * e1 + (-e2).exp();
    }
    Ok((loss / triples.len() as f64, triples.len()))
}

#[derive(Debug, Clone)]
pub struct DubConfig {
    /// weight of the unlabeled energy loss
    pub lambda: f64,
    /// variance offset for the ground-truth Gaussian target
    pub eps: f64,
    /// sampled triples per anchor per epoch
    pub triples_per_anchor: usize,
    pub hop_pairs: Vec<(usize, usize)>,
    pub train: TrainConfig,
}

impl Default for DubConfig {
    fn default() -> Self {
        DubConfig {
            lambda: 1.0,
            eps: 0.5,
            triples_per_anchor: 5,
            hop_pairs: vec![(1, 2)],
            train: TrainConfig::default(),
        }
    }
}

/// Combined loss and analytic parameter gradients for a fixed triple set.
pub fn dub_loss_and_grads(
    adj: &NormalizedAdjacency,
    x: &Matrix,
    params: &DubParams,
    labels: &[Option<u32>],
    targets: &DiversityTargets,
    mask: &[usize],
    triples: &[Triple],
    config: &DubConfig,
) -> Result<(f64, DubParams)> {
    dub_loss_and_grads_sparse(
        adj,
        &Arc::new(SparseFeatures::from_matrix(x)),
        params,
        labels,
        targets,
        mask,
        triples,
        config,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn dub_loss_and_grads_sparse(
    adj: &NormalizedAdjacency,
    xs: &Arc<SparseFeatures>,
    params: &DubParams,
    labels: &[Option<u32>],
    targets: &DiversityTargets,
    mask: &[usize],
    triples: &[Triple],
    config: &DubConfig,
) -> Result<(f64, DubParams)> {
    let trace = dub_forward_sparse(adj, xs, params)?;
    let n = xs.rows();
    let mut d_mu = Matrix::zeros(n, trace.mu.cols());
    let mut d_var = vec![0.0; n];
    let l1 = loss_labeled_grad(
        &trace.mu,
        &trace.var,
        labels,
        targets,
        mask,
        config.eps,
        1.0,
        &mut d_mu,
        &mut d_var,
    )?;
    let l2 = loss_unlabeled_grad(
        &trace.mu,
        &trace.var,
        triples,
        config.lambda,
        &mut d_mu,
        &mut d_var,
    );
    // back through softplus head
    let mut d_s = Matrix::zeros(n, 1);
    for v in 0..n {
        d_s.set(v, 0, d_var[v] * sigmoid(trace.s.get(v, 0)));
    }
    let d_w_mean = trace.hm.matmul_tn(&d_mu)?;
    let d_w_var = trace.hm.matmul_tn(&d_s)?;
    let mut d_hm = d_mu.matmul_nt(&params.w_mean)?;
    d_hm.add_scaled(&d_s.matmul_nt(&params.w_var)?, 1.0);
    let d_hidden = adj.apply_transpose(&d_hm, None);
    let mut d_z1 = d_hidden;
    for (g, z) in d_z1.data_mut().iter_mut().zip(trace.z1.data()) {
        if *z <= 0.0 {
            *g = 0.0;
        }
    }
    let d_xw = adj.apply_transpose(&d_z1, None);
    let mut d_w1 = trace.xs.tr_mm(&d_xw, None)?;
    let mut d_w_mean = d_w_mean;
    let mut d_w_var = d_w_var;
    let wd = config.train.weight_decay;
    let reg = 0.5
        * wd
        * (params.w1.frobenius_sq() + params.w_mean.frobenius_sq() + params.w_var.frobenius_sq());
    d_w1.add_scaled(&params.w1, wd);
    d_w_mean.add_scaled(&params.w_mean, wd);
    d_w_var.add_scaled(&params.w_var, wd);
    Ok((
        l1 + config.lambda * l2 + reg,
        DubParams {
            w1: d_w1,
            w_mean: d_w_mean,
            w_var: d_w_var,
        },
    ))
}

/// Train the branch on `L1 + lambda * L2 + weight_decay/2 * ||W||^2` with
/// fresh sampled triples each
/// epoch. Diversity targets must come from the clean graph.
pub fn train_dub(
    graph: &Graph,
    masks: &SplitMasks,
    adj: &NormalizedAdjacency,
    targets: &DiversityTargets,
    config: &DubConfig,
) -> Result<DubParams> {
    let mut params = DubParams::glorot(
        graph.feat_dim(),
        config.train.hidden,
        graph.num_classes,
        config.train.seed,
    );
    let mut adam = AdamState::new(
        config.train.lr,
        &[
            (params.w1.rows(), params.w1.cols()),
            (params.w_mean.rows(), params.w_mean.cols()),
            (params.w_var.rows(), params.w_var.cols()),
        ],
    );
    let xs = Arc::new(SparseFeatures::from_matrix(&graph.features));
    for epoch in 0..config.train.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(fan_indexed(
            config.train.seed,
            Role::Sampling,
            epoch as u64,
        ));
        let triples = if config.lambda != 0.0 {
            sample_triples(graph, &config.hop_pairs, config.triples_per_anchor, &mut rng)
        } else {
            Vec::new()
        };
        let (_, grads) = dub_loss_and_grads_sparse(
            adj,
            &xs,
            &params,
            &graph.labels,
            targets,
            &masks.train,
            &triples,
            config,
        )?;
        adam.step(
            &mut [&mut params.w1, &mut params.w_mean, &mut params.w_var],
            &[&grads.w1, &grads.w_mean, &grads.w_var],
        );
    }
    if !params.w1.is_finite() || !params.w_mean.is_finite() || !params.w_var.is_finite() {
        return Err(UagError::Numeric("non-finite DUB parameters".into()));
    }
    Ok(params)
}

/// Per-node data uncertainty, strictly positive by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DataUncertainty(pub Vec<f64>);

/// Single forward pass; `U_D = predicted variance`.
pub fn data_uncertainty(
    adj: &NormalizedAdjacency,
    x: &Matrix,
    params: &DubParams,
) -> Result<DataUncertainty> {
    let trace = dub_forward(adj, x, params)?;
    Ok(DataUncertainty(trace.var))
}
