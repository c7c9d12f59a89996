//! Model Uncertainty Branch: Bernoulli-structured MC dropout over the 2-layer
//! GCN, Monte-Carlo integrated prediction, and per-node variance uncertainty.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, UagError};
use crate::graph::{Graph, NormalizedAdjacency, SplitMasks};
use crate::matrix::{Matrix, SparseFeatures};
use crate::nn::{cross_entropy_logit_grad, AdamState, GcnParams, TrainConfig};
use crate::seeds::{fan_indexed, Role};

/// Branch weights; same shape and initialization as the deterministic GCN.
pub type MubParams = GcnParams;

/// Reduction from the class-wise variance vector to the scalar uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy)]
pub struct MubConfig {
    /// Bernoulli keep probability.
    pub keep_prob: f64,
    /// MC samples at inference.
    pub samples: usize,
    /// Fresh mask draws per training epoch (the T of the training objective).
    pub train_samples: usize,
    pub reduce: Reduce,
    pub train: TrainConfig,
}

impl Default for MubConfig {
    fn default() -> Self {
        MubConfig {
            keep_prob: 0.8,
            samples: 20,
            train_samples: 5,
            reduce: Reduce::Sum,
            train: TrainConfig::default(),
        }
    }
}

/// Per-layer Bernoulli masks: one 0/1 factor per CSR adjacency entry
/// (edge-level; the diagonal self-loop entries are never dropped — a node's
/// own signal is not an edge) and one per node channel.
#[derive(Debug, Clone)]
pub struct LayerMasks {
    pub edge: Vec<f64>,
    pub channel: Matrix,
}

#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub layers: [LayerMasks; 2],
}

/// Sample independent Bernoulli(p) masks for both layers from one stream.
pub fn sample_masks(
    adj: &NormalizedAdjacency,
    feat_dim: usize,
    hidden: usize,
    keep_prob: f64,
    rng: &mut ChaCha8Rng,
) -> DropoutMasks {
    let n = adj.num_nodes;
    let mut layer = |channels: usize| {
        let mut edge: Vec<f64> = (0..adj.nnz())
            .map(|_| if rng.gen::<f64>() < keep_prob { 1.0 } else { 0.0 })
            .collect();
        // self-loops always survive; dropping them would zero an isolated
        // node's entire input and swamp U_M with degree artifacts
        for v in 0..n {
            for e in adj.row_ptr[v]..adj.row_ptr[v + 1] {
                if adj.col[e] as usize == v {
                    edge[e] = 1.0;
                }
            }
        }
        let channel = Matrix::from_vec(
            n,
            channels,
            (0..n * channels)
                .map(|_| if rng.gen::<f64>() < keep_prob { 1.0 } else { 0.0 })
                .collect(),
        );
        LayerMasks { edge, channel }
    };
    let l0 = layer(feat_dim);
    let l1 = layer(hidden);
    DropoutMasks { layers: [l0, l1] }
}

/// Forward intermediates for the masked pass.
#[derive(Debug, Clone)]
pub struct MubTrace {
    /// sparse view of the input features, shared with the backward pass
    pub xs: Arc<SparseFeatures>,
    pub z1: Matrix,
    pub hidden: Matrix,
    pub a2: Matrix,
    pub logits: Matrix,
    pub probs: Matrix,
    edge_factors: [Vec<f64>; 2],
}

fn masked_scaled(x: &Matrix, mask: &Matrix, inv_p: f64) -> Matrix {
    let mut out = x.clone();
    for (v, m) in out.data_mut().iter_mut().zip(mask.data()) {
        *v *= m * inv_p;
    }
    out
}

/// Masked forward pass: per edge `(u,v)` at layer `k` the incoming feature is
/// gated by the edge mask, channel-masked, and scaled by `1/p` per mask
/// (inverted dropout), so `p = 1` reproduces the deterministic forward
/// bit-for-bit.
pub fn mub_forward(
    adj: &NormalizedAdjacency,
    x: &Matrix,
    params: &MubParams,
    masks: &DropoutMasks,
    keep_prob: f64,
) -> Result<MubTrace> {
    mub_forward_sparse(
        adj,
        &Arc::new(SparseFeatures::from_matrix(x)),
        params,
        masks,
        keep_prob,
    )
}

pub fn mub_forward_sparse(
    adj: &NormalizedAdjacency,
    xs: &Arc<SparseFeatures>,
    params: &MubParams,
    masks: &DropoutMasks,
    keep_prob: f64,
) -> Result<MubTrace> {
    if masks.layers[0].channel.cols() != xs.cols() {
        return Err(UagError::DimMismatch {
            op: "mub_forward channel mask",
            lhs: format!("X cols {}", xs.cols()),
            rhs: format!("mask cols {}", masks.layers[0].channel.cols()),
        });
    }
    let inv_p = 1.0 / keep_prob;
    let edge_factors = [
        masks.layers[0].edge.iter().map(|m| m * inv_p).collect::<Vec<_>>(),
        masks.layers[1].edge.iter().map(|m| m * inv_p).collect::<Vec<_>>(),
    ];
    let xw = xs.mm(&params.w1, Some((&masks.layers[0].channel, inv_p)))?;
    let z1 = adj.apply(&xw, Some(&edge_factors[0]));
    let hidden = z1.relu();
    let c1 = masked_scaled(&hidden, &masks.layers[1].channel, inv_p);
    let a2 = adj.apply(&c1, Some(&edge_factors[1]));
    let logits = a2.matmul(&params.w2)?;
    let probs = logits.softmax_rows();
    Ok(MubTrace {
        xs: xs.clone(),
        z1,
        hidden,
        a2,
        logits,
        probs,
        edge_factors,
    })
}

/// Cross-entropy gradients through the masked pass (no regularization).
pub fn mub_backward(
    adj: &NormalizedAdjacency,
    trace: &MubTrace,
    params: &MubParams,
    masks: &DropoutMasks,
    keep_prob: f64,
    labels: &[Option<u32>],
    mask: &[usize],
) -> Result<(Matrix, Matrix)> {
    let inv_p = 1.0 / keep_prob;
    let d_logits = cross_entropy_logit_grad(&trace.probs, labels, mask);
    let d_w2 = trace.a2.matmul_tn(&d_logits)?;
    let d_a2 = d_logits.matmul_nt(&params.w2)?;
    let d_c1 = adj.apply_transpose(&d_a2, Some(&trace.edge_factors[1]));
    let mut d_z1 = masked_scaled(&d_c1, &masks.layers[1].channel, inv_p);
    for (g, z) in d_z1.data_mut().iter_mut().zip(trace.z1.data()) {
        if *z <= 0.0 {
            *g = 0.0;
        }
    }
    let d_xw = adj.apply_transpose(&d_z1, Some(&trace.edge_factors[0]));
    let d_w1 = trace
        .xs
        .tr_mm(&d_xw, Some((&masks.layers[0].channel, inv_p)))?;
    Ok((d_w1, d_w2))
}

/// Train the branch: per epoch, `train_samples` fresh mask draws, averaged
/// cross-entropy gradients, plus the `(1-p)/(2T) ||W||^2` regularizer.
pub fn train_mub(
    graph: &Graph,
    masks: &SplitMasks,
    adj: &NormalizedAdjacency,
    config: &MubConfig,
) -> Result<MubParams> {
    let t_samples = config.train_samples.max(1);
    let mut params = GcnParams::glorot(
        graph.feat_dim(),
        config.train.hidden,
        graph.num_classes,
        config.train.seed,
    );
    let mut adam = AdamState::new(
        config.train.lr,
        &[
            (params.w1.rows(), params.w1.cols()),
            (params.w2.rows(), params.w2.cols()),
        ],
    );
    let mut mask_rng =
        ChaCha8Rng::seed_from_u64(fan_indexed(config.train.seed, Role::Dropout, 0));
    let xs = Arc::new(SparseFeatures::from_matrix(&graph.features));
    let reg = (1.0 - config.keep_prob) / t_samples as f64;
    for _ in 0..config.train.epochs {
        let mut acc_w1 = Matrix::zeros(params.w1.rows(), params.w1.cols());
        let mut acc_w2 = Matrix::zeros(params.w2.rows(), params.w2.cols());
        for _ in 0..t_samples {
            let dm = sample_masks(
                adj,
                graph.feat_dim(),
                config.train.hidden,
                config.keep_prob,
                &mut mask_rng,
            );
            let trace = mub_forward_sparse(adj, &xs, &params, &dm, config.keep_prob)?;
            let (d_w1, d_w2) = mub_backward(
                adj,
                &trace,
                &params,
                &dm,
                config.keep_prob,
                &graph.labels,
                &masks.train,
            )?;
            acc_w1.add_scaled(&d_w1, 1.0 / t_samples as f64);
            acc_w2.add_scaled(&d_w2, 1.0 / t_samples as f64);
        }
        if reg != 0.0 {
            acc_w1.add_scaled(&params.w1, reg);
            acc_w2.add_scaled(&params.w2, reg);
        }
        adam.step(&mut [&mut params.w1, &mut params.w2], &[&acc_w1, &acc_w2]);
    }
    if !params.w1.is_finite() || !params.w2.is_finite() {
        return Err(UagError::Numeric("non-finite MUB parameters".into()));
    }
    Ok(params)
}

/// Monte-Carlo prediction: `samples` masked forward passes with per-sample
/// seeds derived from `base_seed`, averaged in fixed order.
pub fn mc_predict(
    adj: &NormalizedAdjacency,
    x: &Matrix,
    params: &MubParams,
    config: &MubConfig,
    base_seed: u64,
) -> Result<(Matrix, Vec<Matrix>)> {
    let t = config.samples.max(1);
    let hidden = params.w1.cols();
    let xs = Arc::new(SparseFeatures::from_matrix(x));
    let samples: Vec<Matrix> = (0..t)
        .into_par_iter()
        .map(|i| {
            let seed = fan_indexed(base_seed, Role::Sampling, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dm = sample_masks(adj, x.cols(), hidden, config.keep_prob, &mut rng);
            mub_forward_sparse(adj, &xs, params, &dm, config.keep_prob).map(|tr| tr.probs)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mean = Matrix::zeros(x.rows(), samples[0].cols());
    for s in &samples {
        mean.add_scaled(s, 1.0);
    }
    mean.scale(1.0 / t as f64);
    Ok((mean, samples))
}

/// Per-node model uncertainty from MC samples.
#[derive(Debug, Clone)]
pub struct ModelUncertainty {
    /// Scalar uncertainty per node (class-wise variance reduced).
    pub u: Vec<f64>,
    /// Class-wise variance retained for diagnostics.
    pub class_var: Matrix,
}

/// Raw-moment variance per node and class, `(1/T) sum Y_t^2 - mean^2`,
/// clamped at zero, reduced to a scalar per node.
pub fn model_uncertainty(samples: &[Matrix], reduce: Reduce) -> ModelUncertainty {
    assert!(!samples.is_empty(), "need at least one MC sample");
    let rows = samples[0].rows();
    let cols = samples[0].cols();
    let t = samples.len() as f64;
    let mut mean = Matrix::zeros(rows, cols);
    let mut sq = Matrix::zeros(rows, cols);
    for s in samples {
        for i in 0..rows * cols {
            let v = s.data()[i];
            mean.data_mut()[i] += v;
            sq.data_mut()[i] += v * v;
        }
    }
    let mut class_var = Matrix::zeros(rows, cols);
    for i in 0..rows * cols {
        let m = mean.data()[i] / t;
        let v = sq.data()[i] / t - m * m;
        // the raw-moment cancellation leaves a few ulps of rounding residue
        // even for identical samples; snap it (and negative residue) to zero
        class_var.data_mut()[i] = if v < 1e-14 { 0.0 } else { v };
    }
    let u = (0..rows)
        .map(|r| {
            let row = class_var.row(r);
            match reduce {
                Reduce::Sum => row.iter().sum(),
                Reduce::Max => row.iter().cloned().fold(0.0, f64::max),
                Reduce::Mean => row.iter().sum::<f64>() / cols as f64,
            }
        })
        .collect();
    ModelUncertainty { u, class_var }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_adjacency, Graph};
    use crate::nn::gcn_forward;

    fn two_node_graph() -> (Graph, NormalizedAdjacency) {
        let features = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let g = Graph::new(features, vec![(0, 1)], vec![Some(0), Some(1)], 2).unwrap();
        let adj = normalize_adjacency(&g);
        (g, adj)
    }

    fn all_ones_masks(adj: &NormalizedAdjacency, feat_dim: usize, hidden: usize) -> DropoutMasks {
        let layer = |channels: usize| LayerMasks {
            edge: vec![1.0; adj.nnz()],
            channel: Matrix::from_vec(adj.num_nodes, channels, vec![1.0; adj.num_nodes * channels]),
        };
        DropoutMasks {
            layers: [layer(feat_dim), layer(hidden)],
        }
    }

    #[test]
    fn p_one_masks_are_all_ones() {
        let (g, adj) = two_node_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = sample_masks(&adj, g.feat_dim(), 4, 1.0, &mut rng);
        assert!(m.layers.iter().all(|l| l.edge.iter().all(|&e| e == 1.0)));
        assert!(m.layers.iter().all(|l| l.channel.data().iter().all(|&c| c == 1.0)));
    }

    #[test]
    fn mask_mean_concentrates_near_p() {
        let (g, adj) = two_node_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ones = 0usize;
        let mut total = 0usize;
        while total < 100_000 {
            let m = sample_masks(&adj, g.feat_dim(), 64, 0.8, &mut rng);
            for l in &m.layers {
                ones += l.edge.iter().filter(|&&e| e == 1.0).count();
                ones += l.channel.data().iter().filter(|&&c| c == 1.0).count();
                total += l.edge.len() + l.channel.data().len();
            }
        }
        let mean = ones as f64 / total as f64;
        assert!((0.79..=0.81).contains(&mean), "mean {mean}");
    }

    #[test]
    fn same_stream_seed_same_masks() {
        let (g, adj) = two_node_graph();
        let m1 = sample_masks(&adj, g.feat_dim(), 4, 0.5, &mut ChaCha8Rng::seed_from_u64(9));
        let m2 = sample_masks(&adj, g.feat_dim(), 4, 0.5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(m1.layers[0].edge, m2.layers[0].edge);
        assert_eq!(m1.layers[1].channel.data(), m2.layers[1].channel.data());
    }

    #[test]
    fn all_ones_masks_match_gcn_forward_bitwise() {
        let (g, adj) = two_node_graph();
        let params = GcnParams::glorot(2, 4, 2, 3);
        let dm = all_ones_masks(&adj, 2, 4);
        let mt = mub_forward(&adj, &g.features, &params, &dm, 1.0).unwrap();
        let gt = gcn_forward(&adj, &g.features, &params, None).unwrap();
        assert_eq!(mt.logits.data(), gt.logits.data());
        assert_eq!(mt.probs.data(), gt.probs.data());
    }

    #[test]
    fn dropped_edge_reduces_to_self_loop_computation() {
        // zero B_uv on the only edge (both directions, both layers): each
        // node's output equals the self-loop-only graph's output
        let (g, adj) = two_node_graph();
        let params = GcnParams::glorot(2, 4, 2, 5);
        let mut dm = all_ones_masks(&adj, 2, 4);
        for layer in &mut dm.layers {
            for e in 0..adj.nnz() {
                let row = (0..2)
                    .find(|&v| (adj.row_ptr[v]..adj.row_ptr[v + 1]).contains(&e))
                    .unwrap();
                if adj.col[e] as usize != row {
                    layer.edge[e] = 0.0;
                }
            }
        }
        let mt = mub_forward(&adj, &g.features, &params, &dm, 1.0).unwrap();

        // reference: isolated nodes but with the attacked graph's degree
        // normalization (deg+1 = 2, so self weight 0.5)
        let self_w = 0.5;
        for v in 0..2 {
            let x = g.features.row(v);
            let mut z1 = vec![0.0; 4];
            for j in 0..4 {
                for k in 0..2 {
                    z1[j] += self_w * x[k] * params.w1.get(k, j);
                }
            }
            let h: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
            for j in 0..2 {
                let mut logit = 0.0;
                for k in 0..4 {
                    logit += self_w * h[k] * params.w2.get(k, j);
                }
                assert!((mt.logits.get(v, j) - logit).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_channel_mask_annihilates_node_influence() {
        // B_u = 0 for node 1 at layer 0: perturbing node 1's features leaves
        // every layer-1 activation unchanged
        let (g, adj) = two_node_graph();
        let params = GcnParams::glorot(2, 4, 2, 7);
        let mut dm = all_ones_masks(&adj, 2, 4);
        for c in 0..2 {
            dm.layers[0].channel.set(1, c, 0.0);
        }
        let base = mub_forward(&adj, &g.features, &params, &dm, 1.0).unwrap();
        let mut perturbed = g.features.clone();
        perturbed.set(1, 0, 100.0);
        perturbed.set(1, 1, -50.0);
        let moved = mub_forward(&adj, &perturbed, &params, &dm, 1.0).unwrap();
        assert_eq!(base.hidden.data(), moved.hidden.data());
    }

    #[test]
    fn mc_predict_t1_equals_single_sample() {
        let (g, adj) = two_node_graph();
        let params = GcnParams::glorot(2, 4, 2, 1);
        let config = MubConfig {
            samples: 1,
            ..Default::default()
        };
        let (mean, samples) = mc_predict(&adj, &g.features, &params, &config, 4).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(mean.data(), samples[0].data());
    }

    #[test]
    fn mc_predict_p1_mean_equals_deterministic() {
        let (g, adj) = two_node_graph();
        let params = GcnParams::glorot(2, 4, 2, 1);
        let config = MubConfig {
            keep_prob: 1.0,
            samples: 7,
            ..Default::default()
        };
        let (mean, samples) = mc_predict(&adj, &g.features, &params, &config, 4).unwrap();
        let det = gcn_forward(&adj, &g.features, &params, None).unwrap().probs;
        for s in &samples {
            assert_eq!(s.data(), det.data());
        }
        for (a, b) in mean.data().iter().zip(det.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_predict_deterministic_across_runs() {
        let (g, adj) = two_node_graph();
        let params = GcnParams::glorot(2, 4, 2, 1);
        let config = MubConfig::default();
        let (m1, _) = mc_predict(&adj, &g.features, &params, &config, 11).unwrap();
        let (m2, _) = mc_predict(&adj, &g.features, &params, &config, 11).unwrap();
        assert_eq!(m1.data(), m2.data());
    }

    #[test]
    fn identical_samples_zero_uncertainty() {
        let s = Matrix::from_vec(2, 2, vec![0.3, 0.7, 0.9, 0.1]);
        let mu = model_uncertainty(&[s.clone(), s.clone(), s], Reduce::Sum);
        // raw-moment cancellation leaves at most rounding noise
        assert!(mu.u.iter().all(|&u| u < 1e-15));
    }

    #[test]
    fn two_opposite_onehots_give_half() {
        let a = Matrix::from_vec(1, 2, vec![1.0, 0.0]);
        let b = Matrix::from_vec(1, 2, vec![0.0, 1.0]);
        let mu = model_uncertainty(&[a, b], Reduce::Sum);
        // per-class variance 0.25 each, summed = 0.5
        assert!((mu.u[0] - 0.5).abs() < 1e-12);
        assert!((mu.class_var.get(0, 0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn raw_moment_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let samples: Vec<Matrix> = (0..9)
            .map(|_| {
                Matrix::from_vec(3, 4, (0..12).map(|_| rng.gen::<f64>()).collect())
                    .softmax_rows()
            })
            .collect();
        let mu = model_uncertainty(&samples, Reduce::Sum);
        // two-pass oracle
        for r in 0..3 {
            for c in 0..4 {
                let vals: Vec<f64> = samples.iter().map(|s| s.get(r, c)).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var =
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
                assert!((mu.class_var.get(r, c) - var).abs() < 1e-9);
            }
        }
    }
}
