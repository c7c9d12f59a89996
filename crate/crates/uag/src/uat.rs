//! Uncertainty-aware attention: per-node attentions from U_M/U_D, per-edge
//! gating by the endpoint minimum, defended prediction, and attention-gated
//! training of the deterministic branch.

use crate::dub::{data_uncertainty, DubParams};
use crate::error::{Result, UagError};
use crate::graph::{Graph, NormalizedAdjacency, SplitMasks};
use crate::mub::{mc_predict, model_uncertainty, MubConfig, MubParams};
use crate::nn::{argmax_rows, gcn_forward, train_gcn_weighted, GcnParams, GcnTrace, TrainConfig};

/// Which uncertainty source gates the aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefenseMode {
    Model,
    Data,
    Both,
    Off,
}

impl DefenseMode {
    pub fn parse(s: &str) -> Result<DefenseMode> {
        match s {
            "model" | "uag-model" => Ok(DefenseMode::Model),
            "data" | "uag-data" => Ok(DefenseMode::Data),
            "both" | "uag-both" => Ok(DefenseMode::Both),
            "off" | "gcn" => Ok(DefenseMode::Off),
            other => Err(UagError::Config(format!("unknown defense mode `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DefenseMode::Model => "uag-model",
            DefenseMode::Data => "uag-data",
            DefenseMode::Both => "uag-both",
            DefenseMode::Off => "gcn",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UatConfig {
    pub alpha_m: f64,
    pub alpha_d: f64,
    pub beta_m: f64,
    pub beta_d: f64,
    pub mode: DefenseMode,
}

impl Default for UatConfig {
    fn default() -> Self {
        UatConfig {
            alpha_m: 15.0,
            alpha_d: 15.0,
            beta_m: 2.5,
            beta_d: 2.5,
            mode: DefenseMode::Both,
        }
    }
}

/// Interquartile range `|Q3 - Q1|` with quartiles by linear interpolation at
/// positions `0.25(n-1)` and `0.75(n-1)` on the sorted sample.
pub fn range_iqr(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(UagError::EmptyMask("range_iqr"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite uncertainty"));
    let quantile = |q: f64| {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    };
    Ok((quantile(0.75) - quantile(0.25)).abs())
}

/// `zeta = alpha * exp(-beta * range)`.
pub fn zeta(alpha: f64, beta: f64, range: f64) -> f64 {
    alpha * (-beta * range).exp()
}

/// `Att(u) = exp(-zeta * U_u)` per node.
pub fn node_attention(u: &[f64], zeta: f64) -> Vec<f64> {
    u.iter().map(|&v| (-zeta * v).exp()).collect()
}

/// Node and per-edge attention values. Edge factors are aligned to the CSR
/// entry order of the adjacency used to build the map; the diagonal entry of
/// node `v` carries `att(v)` itself.
#[derive(Debug, Clone)]
pub struct AttentionMap {
    pub att_m: Vec<f64>,
    pub att_d: Vec<f64>,
    pub att_both: Vec<f64>,
    pub zeta_m: f64,
    pub zeta_d: f64,
    pub mode: DefenseMode,
    /// node attention selected by `mode`
    pub node: Vec<f64>,
    /// per-CSR-entry attention, `min` of endpoint node attentions
    pub edge_factors: Vec<f64>,
}

/// Combine the two per-node attention vectors under `mode` and lower them
/// onto adjacency entries: `Att^{uv} = min(Att(u), Att(v))`.
pub fn combine_and_edge(
    att_m: &[f64],
    att_d: &[f64],
    zeta_m: f64,
    zeta_d: f64,
    mode: DefenseMode,
    adj: &NormalizedAdjacency,
) -> AttentionMap {
    let n = adj.num_nodes;
    let att_both: Vec<f64> = att_m.iter().zip(att_d).map(|(&m, &d)| m.min(d)).collect();
    let node: Vec<f64> = match mode {
        DefenseMode::Model => att_m.to_vec(),
        DefenseMode::Data => att_d.to_vec(),
        DefenseMode::Both => att_both.clone(),
        DefenseMode::Off => vec![1.0; n],
    };
    let mut edge_factors = Vec::with_capacity(adj.nnz());
    for v in 0..n {
        for e in adj.row_ptr[v]..adj.row_ptr[v + 1] {
            let u = adj.col[e] as usize;
            edge_factors.push(node[v].min(node[u]));
        }
    }
    AttentionMap {
        att_m: att_m.to_vec(),
        att_d: att_d.to_vec(),
        att_both,
        zeta_m,
        zeta_d,
        mode,
        node,
        edge_factors,
    }
}

/// Uniform static edge weight `w` on off-diagonal entries, 1.0 on the
/// diagonal; the fixed-weight baseline.
pub fn static_edge_factors(adj: &NormalizedAdjacency, w: f64) -> Vec<f64> {
    let mut factors = Vec::with_capacity(adj.nnz());
    for v in 0..adj.num_nodes {
        for e in adj.row_ptr[v]..adj.row_ptr[v + 1] {
            factors.push(if adj.col[e] as usize == v { 1.0 } else { w });
        }
    }
    factors
}

/// Per-node uncertainties and attentions produced by a defended prediction.
#[derive(Debug, Clone)]
pub struct UncertaintyReport {
    pub u_m: Vec<f64>,
    pub u_d: Vec<f64>,
    pub att_m: Vec<f64>,
    pub att_d: Vec<f64>,
    pub att_both: Vec<f64>,
    pub zeta_m: f64,
    pub zeta_d: f64,
}

#[derive(Debug, Clone)]
pub struct DefenseOutcome {
    pub predictions: Vec<u32>,
    pub trace: GcnTrace,
    pub attention: AttentionMap,
    pub report: UncertaintyReport,
}

/// Measure both uncertainties on the (possibly attacked) input graph and
/// build the attention map. `Range(U)` is recomputed on the input graph.
pub fn build_attention(
    adj: &NormalizedAdjacency,
    x: &crate::matrix::Matrix,
    mub_params: &MubParams,
    mub_config: &MubConfig,
    dub_params: &DubParams,
    config: &UatConfig,
    mc_seed: u64,
) -> Result<(AttentionMap, UncertaintyReport)> {
    let (_, samples) = mc_predict(adj, x, mub_params, mub_config, mc_seed)?;
    let u_m = model_uncertainty(&samples, mub_config.reduce).u;
    let u_d = data_uncertainty(adj, x, dub_params)?.0;
    let zeta_m = zeta(config.alpha_m, config.beta_m, range_iqr(&u_m)?);
    let zeta_d = zeta(config.alpha_d, config.beta_d, range_iqr(&u_d)?);
    let att_m = node_attention(&u_m, zeta_m);
    let att_d = node_attention(&u_d, zeta_d);
    let map = combine_and_edge(&att_m, &att_d, zeta_m, zeta_d, config.mode, adj);
    let report = UncertaintyReport {
        u_m,
        u_d,
        att_m: map.att_m.clone(),
        att_d: map.att_d.clone(),
        att_both: map.att_both.clone(),
        zeta_m,
        zeta_d,
    };
    Ok((map, report))
}

/// Full defended prediction on a possibly attacked graph: measure U_M and
/// U_D, gate both GCN layers of the deterministic branch with the edge
/// attentions, and return argmax predictions.
pub fn defend_predict(
    graph: &Graph,
    adj: &NormalizedAdjacency,
    det_params: &GcnParams,
    mub_params: &MubParams,
    mub_config: &MubConfig,
    dub_params: &DubParams,
    config: &UatConfig,
    mc_seed: u64,
) -> Result<DefenseOutcome> {
    for (name, ok) in [
        ("deterministic", det_params.w1.is_finite() && det_params.w2.is_finite()),
        ("model branch", mub_params.w1.is_finite() && mub_params.w2.is_finite()),
        ("data branch", dub_params.w1.is_finite()),
    ] {
        if !ok {
            return Err(UagError::Numeric(format!("{name} parameters are not finite")));
        }
    }
    let (attention, report) = build_attention(
        adj,
        &graph.features,
        mub_params,
        mub_config,
        dub_params,
        config,
        mc_seed,
    )?;
    let trace = gcn_forward(adj, &graph.features, det_params, Some(&attention.edge_factors))?;
    let predictions = argmax_rows(&trace.probs);
    Ok(DefenseOutcome {
        predictions,
        trace,
        attention,
        report,
    })
}

/// Train the deterministic branch with the clean-graph attention gating the
/// forward pass, so train-time and test-time paths match.
pub fn train_deterministic(
    graph: &Graph,
    masks: &SplitMasks,
    adj: &NormalizedAdjacency,
    clean_attention: &AttentionMap,
    config: &TrainConfig,
) -> Result<GcnParams> {
    train_gcn_weighted(graph, masks, adj, config, Some(&clean_attention.edge_factors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_adjacency, Graph};
    use crate::matrix::Matrix;

    #[test]
    fn iqr_examples() {
        assert_eq!(range_iqr(&[5.0; 8]).unwrap(), 0.0);
        // sorted [1,2,3,4]: Q1 at 0.75 -> 1.75, Q3 at 2.25 -> 3.25
        let r = range_iqr(&[4.0, 2.0, 1.0, 3.0]).unwrap();
        assert!((r - 1.5).abs() < 1e-12);
        assert_eq!(range_iqr(&[3.7]).unwrap(), 0.0);
        assert!(range_iqr(&[]).is_err());
    }

    #[test]
    fn zeta_examples() {
        assert_eq!(zeta(15.0, 2.5, 0.0), 15.0);
        let z = zeta(15.0, 2.5, 1.0);
        assert!((z - 15.0 * (-2.5f64).exp()).abs() < 1e-12);
        assert!((z - 1.23128).abs() < 1e-5);
        assert!(zeta(15.0, 2.5, 0.5) > zeta(15.0, 2.5, 1.0));
    }

    #[test]
    fn node_attention_examples() {
        let att = node_attention(&[0.0, 0.1, 0.2], 15.0);
        assert_eq!(att[0], 1.0);
        assert!((att[1] - (-1.5f64).exp()).abs() < 1e-12);
        assert!((att[1] - 0.22313).abs() < 1e-5);
        assert!(att[1] > att[2]);
    }

    fn path3_adj() -> NormalizedAdjacency {
        let features = Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]);
        let g = Graph::new(features, vec![(0, 1), (1, 2)], vec![None; 3], 1).unwrap();
        normalize_adjacency(&g)
    }

    #[test]
    fn combine_min_and_edge_symmetry() {
        let adj = path3_adj();
        let att_m = [0.9, 0.5, 1.0];
        let att_d = [0.3, 0.8, 1.0];
        let map = combine_and_edge(&att_m, &att_d, 1.0, 1.0, DefenseMode::Both, &adj);
        assert_eq!(map.att_both, vec![0.3, 0.5, 1.0]);
        // edge (0,1): min(0.3, 0.5) = 0.3, both directions
        let e01 = adj.entry_index(0, 1).unwrap();
        let e10 = adj.entry_index(1, 0).unwrap();
        assert_eq!(map.edge_factors[e01], 0.3);
        assert_eq!(map.edge_factors[e10], 0.3);
        // self-loop carries the node's own attention
        let e00 = adj.entry_index(0, 0).unwrap();
        assert_eq!(map.edge_factors[e00], 0.3);
    }

    #[test]
    fn mode_off_is_identity_gate() {
        let adj = path3_adj();
        let map = combine_and_edge(&[0.2; 3], &[0.4; 3], 1.0, 1.0, DefenseMode::Off, &adj);
        assert!(map.edge_factors.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn attention_ordering_reverses_uncertainty_ordering() {
        let u = [0.05, 0.3, 0.0, 0.9, 0.45];
        let att = node_attention(&u, 7.0);
        for i in 0..u.len() {
            for j in 0..u.len() {
                if u[i] < u[j] {
                    assert!(att[i] > att[j]);
                }
            }
        }
    }

    #[test]
    fn static_factors_keep_diagonal() {
        let adj = path3_adj();
        let f = static_edge_factors(&adj, 0.25);
        for v in 0..3 {
            for e in adj.row_ptr[v]..adj.row_ptr[v + 1] {
                if adj.col[e] as usize == v {
                    assert_eq!(f[e], 1.0);
                } else {
                    assert_eq!(f[e], 0.25);
                }
            }
        }
    }
}
