//! Train the MC-dropout branch and inspect per-node model uncertainty.
//! Also demonstrates that with keep probability 1 and a single sample the
//! branch reproduces the deterministic GCN bit for bit.
//!
//! Usage: cargo run --example model_uncertainty -- [dataset]

use uag::graph::{normalize_adjacency, split_nodes};
use uag::mub::{mc_predict, model_uncertainty, train_mub, MubConfig, Reduce};
use uag::nn::{accuracy, argmax_rows, gcn_forward, train_gcn, TrainConfig};
use uag::seeds::{fan, Role};
use uag::synth::{surrogate_graph, surrogate_spec};

fn quantile(values: &[f64], p: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s[((s.len() - 1) as f64 * p) as usize]
}

fn main() -> uag::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "cora".into());
    let graph = surrogate_graph(&surrogate_spec(&name)?);
    let masks = split_nodes(&graph, fan(1, Role::Split));
    let adj = normalize_adjacency(&graph);

    let train = TrainConfig {
        epochs: 100,
        weight_decay: 0.0,
        seed: fan(1, Role::Init),
        ..Default::default()
    };
    let cfg = MubConfig {
        keep_prob: 0.8,
        samples: 10,
        train_samples: 10,
        reduce: Reduce::Sum,
        train: train.clone(),
    };
    let params = train_mub(&graph, &masks, &adj, &cfg)?;

    let (mean, samples) = mc_predict(&adj, &graph.features, &params, &cfg, fan(1, Role::Sampling))?;
    let preds = argmax_rows(&mean);
    println!(
        "MC-mean test accuracy: {:.4} ({} samples, keep prob {})",
        accuracy(&preds, &graph.labels, &masks.test),
        cfg.samples,
        cfg.keep_prob,
    );

    let u = model_uncertainty(&samples, cfg.reduce).u;
    println!(
        "U_M quantiles: q10 {:.4} median {:.4} q90 {:.4} max {:.4}",
        quantile(&u, 0.1),
        quantile(&u, 0.5),
        quantile(&u, 0.9),
        quantile(&u, 1.0),
    );

    // keep_prob = 1, one sample: every mask is the identity, so the branch
    // must agree with the plain GCN trained from the same seed
    let degenerate = MubConfig {
        keep_prob: 1.0,
        samples: 1,
        train_samples: 1,
        reduce: Reduce::Sum,
        train: train.clone(),
    };
    let det = train_gcn(&graph, &masks, &adj, &train)?;
    let mub_det = train_mub(&graph, &masks, &adj, &degenerate)?;
    let (mean_one, _) = mc_predict(
        &adj,
        &graph.features,
        &mub_det,
        &degenerate,
        fan(1, Role::Sampling),
    )?;
    let base = gcn_forward(&adj, &graph.features, &det, None)?;
    let identical = mean_one
        .data()
        .iter()
        .zip(base.probs.data())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!("keep_prob=1, T=1 reproduces the baseline bit-for-bit: {identical}");
    Ok(())
}
