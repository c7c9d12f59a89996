//! Train the 2-layer GCN baseline on a surrogate citation graph and report
//! accuracy per split.
//!
//! Usage: cargo run --example train_baseline -- [dataset] [epochs]

use uag::graph::{normalize_adjacency, split_nodes};
use uag::nn::{accuracy, argmax_rows, gcn_forward, train_gcn, TrainConfig};
use uag::seeds::{fan, Role};
use uag::synth::{surrogate_graph, surrogate_spec};

fn main() -> uag::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("cora");
    let epochs = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(200);

    let graph = surrogate_graph(&surrogate_spec(name)?);
    let masks = split_nodes(&graph, fan(1, Role::Split));
    let adj = normalize_adjacency(&graph);

    let cfg = TrainConfig {
        epochs,
        seed: fan(1, Role::Init),
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let params = train_gcn(&graph, &masks, &adj, &cfg)?;
    println!("trained {epochs} epochs in {:.1?}", start.elapsed());

    let trace = gcn_forward(&adj, &graph.features, &params, None)?;
    let preds = argmax_rows(&trace.probs);
    for (label, mask) in [
        ("train", &masks.train),
        ("val", &masks.val),
        ("test", &masks.test),
    ] {
        println!(
            "{label:>5} accuracy: {:.4}",
            accuracy(&preds, &graph.labels, mask)
        );
    }
    Ok(())
}
