//! Train the Gaussian data-uncertainty branch and compare the predicted
//! variance against the neighborhood-diversity targets it is anchored to.
//!
//! Usage: cargo run --example data_uncertainty -- [dataset]

use uag::dub::{data_uncertainty, train_dub};
use uag::graph::{khop_labeled_diversity, normalize_adjacency, split_nodes};
use uag::harness::ExperimentConfig;
use uag::seeds::{fan, Role};
use uag::synth::{surrogate_graph, surrogate_spec};
use uag::uat::range_iqr;

fn main() -> uag::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "cora".into());
    let graph = surrogate_graph(&surrogate_spec(&name)?);
    let masks = split_nodes(&graph, fan(1, Role::Split));
    let adj = normalize_adjacency(&graph);
    let diversity = khop_labeled_diversity(&graph, &masks, 2);

    let cfg = ExperimentConfig::default();
    let params = train_dub(&graph, &masks, &adj, &diversity, &cfg.dub_config(1))?;
    let u = data_uncertainty(&adj, &graph.features, &params)?.0;

    println!("IQR of U_D: {:.4}", range_iqr(&u)?);
    println!("mean U_D per diversity level (targets are diversity + {}):", cfg.eps);
    let max_d = *diversity.0.iter().max().unwrap() as usize;
    for d in 0..=max_d {
        let vals: Vec<f64> = (0..graph.num_nodes)
            .filter(|&v| diversity.0[v] as usize == d)
            .map(|v| u[v])
            .collect();
        if vals.is_empty() {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        println!("  diversity {d}: mean U_D {mean:.3} over {} nodes", vals.len());
    }
    Ok(())
}
