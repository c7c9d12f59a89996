//! Run each structural attack at a fixed budget and report what it changed:
//! edit counts, label agreement of the edits, and the diversity shift.
//!
//! Usage: cargo run --example attacks -- [dataset] [ratio]

use uag::attack::{run_attack, AttackMethod, AttackSpec};
use uag::graph::{khop_labeled_diversity, split_nodes};
use uag::seeds::{fan, Role};
use uag::synth::{surrogate_graph, surrogate_spec};

fn main() -> uag::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("cora");
    let ratio: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.2);

    let graph = surrogate_graph(&surrogate_spec(name)?);
    let masks = split_nodes(&graph, fan(1, Role::Split));
    let clean_div = khop_labeled_diversity(&graph, &masks, 2);
    let clean_mean =
        clean_div.0.iter().map(|&d| d as f64).sum::<f64>() / graph.num_nodes as f64;
    println!("{name}: {} edges, clean mean 2-hop diversity {clean_mean:.3}", graph.edges.len());

    for method in [
        AttackMethod::Random,
        AttackMethod::Dice,
        AttackMethod::SurrogateGrad,
    ] {
        let spec = AttackSpec {
            method,
            ratio,
            seed: fan(1, Role::Attack),
        };
        let start = std::time::Instant::now();
        let (attacked, report) = run_attack(&graph, &masks, &spec)?;
        let same = |edges: &[(u32, u32)]| {
            edges
                .iter()
                .filter(|(a, b)| graph.labels[*a as usize] == graph.labels[*b as usize])
                .count()
        };
        let div = khop_labeled_diversity(&attacked, &masks, 2);
        let mean = div.0.iter().map(|&d| d as f64).sum::<f64>() / attacked.num_nodes as f64;
        println!(
            "{:>9} @ {ratio}: +{} edges ({} same-label), -{} edges ({} same-label), \
             mean diversity {mean:.3}, {:.1?}",
            method.name(),
            report.added.len(),
            same(&report.added),
            report.removed.len(),
            same(&report.removed),
            start.elapsed(),
        );
    }
    Ok(())
}
