//! Full defense demonstration: train every branch on the clean graph,
//! poison the graph with DICE, then compare the undefended GCN against the
//! uncertainty-gated model in each defense mode.
//!
//! Usage: cargo run --example defended_prediction -- [dataset] [ratio]

use uag::attack::{run_attack, AttackMethod, AttackSpec};
use uag::harness::{evaluate_mode, train_bundle, ExperimentConfig};
use uag::seeds::{fan, Role};
use uag::synth::{surrogate_graph, surrogate_spec};
use uag::uat::DefenseMode;

fn main() -> uag::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("cora");
    let ratio: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.6);

    let cfg = ExperimentConfig {
        dataset: name.into(),
        ..Default::default()
    };
    let graph = surrogate_graph(&surrogate_spec(name)?);
    let modes = [
        DefenseMode::Off,
        DefenseMode::Model,
        DefenseMode::Data,
        DefenseMode::Both,
    ];

    println!("training baseline + MUB + DUB + gated branches on clean {name}...");
    let start = std::time::Instant::now();
    let bundle = train_bundle(&graph, &cfg, 1, &modes)?;
    println!("trained in {:.1?}", start.elapsed());

    let spec = AttackSpec {
        method: AttackMethod::Dice,
        ratio,
        seed: fan(1, Role::Attack),
    };
    let (attacked, report) = run_attack(&graph, &bundle.masks, &spec)?;
    println!(
        "DICE @ {ratio}: +{} / -{} edges",
        report.added.len(),
        report.removed.len()
    );

    for mode in modes {
        let (clean_acc, _, _) = evaluate_mode(&graph, &bundle, &cfg, mode)?;
        let (acc, u_m, u_d) = evaluate_mode(&attacked, &bundle, &cfg, mode)?;
        print!("{:>9}: clean {clean_acc:.4} attacked {acc:.4}", mode.name());
        if mode == DefenseMode::Off {
            println!();
        } else {
            println!("  (mean U_M {u_m:.4}, mean U_D {u_d:.4})");
        }
    }
    Ok(())
}
