//! Scratch: component timings + DICE diversity decomposition.
use std::time::Instant;
use uag::attack::{dice_attack, AttackMethod, AttackSpec};
use uag::dub::train_dub;
use uag::graph::{khop_labeled_diversity, normalize_adjacency, split_nodes, Graph};
use uag::harness::ExperimentConfig;
use uag::mub::train_mub;
use uag::nn::train_gcn;
use uag::seeds::{fan, Role};
use uag::synth::{surrogate_graph, surrogate_spec};

fn mean_div(g: &Graph, masks: &uag::graph::SplitMasks) -> f64 {
    let d = khop_labeled_diversity(g, masks, 2).0;
    d.iter().map(|&x| x as f64).sum::<f64>() / g.num_nodes as f64
}

fn main() {
    // --- criterion 6 decomposition on cora ---
    let g = surrogate_graph(&surrogate_spec("cora").unwrap());
    let masks = split_nodes(&g, fan(1, Role::Split));
    let clean = mean_div(&g, &masks);
    let spec = AttackSpec { method: AttackMethod::Dice, ratio: 0.2, seed: fan(1, Role::Attack) };
    let (attacked, rep) = dice_attack(&g, &spec).unwrap();
    println!("dice edits: +{} -{}", rep.added.len(), rep.removed.len());
    // additions only
    let mut e_add = g.edges.clone();
    e_add.extend(rep.added.iter().map(|&(a, b)| (a.min(b), a.max(b))));
    e_add.sort_unstable();
    let g_add = Graph::new(g.features.clone(), e_add, g.labels.iter().map(|&l| l).collect(), g.num_classes).unwrap();
    // deletions only
    let rm: std::collections::HashSet<(u32, u32)> =
        rep.removed.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    let e_del: Vec<(u32, u32)> = g.edges.iter().cloned().filter(|e| !rm.contains(e)).collect();
    let g_del = Graph::new(g.features.clone(), e_del, g.labels.iter().map(|&l| l).collect(), g.num_classes).unwrap();
    println!(
        "div clean {:.4} attacked {:.4} add-only {:.4} del-only {:.4}",
        clean, mean_div(&attacked, &masks), mean_div(&g_add, &masks), mean_div(&g_del, &masks)
    );

    // --- component timings ---
    for name in ["cora", "citeseer"] {
        let g = surrogate_graph(&surrogate_spec(name).unwrap());
        let masks = split_nodes(&g, fan(1, Role::Split));
        let adj = normalize_adjacency(&g);
        let cfg = ExperimentConfig { epochs: 100, weight_decay: 0.0, ..Default::default() };
        let t = Instant::now();
        let _ = train_gcn(&g, &masks, &adj, &cfg.train_config(1)).unwrap();
        println!("{name}: gcn100 {:.1?}", t.elapsed());
        let mut mcfg = cfg.mub_config(1);
        mcfg.train_samples = 10;
        let t = Instant::now();
        let _ = train_mub(&g, &masks, &adj, &mcfg).unwrap();
        println!("{name}: mub100xT10 {:.1?}", t.elapsed());
        let div = khop_labeled_diversity(&g, &masks, 2);
        let t = Instant::now();
        let _ = train_dub(&g, &masks, &adj, &div, &cfg.dub_config(1)).unwrap();
        println!("{name}: dub600 {:.1?}", t.elapsed());
    }
}
