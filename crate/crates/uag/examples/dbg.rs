//! Scratch: DUB-only regime sweep. Prints predicted variance spread vs
//! diversity targets for combinations of epochs / lambda / lr.

use uag::dub::{data_uncertainty, train_dub};
use uag::graph::{khop_labeled_diversity, normalize_adjacency, split_nodes};
use uag::harness::ExperimentConfig;
use uag::seeds::{fan, Role};
use uag::synth::{surrogate_graph, surrogate_spec};
use uag::uat::{range_iqr, zeta};

fn q(v: &[f64], p: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s[((s.len() - 1) as f64 * p) as usize]
}

fn main() {
    let spec = surrogate_spec("cora").unwrap();
    let g = surrogate_graph(&spec);
    let masks = split_nodes(&g, fan(1, Role::Split));
    let adj = normalize_adjacency(&g);
    let div = khop_labeled_diversity(&g, &masks, 2);
    let targets: Vec<f64> = div.0.iter().map(|&d| d as f64 + 0.5).collect();
    println!(
        "targets: q25 {:.2} med {:.2} q75 {:.2} iqr {:.2}",
        q(&targets, 0.25), q(&targets, 0.5), q(&targets, 0.75),
        range_iqr(&targets).unwrap()
    );
    for (epochs, lambda, wd) in [
        (600usize, 0.05f64, 1e-3f64),
        (600, 0.05, 2e-3),
    ] {
        let lr = 0.01;
        let cfg = ExperimentConfig {
            dub_epochs: Some(epochs),
            lambda,
            lr,
            weight_decay: wd,
            ..Default::default()
        };
        let t0 = std::time::Instant::now();
        let dub = train_dub(&g, &masks, &adj, &div, &cfg.dub_config(1)).unwrap();
        let u = data_uncertainty(&adj, &g.features, &dub).unwrap().0;
        // correlation of predicted var with target on all nodes
        let n = u.len() as f64;
        let (mu, mt) = (u.iter().sum::<f64>() / n, targets.iter().sum::<f64>() / n);
        let mut cov = 0.0;
        let mut vu = 0.0;
        let mut vt = 0.0;
        for i in 0..u.len() {
            cov += (u[i] - mu) * (targets[i] - mt);
            vu += (u[i] - mu).powi(2);
            vt += (targets[i] - mt).powi(2);
        }
        let corr_on = |idx: &[usize]| {
            let uu: Vec<f64> = idx.iter().map(|&i| u[i]).collect();
            let tt: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
            let k = uu.len() as f64;
            let (a, b) = (uu.iter().sum::<f64>() / k, tt.iter().sum::<f64>() / k);
            let mut c0 = 0.0; let mut c1 = 0.0; let mut c2 = 0.0; let mut err = 0.0;
            for i in 0..uu.len() {
                c0 += (uu[i] - a) * (tt[i] - b);
                c1 += (uu[i] - a).powi(2);
                c2 += (tt[i] - b).powi(2);
                err += (uu[i] - tt[i]).abs();
            }
            (c0 / (c1.sqrt() * c2.sqrt()), err / k)
        };
        let (ctr, etr) = corr_on(&masks.train);
        let (cte, ete) = corr_on(&masks.test);
        println!("   train corr {ctr:.3} mae {etr:.3} | test corr {cte:.3} mae {ete:.3}");
        let iqr = range_iqr(&u).unwrap();
        let z = zeta(15.0, 2.5, iqr);
        println!(
            "ep {epochs:4} lam {lambda:.2} wd {wd:.4} lr {lr:.2}: med {:.3} q75 {:.3} q90 {:.3} iqr {:.3} corr {:.3} zeta_d {:.3} att_med {:.3} att_q90 {:.3} [{:?}]",
            q(&u, 0.5), q(&u, 0.75), q(&u, 0.9), iqr,
            cov / (vu.sqrt() * vt.sqrt()),
            z, (-z * q(&u, 0.5)).exp(), (-z * q(&u, 0.9)).exp(),
            t0.elapsed()
        );
    }
}
