//! Helpers shared between the gradient and acceptance test binaries.

#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uag::dub::{dub_loss_and_grads, enumerate_triples, DubConfig, DubParams};
use uag::graph::{khop_labeled_diversity, normalize_adjacency, split_nodes, Graph};
use uag::matrix::Matrix;
use uag::mub::{mub_backward, mub_forward, sample_masks, MubParams};
use uag::nn::{cross_entropy, gcn_backward, gcn_forward, GcnParams, TrainConfig};
use uag::synth::two_cluster_graph;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Central-difference gradient of `f` w.r.t. every entry of one matrix,
/// compared entrywise against the analytic gradient.
pub fn check_matrix_grad(
    mut read: impl FnMut() -> Matrix,
    mut write: impl FnMut(Matrix),
    f: &mut dyn FnMut() -> f64,
    analytic: &Matrix,
    what: &str,
) {
    let base = read();
    for r in 0..base.rows() {
        for c in 0..base.cols() {
            let orig = base.get(r, c);
            let mut m = read();
            m.set(r, c, orig + H);
            write(m);
            let up = f();
            let mut m = read();
            m.set(r, c, orig - H);
            write(m);
            let down = f();
            let mut m = read();
            m.set(r, c, orig);
            write(m);
            let numeric = (up - down) / (2.0 * H);
            let a = analytic.get(r, c);
            assert!(
                rel_err(a, numeric) < TOL,
                "{what}[{r},{c}]: analytic {a:.8e} vs numeric {numeric:.8e}"
            );
        }
    }
}

/// 8-node two-cluster fixture with an every-other-node loss mask.
pub fn fd_fixture() -> (Graph, Vec<usize>) {
    let g = two_cluster_graph(4, 7);
    let mask = vec![0usize, 2, 4, 6];
    (g, mask)
}

/// FD-check the plain and edge-weighted GCN gradients, including weight
/// decay.
pub fn fd_check_gcn() {
    let (g, mask) = fd_fixture();
    let adj = normalize_adjacency(&g);
    let wd = 3e-3;
    for edge_weights in [None, Some(vec![0.7; adj.nnz()])] {
        let params = std::cell::RefCell::new(GcnParams::glorot(2, 4, 2, 123));
        let loss = |p: &GcnParams| {
            let trace = gcn_forward(&adj, &g.features, p, edge_weights.as_deref()).unwrap();
            cross_entropy(&trace.probs, &g.labels, &mask).unwrap()
                + wd / 2.0 * (p.w1.frobenius_sq() + p.w2.frobenius_sq())
        };
        let trace =
            gcn_forward(&adj, &g.features, &params.borrow(), edge_weights.as_deref()).unwrap();
        let (d_w1, d_w2) = gcn_backward(
            &adj,
            &trace,
            &params.borrow(),
            &g.labels,
            &mask,
            wd,
            edge_weights.as_deref(),
        )
        .unwrap();
        let mut f = || loss(&params.borrow());
        check_matrix_grad(
            || params.borrow().w1.clone(),
            |m| params.borrow_mut().w1 = m,
            &mut f,
            &d_w1,
            "gcn w1",
        );
        check_matrix_grad(
            || params.borrow().w2.clone(),
            |m| params.borrow_mut().w2 = m,
            &mut f,
            &d_w2,
            "gcn w2",
        );
    }
}

/// FD-check the dropout-masked branch gradients for a fixed mask draw.
pub fn fd_check_mub() {
    let (g, mask) = fd_fixture();
    let adj = normalize_adjacency(&g);
    let p = 0.7;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let masks = sample_masks(&adj, g.feat_dim(), 4, p, &mut rng);
    let params = std::cell::RefCell::new(MubParams::glorot(2, 4, 2, 321));
    let loss = |pr: &MubParams| {
        let trace = mub_forward(&adj, &g.features, pr, &masks, p).unwrap();
        cross_entropy(&trace.probs, &g.labels, &mask).unwrap()
    };
    let trace = mub_forward(&adj, &g.features, &params.borrow(), &masks, p).unwrap();
    let (d_w1, d_w2) = mub_backward(
        &adj,
        &trace,
        &params.borrow(),
        &masks,
        p,
        &g.labels,
        &mask,
    )
    .unwrap();
    let mut f = || loss(&params.borrow());
    check_matrix_grad(
        || params.borrow().w1.clone(),
        |m| params.borrow_mut().w1 = m,
        &mut f,
        &d_w1,
        "mub w1",
    );
    check_matrix_grad(
        || params.borrow().w2.clone(),
        |m| params.borrow_mut().w2 = m,
        &mut f,
        &d_w2,
        "mub w2",
    );
}

/// FD-check the full DUB loss (labeled KL + energy + weight decay) for a
/// fixed exhaustive triple set.
pub fn fd_check_dub() {
    let (g, _) = fd_fixture();
    let adj = normalize_adjacency(&g);
    let masks = split_nodes(&g, 3);
    let targets = khop_labeled_diversity(&g, &masks, 2);
    let triples = enumerate_triples(&g, &[(1, 2)]);
    assert!(!triples.is_empty());
    let config = DubConfig {
        lambda: 0.8,
        train: TrainConfig {
            hidden: 4,
            ..TrainConfig::default()
        },
        ..DubConfig::default()
    };
    let params = std::cell::RefCell::new(DubParams::glorot(2, 4, 2, 555));
    let grads_of = |p: &DubParams| {
        dub_loss_and_grads(
            &adj,
            &g.features,
            p,
            &g.labels,
            &targets,
            &masks.train,
            &triples,
            &config,
        )
        .unwrap()
    };
    let (_, analytic) = grads_of(&params.borrow());
    let mut f = || grads_of(&params.borrow()).0;
    check_matrix_grad(
        || params.borrow().w1.clone(),
        |m| params.borrow_mut().w1 = m,
        &mut f,
        &analytic.w1,
        "dub w1",
    );
    check_matrix_grad(
        || params.borrow().w_mean.clone(),
        |m| params.borrow_mut().w_mean = m,
        &mut f,
        &analytic.w_mean,
        "dub w_mean",
    );
    check_matrix_grad(
        || params.borrow().w_var.clone(),
        |m| params.borrow_mut().w_var = m,
        &mut f,
        &analytic.w_var,
        "dub w_var",
    );
}
