//! Graph structure attacks: Random edge addition, DICE, and a greedy
//! surrogate-gradient attack standing in for meta-gradient methods. All
//! attacks perturb only the edge set.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, UagError};
use crate::graph::{normalize_adjacency, Graph, SplitMasks};
use crate::matrix::Matrix;
use crate::nn::{argmax_rows, cross_entropy_logit_grad, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMethod {
    Random,
    Dice,
    SurrogateGrad,
}

impl AttackMethod {
    pub fn parse(s: &str) -> Result<AttackMethod> {
        match s {
            "random" => Ok(AttackMethod::Random),
            "dice" => Ok(AttackMethod::Dice),
            "surrogate_grad" | "surrogate-grad" => Ok(AttackMethod::SurrogateGrad),
            other => Err(UagError::Config(format!("unknown attack method `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackMethod::Random => "random",
            AttackMethod::Dice => "dice",
            AttackMethod::SurrogateGrad => "surrogate_grad",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttackSpec {
    pub method: AttackMethod,
    /// perturbed-edge budget as a fraction of the clean undirected edge count
    pub ratio: f64,
    pub seed: u64,
}

impl AttackSpec {
    pub fn budget(&self, graph: &Graph) -> usize {
        (self.ratio * graph.edges.len() as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct AttackReport {
    pub method: AttackMethod,
    pub ratio: f64,
    pub seed: u64,
    pub added: Vec<(u32, u32)>,
    pub removed: Vec<(u32, u32)>,
    pub warning: Option<String>,
}

impl AttackReport {
    /// Sidecar text report: one `ADD u v` / `DEL u v` line per perturbation,
    /// using original node ids.
    pub fn write(&self, graph: &Graph, path: &Path) -> Result<()> {
        let err = |source| UagError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(err)?);
        let err = |source| UagError::Io {
            path: path.to_path_buf(),
            source,
        };
        writeln!(
            w,
            "# attack={} ratio={} seed={}",
            self.method.name(),
            self.ratio,
            self.seed
        )
        .map_err(err)?;
        if let Some(msg) = &self.warning {
            writeln!(w, "# WARNING: {msg}").map_err(err)?;
        }
        for &(a, b) in &self.added {
            writeln!(w, "ADD {} {}", graph.node_ids[a as usize], graph.node_ids[b as usize])
                .map_err(err)?;
        }
        for &(a, b) in &self.removed {
            writeln!(w, "DEL {} {}", graph.node_ids[a as usize], graph.node_ids[b as usize])
                .map_err(err)?;
        }
        w.flush().map_err(err)
    }
}

fn rejection_sample_absent(
    graph: &Graph,
    count: usize,
    rng: &mut ChaCha8Rng,
    accept: impl Fn(u32, u32) -> bool,
    already: &mut std::collections::HashSet<(u32, u32)>,
) -> (Vec<(u32, u32)>, bool) {
    let n = graph.num_nodes as u32;
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let cap = 200 * count + 10_000;
    while out.len() < count && attempts < cap {
        attempts += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let pair = (a.min(b), a.max(b));
        if graph.has_edge(pair.0, pair.1) || already.contains(&pair) || !accept(pair.0, pair.1) {
            continue;
        }
        already.insert(pair);
        out.push(pair);
    }
    let exhausted = out.len() < count;
    (out, exhausted)
}

/// Add `budget` distinct absent edges uniformly at random; no removals.
pub fn random_attack(graph: &Graph, spec: &AttackSpec) -> Result<(Graph, AttackReport)> {
    let budget = spec.budget(graph);
    let n = graph.num_nodes;
    let absent = n * (n - 1) / 2 - graph.edges.len();
    if budget > absent {
        return Err(UagError::Domain(format!(
            "budget {budget} exceeds {absent} absent node pairs"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut already = std::collections::HashSet::new();
    let (added, exhausted) = rejection_sample_absent(graph, budget, &mut rng, |_, _| true, &mut already);
    if exhausted {
        return Err(UagError::Numeric(
            "random attack sampling failed to find enough absent pairs".into(),
        ));
    }
    let mut edges = graph.edges.clone();
    edges.extend(&added);
    let attacked = graph.with_edges(edges)?;
    Ok((
        attacked,
        AttackReport {
            method: AttackMethod::Random,
            ratio: spec.ratio,
            seed: spec.seed,
            added,
            removed: vec![],
            warning: None,
        },
    ))
}

/// DICE: delete edges between same-label nodes, add edges between
/// different-label nodes. Budget splits half delete / half add, the extra of
/// an odd budget going to additions; when one pool runs out the remainder
/// falls back to the other action.
pub fn dice_attack(graph: &Graph, spec: &AttackSpec) -> Result<(Graph, AttackReport)> {
    let budget = spec.budget(graph);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut n_del = budget / 2;
    let mut n_add = budget - n_del;

    let mut same_label: Vec<(u32, u32)> = graph
        .edges
        .iter()
        .copied()
        .filter(|&(a, b)| {
            matches!(
                (graph.labels[a as usize], graph.labels[b as usize]),
                (Some(x), Some(y)) if x == y
            )
        })
        .collect();
    same_label.shuffle(&mut rng);
    if same_label.len() < n_del {
        n_add += n_del - same_label.len();
        n_del = same_label.len();
    }
    let removed: Vec<(u32, u32)> = same_label[..n_del].to_vec();

    let mut already = std::collections::HashSet::new();
    let (added, exhausted) = rejection_sample_absent(
        graph,
        n_add,
        &mut rng,
        |a, b| {
            matches!(
                (graph.labels[a as usize], graph.labels[b as usize]),
                (Some(x), Some(y)) if x != y
            )
        },
        &mut already,
    );
    let mut warning = None;
    let mut removed = removed;
    if exhausted {
        // addition pool exhausted: fall back to more same-label deletions
        let missing = n_add - added.len();
        let extra = same_label[n_del..(n_del + missing).min(same_label.len())].to_vec();
        removed.extend(extra);
        if removed.len() + added.len() < budget {
            warning = Some(format!(
                "both pools exhausted: {} of {budget} perturbations applied",
                removed.len() + added.len()
            ));
        }
    }

    let removed_set: std::collections::HashSet<(u32, u32)> = removed.iter().copied().collect();
    let mut edges: Vec<(u32, u32)> = graph
        .edges
        .iter()
        .copied()
        .filter(|e| !removed_set.contains(e))
        .collect();
    edges.extend(&added);
    let attacked = graph.with_edges(edges)?;
    Ok((
        attacked,
        AttackReport {
            method: AttackMethod::Dice,
            ratio: spec.ratio,
            seed: spec.seed,
            added,
            removed,
            warning,
        },
    ))
}

/// Linearized 2-layer surrogate `A_hat^2 X W` trained on the train mask.
fn train_surrogate(graph: &Graph, masks: &SplitMasks, seed: u64) -> Result<Matrix> {
    let adj = normalize_adjacency(graph);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Matrix::glorot(graph.feat_dim(), graph.num_classes, &mut rng);
    let mut adam = AdamState::new(0.01, &[(w.rows(), w.cols())]);
    let a2x = adj.apply(&adj.apply(&graph.features, None), None);
    for _ in 0..100 {
        let logits = a2x.matmul(&w)?;
        let probs = logits.softmax_rows();
        let d_logits = cross_entropy_logit_grad(&probs, &graph.labels, &masks.train);
        let mut d_w = a2x.matmul_tn(&d_logits)?;
        d_w.add_scaled(&w, 5e-4);
        adam.step(&mut [&mut w], &[&d_w]);
    }
    Ok(w)
}

/// Greedy structure attack against the surrogate's self-training loss: at
/// each step flip the feasible edge whose adjacency-entry gradient most
/// increases the loss, re-normalizing the adjacency after every flip.
/// Stand-in for meta-gradient attacks; never reported under their name.
pub fn surrogate_gradient_attack(
    graph: &Graph,
    masks: &SplitMasks,
    spec: &AttackSpec,
) -> Result<(Graph, AttackReport)> {
    let budget = spec.budget(graph);
    let w = train_surrogate(graph, masks, spec.seed)?;

    // self-training labels: ground truth on train, surrogate argmax elsewhere
    let adj0 = normalize_adjacency(graph);
    let logits0 = adj0
        .apply(&adj0.apply(&graph.features, None), None)
        .matmul(&w)?;
    let hard = argmax_rows(&logits0.softmax_rows());
    let train_bitmap = masks.train_bitmap(graph.num_nodes);
    let pseudo: Vec<Option<u32>> = (0..graph.num_nodes)
        .map(|v| {
            if train_bitmap[v] {
                graph.labels[v]
            } else {
                Some(hard[v])
            }
        })
        .collect();
    let all_nodes: Vec<usize> = (0..graph.num_nodes).collect();

    let mut current = graph.clone();
    let mut added = Vec::new();
    let mut removed = Vec::new();
    let n = graph.num_nodes;
    for _ in 0..budget {
        let adj = normalize_adjacency(&current);
        let p = current.features.matmul(&w)?; // X W
        let q = adj.apply(&p, None); // A_hat X W
        let z = adj.apply(&q, None); // A_hat^2 X W
        let probs = z.softmax_rows();
        let d_z = cross_entropy_logit_grad(&probs, &pseudo, &all_nodes);
        // dL/dA_hat = dZ Q^T + (A_hat^T dZ) P^T
        let mut g = d_z.matmul_nt(&q)?;
        g.add_scaled(&adj.apply_transpose(&d_z, None).matmul_nt(&p)?, 1.0);

        // best sign-feasible flip; symmetric entry pair, lowest index wins ties
        let mut best: Option<((u32, u32), f64, bool)> = None;
        for a in 0..n {
            for b in (a + 1)..n {
                let grad = g.get(a, b) + g.get(b, a);
                let present = current.has_edge(a as u32, b as u32);
                // loss increases along +grad for additions, -grad for deletions
                let score = if present { -grad } else { grad };
                match &best {
                    Some((_, s, _)) if *s >= score => {}
                    _ => best = Some(((a as u32, b as u32), score, present)),
                }
            }
        }
        let Some((pair, _, present)) = best else { break };
        let mut edges = current.edges.clone();
        if present {
            edges.retain(|&e| e != pair);
            removed.push(pair);
        } else {
            edges.push(pair);
            added.push(pair);
        }
        current = current.with_edges(edges)?;
    }
    Ok((
        current,
        AttackReport {
            method: AttackMethod::SurrogateGrad,
            ratio: spec.ratio,
            seed: spec.seed,
            added,
            removed,
            warning: None,
        },
    ))
}

/// Dispatch on the attack spec. The surrogate-gradient method needs split
/// masks for its train-mask surrogate.
pub fn run_attack(
    graph: &Graph,
    masks: &SplitMasks,
    spec: &AttackSpec,
) -> Result<(Graph, AttackReport)> {
    match spec.method {
        AttackMethod::Random => random_attack(graph, spec),
        AttackMethod::Dice => dice_attack(graph, spec),
        AttackMethod::SurrogateGrad => surrogate_gradient_attack(graph, masks, spec),
    }
}
