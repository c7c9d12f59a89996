//! Experiment orchestration: config files, the dataset -> train -> attack ->
//! defend -> evaluate pipeline, metric CSVs, and plot-data emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::attack::{run_attack, AttackMethod, AttackSpec};
use crate::dub::{train_dub, DubConfig, DubParams};
use crate::error::{Result, UagError};
use crate::graph::{
    khop_labeled_diversity, load_content_cites, normalize_adjacency, split_nodes,
    DiversityTargets, Graph, NormalizedAdjacency, SplitMasks,
};
use crate::mub::{train_mub, MubConfig, MubParams, Reduce};
use crate::nn::{accuracy, argmax_rows, gcn_forward, train_gcn, GcnParams, TrainConfig};
use crate::seeds::{fan, Role, FANOUT_DOC};
use crate::uat::{
    build_attention, defend_predict, train_deterministic, DefenseMode, UatConfig,
    UncertaintyReport,
};

/// Everything a sweep needs; parsed from a `[section]` / `key = value` file
/// with comma-separated arrays.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub attacks: Vec<AttackMethod>,
    pub ratios: Vec<f64>,
    pub modes: Vec<DefenseMode>,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub keep_prob: f64,
    pub mc_samples: usize,
    pub train_samples: usize,
    pub reduce: Reduce,
    pub lambda: f64,
    pub eps: f64,
    /// DUB training length; the variance head converges slower than the
    /// classifiers, so it gets its own budget (defaults to `epochs`)
    pub dub_epochs: Option<usize>,
    /// DUB weight decay; the variance head needs more regularization than
    /// the classifiers to generalize from its sparse labeled anchors
    /// (defaults to `weight_decay`)
    pub dub_weight_decay: Option<f64>,
    pub triples_per_anchor: usize,
    pub diversity_hops: usize,
    pub alpha_m: f64,
    pub alpha_d: f64,
    pub beta_m: f64,
    pub beta_d: f64,
    pub force: bool,
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: "cora".into(),
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            seeds: vec![1, 2, 3],
            attacks: vec![AttackMethod::Dice],
            ratios: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            modes: vec![DefenseMode::Off, DefenseMode::Both],
            hidden: 16,
            epochs: 200,
            lr: 0.01,
            weight_decay: 5e-4,
            keep_prob: 0.8,
            mc_samples: 20,
            train_samples: 5,
            reduce: Reduce::Sum,
            lambda: 0.05,
            eps: 0.5,
            dub_epochs: Some(600),
            dub_weight_decay: Some(1e-3),
            triples_per_anchor: 5,
            diversity_hops: 2,
            alpha_m: 15.0,
            alpha_d: 15.0,
            beta_m: 2.5,
            beta_d: 2.5,
            force: false,
            record_wall_time: true,
        }
    }
}

impl ExperimentConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: self.hidden,
            epochs: self.epochs,
            lr: self.lr,
            weight_decay: self.weight_decay,
            seed: fan(seed, Role::Init),
        }
    }

    pub fn mub_config(&self, seed: u64) -> MubConfig {
        MubConfig {
            keep_prob: self.keep_prob,
            samples: self.mc_samples,
            train_samples: self.train_samples,
            reduce: self.reduce,
            train: self.train_config(seed),
        }
    }

    pub fn dub_config(&self, seed: u64) -> DubConfig {
        let mut train = self.train_config(seed);
        train.epochs = self.dub_epochs.unwrap_or(self.epochs);
        train.weight_decay = self.dub_weight_decay.unwrap_or(self.weight_decay);
        DubConfig {
            lambda: self.lambda,
            eps: self.eps,
            triples_per_anchor: self.triples_per_anchor,
            hop_pairs: vec![(1, self.diversity_hops.max(2))],
            train,
        }
    }

    pub fn uat_config(&self, mode: DefenseMode) -> UatConfig {
        UatConfig {
            alpha_m: self.alpha_m,
            alpha_d: self.alpha_d,
            beta_m: self.beta_m,
            beta_d: self.beta_d,
            mode,
        }
    }

    pub fn content_path(&self) -> PathBuf {
        self.data_dir.join(format!("{}.content", self.dataset))
    }

    pub fn cites_path(&self) -> PathBuf {
        self.data_dir.join(format!("{}.cites", self.dataset))
    }

    pub fn load_graph(&self) -> Result<Graph> {
        load_content_cites(&self.content_path(), &self.cites_path())
    }
}

fn parse_list<T, E>(value: &str, parse: impl Fn(&str) -> std::result::Result<T, E>) -> Result<Vec<T>>
where
    E: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).map_err(|e| UagError::Config(format!("bad list item `{s}`: {e}"))))
        .collect()
}

/// Parse the line-based config format: `[section]` headers, `key = value`
/// pairs, `#` comments, comma-separated arrays.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            UagError::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| UagError::Config(format!("line {}: bad {what} `{value}`", lineno + 1));
        match (section.as_str(), key) {
            ("data", "dataset") => cfg.dataset = value.to_string(),
            ("data", "dir") => cfg.data_dir = PathBuf::from(value),
            ("data", "out") => cfg.out_dir = PathBuf::from(value),
            ("sweep", "seeds") => cfg.seeds = parse_list(value, str::parse::<u64>)?,
            ("sweep", "attacks") => cfg.attacks = parse_list(value, AttackMethod::parse)?,
            ("sweep", "ratios") => cfg.ratios = parse_list(value, str::parse::<f64>)?,
            ("sweep", "modes") => cfg.modes = parse_list(value, DefenseMode::parse)?,
            ("sweep", "force") => cfg.force = value == "true",
            ("sweep", "wall_time") => cfg.record_wall_time = value != "off",
            ("train", "hidden") => cfg.hidden = value.parse().map_err(|_| bad("count"))?,
            ("train", "epochs") => cfg.epochs = value.parse().map_err(|_| bad("count"))?,
            ("train", "lr") => cfg.lr = value.parse().map_err(|_| bad("real"))?,
            ("train", "weight_decay") => cfg.weight_decay = value.parse().map_err(|_| bad("real"))?,
            ("mub", "keep_prob" | "p") => cfg.keep_prob = value.parse().map_err(|_| bad("real"))?,
            ("mub", "samples" | "t") => cfg.mc_samples = value.parse().map_err(|_| bad("count"))?,
            ("mub", "train_samples") => {
                cfg.train_samples = value.parse().map_err(|_| bad("count"))?
            }
            ("mub", "reduce") => {
                cfg.reduce = match value {
                    "sum" => Reduce::Sum,
                    "max" => Reduce::Max,
                    "mean" => Reduce::Mean,
                    _ => return Err(bad("reduce")),
                }
            }
            ("dub", "lambda") => cfg.lambda = value.parse().map_err(|_| bad("real"))?,
            ("dub", "epochs") => cfg.dub_epochs = Some(value.parse().map_err(|_| bad("count"))?),
            ("dub", "weight_decay") => {
                cfg.dub_weight_decay = Some(value.parse().map_err(|_| bad("real"))?)
            }
            ("dub", "eps") => cfg.eps = value.parse().map_err(|_| bad("real"))?,
            ("dub", "triples_per_anchor") => {
                cfg.triples_per_anchor = value.parse().map_err(|_| bad("count"))?
            }
            ("dub", "k" | "hops") => {
                cfg.diversity_hops = value.parse().map_err(|_| bad("count"))?
            }
            ("uat", "alpha") => {
                let a = value.parse().map_err(|_| bad("real"))?;
                cfg.alpha_m = a;
                cfg.alpha_d = a;
            }
            ("uat", "beta") => {
                let b = value.parse().map_err(|_| bad("real"))?;
                cfg.beta_m = b;
                cfg.beta_d = b;
            }
            ("uat", "alpha_m") => cfg.alpha_m = value.parse().map_err(|_| bad("real"))?,
            ("uat", "alpha_d") => cfg.alpha_d = value.parse().map_err(|_| bad("real"))?,
            ("uat", "beta_m") => cfg.beta_m = value.parse().map_err(|_| bad("real"))?,
            ("uat", "beta_d") => cfg.beta_d = value.parse().map_err(|_| bad("real"))?,
            (s, k) => {
                return Err(UagError::Config(format!(
                    "line {}: unknown key `{k}` in section `[{s}]`",
                    lineno + 1
                )))
            }
        }
    }
    if cfg.modes.is_empty() {
        return Err(UagError::Config("modes must be non-empty".into()));
    }
    if !(0.0..=1.0).contains(&cfg.keep_prob) || cfg.keep_prob == 0.0 {
        return Err(UagError::Config("keep_prob must be in (0, 1]".into()));
    }
    for r in &cfg.ratios {
        if !(0.0..=1.0).contains(r) {
            return Err(UagError::Config(format!("ratio {r} outside [0, 1]")));
        }
    }
    if cfg.alpha_m <= 0.0 || cfg.alpha_d <= 0.0 || cfg.beta_m <= 0.0 || cfg.beta_d <= 0.0 {
        return Err(UagError::Config("alpha and beta must be positive".into()));
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| UagError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

/// Everything trained once per (dataset, seed) on the clean graph.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub seed: u64,
    pub masks: SplitMasks,
    pub adj: NormalizedAdjacency,
    pub targets: DiversityTargets,
    pub baseline: GcnParams,
    pub mub: MubParams,
    pub dub: DubParams,
    /// attention-gated deterministic branch per defense mode
    pub det: Vec<(DefenseMode, GcnParams)>,
}

/// Train the baseline, both probabilistic branches, and one attention-gated
/// deterministic branch per requested defense mode, all on the clean graph.
pub fn train_bundle(
    graph: &Graph,
    cfg: &ExperimentConfig,
    seed: u64,
    modes: &[DefenseMode],
) -> Result<Bundle> {
    let masks = split_nodes(graph, fan(seed, Role::Split));
    let adj = normalize_adjacency(graph);
    let targets = khop_labeled_diversity(graph, &masks, cfg.diversity_hops);
    let baseline = train_gcn(graph, &masks, &adj, &cfg.train_config(seed))?;
    let mub = train_mub(graph, &masks, &adj, &cfg.mub_config(seed))?;
    let dub = train_dub(graph, &masks, &adj, &targets, &cfg.dub_config(seed))?;
    let mut det = Vec::new();
    for &mode in modes {
        if mode == DefenseMode::Off {
            continue;
        }
        let (attention, _) = build_attention(
            &adj,
            &graph.features,
            &mub,
            &cfg.mub_config(seed),
            &dub,
            &cfg.uat_config(mode),
            fan(seed, Role::Sampling),
        )?;
        let params = train_deterministic(graph, &masks, &adj, &attention, &cfg.train_config(seed))?;
        det.push((mode, params));
    }
    Ok(Bundle {
        seed,
        masks,
        adj,
        targets,
        baseline,
        mub,
        dub,
        det,
    })
}

/// One result row of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub dataset: String,
    pub defense: String,
    pub attack: String,
    pub ratio: f64,
    pub seed: u64,
    pub split: String,
    pub accuracy: f64,
    pub mean_u_m: f64,
    pub mean_u_d: f64,
    pub wall_time_seconds: f64,
}

pub const METRICS_HEADER: &str =
    "dataset,defense,attack,ratio,seed,split,accuracy,mean_u_m,mean_u_d,wall_time_seconds";

impl MetricRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.3}",
            self.dataset,
            self.defense,
            self.attack,
            self.ratio,
            self.seed,
            self.split,
            self.accuracy,
            self.mean_u_m,
            self.mean_u_d,
            self.wall_time_seconds
        )
    }

    pub fn from_csv(line: &str) -> Result<MetricRow> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(UagError::Config(format!("bad metrics row: `{line}`")));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| UagError::Config(format!("bad number `{s}`: {e}")))
        };
        Ok(MetricRow {
            dataset: f[0].into(),
            defense: f[1].into(),
            attack: f[2].into(),
            ratio: num(f[3])?,
            seed: f[4]
                .parse()
                .map_err(|e| UagError::Config(format!("bad seed `{}`: {e}", f[4])))?,
            split: f[5].into(),
            accuracy: num(f[6])?,
            mean_u_m: num(f[7])?,
            mean_u_d: num(f[8])?,
            wall_time_seconds: num(f[9])?,
        })
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Evaluate one defense mode on a (possibly attacked) graph. Returns test
/// accuracy and the mean uncertainties measured on that graph.
pub fn evaluate_mode(
    attacked: &Graph,
    bundle: &Bundle,
    cfg: &ExperimentConfig,
    mode: DefenseMode,
) -> Result<(f64, f64, f64)> {
    let adj = normalize_adjacency(attacked);
    if mode == DefenseMode::Off {
        let trace = gcn_forward(&adj, &attacked.features, &bundle.baseline, None)?;
        let preds = argmax_rows(&trace.probs);
        let acc = accuracy(&preds, &attacked.labels, &bundle.masks.test);
        return Ok((acc, f64::NAN, f64::NAN));
    }
    let det = bundle
        .det
        .iter()
        .find(|(m, _)| *m == mode)
        .map(|(_, p)| p)
        .ok_or_else(|| {
            UagError::Config(format!("no deterministic branch trained for {}", mode.name()))
        })?;
    let outcome = defend_predict(
        attacked,
        &adj,
        det,
        &bundle.mub,
        &cfg.mub_config(bundle.seed),
        &bundle.dub,
        &cfg.uat_config(mode),
        fan(bundle.seed, Role::Sampling),
    )?;
    let acc = accuracy(&outcome.predictions, &attacked.labels, &bundle.masks.test);
    Ok((acc, mean(&outcome.report.u_m), mean(&outcome.report.u_d)))
}

fn worker_count() -> usize {
    std::env::var("UAG_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(num_threads_default)
}

fn num_threads_default() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Run the full sweep: per seed, train branches once on the clean graph, then
/// evaluate every (attack, ratio, mode) cell. Failures are recorded per cell
/// and the sweep continues. Writes `metrics.csv` (and `errors.log` when any
/// cell failed) under the config's output directory.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<Vec<MetricRow>> {
    let metrics_path = cfg.out_dir.join("metrics.csv");
    if metrics_path.exists() && !cfg.force {
        return Err(UagError::OutputExists(cfg.out_dir.clone()));
    }
    fs::create_dir_all(&cfg.out_dir).map_err(|source| UagError::Io {
        path: cfg.out_dir.clone(),
        source,
    })?;
    let graph = cfg.load_graph()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| UagError::Config(format!("thread pool: {e}")))?;

    let per_seed: Vec<(Vec<MetricRow>, Vec<String>)> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| run_seed(&graph, cfg, seed))
            .collect()
    });

    let mut rows: Vec<MetricRow> = Vec::new();
    let mut errors: Vec<String> = Vec::new();
    for (r, e) in per_seed {
        rows.extend(r);
        errors.extend(e);
    }
    rows.sort_by(|a, b| {
        (&a.defense, &a.attack, a.ratio, a.seed)
            .partial_cmp(&(&b.defense, &b.attack, b.ratio, b.seed))
            .unwrap()
    });

    write_metrics_csv(&metrics_path, &rows)?;
    if !errors.is_empty() {
        let log = cfg.out_dir.join("errors.log");
        fs::write(&log, errors.join("\n") + "\n").map_err(|source| UagError::Io {
            path: log,
            source,
        })?;
    }
    Ok(rows)
}

fn run_seed(graph: &Graph, cfg: &ExperimentConfig, seed: u64) -> (Vec<MetricRow>, Vec<String>) {
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let bundle = match train_bundle(graph, cfg, seed, &cfg.modes) {
        Ok(b) => b,
        Err(e) => {
            errors.push(format!("seed {seed}: training failed: {e}"));
            return (rows, errors);
        }
    };
    for &attack in &cfg.attacks {
        for &ratio in &cfg.ratios {
            let spec = AttackSpec {
                method: attack,
                ratio,
                seed: fan(seed, Role::Attack),
            };
            let attacked = if ratio == 0.0 {
                Ok((graph.clone(), None))
            } else {
                run_attack(graph, &bundle.masks, &spec).map(|(g, r)| (g, Some(r)))
            };
            let attacked = match attacked {
                Ok((g, _)) => g,
                Err(e) => {
                    errors.push(format!("seed {seed} {} {ratio}: attack failed: {e}", attack.name()));
                    continue;
                }
            };
            for &mode in &cfg.modes {
                let start = Instant::now();
                match evaluate_mode(&attacked, &bundle, cfg, mode) {
                    Ok((acc, u_m, u_d)) => rows.push(MetricRow {
                        dataset: cfg.dataset.clone(),
                        defense: mode.name().into(),
                        attack: attack.name().into(),
                        ratio,
                        seed,
                        split: "test".into(),
                        accuracy: acc,
                        mean_u_m: u_m,
                        mean_u_d: u_d,
                        wall_time_seconds: if cfg.record_wall_time {
                            start.elapsed().as_secs_f64()
                        } else {
                            0.0
                        },
                    }),
                    Err(e) => errors.push(format!(
                        "seed {seed} {} {ratio} {}: {e}",
                        attack.name(),
                        mode.name()
                    )),
                }
            }
        }
    }
    (rows, errors)
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let err = |source| UagError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::new();
    out.push_str("# uag metrics v1\n");
    out.push_str(&format!("# {FANOUT_DOC}\n"));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    fs::write(path, out).map_err(err)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let text = fs::read_to_string(path).map_err(|source| UagError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty() && *l != METRICS_HEADER)
        .map(MetricRow::from_csv)
        .collect()
}

/// One diversity-threshold bin: test accuracy over nodes with diversity
/// strictly above the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityBin {
    pub threshold: u32,
    pub population: usize,
    pub accuracy: Option<f64>,
}

pub fn diversity_accuracy_bins(
    diversity: &DiversityTargets,
    preds: &[u32],
    labels: &[Option<u32>],
    test: &[usize],
    thresholds: &[u32],
) -> Vec<DiversityBin> {
    thresholds
        .iter()
        .map(|&t| {
            let nodes: Vec<usize> = test
                .iter()
                .copied()
                .filter(|&v| diversity.0[v] > t)
                .collect();
            let accuracy = if nodes.is_empty() {
                None
            } else {
                Some(crate::nn::accuracy(preds, labels, &nodes))
            };
            DiversityBin {
                threshold: t,
                population: nodes.len(),
                accuracy,
            }
        })
        .collect()
}

/// One equal-population uncertainty bin.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyBin {
    pub mean_u: f64,
    pub accuracy: f64,
    pub population: usize,
}

/// Quantile-bin nodes by uncertainty and report accuracy per bin. When there
/// are fewer distinct uncertainty values than requested bins, bins are merged
/// and the flag in the result is set.
pub fn uncertainty_accuracy_bins(
    u: &[f64],
    correct: &[bool],
    num_bins: usize,
) -> (Vec<UncertaintyBin>, bool) {
    assert_eq!(u.len(), correct.len());
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| u[a].partial_cmp(&u[b]).expect("non-finite uncertainty"));
    let mut distinct = 0usize;
    let mut last = f64::NAN;
    for &i in &order {
        if u[i] != last {
            distinct += 1;
            last = u[i];
        }
    }
    let merged = distinct < num_bins;
    let bins = num_bins.min(distinct).max(1);
    let mut out = Vec::with_capacity(bins);
    let per = u.len() / bins;
    let extra = u.len() % bins;
    let mut idx = 0usize;
    for b in 0..bins {
        let size = per + usize::from(b < extra);
        let members = &order[idx..idx + size];
        idx += size;
        if members.is_empty() {
            continue;
        }
        let mean_u = members.iter().map(|&i| u[i]).sum::<f64>() / members.len() as f64;
        let acc = members.iter().filter(|&&i| correct[i]).count() as f64 / members.len() as f64;
        out.push(UncertaintyBin {
            mean_u,
            accuracy: acc,
            population: members.len(),
        });
    }
    (out, merged)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        let mut ranks = vec![0.0; vals.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && vals[order[j + 1]] == vals[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &order[i..=j] {
                ranks[k] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let mx = mean(&rx);
    let my = mean(&ry);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..rx.len() {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Fixed-width (0.05) edge-attention histogram over [0, 1], counting each
/// undirected edge once (diagonal entries excluded).
pub fn edge_attention_histogram(adj: &NormalizedAdjacency, factors: &[f64]) -> [usize; 20] {
    let mut hist = [0usize; 20];
    for v in 0..adj.num_nodes {
        for e in adj.row_ptr[v]..adj.row_ptr[v + 1] {
            let u = adj.col[e] as usize;
            if u <= v {
                continue; // upper triangle only: one count per undirected edge
            }
            let bin = ((factors[e] / 0.05).floor() as usize).min(19);
            hist[bin] += 1;
        }
    }
    hist
}

/// Per-node uncertainty/attention CSV.
pub fn write_uncertainty_csv(path: &Path, graph: &Graph, report: &UncertaintyReport) -> Result<()> {
    let err = |source| UagError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::new();
    out.push_str(&format!("# {FANOUT_DOC}\n"));
    out.push_str("node_id,u_m,u_d,att_m,att_d,att_both\n");
    for v in 0..graph.num_nodes {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            graph.node_ids[v],
            report.u_m[v],
            report.u_d[v],
            report.att_m[v],
            report.att_d[v],
            report.att_both[v]
        ));
    }
    fs::write(path, out).map_err(err)
}

/// Per-node (U_D, true diversity) CSV for diversity-calibration analysis.
pub fn write_ud_diversity_csv(
    path: &Path,
    graph: &Graph,
    u_d: &[f64],
    diversity: &DiversityTargets,
) -> Result<()> {
    let err = |source| UagError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::new();
    out.push_str(&format!("# {FANOUT_DOC}\n"));
    out.push_str("node_id,u_d,true_diversity\n");
    for v in 0..graph.num_nodes {
        out.push_str(&format!(
            "{},{:.6},{}\n",
            graph.node_ids[v], u_d[v], diversity.0[v]
        ));
    }
    fs::write(path, out).map_err(err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    AccuracyVsRatio,
    DiversityBins,
    UncertaintyBins,
    Ablation,
    EdgeWeightHist,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<PlotKind> {
        match s {
            "accuracy_vs_ratio" => Ok(PlotKind::AccuracyVsRatio),
            "diversity_bins" => Ok(PlotKind::DiversityBins),
            "uncertainty_bins" => Ok(PlotKind::UncertaintyBins),
            "ablation" => Ok(PlotKind::Ablation),
            "edge_weight_hist" => Ok(PlotKind::EdgeWeightHist),
            other => Err(UagError::Config(format!("unknown plot kind `{other}`"))),
        }
    }
}

/// Seed-averaged accuracy-vs-ratio polylines grouped by (defense, attack).
pub fn accuracy_vs_ratio_series(rows: &[MetricRow]) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut grouped: BTreeMap<(String, String), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        grouped
            .entry((r.defense.clone(), r.attack.clone()))
            .or_default()
            .entry(format!("{:.6}", r.ratio))
            .or_default()
            .push(r.accuracy);
    }
    grouped
        .into_iter()
        .map(|((defense, attack), by_ratio)| {
            let mut points: Vec<(f64, f64)> = by_ratio
                .into_iter()
                .map(|(ratio, accs)| (ratio.parse::<f64>().unwrap(), mean(&accs)))
                .collect();
            points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            (format!("{defense}/{attack}"), points)
        })
        .collect()
}

/// Emit per-figure CSV plus a self-contained SVG line chart (or histogram)
/// into `out_dir`. Returns the files written.
pub fn emit_plot_data(kind: PlotKind, rows: &[MetricRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|source| UagError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    match kind {
        PlotKind::AccuracyVsRatio | PlotKind::Ablation => {
            let stem = if kind == PlotKind::Ablation {
                "ablation"
            } else {
                "accuracy_vs_ratio"
            };
            let series = accuracy_vs_ratio_series(rows);
            let csv_path = out_dir.join(format!("{stem}.csv"));
            let mut out = String::from("series,ratio,mean_accuracy\n");
            for (name, points) in &series {
                for (x, y) in points {
                    out.push_str(&format!("{name},{x},{y:.6}\n"));
                }
            }
            fs::write(&csv_path, out).map_err(|source| UagError::Io {
                path: csv_path.clone(),
                source,
            })?;
            let svg_path = out_dir.join(format!("{stem}.svg"));
            write_line_chart(&svg_path, stem, "attack ratio", "accuracy", &series)?;
            Ok(vec![csv_path, svg_path])
        }
        PlotKind::DiversityBins | PlotKind::UncertaintyBins | PlotKind::EdgeWeightHist => {
            Err(UagError::Config(format!(
                "plot kind {kind:?} is emitted directly by the defend/sweep stages, not from metric rows"
            )))
        }
    }
}

/// Write diversity-bin rows (`threshold,population,accuracy`).
pub fn emit_diversity_bins(bins: &[DiversityBin], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|source| UagError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let csv_path = out_dir.join("diversity_bins.csv");
    let mut out = String::from("threshold,population,accuracy\n");
    for b in bins {
        match b.accuracy {
            Some(a) => out.push_str(&format!("{},{},{:.6}\n", b.threshold, b.population, a)),
            None => out.push_str(&format!("{},{},\n", b.threshold, b.population)),
        }
    }
    fs::write(&csv_path, out).map_err(|source| UagError::Io {
        path: csv_path.clone(),
        source,
    })?;
    let series: Vec<(String, Vec<(f64, f64)>)> = vec![(
        "accuracy".into(),
        bins.iter()
            .filter_map(|b| b.accuracy.map(|a| (b.threshold as f64, a)))
            .collect(),
    )];
    let svg_path = out_dir.join("diversity_bins.svg");
    write_line_chart(&svg_path, "diversity_bins", "diversity >", "accuracy", &series)?;
    Ok(vec![csv_path, svg_path])
}

/// Write uncertainty-bin rows (`mean_u,accuracy,population`).
pub fn emit_uncertainty_bins(
    bins: &[UncertaintyBin],
    merged: bool,
    label: &str,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|source| UagError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let csv_path = out_dir.join(format!("uncertainty_bins_{label}.csv"));
    let mut out = String::new();
    if merged {
        out.push_str("# bins merged: fewer distinct uncertainty values than requested bins\n");
    }
    out.push_str("mean_u,accuracy,population\n");
    for b in bins {
        out.push_str(&format!("{:.6},{:.6},{}\n", b.mean_u, b.accuracy, b.population));
    }
    fs::write(&csv_path, out).map_err(|source| UagError::Io {
        path: csv_path.clone(),
        source,
    })?;
    let series = vec![(
        label.to_string(),
        bins.iter().map(|b| (b.mean_u, b.accuracy)).collect::<Vec<_>>(),
    )];
    let svg_path = out_dir.join(format!("uncertainty_bins_{label}.svg"));
    write_line_chart(&svg_path, "uncertainty_bins", "mean uncertainty", "accuracy", &series)?;
    Ok(vec![csv_path, svg_path])
}

/// Write the fixed-width edge-attention histogram (`bin_lo,bin_hi,count`).
pub fn emit_edge_weight_hist(hist: &[usize; 20], label: &str, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|source| UagError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let csv_path = out_dir.join(format!("edge_weight_hist_{label}.csv"));
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, &count) in hist.iter().enumerate() {
        out.push_str(&format!(
            "{:.2},{:.2},{count}\n",
            i as f64 * 0.05,
            (i + 1) as f64 * 0.05
        ));
    }
    fs::write(&csv_path, out).map_err(|source| UagError::Io {
        path: csv_path.clone(),
        source,
    })?;
    let series = vec![(
        label.to_string(),
        hist.iter()
            .enumerate()
            .map(|(i, &c)| (i as f64 * 0.05 + 0.025, c as f64))
            .collect::<Vec<_>>(),
    )];
    let svg_path = out_dir.join(format!("edge_weight_hist_{label}.svg"));
    write_line_chart(&svg_path, "edge_weight_hist", "attention", "edge count", &series)?;
    Ok(vec![csv_path, svg_path])
}

const SVG_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Minimal self-contained SVG line chart; no external renderer needed.
pub fn write_line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<()> {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 40.0, 50.0);
    let points: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let (x0, x1, y0, y1) = if points.is_empty() {
        (0.0, 1.0, 0.0, 1.0)
    } else {
        let x0 = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let x1 = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let y0 = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let y1 = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        (x0, x1, y0, y1)
    };
    let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
    let yspan = if y1 > y0 { y1 - y0 } else { 1.0 };
    let sx = |x: f64| ml + (x - x0) / xspan * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / yspan * (h - mt - mb);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n",
        w / 2.0
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{x_label}</text>\n",
        (ml + w - mr) / 2.0,
        h - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0
    ));
    for (tick, value) in [(x0, x0), (x1, x1)] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{value:.2}</text>\n",
            sx(tick),
            h - mb + 16.0
        ));
    }
    for (tick, value) in [(y0, y0), (y1, y1)] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{value:.2}</text>\n",
            ml - 6.0,
            sy(tick) + 4.0
        ));
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = SVG_COLORS[i % SVG_COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{name}</text>\n",
            w - mr - 180.0,
            mt + 14.0 * (i + 1) as f64
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|source| UagError::Io {
        path: path.to_path_buf(),
        source,
    })
}
