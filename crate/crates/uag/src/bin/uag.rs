//! Thin CLI over the library pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uag::attack::{run_attack, AttackMethod, AttackSpec};
use uag::graph::{
    khop_labeled_diversity, normalize_adjacency, split_nodes, write_content_cites,
};
use uag::harness::{
    diversity_accuracy_bins, edge_attention_histogram, emit_diversity_bins, emit_edge_weight_hist,
    emit_plot_data, emit_uncertainty_bins, evaluate_mode, load_config, read_metrics_csv,
    run_pipeline, train_bundle, uncertainty_accuracy_bins, write_ud_diversity_csv,
    write_uncertainty_csv, ExperimentConfig, PlotKind,
};
use uag::nn::accuracy;
use uag::seeds::{fan, Role};
use uag::synth::write_surrogate;
use uag::uat::{defend_predict, DefenseMode};
use uag::{Result, UagError};

#[derive(Parser)]
#[command(name = "uag", about = "Uncertainty-aware GCN defense pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config file ([section] / key = value)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset name (overrides the config)
    #[arg(long)]
    dataset: Option<String>,
    /// Dataset directory (overrides the config)
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Master seed (overrides the config's first seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    force: bool,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if let Some(d) = &self.data_dir {
            cfg.data_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.force |= self.force;
        Ok(cfg)
    }

    fn seed(&self, cfg: &ExperimentConfig) -> u64 {
        self.seed.unwrap_or_else(|| cfg.seeds.first().copied().unwrap_or(1))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset and print its shape and split sizes
    LoadCheck(Common),
    /// Train all branches on the clean graph and save checkpoints
    Train(Common),
    /// Perturb the graph and write the attacked dataset plus an edit sidecar
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = AttackMethod::parse)]
        attack: AttackMethod,
        #[arg(long)]
        ratio: f64,
    },
    /// Attack the graph and run the defended prediction
    Defend {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = AttackMethod::parse)]
        attack: AttackMethod,
        #[arg(long)]
        ratio: f64,
        #[arg(long, value_parser = DefenseMode::parse, default_value = "uag-both")]
        mode: DefenseMode,
    },
    /// Run the full attack x ratio x mode sweep from a config file
    Sweep(Common),
    /// Emit plot CSV + SVG from a metrics file
    Plot {
        /// metrics.csv produced by `sweep`
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, value_parser = PlotKind::parse, default_value = "accuracy_vs_ratio")]
        kind: PlotKind,
        #[arg(long, default_value = "out/plots")]
        out: PathBuf,
    },
    /// Generate a surrogate citation-format dataset (cora/citeseer/pubmed shapes)
    GenData {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "data")]
        out: PathBuf,
        /// Overwrite an existing dataset
        #[arg(long)]
        force: bool,
    },
}

fn ensure_dir(path: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| UagError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::LoadCheck(common) => {
            let cfg = common.resolve()?;
            let graph = cfg.load_graph()?;
            let masks = split_nodes(&graph, fan(common.seed(&cfg), Role::Split));
            let labeled = graph.labels.iter().filter(|l| l.is_some()).count();
            println!(
                "{}: {} nodes, {} features, {} classes, {} undirected edges",
                cfg.dataset,
                graph.num_nodes,
                graph.feat_dim(),
                graph.num_classes,
                graph.edges.len()
            );
            println!(
                "labeled {} | split train {} / val {} / test {}",
                labeled,
                masks.train.len(),
                masks.val.len(),
                masks.test.len()
            );
        }
        Command::Train(common) => {
            let cfg = common.resolve()?;
            let seed = common.seed(&cfg);
            let graph = cfg.load_graph()?;
            ensure_dir(&cfg.out_dir)?;
            let bundle = train_bundle(&graph, &cfg, seed, &cfg.modes)?;
            bundle.baseline.save(&cfg.out_dir.join("baseline.ckpt"))?;
            bundle.mub.save(&cfg.out_dir.join("mub.ckpt"))?;
            bundle.dub.save(&cfg.out_dir.join("dub.ckpt"))?;
            for (mode, params) in &bundle.det {
                params.save(&cfg.out_dir.join(format!("det-{}.ckpt", mode.name())))?;
            }
            let (acc, _, _) = evaluate_mode(&graph, &bundle, &cfg, DefenseMode::Off)?;
            println!("trained seed {seed}; clean test accuracy (gcn) {acc:.4}");
            println!("checkpoints in {}", cfg.out_dir.display());
        }
        Command::Attack {
            common,
            attack,
            ratio,
        } => {
            let cfg = common.resolve()?;
            let seed = common.seed(&cfg);
            let graph = cfg.load_graph()?;
            let masks = split_nodes(&graph, fan(seed, Role::Split));
            let spec = AttackSpec {
                method: attack,
                ratio,
                seed: fan(seed, Role::Attack),
            };
            let (attacked, report) = run_attack(&graph, &masks, &spec)?;
            ensure_dir(&cfg.out_dir)?;
            let stem = format!("{}-{}-{}", cfg.dataset, attack.name(), ratio);
            let content = cfg.out_dir.join(format!("{stem}.content"));
            let cites = cfg.out_dir.join(format!("{stem}.cites"));
            if (content.exists() || cites.exists()) && !cfg.force {
                return Err(UagError::OutputExists(cfg.out_dir.clone()));
            }
            write_content_cites(&attacked, &content, &cites)?;
            report.write(&graph, &cfg.out_dir.join(format!("{stem}.edits")))?;
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
            println!(
                "{}: +{} edges, -{} edges -> {}",
                attack.name(),
                report.added.len(),
                report.removed.len(),
                cfg.out_dir.display()
            );
        }
        Command::Defend {
            common,
            attack,
            ratio,
            mode,
        } => {
            let cfg = common.resolve()?;
            let seed = common.seed(&cfg);
            let graph = cfg.load_graph()?;
            ensure_dir(&cfg.out_dir)?;
            let bundle = train_bundle(&graph, &cfg, seed, &[mode])?;
            let attacked = if ratio == 0.0 {
                graph.clone()
            } else {
                let spec = AttackSpec {
                    method: attack,
                    ratio,
                    seed: fan(seed, Role::Attack),
                };
                run_attack(&graph, &bundle.masks, &spec)?.0
            };
            let adj = normalize_adjacency(&attacked);
            if mode == DefenseMode::Off {
                let (acc, _, _) = evaluate_mode(&attacked, &bundle, &cfg, mode)?;
                println!("gcn (undefended) test accuracy {acc:.4}");
                return Ok(());
            }
            let det = &bundle
                .det
                .iter()
                .find(|(m, _)| *m == mode)
                .expect("branch trained above")
                .1;
            let outcome = defend_predict(
                &attacked,
                &adj,
                det,
                &bundle.mub,
                &cfg.mub_config(seed),
                &bundle.dub,
                &cfg.uat_config(mode),
                fan(seed, Role::Sampling),
            )?;
            let acc = accuracy(&outcome.predictions, &attacked.labels, &bundle.masks.test);
            println!(
                "{} vs {} @ {ratio}: test accuracy {acc:.4} (zeta_m {:.4}, zeta_d {:.4})",
                mode.name(),
                attack.name(),
                outcome.report.zeta_m,
                outcome.report.zeta_d
            );
            write_uncertainty_csv(&cfg.out_dir.join("uncertainty.csv"), &attacked, &outcome.report)?;
            write_ud_diversity_csv(
                &cfg.out_dir.join("ud_diversity.csv"),
                &attacked,
                &outcome.report.u_d,
                &bundle.targets,
            )?;
            let hist = edge_attention_histogram(&adj, &outcome.attention.edge_factors);
            emit_edge_weight_hist(&hist, mode.name(), &cfg.out_dir)?;
            let div = khop_labeled_diversity(&attacked, &bundle.masks, cfg.diversity_hops);
            let max_div = div.0.iter().copied().max().unwrap_or(0);
            let bins = diversity_accuracy_bins(
                &div,
                &outcome.predictions,
                &attacked.labels,
                &bundle.masks.test,
                &(0..=max_div).collect::<Vec<_>>(),
            );
            emit_diversity_bins(&bins, &cfg.out_dir)?;
            let correct: Vec<bool> = bundle
                .masks
                .test
                .iter()
                .map(|&v| attacked.labels[v] == Some(outcome.predictions[v]))
                .collect();
            for (u, label) in [(&outcome.report.u_m, "u_m"), (&outcome.report.u_d, "u_d")] {
                let test_u: Vec<f64> = bundle.masks.test.iter().map(|&v| u[v]).collect();
                let (ubins, merged) = uncertainty_accuracy_bins(&test_u, &correct, 5);
                emit_uncertainty_bins(&ubins, merged, label, &cfg.out_dir)?;
            }
        }
        Command::Sweep(common) => {
            let cfg = common.resolve()?;
            let rows = run_pipeline(&cfg)?;
            println!(
                "{} rows -> {}",
                rows.len(),
                cfg.out_dir.join("metrics.csv").display()
            );
            let errs = cfg.out_dir.join("errors.log");
            if errs.exists() {
                eprintln!("some cells failed; see {}", errs.display());
            }
        }
        Command::Plot { metrics, kind, out } => {
            let rows = read_metrics_csv(&metrics)?;
            let files = emit_plot_data(kind, &rows, &out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::GenData { name, out, force } => {
            let content = out.join(format!("{name}.content"));
            if content.exists() && !force {
                return Err(UagError::Config(format!(
                    "{} exists; pass --force to overwrite",
                    content.display()
                )));
            }
            let (content, cites) = write_surrogate(&name, &out)?;
            println!("wrote {} and {}", content.display(), cites.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
