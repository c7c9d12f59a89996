//! Small end-to-end experiment sweep: parse a config, run the pipeline,
//! and emit the metrics CSV plus an accuracy-vs-ratio SVG chart.
//!
//! Usage: cargo run --example sweep -- [out_dir]

use uag::harness::{emit_plot_data, parse_config_str, run_pipeline, PlotKind};
use uag::synth::write_surrogate;

fn main() -> uag::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("uag-sweep").display().to_string());
    let data_dir = format!("{out}/data");
    std::fs::create_dir_all(&data_dir).expect("create data dir");
    write_surrogate("cora", std::path::Path::new(&data_dir))?;

    let config = format!(
        "[data]\n\
         dataset = cora\n\
         dir = {data_dir}\n\
         out = {out}\n\
         [sweep]\n\
         seeds = 1\n\
         attacks = dice\n\
         ratios = 0.0, 0.3, 0.6\n\
         modes = gcn, uag-both\n\
         force = true\n\
         [train]\n\
         epochs = 100\n\
         weight_decay = 0.0\n\
         [mub]\n\
         keep_prob = 0.8\n\
         samples = 10\n\
         train_samples = 10\n\
         [dub]\n\
         epochs = 600\n\
         lambda = 0.05\n\
         weight_decay = 0.001\n"
    );
    let cfg = parse_config_str(&config)?;
    let rows = run_pipeline(&cfg)?;
    for row in &rows {
        println!("{}", row.to_csv());
    }
    let plots = emit_plot_data(PlotKind::AccuracyVsRatio, &rows, &cfg.out_dir)?;
    for p in plots {
        println!("wrote {}", p.display());
    }
    Ok(())
}
