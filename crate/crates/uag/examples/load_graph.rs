//! Generate a citation-shaped dataset on disk, load it back through the
//! `.content`/`.cites` parser, and summarize splits and neighborhood
//! diversity.
//!
//! Usage: cargo run --example load_graph -- [cora|citeseer|pubmed]

use uag::graph::{khop_labeled_diversity, load_content_cites, split_nodes};
use uag::seeds::{fan, Role};
use uag::synth::write_surrogate;

fn main() -> uag::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "cora".into());
    let dir = std::env::temp_dir().join("uag-example-data");
    std::fs::create_dir_all(&dir).expect("create temp dir");

    let (content, cites) = write_surrogate(&name, &dir)?;
    println!("wrote {} and {}", content.display(), cites.display());

    let graph = load_content_cites(&content, &cites)?;
    println!(
        "{name}: {} nodes, {} features, {} classes, {} undirected edges",
        graph.num_nodes,
        graph.feat_dim(),
        graph.num_classes,
        graph.edges.len(),
    );

    let masks = split_nodes(&graph, fan(1, Role::Split));
    println!(
        "split 10/10/80: {} train / {} val / {} test",
        masks.train.len(),
        masks.val.len(),
        masks.test.len(),
    );

    let diversity = khop_labeled_diversity(&graph, &masks, 2);
    let mut hist = vec![0usize; graph.num_classes as usize + 1];
    for &d in &diversity.0 {
        hist[d as usize] += 1;
    }
    println!("2-hop labeled diversity histogram:");
    for (d, count) in hist.iter().enumerate() {
        println!("  {d} distinct labels: {count} nodes");
    }
    Ok(())
}
