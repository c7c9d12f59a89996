use std::time::Instant;
fn main() {
    let t = Instant::now();
    let spec = uag::synth::surrogate_spec("cora").unwrap();
    let g = uag::synth::surrogate_graph(&spec);
    println!("gen {:?} edges {}", t.elapsed(), g.edges.len());
    let t = Instant::now();
    let masks = uag::graph::split_nodes(&g, uag::seeds::fan(1, uag::seeds::Role::Split));
    let div = uag::graph::khop_labeled_diversity(&g, &masks, 2);
    println!("div {:?}", t.elapsed());
    let mut d: Vec<f64> = div.0.iter().map(|&x| x as f64).collect();
    d.sort_by(|a,b| a.partial_cmp(b).unwrap());
    println!("div q25 {} med {} q75 {} q90 {}", d[d.len()/4], d[d.len()/2], d[3*d.len()/4], d[9*d.len()/10]);
}
