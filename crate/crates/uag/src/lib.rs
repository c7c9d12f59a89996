//! Uncertainty-aware defense for graph convolutional networks under
//! adversarial structure perturbation.
//!
//! The crate trains a 2-layer GCN on citation graphs, measures two
//! per-node uncertainties — a model uncertainty from Bernoulli structured
//! MC dropout over edges and channels, and a data uncertainty from a
//! Gaussian head trained against labeled-neighborhood diversity — and
//! gates message passing with an exponential attention on those
//! uncertainties. Structure attacks (random additions, DICE, a greedy
//! surrogate-gradient attack) and a sweep/plot harness round out the
//! experiment pipeline.
//!
//! Start with the `examples/` directory: each example exercises one major
//! capability end to end on a small synthetic graph or a generated
//! citation-format dataset. The `uag` binary exposes the same pipeline as
//! subcommands (`load-check`, `train`, `attack`, `defend`, `sweep`,
//! `plot`, `gen-data`).

pub mod attack;
pub mod dub;
pub mod error;
pub mod graph;
pub mod harness;
pub mod matrix;
pub mod mub;
pub mod nn;
pub mod seeds;
pub mod synth;
pub mod uat;

pub use error::{Result, UagError};
pub use graph::Graph;
pub use matrix::Matrix;
