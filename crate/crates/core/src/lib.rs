//! Diverse graph information bottleneck for explainable synthetic-lethality
//! prediction on knowledge graphs.
//!
//! For every gene pair the model extracts the enclosing subgraph of a joint
//! knowledge graph, learns `K` stochastic edge masks over it, encodes each
//! masked subgraph through thirteen motif channels into a Gaussian, and
//! classifies the pair from each representation. Training trades prediction
//! accuracy against compression and rewards explanations whose
//! representations span a large volume.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod encoder;
pub mod error;
pub mod gate;
pub mod graph;
pub mod io;
pub mod krange;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod motif;
pub mod objective;
pub mod selfcheck;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
