//! Relational edge scoring, concrete relaxation of Bernoulli edge gates, and
//! median hardening of explanations.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::EnclosingGraph;

/// Bounds applied to scores before the logit.
pub const CLAMP_LO: f64 = 1e-6;
pub const CLAMP_HI: f64 = 1.0 - 1e-6;

/// Per-explanation projections: `w1` maps node features (d2×d0), `w2` maps
/// relation features (d2×d1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateBlock<T> {
    pub w1: T,
    pub w2: T,
}

fn check_dims(x: &Array2<f64>, e: &Array2<f64>, w1: &Array2<f64>, w2: &Array2<f64>) -> Result<()> {
    if w1.ncols() != x.ncols() || w2.ncols() != e.ncols() || w1.nrows() != w2.nrows() {
        return Err(Error::Shape(format!(
            "gate weights {:?}/{:?} vs node width {} and relation width {}",
            w1.dim(),
            w2.dim(),
            x.ncols(),
            e.ncols()
        )));
    }
    Ok(())
}

/// Edge index arrays of an enclosing graph, shared by every forward pass.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    pub heads: Arc<Vec<usize>>,
    pub tails: Arc<Vec<usize>>,
    pub relations: Arc<Vec<usize>>,
}

impl EdgeIndex {
    pub fn new(eg: &EnclosingGraph) -> Self {
        EdgeIndex {
            heads: Arc::new(eg.edges.iter().map(|e| e.head).collect()),
            tails: Arc::new(eg.edges.iter().map(|e| e.tail).collect()),
            relations: Arc::new(eg.edges.iter().map(|e| e.relation).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }
}

/// Records unbounded edge scores `(W1 x_j) · tanh(W1 x_i + W2 e_r)` for every
/// edge `(i, r, j)`, as an `m×1` column. `x` holds local node rows, `e` the
/// full relation table.
pub fn raw_scores_on(tape: &mut Tape, idx: &EdgeIndex, x: Var, e: Var, w1: Var, w2: Var) -> Var {
    let p = tape.matmul_t(x, w1);
    let q = tape.matmul_t(e, w2);
    let heads = tape.gather_rows(p, idx.heads.clone());
    let tails = tape.gather_rows(p, idx.tails.clone());
    let rels = tape.gather_rows(q, idx.relations.clone());
    let pre = tape.add(heads, rels);
    let act = tape.tanh(pre);
    let prod = tape.mul(tails, act);
    tape.row_sum(prod)
}

/// Concrete relaxation with fixed logistic noise `noise_logit = ln(ε/(1-ε))`.
pub fn relax_on(tape: &mut Tape, b: Var, tau: f64, noise_logit: &Array2<f64>) -> Var {
    let c = tape.clamp(b, CLAMP_LO, CLAMP_HI);
    let l = tape.logit(c);
    let n = tape.add_const(l, noise_logit);
    let s = tape.scale(n, 1.0 / tau);
    tape.sigmoid(s)
}

/// Edge probabilities `B` for every edge of `eg`, in edge order. Non-edges
/// carry no entry (they are fixed at 0 by construction).
pub fn score_edges(
    eg: &EnclosingGraph,
    node_table: &Array2<f64>,
    relation_table: &Array2<f64>,
    block: &GateBlock<Array2<f64>>,
) -> Result<Vec<f64>> {
    check_dims(node_table, relation_table, &block.w1, &block.w2)?;
    if eg.edges.is_empty() {
        return Ok(Vec::new());
    }
    let mut tape = Tape::new();
    let x = tape.leaf(eg.node_features(node_table));
    let e = tape.leaf(relation_table.clone());
    let w1 = tape.leaf(block.w1.clone());
    let w2 = tape.leaf(block.w2.clone());
    let raw = raw_scores_on(&mut tape, &EdgeIndex::new(eg), x, e, w1, w2);
    let b = tape.sigmoid(raw);
    Ok(tape.value(b).iter().copied().collect())
}

/// Dense `n×n` score matrix; zero wherever `eg` has no edge. Parallel edges
/// keep their largest score.
pub fn score_matrix(eg: &EnclosingGraph, scores: &[f64]) -> Array2<f64> {
    let n = eg.num_nodes();
    let mut m = Array2::zeros((n, n));
    for (e, &s) in eg.edges.iter().zip(scores) {
        let slot = &mut m[[e.head, e.tail]];
        if s > *slot {
            *slot = s;
        }
    }
    m
}

pub fn noise_logit(eps: f64) -> f64 {
    (eps / (1.0 - eps)).ln()
}

/// One relaxed gate value.
pub fn relax(b: f64, tau: f64, eps: f64) -> f64 {
    let b = b.clamp(CLAMP_LO, CLAMP_HI);
    let z = ((b / (1.0 - b)).ln() + noise_logit(eps)) / tau;
    1.0 / (1.0 + (-z).exp())
}

/// Uniform draws on the open interval (0, 1).
pub fn draw_uniform(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        })
        .collect()
}

/// Relaxed Bernoulli sample of every score.
pub fn relax_sample(scores: &[f64], tau: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::Domain(format!("temperature must be positive, got {tau}")));
    }
    let eps = draw_uniform(scores.len(), rng);
    Ok(scores.iter().zip(eps).map(|(&b, e)| relax(b, tau, e)).collect())
}

/// Median of the values (mean of the two middle values for even counts).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Edges (index, score) strictly above `threshold`.
pub fn threshold_at(scores: &[f64], threshold: f64) -> Vec<(usize, f64)> {
    scores
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, s)| s > threshold)
        .collect()
}

/// Keeps edges scored strictly above the median; returns the threshold used.
pub fn hard_threshold(scores: &[f64]) -> (f64, Vec<(usize, f64)>) {
    match median(scores) {
        Some(m) => (m, threshold_at(scores, m)),
        None => (0.0, Vec::new()),
    }
}

/// How an explanation is hardened.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    Median,
    Fixed(f64),
}

impl ThresholdMode {
    pub fn apply(self, scores: &[f64]) -> (f64, Vec<(usize, f64)>) {
        match self {
            ThresholdMode::Median => hard_threshold(scores),
            ThresholdMode::Fixed(t) => (t, threshold_at(scores, t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationEdge {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub weight: f64,
}

/// One hardened explanation subgraph, serialized as emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub pair: [String; 2],
    pub k: usize,
    pub threshold: f64,
    pub edges: Vec<ExplanationEdge>,
    pub confidence: f64,
}
