//! Motif-wise GIN encoder producing a diagonal Gaussian graph embedding.
//!
//! Each of the 13 motif channels runs its own 2-layer GIN over the
//! gate-weighted motif adjacency; per-node outputs are concatenated in catalog
//! order, mean-pooled, and projected to `2·d3` values: the first half is the
//! mean, the second half passes through softplus to give the variance.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Entries, PatternInstance, Tape, Var};
use crate::error::{Error, Result};
use crate::gate::EdgeIndex;
use crate::graph::EnclosingGraph;
use crate::motif::{self, NUM_MOTIFS};

/// One GIN layer: `h' = MLP((1 + eps) h + M h)` with
/// `MLP(x) = tanh(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GinLayer<T> {
    pub eps: T,
    pub w1: T,
    pub b1: T,
    pub w2: T,
    pub b2: T,
}

/// Two stacked GIN layers for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GinBlock<T> {
    pub layers: Vec<GinLayer<T>>,
}

/// Linear map from pooled channel features to `(mean, raw variance)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout<T> {
    pub w: T,
    pub b: T,
}

/// Mean and diagonal variance of a graph embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEmbedding {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianEmbedding {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sparse pattern of one motif channel: the entries its instances touch.
#[derive(Debug, Clone)]
pub struct ChannelPattern {
    pub entries: Entries,
    pub instances: Arc<Vec<PatternInstance>>,
}

/// Topology of an enclosing graph precomputed once for every forward pass:
/// collapsed arcs and the motif instances over them.
#[derive(Debug, Clone)]
pub struct PairStructure {
    pub n: usize,
    pub edges: EdgeIndex,
    /// Edges that are not self-loops.
    pub non_loop: Arc<Vec<usize>>,
    /// Arc slot of each entry of `non_loop`.
    pub arc_of: Vec<usize>,
    pub arcs: Arc<Vec<(usize, usize)>>,
    /// Both orientations of every arc, for the motif-free channel.
    pub arc_entries: Entries,
    /// Arc slot behind each of `arc_entries`.
    pub arc_entry_source: Arc<Vec<usize>>,
    pub channels: Vec<ChannelPattern>,
}

fn channel_pattern(instances: Vec<motif::Instance>, slot: &HashMap<(usize, usize), usize>) -> ChannelPattern {
    let mut entries = Vec::new();
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut entry = |r: usize, c: usize| {
        *index.entry((r, c)).or_insert_with(|| {
            entries.push((r, c));
            entries.len() - 1
        })
    };
    let instances = instances
        .into_iter()
        .map(|inst| {
            let [a, b, c] = inst.nodes;
            PatternInstance {
                entries: [
                    entry(a, b),
                    entry(b, a),
                    entry(a, c),
                    entry(c, a),
                    entry(b, c),
                    entry(c, b),
                ],
                arcs: inst.arcs.iter().map(|a| slot[a]).collect(),
                multiplicity: inst.multiplicity as f64,
            }
        })
        .collect();
    ChannelPattern {
        entries: Arc::new(entries),
        instances: Arc::new(instances),
    }
}

impl PairStructure {
    pub fn new(eg: &EnclosingGraph) -> Result<Self> {
        let n = eg.num_nodes();
        let mut arcs: Vec<(usize, usize)> = Vec::new();
        let mut slot = HashMap::new();
        let mut non_loop = Vec::new();
        let mut arc_of = Vec::new();
        for (i, e) in eg.edges.iter().enumerate() {
            if e.head == e.tail {
                continue;
            }
            let id = *slot.entry((e.head, e.tail)).or_insert_with(|| {
                arcs.push((e.head, e.tail));
                arcs.len() - 1
            });
            non_loop.push(i);
            arc_of.push(id);
        }
        let arc_entries = arcs.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect();
        let arc_entry_source = (0..arcs.len()).flat_map(|a| [a, a]).collect();
        let channels = motif::all_instances(&eg.binary_adjacency())?
            .into_iter()
            .map(|list| channel_pattern(list, &slot))
            .collect();
        Ok(PairStructure {
            n,
            edges: EdgeIndex::new(eg),
            non_loop: Arc::new(non_loop),
            arc_of,
            arcs: Arc::new(arcs),
            arc_entries: Arc::new(arc_entries),
            arc_entry_source: Arc::new(arc_entry_source),
            channels,
        })
    }
}

/// Collapses per-edge gates onto arcs by taking the maximum over parallel
/// edges. `None` when the graph has no non-loop edge.
pub fn arc_gates_on(tape: &mut Tape, edge_gates: Var, s: &PairStructure) -> Option<Var> {
    if s.arcs.is_empty() {
        return None;
    }
    let kept = tape.gather_rows(edge_gates, s.non_loop.clone());
    Some(tape.segment_max(kept, s.arc_of.clone(), s.arcs.len()))
}

/// A gated channel adjacency in sparse form; no weights means the zero
/// matrix.
#[derive(Debug, Clone)]
pub struct Channel {
    pub weights: Option<Var>,
    pub entries: Entries,
}

impl Channel {
    pub fn empty() -> Self {
        Channel {
            weights: None,
            entries: Arc::new(Vec::new()),
        }
    }

    /// Constant channel holding the nonzero entries of a dense matrix.
    pub fn from_dense(tape: &mut Tape, m: &Array2<f64>) -> Self {
        let (entries, values): (Vec<(usize, usize)>, Vec<f64>) = m
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|(rc, &v)| (rc, v))
            .unzip();
        if entries.is_empty() {
            return Channel::empty();
        }
        let w = tape.constant(Array2::from_shape_vec((values.len(), 1), values).unwrap());
        Channel {
            weights: Some(w),
            entries: Arc::new(entries),
        }
    }
}

/// Channel adjacencies: 13 motif channels, or the single symmetrized gated
/// adjacency when motifs are disabled.
pub fn channel_adjacencies_on(
    tape: &mut Tape,
    arc_gates: Option<Var>,
    s: &PairStructure,
    motifs_enabled: bool,
) -> Vec<Channel> {
    let channels = if motifs_enabled { NUM_MOTIFS } else { 1 };
    let Some(g) = arc_gates else {
        return vec![Channel::empty(); channels];
    };
    if motifs_enabled {
        s.channels
            .iter()
            .map(|c| {
                if c.instances.is_empty() {
                    return Channel::empty();
                }
                Channel {
                    weights: Some(tape.motif_weights(g, c.entries.len(), c.instances.clone())),
                    entries: c.entries.clone(),
                }
            })
            .collect()
    } else {
        vec![Channel {
            weights: Some(tape.gather_rows(g, s.arc_entry_source.clone())),
            entries: s.arc_entries.clone(),
        }]
    }
}

/// `(1 + eps) h + M h`.
pub fn gin_aggregate_on(tape: &mut Tape, m: &Channel, h: Var, eps: Var) -> Var {
    let own = tape.scale_var(h, eps);
    let selfish = tape.add(h, own);
    match m.weights {
        Some(w) => {
            let agg = tape.spmm(w, m.entries.clone(), h);
            tape.add(selfish, agg)
        }
        None => selfish,
    }
}

pub fn gin_layer_on(tape: &mut Tape, m: &Channel, h: Var, layer: &GinLayer<Var>) -> Var {
    let s = gin_aggregate_on(tape, m, h, layer.eps);
    let a = tape.matmul(s, layer.w1);
    let a = tape.add_row(a, layer.b1);
    let a = tape.tanh(a);
    let o = tape.matmul(a, layer.w2);
    tape.add_row(o, layer.b2)
}

pub fn gin_block_on(tape: &mut Tape, m: &Channel, x: Var, block: &GinBlock<Var>) -> Var {
    block
        .layers
        .iter()
        .fold(x, |h, layer| gin_layer_on(tape, m, h, layer))
}

/// Runs every channel, concatenates, mean-pools, projects. Returns
/// `(mean, variance)` as 1×d3 nodes.
pub fn encode_on(
    tape: &mut Tape,
    channels: &[Channel],
    x: Var,
    gin: &[GinBlock<Var>],
    readout: &Readout<Var>,
    d3: usize,
) -> (Var, Var) {
    encode_shared_on(
        tape,
        channels,
        x,
        gin,
        readout,
        d3,
        &mut vec![None; channels.len()],
    )
}

/// Like [`encode_on`], reusing block outputs of edgeless channels across calls on one tape.
pub fn encode_shared_on(
    tape: &mut Tape,
    channels: &[Channel],
    x: Var,
    gin: &[GinBlock<Var>],
    readout: &Readout<Var>,
    d3: usize,
    edgeless: &mut [Option<Var>],
) -> (Var, Var) {
    let outs: Vec<Var> = channels
        .iter()
        .zip(gin)
        .zip(edgeless.iter_mut())
        .map(|((m, block), shared)| match (m.weights, *shared) {
            (None, Some(out)) => out,
            (None, None) => {
                let out = gin_block_on(tape, m, x, block);
                *shared = Some(out);
                out
            }
            (Some(_), _) => gin_block_on(tape, m, x, block),
        })
        .collect();
    let h = tape.concat_cols(&outs);
    let pooled = tape.mean_rows(h);
    let proj = tape.matmul(pooled, readout.w);
    let proj = tape.add_row(proj, readout.b);
    let mean = tape.slice_cols(proj, 0, d3);
    let raw = tape.slice_cols(proj, d3, 2 * d3);
    let var = tape.softplus(raw);
    (mean, var)
}

/// `z = mean + sqrt(var) ⊙ noise`.
pub fn reparameterize_on(tape: &mut Tape, mean: Var, var: Var, noise: Array2<f64>) -> Var {
    let sd = tape.sqrt(var);
    let scaled = tape.mul_const(sd, noise);
    tape.add(mean, scaled)
}

fn block_leaves(tape: &mut Tape, block: &GinBlock<Array2<f64>>) -> GinBlock<Var> {
    GinBlock {
        layers: block
            .layers
            .iter()
            .map(|l| GinLayer {
                eps: tape.leaf(l.eps.clone()),
                w1: tape.leaf(l.w1.clone()),
                b1: tape.leaf(l.b1.clone()),
                w2: tape.leaf(l.w2.clone()),
                b2: tape.leaf(l.b2.clone()),
            })
            .collect(),
    }
}

fn check_block(n: usize, x: &Array2<f64>, block: &GinBlock<Array2<f64>>) -> Result<()> {
    if n != x.nrows() {
        return Err(Error::Shape(format!("{n} nodes vs features {:?}", x.dim())));
    }
    let mut width = x.ncols();
    for (i, l) in block.layers.iter().enumerate() {
        if l.w1.nrows() != width || l.w2.nrows() != l.w1.ncols() {
            return Err(Error::Shape(format!(
                "GIN layer {i}: input width {width}, weights {:?}/{:?}",
                l.w1.dim(),
                l.w2.dim()
            )));
        }
        width = l.w2.ncols();
    }
    Ok(())
}

/// Node embeddings of one GIN block.
pub fn gin_forward(m: &Array2<f64>, x: &Array2<f64>, block: &GinBlock<Array2<f64>>) -> Result<Array2<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!("adjacency {:?} is not square", m.dim())));
    }
    check_block(m.nrows(), x, block)?;
    let mut tape = Tape::new();
    let channel = Channel::from_dense(&mut tape, m);
    let xv = tape.leaf(x.clone());
    let b = block_leaves(&mut tape, block);
    let out = gin_block_on(&mut tape, &channel, xv, &b);
    Ok(tape.value(out).clone())
}

/// Gaussian embedding of `eg` under per-edge gates (one value per edge of
/// `eg`, in edge order).
pub fn encode(
    eg: &EnclosingGraph,
    edge_gates: &[f64],
    node_table: &Array2<f64>,
    gin: &[GinBlock<Array2<f64>>],
    readout: &Readout<Array2<f64>>,
    motifs_enabled: bool,
) -> Result<GaussianEmbedding> {
    if edge_gates.len() != eg.num_edges() {
        return Err(Error::Shape(format!(
            "{} gates for {} edges",
            edge_gates.len(),
            eg.num_edges()
        )));
    }
    if let Some(g) = edge_gates.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::Domain(format!("gate {g} outside [0,1]")));
    }
    let expected = if motifs_enabled { NUM_MOTIFS } else { 1 };
    if gin.len() != expected {
        return Err(Error::Shape(format!(
            "{} GIN blocks, expected {expected}",
            gin.len()
        )));
    }
    let s = PairStructure::new(eg)?;
    let x = eg.node_features(node_table);
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let gates = tape.leaf(Array2::from_shape_vec((edge_gates.len(), 1), edge_gates.to_vec()).unwrap());
    let arc = arc_gates_on(&mut tape, gates, &s);
    let channels = channel_adjacencies_on(&mut tape, arc, &s, motifs_enabled);
    for block in gin {
        check_block(s.n, &x, block)?;
    }
    let blocks: Vec<_> = gin.iter().map(|b| block_leaves(&mut tape, b)).collect();
    let d4 = gin[0].layers.last().map_or(x.ncols(), |l| l.w2.ncols());
    if readout.w.nrows() != d4 * gin.len() || !readout.w.ncols().is_multiple_of(2) {
        return Err(Error::Shape(format!("readout {:?}", readout.w.dim())));
    }
    let d3 = readout.w.ncols() / 2;
    let rw = tape.leaf(readout.w.clone());
    let rb = tape.leaf(readout.b.clone());
    let (mean, var) = encode_on(&mut tape, &channels, xv, &blocks, &Readout { w: rw, b: rb }, d3);
    Ok(GaussianEmbedding {
        mean: tape.value(mean).iter().copied().collect(),
        var: tape.value(var).iter().copied().collect(),
    })
}

/// Draws `z = mean + sqrt(var) ⊙ η`, `η ~ N(0, I)`.
pub fn reparameterize(g: &GaussianEmbedding, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if let Some(v) = g.var.iter().find(|v| **v <= 0.0) {
        return Err(Error::Domain(format!("variance {v} is not positive")));
    }
    Ok(g.mean
        .iter()
        .zip(&g.var)
        .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect())
}
