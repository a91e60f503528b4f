//! End-to-end forward pass, gradients, SGD training, prediction and
//! explanation emission.
//!
//! For each explanation `k` the forward pass scores the enclosing graph's
//! edges, gates them (relaxed Bernoulli sample while training, the scores
//! themselves at test time), builds gate-weighted motif adjacencies, encodes
//! them into a Gaussian, draws (train) or takes the mean (test) of the
//! representation, and classifies it.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::encoder::{self, GaussianEmbedding, PairStructure};
use crate::error::{Error, Result};
use crate::gate::{self, Explanation, ExplanationEdge, ThresholdMode};
use crate::graph::{EnclosingGraph, EntityId, JointGraph, LabeledPair};
use crate::model::{Classifier, ModelDims, ModelState, Params};
use crate::objective::{self, DgibConfig, LossBreakdown, LossNodes, LossTerms};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Test,
}

/// Component switches for ablations. `gib = false` replaces the Bernoulli
/// gates by softmax attention over edges and drops the KL term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub motifs: bool,
    pub dpp: bool,
    pub gib: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            motifs: true,
            dpp: true,
            gib: true,
        }
    }
}

/// Settings that shape a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    pub tau: f64,
    pub dgib: DgibConfig,
    pub ablation: Ablation,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            tau: 1.0,
            dgib: DgibConfig::default(),
            ablation: Ablation::default(),
        }
    }
}

impl ForwardConfig {
    fn effective_dgib(&self) -> DgibConfig {
        let mut d = self.dgib;
        if !self.ablation.dpp {
            d.beta2 = 0.0;
        }
        if !self.ablation.gib {
            d.beta1 = 0.0;
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub t_hops: usize,
    pub forward: ForwardConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.005,
            epochs: 5,
            batch_size: 16,
            seed: 0,
            t_hops: 2,
            forward: ForwardConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.forward.tau > 0.0) {
            return Err(Error::Config("tau must be > 0".into()));
        }
        self.forward.dgib.validate()
    }
}

/// A pair with its enclosing graph and precomputed motif structure.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub pair: LabeledPair,
    pub eg: EnclosingGraph,
    pub structure: PairStructure,
}

impl PreparedPair {
    pub fn new(pair: LabeledPair, eg: EnclosingGraph) -> Result<Self> {
        let structure = PairStructure::new(&eg)?;
        Ok(PreparedPair { pair, eg, structure })
    }
}

pub fn prepare(graph: &JointGraph, pair: LabeledPair, t: usize) -> Result<PreparedPair> {
    PreparedPair::new(pair, graph.extract_enclosing(pair.u, pair.v, t)?)
}

pub fn prepare_all(graph: &JointGraph, pairs: &[LabeledPair], t: usize) -> Result<Vec<PreparedPair>> {
    pairs.par_iter().map(|&p| prepare(graph, p, t)).collect()
}

/// Randomness consumed by one training forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    /// Per explanation: logistic noise `ln(ε/(1-ε))` per edge (m×1).
    pub edge_logits: Vec<Array2<f64>>,
    /// Per explanation: standard normal draw (1×d3).
    pub eta: Vec<Array2<f64>>,
}

impl Noise {
    pub fn draw(edges: usize, k: usize, d3: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut edge_logits = Vec::with_capacity(k);
        let mut eta = Vec::with_capacity(k);
        for _ in 0..k {
            let eps = gate::draw_uniform(edges, rng);
            edge_logits.push(
                Array2::from_shape_vec((edges, 1), eps.into_iter().map(gate::noise_logit).collect()).unwrap(),
            );
            eta.push(Array2::from_shape_simple_fn((1, d3), || {
                StandardNormal.sample(rng)
            }));
        }
        Noise { edge_logits, eta }
    }

    /// Noise that makes the training path coincide with the test path.
    pub fn zero(edges: usize, k: usize, d3: usize) -> Self {
        Noise {
            edge_logits: vec![Array2::zeros((edges, 1)); k],
            eta: vec![Array2::zeros((1, d3)); k],
        }
    }
}

struct Recorded {
    x: Var,
    params: Params<Var>,
    logits: Vec<Var>,
    means: Vec<Var>,
    vars: Vec<Var>,
    zs: Vec<Var>,
    scores: Vec<Option<Var>>,
    gates: Vec<Option<Var>>,
    loss: LossNodes,
}

fn leaves(tape: &mut Tape, params: &Params<Array2<f64>>) -> Params<Var> {
    params.map(&mut |a| tape.leaf(a.clone()))
}

fn classify_on(tape: &mut Tape, z: Var, c: &Classifier<Var>) -> Var {
    let h = tape.matmul(z, c.w1);
    let h = tape.add_row(h, c.b1);
    let h = tape.tanh(h);
    let o = tape.matmul(h, c.w2);
    tape.add_row(o, c.b2)
}

fn check_state(state: &ModelState, p: &PreparedPair) -> Result<()> {
    if let Some(&n) = p.eg.nodes.iter().find(|&&n| n >= state.node_features.nrows()) {
        return Err(Error::UnknownEntity(format!("#{n}")));
    }
    if let Some(e) =
        p.eg.edges
            .iter()
            .find(|e| e.relation >= state.params.relation_features.nrows())
    {
        return Err(Error::Shape(format!(
            "relation id {} outside the model",
            e.relation
        )));
    }
    Ok(())
}

fn record(
    tape: &mut Tape,
    p: &PreparedPair,
    state: &ModelState,
    noise: Option<&Noise>,
    cfg: &ForwardConfig,
) -> Recorded {
    let dims = state.dims;
    let x = tape.leaf(p.eg.node_features(&state.node_features));
    let params = leaves(tape, &state.params);
    let has_edges = !p.eg.edges.is_empty();
    let mut logits = Vec::with_capacity(dims.k);
    let mut means = Vec::with_capacity(dims.k);
    let mut vars = Vec::with_capacity(dims.k);
    let mut zs = Vec::with_capacity(dims.k);
    let mut scores = Vec::with_capacity(dims.k);
    let mut all_gates = Vec::with_capacity(dims.k);
    let mut edgeless = vec![None; params.gin.len()];
    for k in 0..dims.k {
        let block = &params.gates[k];
        let (score, gates) = if has_edges {
            let raw = gate::raw_scores_on(
                tape,
                &p.structure.edges,
                x,
                params.relation_features,
                block.w1,
                block.w2,
            );
            let b = tape.sigmoid(raw);
            let g = if !cfg.ablation.gib {
                tape.softmax(raw)
            } else {
                match noise {
                    Some(n) => gate::relax_on(tape, b, cfg.tau, &n.edge_logits[k]),
                    None => b,
                }
            };
            (Some(b), Some(g))
        } else {
            (None, None)
        };
        let arc = gates.and_then(|g| encoder::arc_gates_on(tape, g, &p.structure));
        let channels = encoder::channel_adjacencies_on(tape, arc, &p.structure, cfg.ablation.motifs);
        let (mean, var) = encoder::encode_shared_on(
            tape,
            &channels,
            x,
            &params.gin,
            &params.readout,
            dims.d3,
            &mut edgeless,
        );
        let z = match noise {
            Some(n) => encoder::reparameterize_on(tape, mean, var, n.eta[k].clone()),
            None => mean,
        };
        let logit = classify_on(tape, z, &params.classifier);
        scores.push(score);
        all_gates.push(gates);
        means.push(mean);
        vars.push(var);
        zs.push(z);
        logits.push(logit);
    }
    let loss = objective::dgib_loss_on(
        tape,
        &LossTerms {
            logits: &logits,
            means: &means,
            vars: &vars,
            zs: &zs,
        },
        p.pair.target(),
        &cfg.effective_dgib(),
        cfg.ablation.gib,
    );
    Recorded {
        x,
        params,
        logits,
        means,
        vars,
        zs,
        scores,
        gates: all_gates,
        loss,
    }
}

/// Everything a forward pass produces, as plain values.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Vec<f64>,
    pub gaussians: Vec<GaussianEmbedding>,
    pub zs: Vec<Vec<f64>>,
    /// Edge probabilities `B_k`, one per enclosing-graph edge.
    pub scores: Vec<Vec<f64>>,
    /// Gates actually used (relaxed sample, scores, or attention).
    pub gates: Vec<Vec<f64>>,
    pub loss: LossBreakdown,
}

fn values(tape: &Tape, v: Var) -> Vec<f64> {
    tape.value(v).iter().copied().collect()
}

fn breakdown(tape: &Tape, l: &LossNodes) -> LossBreakdown {
    LossBreakdown {
        ce: tape.scalar_value(l.ce),
        kl: tape.scalar_value(l.kl),
        dpp: tape.scalar_value(l.dpp),
        total: tape.scalar_value(l.total),
    }
}

fn output(tape: &Tape, r: &Recorded) -> ForwardOutput {
    let opt = |v: &Option<Var>| v.map(|v| values(tape, v)).unwrap_or_default();
    ForwardOutput {
        logits: r.logits.iter().map(|&l| tape.scalar_value(l)).collect(),
        gaussians: r
            .means
            .iter()
            .zip(&r.vars)
            .map(|(&m, &v)| GaussianEmbedding {
                mean: values(tape, m),
                var: values(tape, v),
            })
            .collect(),
        zs: r.zs.iter().map(|&z| values(tape, z)).collect(),
        scores: r.scores.iter().map(opt).collect(),
        gates: r.gates.iter().map(opt).collect(),
        loss: breakdown(tape, &r.loss),
    }
}

/// Forward pass with explicit noise (`None` = test mode).
pub fn forward_with(
    p: &PreparedPair,
    state: &ModelState,
    noise: Option<&Noise>,
    cfg: &ForwardConfig,
) -> Result<ForwardOutput> {
    check_state(state, p)?;
    let mut tape = Tape::new();
    let r = record(&mut tape, p, state, noise, cfg);
    Ok(output(&tape, &r))
}

/// Forward pass; train mode draws its noise from `rng`, test mode draws nothing.
pub fn forward(
    p: &PreparedPair,
    state: &ModelState,
    rng: &mut ChaCha8Rng,
    mode: Mode,
    cfg: &ForwardConfig,
) -> Result<ForwardOutput> {
    match mode {
        Mode::Train => {
            let noise = Noise::draw(p.eg.num_edges(), state.dims.k, state.dims.d3, rng);
            forward_with(p, state, Some(&noise), cfg)
        }
        Mode::Test => forward_with(p, state, None, cfg),
    }
}

/// Test-mode logit of explanation `k` with its edge gates replaced by
/// `gates` (one value per enclosing-graph edge).
pub fn logit_with_gates(
    p: &PreparedPair,
    state: &ModelState,
    cfg: &ForwardConfig,
    k: usize,
    gates: &[f64],
) -> Result<f64> {
    check_state(state, p)?;
    if k >= state.dims.k {
        return Err(Error::Config(format!(
            "explanation {k} outside K = {}",
            state.dims.k
        )));
    }
    if gates.len() != p.eg.num_edges() {
        return Err(Error::Shape(format!(
            "{} gates for {} edges",
            gates.len(),
            p.eg.num_edges()
        )));
    }
    let mut tape = Tape::new();
    let x = tape.constant(p.eg.node_features(&state.node_features));
    let params = state.params.map(&mut |a| tape.constant(a.clone()));
    let arc = if gates.is_empty() {
        None
    } else {
        let g = tape.constant(Array2::from_shape_vec((gates.len(), 1), gates.to_vec()).unwrap());
        encoder::arc_gates_on(&mut tape, g, &p.structure)
    };
    let channels = encoder::channel_adjacencies_on(&mut tape, arc, &p.structure, cfg.ablation.motifs);
    let (mean, _) = encoder::encode_on(
        &mut tape,
        &channels,
        x,
        &params.gin,
        &params.readout,
        state.dims.d3,
    );
    let logit = classify_on(&mut tape, mean, &params.classifier);
    Ok(tape.scalar_value(logit))
}

/// Gradients for every parameter. Node-feature gradients are kept per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub node_rows: BTreeMap<EntityId, Array1<f64>>,
    pub params: Params<Array2<f64>>,
}

impl Gradients {
    pub fn zeros(state: &ModelState) -> Self {
        Gradients {
            node_rows: BTreeMap::new(),
            params: state.params.zeros_like(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, w: f64) {
        for (id, row) in &other.node_rows {
            let slot = self
                .node_rows
                .entry(*id)
                .or_insert_with(|| Array1::zeros(row.len()));
            slot.scaled_add(w, row);
        }
        for (a, b) in self
            .params
            .tensors_mut()
            .into_iter()
            .zip(other.params.named().into_iter().map(|(_, t)| t))
        {
            a.scaled_add(w, b);
        }
    }

    /// Dense node-table gradient (tests and diagnostics).
    pub fn node_dense(&self, rows: usize, cols: usize) -> Array2<f64> {
        let mut d = Array2::zeros((rows, cols));
        for (id, r) in &self.node_rows {
            d.row_mut(*id).assign(r);
        }
        d
    }
}

/// Loss and its gradient for one pair under fixed noise.
pub fn loss_and_gradients(
    p: &PreparedPair,
    state: &ModelState,
    noise: Option<&Noise>,
    cfg: &ForwardConfig,
) -> Result<(LossBreakdown, Gradients)> {
    check_state(state, p)?;
    let mut tape = Tape::new();
    let r = record(&mut tape, p, state, noise, cfg);
    let mut g = tape.backward(r.loss.total);
    let take = |g: &mut crate::autodiff::Grads, v: Var, like: &Array2<f64>| {
        g.take(v).unwrap_or_else(|| Array2::zeros(like.raw_dim()))
    };
    let xg = take(&mut g, r.x, &Array2::zeros((p.eg.num_nodes(), state.dims.d0)));
    let mut node_rows = BTreeMap::new();
    for (i, &id) in p.eg.nodes.iter().enumerate() {
        node_rows.insert(id, xg.row(i).to_owned());
    }
    let vars: Vec<Var> = r.params.named().into_iter().map(|(_, v)| *v).collect();
    let mut params = state.params.zeros_like();
    for (slot, v) in params.tensors_mut().into_iter().zip(vars) {
        if let Some(d) = g.take(v) {
            *slot = d;
        }
    }
    Ok((breakdown(&tape, &r.loss), Gradients { node_rows, params }))
}

/// Scalar loss under fixed noise, without recording gradients.
pub fn loss_value(
    p: &PreparedPair,
    state: &ModelState,
    noise: Option<&Noise>,
    cfg: &ForwardConfig,
) -> Result<f64> {
    Ok(forward_with(p, state, noise, cfg)?.loss.total)
}

/// `p ← p − lr·g`. Refuses non-finite gradients before touching the state.
pub fn sgd_step(state: &mut ModelState, grads: &Gradients, lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    for (id, row) in &grads.node_rows {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "node_features[{}]",
                state.entities.name(*id)
            )));
        }
    }
    for (name, t) in grads.params.named() {
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(name));
        }
    }
    for (id, row) in &grads.node_rows {
        state.node_features.row_mut(*id).scaled_add(-lr, row);
    }
    for (p, g) in state
        .params
        .tensors_mut()
        .into_iter()
        .zip(grads.params.named().into_iter().map(|(_, t)| t))
    {
        p.scaled_add(-lr, g);
    }
    Ok(())
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for (seed, epoch, pair); keeps parallel batches
/// reproducible.
pub fn pair_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(mix(seed) ^ epoch as u64) ^ index as u64))
}

/// One line of the convergence log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: String,
    pub loss: LossBreakdown,
}

/// Mean test-mode loss over `pairs`.
pub fn evaluate_loss(
    state: &ModelState,
    pairs: &[PreparedPair],
    cfg: &ForwardConfig,
) -> Result<LossBreakdown> {
    let losses = pairs
        .par_iter()
        .map(|p| forward_with(p, state, None, cfg).map(|o| o.loss))
        .collect::<Result<Vec<_>>>()?;
    Ok(objective::batch_loss(&losses))
}

/// Mini-batch SGD over shuffled pairs. `eval` (possibly empty) is scored in
/// test mode after every epoch.
pub fn train_prepared(
    mut state: ModelState,
    train: &[PreparedPair],
    eval: &[PreparedPair],
    cfg: &TrainConfig,
) -> Result<(ModelState, Vec<EpochLog>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if cfg.forward.dgib.k != state.dims.k {
        return Err(Error::Config(format!(
            "config K = {} but model has K = {}",
            cfg.forward.dgib.k, state.dims.k
        )));
    }
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = pair_rng(cfg.seed, epoch, usize::MAX);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut shuffle_rng);
        let mut epoch_losses = Vec::with_capacity(train.len());
        for batch in order.chunks(cfg.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let p = &train[i];
                    let mut rng = pair_rng(cfg.seed, epoch, i);
                    let noise = Noise::draw(p.eg.num_edges(), state.dims.k, state.dims.d3, &mut rng);
                    loss_and_gradients(p, &state, Some(&noise), &cfg.forward)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total = Gradients::zeros(&state);
            let w = 1.0 / batch.len() as f64;
            for (loss, g) in &results {
                total.add_scaled(g, w);
                epoch_losses.push(*loss);
            }
            sgd_step(&mut state, &total, cfg.lr)?;
        }
        log.push(EpochLog {
            epoch: epoch + 1,
            split: "train".into(),
            loss: objective::batch_loss(&epoch_losses),
        });
        if !eval.is_empty() {
            log.push(EpochLog {
                epoch: epoch + 1,
                split: "test".into(),
                loss: evaluate_loss(&state, eval, &cfg.forward)?,
            });
        }
        log::info!(
            "epoch {} train total {:.6}",
            epoch + 1,
            log.iter().rev().find(|l| l.split == "train").unwrap().loss.total
        );
    }
    Ok((state, log))
}

/// Initializes a model from the graph and trains it.
pub fn train(
    graph: &JointGraph,
    train_pairs: &[LabeledPair],
    eval_pairs: &[LabeledPair],
    dims: ModelDims,
    cfg: &TrainConfig,
) -> Result<(ModelState, Vec<EpochLog>)> {
    let state = ModelState::init(graph, dims, cfg.seed)?;
    let train = prepare_all(graph, train_pairs, cfg.t_hops)?;
    let eval = prepare_all(graph, eval_pairs, cfg.t_hops)?;
    train_prepared(state, &train, &eval, cfg)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean of the K per-explanation probabilities.
pub fn confidence(logits: &[f64]) -> f64 {
    logits.iter().map(|&l| sigmoid(l)).sum::<f64>() / logits.len() as f64
}

/// Interaction confidence in test mode.
pub fn predict(p: &PreparedPair, state: &ModelState, cfg: &ForwardConfig) -> Result<f64> {
    Ok(confidence(&forward_with(p, state, None, cfg)?.logits))
}

pub fn predict_all(pairs: &[PreparedPair], state: &ModelState, cfg: &ForwardConfig) -> Result<Vec<f64>> {
    pairs.par_iter().map(|p| predict(p, state, cfg)).collect()
}

/// K hardened explanations of one pair plus the diversity of their
/// representations.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExplanation {
    pub confidence: f64,
    pub dpp: f64,
    pub scores: Vec<Vec<f64>>,
    pub zs: Vec<Vec<f64>>,
    pub explanations: Vec<Explanation>,
}

/// Explains a pair. `thresholds` gives one hardening rule per explanation
/// (the median rule when shorter than K).
pub fn explain(
    p: &PreparedPair,
    state: &ModelState,
    cfg: &ForwardConfig,
    thresholds: &[ThresholdMode],
) -> Result<PairExplanation> {
    let out = forward_with(p, state, None, cfg)?;
    let conf = confidence(&out.logits);
    let name = |id: EntityId| state.entities.name(id).to_string();
    let explanations = out
        .scores
        .iter()
        .enumerate()
        .map(|(k, scores)| {
            let mode = thresholds.get(k).copied().unwrap_or(ThresholdMode::Median);
            let (threshold, kept) = mode.apply(scores);
            Explanation {
                pair: [name(p.pair.u), name(p.pair.v)],
                k: k + 1,
                threshold,
                edges: kept
                    .into_iter()
                    .map(|(i, w)| {
                        let t = p.eg.global_edge(i);
                        ExplanationEdge {
                            head: name(t.head),
                            relation: state.relations.name(t.relation).to_string(),
                            tail: name(t.tail),
                            weight: w,
                        }
                    })
                    .collect(),
                confidence: conf,
            }
        })
        .collect();
    Ok(PairExplanation {
        confidence: conf,
        dpp: out.loss.dpp,
        scores: out.scores,
        zs: out.zs,
        explanations,
    })
}

/// Names every parameter tensor together with its gradient, including the
/// local node-feature rows.
pub fn named_gradients(g: &Gradients) -> Vec<(String, Array2<f64>)> {
    let mut out: Vec<(String, Array2<f64>)> = g
        .node_rows
        .iter()
        .map(|(id, r)| {
            (
                format!("node_features[{id}]"),
                r.clone().insert_axis(ndarray::Axis(0)),
            )
        })
        .collect();
    out.extend(g.params.named().into_iter().map(|(n, t)| (n, t.clone())));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_joint_graph;
    use crate::selfcheck::gradient_instance;
    use crate::synth::{self, PlantSpec};

    fn tiny_dataset(seed: u64) -> (JointGraph, Vec<LabeledPair>) {
        let d = synth::generate(&PlantSpec {
            entities: 400,
            genes: 40,
            spoke_pool: 60,
            positives: 12,
            negatives: 12,
            seed,
            ..PlantSpec::default()
        })
        .unwrap();
        let graph = build_joint_graph(&d.kg, &d.pairs, 8, 8, seed).unwrap();
        (graph, d.pairs)
    }

    fn tiny_dims() -> ModelDims {
        ModelDims {
            d0: 8,
            d1: 8,
            d2: 4,
            d3: 4,
            d4: 4,
            k: 2,
            ..ModelDims::default()
        }
    }

    #[test]
    fn forward_yields_one_logit_and_score_vector_per_explanation() {
        for k in 1..=3 {
            let inst = gradient_instance(11, k, 8).unwrap();
            let out = forward_with(&inst.pair, &inst.state, None, &inst.cfg).unwrap();
            let m = inst.pair.eg.num_edges();
            assert_eq!(out.logits.len(), k);
            assert_eq!(out.scores.len(), k);
            assert!(out.scores.iter().all(|s| s.len() == m));
            assert!(out.scores.iter().flatten().all(|&s| (0.0..=1.0).contains(&s)));
        }
    }

    #[test]
    fn zero_noise_training_path_matches_test_path() {
        let inst = gradient_instance(5, 3, 8).unwrap();
        let m = inst.pair.eg.num_edges();
        let zero = Noise::zero(m, 3, inst.state.dims.d3);
        let train = forward_with(&inst.pair, &inst.state, Some(&zero), &inst.cfg).unwrap();
        let test = forward_with(&inst.pair, &inst.state, None, &inst.cfg).unwrap();
        for (a, b) in train.logits.iter().zip(&test.logits) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn gates_equal_to_scores_reproduce_the_test_logit() {
        let inst = gradient_instance(8, 2, 8).unwrap();
        let out = forward_with(&inst.pair, &inst.state, None, &inst.cfg).unwrap();
        for k in 0..2 {
            let l = logit_with_gates(&inst.pair, &inst.state, &inst.cfg, k, &out.scores[k]).unwrap();
            assert!((l - out.logits[k]).abs() < 1e-12);
        }
        assert!(logit_with_gates(&inst.pair, &inst.state, &inst.cfg, 2, &out.scores[0]).is_err());
        assert!(logit_with_gates(&inst.pair, &inst.state, &inst.cfg, 0, &[0.5]).is_err());
    }

    #[test]
    fn confidence_averages_per_explanation_probabilities() {
        assert_eq!(confidence(&[0.0]), 0.5);
        assert!((confidence(&[0.0, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        let want = (sigmoid(2.0) + sigmoid(-1.0)) / 2.0;
        assert!((confidence(&[2.0, -1.0]) - want).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_subtracts_scaled_gradient() {
        let inst = gradient_instance(3, 1, 8).unwrap();
        let (_, g) = loss_and_gradients(&inst.pair, &inst.state, Some(&inst.noise), &inst.cfg).unwrap();
        let mut state = inst.state.clone();
        sgd_step(&mut state, &g, 0.1).unwrap();
        for ((_, before), ((_, after), (_, grad))) in inst
            .state
            .params
            .named()
            .into_iter()
            .zip(state.params.named().into_iter().zip(g.params.named()))
        {
            let want = before - &(grad * 0.1);
            assert_eq!(after, &want);
        }
        for (id, row) in &g.node_rows {
            let want = &inst.state.node_features.row(*id) - &(row * 0.1);
            assert_eq!(state.node_features.row(*id), want);
        }
    }

    #[test]
    fn sgd_step_rejects_non_finite_gradients_untouched() {
        let inst = gradient_instance(4, 1, 8).unwrap();
        let mut g = Gradients::zeros(&inst.state);
        g.params.tensors_mut()[0][[0, 0]] = f64::NAN;
        let mut state = inst.state.clone();
        assert!(matches!(sgd_step(&mut state, &g, 0.1), Err(Error::NonFinite(_))));
        assert_eq!(state.to_bytes(), inst.state.to_bytes());
        assert!(sgd_step(&mut state, &Gradients::zeros(&inst.state), 0.0).is_err());
    }

    #[test]
    fn pair_streams_are_reproducible_and_distinct() {
        use rand::Rng;
        let draw = |s, e, i| pair_rng(s, e, i).random::<u64>();
        assert_eq!(draw(1, 2, 3), draw(1, 2, 3));
        assert_ne!(draw(1, 2, 3), draw(1, 2, 4));
        assert_ne!(draw(1, 2, 3), draw(1, 3, 3));
        assert_ne!(draw(1, 2, 3), draw(2, 2, 3));
    }

    #[test]
    fn training_is_deterministic_and_logs_each_epoch() {
        let (graph, pairs) = tiny_dataset(2);
        let (train_pairs, eval_pairs) = pairs.split_at(18);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 9,
            forward: ForwardConfig {
                dgib: DgibConfig {
                    k: 2,
                    ..DgibConfig::default()
                },
                ..ForwardConfig::default()
            },
            ..TrainConfig::default()
        };
        let (a, log) = train(&graph, train_pairs, eval_pairs, tiny_dims(), &cfg).unwrap();
        let (b, _) = train(&graph, train_pairs, eval_pairs, tiny_dims(), &cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let splits: Vec<(usize, &str)> = log.iter().map(|l| (l.epoch, l.split.as_str())).collect();
        assert_eq!(splits, vec![(1, "train"), (1, "test"), (2, "train"), (2, "test")]);
        let other = TrainConfig { seed: 10, ..cfg };
        let (c, _) = train(&graph, train_pairs, eval_pairs, tiny_dims(), &other).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn training_rejects_mismatched_k_and_empty_split() {
        let (graph, pairs) = tiny_dataset(3);
        let cfg = TrainConfig::default();
        assert!(train(&graph, &pairs, &[], tiny_dims(), &cfg).is_err());
        let cfg = TrainConfig {
            forward: ForwardConfig {
                dgib: DgibConfig {
                    k: 2,
                    ..DgibConfig::default()
                },
                ..ForwardConfig::default()
            },
            ..cfg
        };
        assert!(train(&graph, &[], &[], tiny_dims(), &cfg).is_err());
    }

    #[test]
    fn explanations_follow_the_threshold_rule() {
        let inst = gradient_instance(21, 3, 8).unwrap();
        let modes = [
            ThresholdMode::Median,
            ThresholdMode::Fixed(0.0),
            ThresholdMode::Fixed(1.1),
        ];
        let e = explain(&inst.pair, &inst.state, &inst.cfg, &modes).unwrap();
        let m = inst.pair.eg.num_edges();
        assert_eq!(e.explanations.len(), 3);
        assert!(e.explanations[0].edges.len() <= m / 2);
        assert_eq!(e.explanations[1].edges.len(), m);
        assert!(e.explanations[2].edges.is_empty());
        assert!(e.explanations.iter().enumerate().all(|(i, x)| x.k == i + 1));
        assert!(e.explanations.iter().all(|x| x.confidence == e.confidence));
        assert_eq!(e.zs.len(), 3);
    }
}
