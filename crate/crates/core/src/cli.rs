//! Command-line front end. Every command writes its outputs atomically and
//! reports failures as one JSON line on stderr with a distinct exit code.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{parse_cutoffs, RunConfig};
use crate::error::{Error, Result};
use crate::gate::ThresholdMode;
use crate::graph::{
    build_joint_graph, kfold_split, load_pairs, load_triples, parse_pairs, parse_triples, sample_negatives,
    EntityId, JointGraph, LabeledPair, TripleSet, Vocab,
};
use crate::io::write_atomic_str;
use crate::model::ModelState;
use crate::synth::{self, PlantSpec};
use crate::trainer::{self, EpochLog, PreparedPair};
use crate::{krange, metrics, motif, selfcheck};

pub const INFIDELITY_SIGMA: f64 = 0.1;
pub const INFIDELITY_SAMPLES: usize = 50;

#[derive(Debug, Parser)]
#[command(
    name = "dgib",
    version,
    about = "Explainable synthetic-lethality prediction on knowledge graphs"
)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-mechanism dataset.
    Synth(SynthArgs),
    /// Load a KG and pair list, report graph statistics and optionally a motif census.
    Ingest(IngestArgs),
    /// Write cross-validation folds, optionally adding sampled negatives.
    Split(SplitArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Score gene pairs with a trained model.
    Predict(PredictArgs),
    /// Emit hardened explanation subgraphs and explanation metrics.
    Explain(ExplainArgs),
    /// Ranking metrics of a prediction file against labels.
    Eval(EvalArgs),
    /// Core-count estimates and the suggested range for K.
    Krange(KrangeArgs),
    /// Run the built-in oracle suite.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for kg.tsv, pairs.tsv and ground_truth.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub positives: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub genes: Option<usize>,
    #[arg(long)]
    pub background_p: Option<f64>,
    /// Plant exactly two disjoint gadgets per positive pair.
    #[arg(long)]
    pub two_templates: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub kg: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    /// Summary JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-pair motif census CSV.
    #[arg(long)]
    pub census: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Output directory; fold `i` goes to `fold{i}/train.tsv` and `fold{i}/test.tsv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub seed: u64,
    /// Sample this many negatives per positive among the listed genes.
    #[arg(long)]
    pub negatives_per_positive: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub kg: PathBuf,
    /// Training pairs; label-1 pairs become SL edges.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Held-out pairs scored after every epoch.
    #[arg(long)]
    pub eval_pairs: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Convergence log CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Disable the motif channels (single gated adjacency).
    #[arg(long)]
    pub no_motifs: bool,
    /// Drop the diversity term.
    #[arg(long)]
    pub no_dpp: bool,
}

#[derive(Debug, Args)]
pub struct ModelInputs {
    #[arg(long)]
    pub kg: PathBuf,
    /// The pairs the model was trained on (they define the SL edges).
    #[arg(long)]
    pub train_pairs: PathBuf,
    /// Pairs to score; the label column is read but unused.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    /// Prediction TSV: gene_a, gene_b, confidence.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    /// Explanation JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Explanation-metrics CSV: pair, infidelity, sparseness, dpp.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// `median` or a fixed threshold in [0, 1].
    #[arg(long, default_value = "median")]
    pub threshold: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction TSV.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Labeled pairs.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value = "10,50")]
    pub cutoffs: String,
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    /// Metrics CSV: metric, cutoff, fold, value.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KrangeArgs {
    #[arg(long)]
    pub kg: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    /// Per-pair CSV: pair, component_count.
    #[arg(long)]
    pub out: PathBuf,
    /// Histogram CSV: count, frequency.
    #[arg(long)]
    pub histogram: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Exit code and short kind for every error variant.
pub fn classify(e: &Error) -> (i32, &'static str) {
    match e {
        Error::Io { .. } => (3, "io"),
        Error::Parse { .. } => (4, "parse"),
        Error::Config(_) => (5, "config"),
        Error::Shape(_) => (6, "dimension"),
        Error::Checkpoint(_) => (7, "checkpoint"),
        Error::UnknownEntity(_) | Error::InvalidPair(..) => (8, "entity"),
        Error::Exhausted { .. } => (9, "exhausted"),
        Error::Domain(_) | Error::MotifIndex(_) => (10, "domain"),
        Error::NoConvergence { .. } | Error::NonFinite(_) => (11, "numeric"),
    }
}

/// Exit code when `selftest` finds a failing check.
pub const SELFTEST_FAILED: i32 = 12;

/// One-line JSON error report.
pub fn error_line(e: &Error) -> String {
    let (code, kind) = classify(e);
    serde_json::json!({ "error": kind, "code": code, "message": e.to_string() }).to_string()
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn pairs_tsv(entities: &Vocab, pairs: &[LabeledPair]) -> String {
    let mut s = String::new();
    for p in pairs {
        let _ = writeln!(
            s,
            "{}\t{}\t{}",
            entities.name(p.u),
            entities.name(p.v),
            u8::from(p.label)
        );
    }
    s
}

/// KG triples and training pairs re-expressed in a checkpoint's vocabularies.
fn graph_for_model(kg_path: &Path, train_path: &Path, state: &ModelState) -> Result<(JointGraph, Vocab)> {
    let raw = parse_triples(&read(kg_path)?, kg_path)?;
    let mut kg = TripleSet {
        entities: state.entities.clone(),
        relations: state.relations.clone(),
        triples: Vec::with_capacity(raw.triples.len()),
    };
    let lookup = |v: &Vocab, name: &str| v.get(name).ok_or_else(|| Error::UnknownEntity(name.to_string()));
    for t in &raw.triples {
        kg.triples.push(crate::graph::Triple {
            head: lookup(&kg.entities, raw.entities.name(t.head))?,
            relation: lookup(&kg.relations, raw.relations.name(t.relation)).map_err(|_| {
                Error::Checkpoint(format!(
                    "relation `{}` unknown to the model",
                    raw.relations.name(t.relation)
                ))
            })?,
            tail: lookup(&kg.entities, raw.entities.name(t.tail))?,
        });
    }
    let mut entities = kg.entities.clone();
    let train = parse_pairs(&read(train_path)?, train_path, &mut entities)?;
    if entities.len() != kg.entities.len() {
        return Err(Error::UnknownEntity(entities.name(kg.entities.len()).to_string()));
    }
    let graph = build_joint_graph(&kg, &train, state.dims.d0, state.dims.d1, 0)?;
    Ok((graph, entities))
}

/// Pairs whose genes must already be known to `entities`.
fn known_pairs(path: &Path, entities: &Vocab) -> Result<Vec<LabeledPair>> {
    let mut scratch = entities.clone();
    let pairs = parse_pairs(&read(path)?, path, &mut scratch)?;
    if scratch.len() != entities.len() {
        return Err(Error::UnknownEntity(scratch.name(entities.len()).to_string()));
    }
    Ok(pairs)
}

struct LoadedModel {
    state: ModelState,
    graph: JointGraph,
    pairs: Vec<PreparedPair>,
    cfg: RunConfig,
}

fn load_model(inputs: &ModelInputs) -> Result<LoadedModel> {
    let cfg = load_config(inputs.config.as_deref())?;
    let state = ModelState::load(&inputs.model)?;
    if inputs.config.is_some() {
        cfg.check_dims(&state.dims)?;
    }
    let (graph, entities) = graph_for_model(&inputs.kg, &inputs.train_pairs, &state)?;
    let pairs = known_pairs(&inputs.pairs, &entities)?;
    let pairs = trainer::prepare_all(&graph, &pairs, cfg.t_hops)?;
    Ok(LoadedModel {
        state,
        graph,
        pairs,
        cfg,
    })
}

fn forward_for(cfg: &RunConfig, state: &ModelState) -> trainer::ForwardConfig {
    let mut f = cfg.forward();
    f.dgib.k = state.dims.k;
    f.ablation.motifs = state.dims.motifs_enabled;
    f
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let base = if a.two_templates {
        PlantSpec::two_templates(a.seed)
    } else {
        PlantSpec {
            seed: a.seed,
            ..PlantSpec::default()
        }
    };
    let spec = PlantSpec {
        positives: a.positives.unwrap_or(base.positives),
        negatives: a.negatives.unwrap_or(base.negatives),
        entities: a.entities.unwrap_or(base.entities),
        genes: a.genes.unwrap_or(base.genes),
        background_p: a.background_p.unwrap_or(base.background_p),
        ..base
    };
    let d = synth::generate(&spec)?;
    write_atomic_str(&a.out.join("kg.tsv"), &d.kg_tsv())?;
    write_atomic_str(&a.out.join("pairs.tsv"), &d.pairs_tsv())?;
    write_atomic_str(&a.out.join("ground_truth.json"), &d.ground_truth_json())?;
    log::info!("{} triples, {} pairs", d.kg.triples.len(), d.pairs.len());
    Ok(())
}

fn load_kg_and_pairs(kg: &Path, pairs: &Path) -> Result<(TripleSet, Vec<LabeledPair>)> {
    let mut set = load_triples(kg)?;
    let pairs = load_pairs(pairs, &mut set.entities)?;
    Ok((set, pairs))
}

pub fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let (kg, pairs) = load_kg_and_pairs(&a.kg, &a.pairs)?;
    let graph = build_joint_graph(&kg, &pairs, cfg.d0, cfg.d1, 0)?;
    let positives = pairs.iter().filter(|p| p.label).count();
    let summary = serde_json::json!({
        "entities": graph.entities().len(),
        "relations": graph.relations().len(),
        "kg_triples": kg.triples.len(),
        "sl_edges": positives,
        "edges": graph.edges().len(),
        "pairs": pairs.len(),
        "positives": positives,
        "negatives": pairs.len() - positives,
    });
    if let Some(path) = &a.census {
        let rows = pairs
            .par_iter()
            .map(|p| {
                let eg = graph.extract_enclosing(p.u, p.v, cfg.t_hops)?;
                let census = motif::census(&eg.binary_adjacency())?;
                let mut row = format!(
                    "{},{},{},{},{}",
                    graph.entities().name(p.u),
                    graph.entities().name(p.v),
                    u8::from(p.label),
                    eg.num_nodes(),
                    eg.num_edges()
                );
                for (instances, _) in census {
                    let _ = write!(row, ",{instances}");
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut text = String::from("gene_a,gene_b,label,nodes,edges");
        for k in 1..=motif::NUM_MOTIFS {
            let _ = write!(text, ",m{k}");
        }
        text.push('\n');
        for r in rows {
            text.push_str(&r);
            text.push('\n');
        }
        write_atomic_str(path, &text)?;
    }
    write_atomic_str(
        &a.out,
        &(serde_json::to_string_pretty(&summary).expect("json value") + "\n"),
    )
}

pub fn cmd_split(a: &SplitArgs) -> Result<()> {
    let mut entities = Vocab::new();
    let mut pairs = load_pairs(&a.pairs, &mut entities)?;
    if let Some(ratio) = a.negatives_per_positive {
        let positives: Vec<LabeledPair> = pairs.iter().copied().filter(|p| p.label).collect();
        let genes: Vec<EntityId> = (0..entities.len()).collect();
        let negatives = sample_negatives(&pairs, &genes, positives.len() * ratio, a.seed)?;
        pairs = positives;
        pairs.extend(negatives);
    }
    for f in kfold_split(&pairs, a.folds, a.seed)? {
        let dir = a.out.join(format!("fold{}", f.fold));
        write_atomic_str(&dir.join("train.tsv"), &pairs_tsv(&entities, &f.train))?;
        write_atomic_str(&dir.join("test.tsv"), &pairs_tsv(&entities, &f.test))?;
    }
    Ok(())
}

/// Convergence log as CSV: epoch, split, ce, kl, dpp, total.
pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,split,ce,kl,dpp,total\n");
    for l in log {
        let _ = writeln!(
            s,
            "{},{},{:.9e},{:.9e},{:.9e},{:.9e}",
            l.epoch, l.split, l.loss.ce, l.loss.kl, l.loss.dpp, l.loss.total
        );
    }
    s
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
        cfg.validate()?;
    }
    let mut kg = load_triples(&a.kg)?;
    let train = load_pairs(&a.pairs, &mut kg.entities)?;
    let eval = match &a.eval_pairs {
        Some(p) => load_pairs(p, &mut kg.entities)?,
        None => Vec::new(),
    };
    let graph = build_joint_graph(&kg, &train, cfg.d0, cfg.d1, a.seed)?;
    let mut dims = cfg.dims();
    dims.motifs_enabled = !a.no_motifs;
    let mut tc = cfg.train_config(a.seed);
    tc.forward.ablation.motifs = !a.no_motifs;
    tc.forward.ablation.dpp = !a.no_dpp;
    let (state, log) = trainer::train(&graph, &train, &eval, dims, &tc)?;
    crate::io::write_atomic(&a.out, &state.to_bytes())?;
    if let Some(path) = &a.log {
        write_atomic_str(path, &log_csv(&log))?;
    }
    Ok(())
}

/// Prediction TSV: gene_a, gene_b, confidence.
pub fn predictions_tsv(entities: &Vocab, pairs: &[PreparedPair], scores: &[f64]) -> String {
    let mut s = String::new();
    for (p, c) in pairs.iter().zip(scores) {
        let _ = writeln!(
            s,
            "{}\t{}\t{:.12}",
            entities.name(p.pair.u),
            entities.name(p.pair.v),
            c
        );
    }
    s
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let m = load_model(&a.inputs)?;
    let scores = trainer::predict_all(&m.pairs, &m.state, &forward_for(&m.cfg, &m.state))?;
    write_atomic_str(&a.out, &predictions_tsv(m.graph.entities(), &m.pairs, &scores))
}

fn parse_threshold(text: &str) -> Result<ThresholdMode> {
    if text == "median" {
        return Ok(ThresholdMode::Median);
    }
    match text.parse::<f64>() {
        Ok(t) if (0.0..=1.0).contains(&t) => Ok(ThresholdMode::Fixed(t)),
        _ => Err(Error::Config(format!(
            "threshold must be `median` or in [0, 1], got `{text}`"
        ))),
    }
}

/// Per-pair explanation quality: mean infidelity and sparseness over the K
/// hardened explanations, plus the Gram determinant of their representations.
pub fn explanation_metrics(
    p: &PreparedPair,
    state: &ModelState,
    fwd: &trainer::ForwardConfig,
    e: &trainer::PairExplanation,
    mode: ThresholdMode,
    seed: u64,
) -> Result<Option<(f64, f64, f64)>> {
    if p.eg.num_edges() == 0 {
        return Ok(None);
    }
    let mut inf = 0.0;
    let mut sparse = 0.0;
    for (k, scores) in e.scores.iter().enumerate() {
        let (_, kept) = mode.apply(scores);
        let mut w = vec![0.0; scores.len()];
        for (i, s) in kept {
            w[i] = s;
        }
        let f = |g: &[f64]| trainer::logit_with_gates(p, state, fwd, k, g).unwrap_or(f64::NAN);
        inf += metrics::infidelity(f, scores, &w, INFIDELITY_SIGMA, INFIDELITY_SAMPLES, seed)?;
        sparse += metrics::sparseness(&w).unwrap_or(0.0);
    }
    let k = e.scores.len() as f64;
    Ok(Some((inf / k, sparse / k, e.dpp)))
}

pub fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    let mode = parse_threshold(&a.threshold)?;
    let m = load_model(&a.inputs)?;
    let fwd = forward_for(&m.cfg, &m.state);
    let modes = vec![mode; m.state.dims.k];
    let results = m
        .pairs
        .par_iter()
        .map(|p| {
            let e = trainer::explain(p, &m.state, &fwd, &modes)?;
            let row = if a.metrics.is_some() {
                explanation_metrics(p, &m.state, &fwd, &e, mode, a.seed)?
            } else {
                None
            };
            Ok((e, row))
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<serde_json::Value> = results
        .iter()
        .map(|(e, _)| {
            serde_json::json!({
                "pair": e.explanations.first().map(|x| x.pair.clone()),
                "confidence": e.confidence,
                "dpp": e.dpp,
                "explanations": e.explanations,
            })
        })
        .collect();
    write_atomic_str(
        &a.out,
        &(serde_json::to_string_pretty(&records).expect("json value") + "\n"),
    )?;
    if let Some(path) = &a.metrics {
        let names = m.graph.entities();
        let mut s = String::from("pair,infidelity,sparseness,dpp\n");
        for (p, (_, row)) in m.pairs.iter().zip(&results) {
            match row {
                Some((inf, sp, dpp)) => {
                    let _ = writeln!(
                        s,
                        "{}|{},{inf:.9e},{sp:.9e},{dpp:.9e}",
                        names.name(p.pair.u),
                        names.name(p.pair.v)
                    );
                }
                None => log::warn!(
                    "pair {}|{} has an empty enclosing graph; no explanation metrics",
                    names.name(p.pair.u),
                    names.name(p.pair.v)
                ),
            }
        }
        write_atomic_str(path, &s)?;
    }
    Ok(())
}

/// Reads a prediction TSV into a map keyed by the unordered name pair.
pub fn parse_predictions(text: &str, origin: &Path) -> Result<HashMap<(String, String), f64>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg,
        };
        let f: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if f.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", f.len())));
        }
        let c: f64 = f[2].trim().parse().map_err(|e| err(format!("confidence: {e}")))?;
        let key = if f[0] <= f[1] {
            (f[0].to_string(), f[1].to_string())
        } else {
            (f[1].to_string(), f[0].to_string())
        };
        out.insert(key, c);
    }
    Ok(out)
}

/// Metrics CSV rows (metric, cutoff, fold, value) for every cutoff.
pub fn metrics_csv(pairs: &[LabeledPair], scores: &[f64], cutoffs: &[usize], fold: usize) -> Result<String> {
    let mut s = String::from("metric,cutoff,fold,value\n");
    for &c in cutoffs {
        let r = metrics::ranking_report(pairs, scores, c)?;
        for (name, v) in [
            ("ndcg", r.ndcg),
            ("recall", r.recall),
            ("precision", r.precision),
            ("map", r.map),
        ] {
            let _ = writeln!(s, "{name},{c},{fold},{v:.9}");
        }
    }
    Ok(s)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cutoffs = parse_cutoffs(&a.cutoffs)?;
    let predictions = parse_predictions(&read(&a.predictions)?, &a.predictions)?;
    let mut entities = Vocab::new();
    let pairs = load_pairs(&a.pairs, &mut entities)?;
    let scores = pairs
        .iter()
        .map(|p| {
            let (x, y) = (entities.name(p.u), entities.name(p.v));
            let key = if x <= y { (x, y) } else { (y, x) };
            predictions
                .get(&(key.0.to_string(), key.1.to_string()))
                .copied()
                .ok_or_else(|| Error::UnknownEntity(format!("no prediction for {x}|{y}")))
        })
        .collect::<Result<Vec<_>>>()?;
    write_atomic_str(&a.out, &metrics_csv(&pairs, &scores, &cutoffs, a.fold)?)
}

pub fn cmd_krange(a: &KrangeArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let (kg, pairs) = load_kg_and_pairs(&a.kg, &a.pairs)?;
    let graph = build_joint_graph(&kg, &pairs, cfg.d0, cfg.d1, 0)?;
    let positives: Vec<LabeledPair> = pairs.into_iter().filter(|p| p.label).collect();
    let estimates = positives
        .par_iter()
        .map(|p| krange::estimate_core_count(&graph.extract_enclosing(p.u, p.v, cfg.t_hops)?))
        .collect::<Result<Vec<_>>>()?;
    let names = graph.entities();
    let mut per_pair = String::from("pair,component_count\n");
    for e in &estimates {
        let _ = writeln!(
            per_pair,
            "{}|{},{}",
            names.name(e.pair.0),
            names.name(e.pair.1),
            e.components
        );
    }
    let counts: Vec<usize> = estimates.iter().map(|e| e.components).collect();
    let range = krange::krange_histogram(&counts)
        .ok_or_else(|| Error::Domain("no positive pairs to estimate".into()))?;
    let mut hist = String::from("count,frequency\n");
    for (c, f) in &range.histogram {
        let _ = writeln!(hist, "{c},{f}");
    }
    write_atomic_str(&a.out, &per_pair)?;
    write_atomic_str(&a.histogram, &hist)?;
    log::info!("suggested K range [{}, {}]", range.min, range.max);
    Ok(())
}

/// Runs the oracle suite, printing one line per check; returns whether all passed.
pub fn cmd_selftest(a: &SelftestArgs) -> Result<bool> {
    let outcomes = selfcheck::run_all(a.seed)?;
    for o in &outcomes {
        println!(
            "{}\t{}\t{}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
    }
    Ok(outcomes.iter().all(|o| o.passed))
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Krange(a) => cmd_krange(a),
        Command::Selftest(a) => match cmd_selftest(a) {
            Ok(true) => Ok(()),
            Ok(false) => return SELFTEST_FAILED,
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            classify(&e).0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_kind() {
        let errors = [
            Error::io("x", std::io::Error::other("missing")),
            Error::Parse {
                path: "x".into(),
                line: 1,
                msg: "bad".into(),
            },
            Error::Config("k".into()),
            Error::Shape("d".into()),
            Error::Checkpoint("c".into()),
            Error::UnknownEntity("e".into()),
            Error::Exhausted {
                requested: 2,
                available: 1,
            },
            Error::Domain("d".into()),
            Error::NonFinite("g".into()),
        ];
        let mut codes: Vec<i32> = errors.iter().map(|e| classify(e).0).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), errors.len());
        assert!(codes.iter().all(|&c| c > 2 && c != SELFTEST_FAILED));
    }

    #[test]
    fn error_line_is_single_line_json() {
        let line = error_line(&Error::Config("unknown key `x`\nsecond".into()));
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["code"], 5);
        assert_eq!(v["error"], "config");
    }

    #[test]
    fn prediction_parsing_is_order_free() {
        let m = parse_predictions("B\tA\t0.25\n", Path::new("p")).unwrap();
        assert_eq!(m[&("A".to_string(), "B".to_string())], 0.25);
        assert!(parse_predictions("A\tB\n", Path::new("p")).is_err());
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!(parse_threshold("median").unwrap(), ThresholdMode::Median);
        assert_eq!(parse_threshold("0.4").unwrap(), ThresholdMode::Fixed(0.4));
        assert!(parse_threshold("2").is_err());
    }
}
