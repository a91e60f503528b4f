//! Scores the edges of an enclosing graph with a fresh model, samples relaxed
//! gates and hardens them with the median rule.

use dgib::gate::{hard_threshold, relax_sample, score_edges};
use dgib::graph::{build_joint_graph, LabeledPair, TripleSet};
use dgib::model::{ModelDims, ModelState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dgib::Result<()> {
    let mut kg = TripleSet::new();
    for (h, r, t) in [
        ("g1", "binds", "p1"),
        ("g2", "binds", "p1"),
        ("p1", "in", "pathway"),
        ("g1", "in", "pathway"),
        ("g2", "regulates", "p2"),
        ("p2", "binds", "g1"),
    ] {
        kg.push(h, r, t);
    }
    let pair = LabeledPair::new(
        kg.entities.get("g1").unwrap(),
        kg.entities.get("g2").unwrap(),
        true,
    );
    let graph = build_joint_graph(&kg, &[pair], 16, 16, 1)?;
    let state = ModelState::init(&graph, ModelDims::default(), 1)?;
    let eg = graph.extract_enclosing(pair.u, pair.v, 2)?;
    let scores = score_edges(
        &eg,
        &state.node_features,
        &state.params.relation_features,
        &state.params.gates[0],
    )?;
    let gates = relax_sample(&scores, 1.0, &mut ChaCha8Rng::seed_from_u64(3))?;
    for (i, (b, g)) in scores.iter().zip(&gates).enumerate() {
        let t = eg.global_edge(i);
        println!(
            "{:>8} -[{:^9}]-> {:<8} B = {b:.4}  relaxed = {g:.4}",
            graph.entities().name(t.head),
            graph.relations().name(t.relation),
            graph.entities().name(t.tail)
        );
    }
    let (threshold, kept) = hard_threshold(&scores);
    println!(
        "median threshold {threshold:.4} keeps edges {:?}",
        kept.iter().map(|e| e.0).collect::<Vec<_>>()
    );
    Ok(())
}
