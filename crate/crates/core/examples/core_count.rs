//! Estimates how many separate cores each positive pair's enclosing graph
//! holds and turns the counts into a suggested range for K.

use dgib::graph::build_joint_graph;
use dgib::krange::{estimate_core_count, krange_histogram};
use dgib::synth::{generate, PlantSpec};

fn main() -> dgib::Result<()> {
    let data = generate(&PlantSpec {
        positives: 30,
        negatives: 30,
        ..PlantSpec::two_templates(11)
    })?;
    let graph = build_joint_graph(&data.kg, &data.pairs, 16, 16, 11)?;
    let mut counts = Vec::new();
    for p in data.pairs.iter().filter(|p| p.label) {
        let eg = graph.extract_enclosing(p.u, p.v, 2)?;
        let est = estimate_core_count(&eg)?;
        if counts.len() < 5 {
            println!(
                "{}-{}: {} nodes, PageRank cut {:.4}, {} retained, {} components",
                graph.entities().name(p.u),
                graph.entities().name(p.v),
                eg.num_nodes(),
                est.threshold,
                est.retained.len(),
                est.components
            );
        }
        counts.push(est.components);
    }
    if let Some(range) = krange_histogram(&counts) {
        println!("histogram {:?}", range.histogram);
        println!("suggested K in [{}, {}]", range.min, range.max);
    }
    Ok(())
}
