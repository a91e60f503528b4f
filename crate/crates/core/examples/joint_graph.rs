//! Loads a tiny knowledge graph from TSV text, adds SL edges and extracts
//! enclosing graphs at several hop counts.

use std::path::Path;

use dgib::graph::{build_joint_graph, parse_pairs, parse_triples};

const KG: &str = "\
BRCA1\tinteracts\tRAD51
PARP1\tinteracts\tRAD51
RAD51\tparticipates\tHR_repair
PARP1\tparticipates\tBER_repair
BRCA1\tparticipates\tHR_repair
XRCC1\tparticipates\tBER_repair
";

const PAIRS: &str = "\
BRCA1\tPARP1\t1
BRCA1\tXRCC1\t0
";

fn main() -> dgib::Result<()> {
    let mut kg = parse_triples(KG, Path::new("kg.tsv"))?;
    let pairs = parse_pairs(PAIRS, Path::new("pairs.tsv"), &mut kg.entities)?;
    let graph = build_joint_graph(&kg, &pairs, 8, 4, 0)?;
    println!(
        "joint graph: {} entities, {} relations (SL = {}), {} edges",
        graph.entities().len(),
        graph.relations().len(),
        graph.relations().name(graph.sl_relation()),
        graph.edges().len()
    );
    for p in &pairs {
        for t in 0..=2 {
            let eg = graph.extract_enclosing(p.u, p.v, t)?;
            let names: Vec<&str> = eg.nodes.iter().map(|&id| graph.entities().name(id)).collect();
            println!(
                "{}-{} t={t}: {} nodes {:?}, {} edges",
                graph.entities().name(p.u),
                graph.entities().name(p.v),
                eg.num_nodes(),
                names,
                eg.num_edges()
            );
        }
    }
    Ok(())
}
