//! Generates a planted-mechanism dataset and inspects one positive pair.

use dgib::synth::{generate, PlantSpec};

fn main() -> dgib::Result<()> {
    let spec = PlantSpec {
        entities: 800,
        genes: 60,
        positives: 20,
        negatives: 20,
        spoke_pool: 120,
        seed: 7,
        ..PlantSpec::default()
    };
    let data = generate(&spec)?;
    println!(
        "{} entities, {} relations, {} triples, {} pairs",
        data.kg.entities.len(),
        data.kg.relations.len(),
        data.kg.triples.len(),
        data.pairs.len()
    );
    let truth = &data.truth[0];
    let name = |id| data.kg.entities.name(id);
    println!(
        "pair {} / {}: {} gadgets, {} planted edges",
        name(truth.pair.u),
        name(truth.pair.v),
        truth.templates.len(),
        truth.planted_edges.len()
    );
    for t in &truth.templates[0] {
        println!(
            "  {} -[{}]-> {}",
            name(t.head),
            data.kg.relations.name(t.relation),
            name(t.tail)
        );
    }
    let kg_tsv = data.kg_tsv();
    println!(
        "kg.tsv starts with:\n{}",
        kg_tsv.lines().take(3).collect::<Vec<_>>().join("\n")
    );
    Ok(())
}
