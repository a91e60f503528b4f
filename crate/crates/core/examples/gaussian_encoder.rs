//! Encodes an enclosing graph into a Gaussian through the motif channels,
//! once with every edge open and once with half the edges closed.

use dgib::encoder::{encode, reparameterize};
use dgib::graph::{build_joint_graph, LabeledPair, TripleSet};
use dgib::model::{ModelDims, ModelState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dgib::Result<()> {
    let mut kg = TripleSet::new();
    for i in 0..6 {
        kg.push(&format!("n{i}"), "links", &format!("n{}", (i + 1) % 6));
        kg.push(&format!("n{i}"), "shares", &format!("n{}", (i + 2) % 6));
    }
    let pair = LabeledPair::new(0, 3, false);
    let graph = build_joint_graph(&kg, &[pair], 16, 16, 2)?;
    let state = ModelState::init(&graph, ModelDims::default(), 2)?;
    let eg = graph.extract_enclosing(pair.u, pair.v, 2)?;
    let open = vec![1.0; eg.num_edges()];
    let half: Vec<f64> = (0..eg.num_edges())
        .map(|i| if i % 2 == 0 { 1.0 } else { 0.0 })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (label, gates) in [("all edges", &open), ("every other edge", &half)] {
        let g = encode(
            &eg,
            gates,
            &state.node_features,
            &state.params.gin,
            &state.params.readout,
            true,
        )?;
        println!("{label}: mean {:.4?}", g.mean);
        println!("{:>width$}  var  {:.4?}", "", g.var, width = label.len());
        println!(
            "{:>width$}  z    {:.4?}",
            "",
            reparameterize(&g, &mut rng)?,
            width = label.len()
        );
    }
    Ok(())
}
