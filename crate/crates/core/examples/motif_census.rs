//! Counts the thirteen three-node motifs of a small digraph and prints the
//! motif-based adjacency of the feed-forward loop.

use dgib::motif::{census, induced, motif_adjacency, MotifCatalog};
use ndarray::Array2;

fn main() -> dgib::Result<()> {
    let arcs = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 0), (3, 4), (4, 3)];
    let mut adj = Array2::<u8>::zeros((5, 5));
    for (a, b) in arcs {
        adj[[a, b]] = 1;
    }
    for (index, (instances, ordered)) in (1..).zip(census(&adj)?) {
        let m = MotifCatalog::global().get(index)?;
        println!(
            "M{index:<2} arcs {:?}: {instances} instances, {ordered} ordered tuples",
            m.edges()
        );
    }
    let feed_forward = MotifCatalog::global()
        .classify(&induced(&adj, [0, 1, 2]))
        .expect("nodes 0, 1, 2 are connected");
    println!(
        "motif adjacency of M{feed_forward}:\n{}",
        motif_adjacency(&adj, feed_forward)?
    );
    Ok(())
}
