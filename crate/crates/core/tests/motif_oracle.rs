use dgib::motif::{motif_adjacency, weighted_motif_adjacency, NUM_MOTIFS};
use dgib::selfcheck::{brute_force_motif_adjacency, motif_oracle};
use ndarray::Array2;
use proptest::prelude::*;

fn digraph() -> impl Strategy<Value = Array2<u8>> {
    (3usize..=12).prop_flat_map(|n| {
        proptest::collection::vec(any::<bool>(), n * n)
            .prop_map(move |bits| Array2::from_shape_fn((n, n), |(i, j)| u8::from(i != j && bits[i * n + j])))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fast_adjacency_matches_enumeration(adj in digraph()) {
        for k in 1..=NUM_MOTIFS {
            prop_assert_eq!(motif_adjacency(&adj, k).unwrap(), brute_force_motif_adjacency(&adj, k).unwrap());
        }
    }

    #[test]
    fn unit_gates_reduce_to_the_binary_adjacency(adj in digraph()) {
        let ones = adj.mapv(f64::from);
        for k in 1..=NUM_MOTIFS {
            let w = weighted_motif_adjacency(&adj, &ones, k).unwrap();
            let b = motif_adjacency(&adj, k).unwrap();
            prop_assert!(w.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn motif_adjacencies_are_symmetric_with_zero_diagonal(adj in digraph()) {
        for k in 1..=NUM_MOTIFS {
            let m = motif_adjacency(&adj, k).unwrap();
            prop_assert_eq!(&m, &m.t().to_owned());
            prop_assert!(m.diag().iter().all(|&x| x == 0.0));
        }
    }
}

#[test]
fn two_hundred_graphs_across_three_densities() {
    for seed in 0..3 {
        let outcome = motif_oracle(200, seed).unwrap();
        assert!(outcome.passed, "{}", outcome.detail);
    }
}

#[test]
fn motif_index_outside_catalog_is_rejected() {
    let adj = Array2::<u8>::zeros((3, 3));
    assert!(motif_adjacency(&adj, 0).is_err());
    assert!(motif_adjacency(&adj, NUM_MOTIFS + 1).is_err());
}
