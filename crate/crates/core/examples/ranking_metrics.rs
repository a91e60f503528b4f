//! Ranking and explanation metrics on toy inputs.

use dgib::graph::LabeledPair;
use dgib::metrics::{infidelity, ranking_report, roc_auc, sparseness, spearman};

fn main() -> dgib::Result<()> {
    let pairs = vec![
        LabeledPair::new(0, 10, true),
        LabeledPair::new(0, 11, false),
        LabeledPair::new(0, 12, true),
        LabeledPair::new(1, 10, false),
        LabeledPair::new(1, 13, true),
    ];
    let scores = [0.9, 0.8, 0.3, 0.6, 0.4];
    for cutoff in [1, 3] {
        let r = ranking_report(&pairs, &scores, cutoff)?;
        println!(
            "@{cutoff}: NDCG {:.4} recall {:.4} precision {:.4} MAP {:.4} ({} queries)",
            r.ndcg, r.recall, r.precision, r.map, r.queries
        );
    }
    println!(
        "sparseness one-hot {}, uniform {}",
        sparseness(&[0.0, 1.0, 0.0, 0.0])?,
        sparseness(&[1.0; 4])?
    );
    let model = |g: &[f64]| 2.0 * g[0] - g[1] + 0.5 * g[2];
    let baseline = [0.8, 0.4, 0.6];
    let faithful = [2.0, -1.0, 0.5];
    let wrong = [0.0, 1.0, 0.0];
    for (name, w) in [("faithful", &faithful), ("wrong", &wrong)] {
        println!(
            "infidelity {name}: {:.5}",
            infidelity(model, &baseline, w, 0.1, 500, 0)?
        );
    }
    let labels = [true, false, true, false, false];
    println!("AUC {:?}", roc_auc(&[0.9, 0.2, 0.7, 0.4, 0.1], &labels));
    println!(
        "Spearman {:?}",
        spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 30.0, 20.0, 40.0])
    );
    Ok(())
}
