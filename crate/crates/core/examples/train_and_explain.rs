//! Trains on a planted dataset, ranks held-out pairs, saves and reloads the
//! checkpoint, and prints the explanations of one positive pair.

use dgib::gate::ThresholdMode;
use dgib::graph::{build_joint_graph, kfold_split};
use dgib::metrics::ranking_report;
use dgib::model::{ModelDims, ModelState};
use dgib::synth::{generate, PlantSpec};
use dgib::trainer::{self, TrainConfig};

fn main() -> dgib::Result<()> {
    let data = generate(&PlantSpec {
        entities: 1000,
        genes: 80,
        positives: 40,
        negatives: 40,
        spoke_pool: 160,
        seed: 3,
        ..PlantSpec::default()
    })?;
    let fold = kfold_split(&data.pairs, 5, 3)?.swap_remove(0);
    let graph = build_joint_graph(&data.kg, &fold.train, 16, 16, 3)?;
    let cfg = TrainConfig {
        epochs: 10,
        seed: 3,
        ..TrainConfig::default()
    };
    let (state, log) = trainer::train(&graph, &fold.train, &fold.test, ModelDims::default(), &cfg)?;
    for l in log.iter().filter(|l| l.epoch % 5 == 0) {
        println!(
            "epoch {:>2} {:<5} ce {:.4} kl {:.3} dpp {:.2e}",
            l.epoch, l.split, l.loss.ce, l.loss.kl, l.loss.dpp
        );
    }
    let test = trainer::prepare_all(&graph, &fold.test, cfg.t_hops)?;
    let scores = trainer::predict_all(&test, &state, &cfg.forward)?;
    let report = ranking_report(&fold.test, &scores, 10)?;
    println!(
        "held-out NDCG@10 {:.3} recall@10 {:.3} MAP@10 {:.3} over {} queries",
        report.ndcg, report.recall, report.map, report.queries
    );
    let path = std::env::temp_dir().join("dgib-example.ckpt");
    state.save(&path)?;
    let reloaded = ModelState::load(&path)?;
    assert_eq!(trainer::predict_all(&test, &reloaded, &cfg.forward)?, scores);
    if let Some(p) = test.iter().find(|p| p.pair.label) {
        let e = trainer::explain(p, &reloaded, &cfg.forward, &[ThresholdMode::Median])?;
        println!("confidence {:.3}, diversity {:.3e}", e.confidence, e.dpp);
        let json = serde_json::to_string_pretty(&e.explanations[0]).expect("explanation serializes");
        println!("{}", json.lines().take(20).collect::<Vec<_>>().join("\n"));
    }
    Ok(())
}
