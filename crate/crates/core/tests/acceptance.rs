use std::collections::HashSet;
use std::time::{Duration, Instant};

use dgib::cli::predictions_tsv;
use dgib::graph::{build_joint_graph, kfold_split, FoldSplit};
use dgib::krange::{estimate_core_count, pagerank};
use dgib::metrics::{
    average_precision_at, ndcg_at, ranking_report, roc_auc, sparseness, spearman, RankingTask,
};
use dgib::model::{ModelDims, ModelState};
use dgib::objective::gram_det;
use dgib::selfcheck::{gradient_check, identities, motif_oracle};
use dgib::synth::{generate, PlantSpec, SyntheticDataset};
use dgib::trainer::{self, PreparedPair, TrainConfig};
use dgib::Result;

const TRAINING_SEEDS: [u64; 3] = [0, 1, 2];
const DIVERSITY_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const LEARNABILITY_EPOCHS: usize = 50;
const DIVERSITY_EPOCHS: usize = 10;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { passed, detail })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn within_time(v: Verdict, elapsed: Duration, limit: Duration) -> Verdict {
    let ok = elapsed < limit;
    Verdict {
        passed: v.passed && ok,
        detail: format!(
            "{}; {:.1} s (limit {} s)",
            v.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        ),
    }
}

fn motif_equivalence() -> Result<Verdict> {
    let start = Instant::now();
    let o = motif_oracle(200, 2024)?;
    Ok(within_time(
        Verdict {
            passed: o.passed,
            detail: o.detail,
        },
        start.elapsed(),
        Duration::from_secs(60),
    ))
}

fn gradients() -> Result<Verdict> {
    let start = Instant::now();
    let o = gradient_check(20, 7, 1e-4)?;
    Ok(within_time(
        Verdict {
            passed: o.passed,
            detail: format!("20 instances, max relative error per class: {}", o.detail),
        },
        start.elapsed(),
        Duration::from_secs(120),
    ))
}

fn closed_forms() -> Result<Verdict> {
    let checks = identities()?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    verdict(
        failed.is_empty(),
        format!("{} identities, failing: {:?}", checks.len(), failed),
    )
}

/// One trained model on the learnability dataset.
struct Trained {
    state: ModelState,
    test: Vec<PreparedPair>,
    cfg: TrainConfig,
}

struct Learnability {
    data: SyntheticDataset,
    fold: FoldSplit,
    runs: Vec<Trained>,
    elapsed: Duration,
}

fn learnability_runs() -> Result<Learnability> {
    let start = Instant::now();
    let data = generate(&PlantSpec::default())?;
    let fold = kfold_split(&data.pairs, 5, 0)?.swap_remove(0);
    let graph = build_joint_graph(&data.kg, &fold.train, 16, 16, 0)?;
    let train = trainer::prepare_all(&graph, &fold.train, 2)?;
    let test = trainer::prepare_all(&graph, &fold.test, 2)?;
    let mut runs = Vec::new();
    for seed in TRAINING_SEEDS {
        let cfg = TrainConfig {
            epochs: LEARNABILITY_EPOCHS,
            seed,
            ..TrainConfig::default()
        };
        let state = ModelState::init(&graph, ModelDims::default(), seed)?;
        let (state, _) = trainer::train_prepared(state, &train, &[], &cfg)?;
        runs.push(Trained {
            state,
            test: test.clone(),
            cfg,
        });
    }
    Ok(Learnability {
        data,
        fold,
        runs,
        elapsed: start.elapsed(),
    })
}

fn planted_structure(l: &Learnability) -> Result<Verdict> {
    let mut accs = Vec::new();
    let mut ndcgs = Vec::new();
    for r in &l.runs {
        let scores = trainer::predict_all(&r.test, &r.state, &r.cfg.forward)?;
        let correct = r
            .test
            .iter()
            .zip(&scores)
            .filter(|(p, s)| (**s > 0.5) == p.pair.label)
            .count();
        accs.push(correct as f64 / r.test.len() as f64);
        ndcgs.push(ranking_report(&l.fold.test, &scores, 10)?.ndcg);
    }
    let (acc, ndcg) = (mean(&accs), mean(&ndcgs));
    Ok(within_time(
        Verdict {
            passed: acc >= 0.9 && ndcg >= 0.9,
            detail: format!(
                "400 pairs, {} epochs: accuracy {acc:.4} (>= 0.9) per seed {accs:.3?}, NDCG@10 {ndcg:.4} (>= 0.9)",
                LEARNABILITY_EPOCHS
            ),
        },
        l.elapsed,
        Duration::from_secs(300),
    ))
}

/// Per-edge `max_k B_k` of a pair's enclosing graph.
fn edge_importance(p: &PreparedPair, r: &Trained) -> Result<Vec<f64>> {
    let out = trainer::forward_with(p, &r.state, None, &r.cfg.forward)?;
    Ok((0..p.eg.num_edges())
        .map(|i| out.scores.iter().map(|s| s[i]).fold(f64::MIN, f64::max))
        .collect())
}

fn explanation_fidelity(l: &Learnability) -> Result<Verdict> {
    let mut per_seed = Vec::new();
    for r in &l.runs {
        let mut aucs = Vec::new();
        for p in r.test.iter().filter(|p| p.pair.label) {
            let Some(truth) = l.data.truth_of(&p.pair) else {
                continue;
            };
            let planted: HashSet<_> = truth.planted_edges.iter().copied().collect();
            let labels: Vec<bool> = (0..p.eg.num_edges())
                .map(|i| planted.contains(&p.eg.global_edge(i)))
                .collect();
            if let Some(a) = roc_auc(&edge_importance(p, r)?, &labels) {
                aucs.push(a);
            }
        }
        per_seed.push(mean(&aucs));
    }
    let auc = mean(&per_seed);
    verdict(
        auc >= 0.8,
        format!("planted-edge AUC {auc:.4} (>= 0.8) per seed {per_seed:.3?}"),
    )
}

fn mean_gram_det(test: &[PreparedPair], state: &ModelState, cfg: &TrainConfig) -> Result<f64> {
    let mut dets = Vec::new();
    for p in test {
        let out = trainer::forward_with(p, state, None, &cfg.forward)?;
        dets.push(gram_det(&out.zs)?);
    }
    Ok(mean(&dets))
}

fn diversity_ablation() -> Result<Verdict> {
    let mut with = Vec::new();
    let mut without = Vec::new();
    for seed in DIVERSITY_SEEDS {
        let data = generate(&PlantSpec::two_templates(seed))?;
        let fold = kfold_split(&data.pairs, 5, seed)?.swap_remove(0);
        let graph = build_joint_graph(&data.kg, &fold.train, 16, 16, seed)?;
        let train = trainer::prepare_all(&graph, &fold.train, 2)?;
        let test = trainer::prepare_all(&graph, &fold.test, 2)?;
        for (beta2, sink) in [(1e-4, &mut with), (0.0, &mut without)] {
            let mut cfg = TrainConfig {
                epochs: DIVERSITY_EPOCHS,
                seed,
                ..TrainConfig::default()
            };
            cfg.forward.dgib.beta2 = beta2;
            let state = ModelState::init(&graph, ModelDims::default(), seed)?;
            let (state, _) = trainer::train_prepared(state, &train, &[], &cfg)?;
            sink.push(mean_gram_det(&test, &state, &cfg)?);
        }
    }
    let diffs: Vec<String> = with
        .iter()
        .zip(&without)
        .map(|(a, b)| format!("{:.3e}", a - b))
        .collect();
    let (a, b) = (mean(&with), mean(&without));
    verdict(
        a > b,
        format!(
            "mean gram_det beta2=1e-4 {a:.6e} vs beta2=0 {b:.6e}; paired differences [{}]",
            diffs.join(", ")
        ),
    )
}

fn metric_units() -> Result<Verdict> {
    let task = |ranked: &[usize], relevant: &[usize], cutoff: usize| RankingTask {
        query: 0,
        ranked: ranked.to_vec(),
        relevant: relevant.iter().copied().collect(),
        cutoff,
    };
    let ndcg = ndcg_at(&task(&[5, 1, 6], &[1], 10));
    let map = average_precision_at(&task(&[1, 9, 2], &[1, 2], 3)).unwrap_or(f64::NAN);
    let one_hot = sparseness(&[0.0, 1.0, 0.0, 0.0])?;
    let uniform = sparseness(&[0.25; 4])?;
    verdict(
        (ndcg - 0.6309).abs() <= 1e-4 && (map - 0.8333).abs() <= 1e-4 && one_hot == 0.75 && uniform == 0.0,
        format!("NDCG@10 {ndcg:.6}, MAP@3 {map:.6}, sparseness one-hot {one_hot}, uniform {uniform}"),
    )
}

fn krange_sanity() -> Result<Verdict> {
    let data = generate(&PlantSpec::two_templates(0))?;
    let graph = build_joint_graph(&data.kg, &data.pairs, 16, 16, 0)?;
    let mut at_least_two = 0;
    let mut total = 0;
    let mut worst_mass: f64 = 0.0;
    for p in data.pairs.iter().filter(|p| p.label) {
        let est = estimate_core_count(&graph.extract_enclosing(p.u, p.v, 2)?)?;
        total += 1;
        if est.components >= 2 {
            at_least_two += 1;
        }
        worst_mass = worst_mass.max((est.scores.iter().sum::<f64>() - 1.0).abs());
    }
    let ring: Vec<(usize, usize)> = (0..50)
        .map(|i| (i, (i * 7 + 3) % 50))
        .chain([(4, 9), (9, 4)])
        .collect();
    let pr = pagerank(50, &ring, 0.85, 1e-12, 10_000)?;
    worst_mass = worst_mass.max((pr.iter().sum::<f64>() - 1.0).abs());
    let share = at_least_two as f64 / total as f64;
    verdict(
        share >= 0.8 && worst_mass <= 1e-9,
        format!("{at_least_two}/{total} pairs estimate >= 2 cores ({share:.3}, need >= 0.8); worst PageRank mass error {worst_mass:.2e}"),
    )
}

fn determinism() -> Result<Verdict> {
    let data = generate(&PlantSpec {
        entities: 600,
        genes: 50,
        positives: 20,
        negatives: 20,
        spoke_pool: 100,
        seed: 5,
        ..PlantSpec::default()
    })?;
    let fold = kfold_split(&data.pairs, 4, 5)?.swap_remove(0);
    let run = || -> Result<(Vec<u8>, String, String, ModelState, Vec<PreparedPair>, TrainConfig)> {
        let graph = build_joint_graph(&data.kg, &fold.train, 16, 16, 5)?;
        let cfg = TrainConfig {
            epochs: 3,
            seed: 11,
            ..TrainConfig::default()
        };
        let (state, _) = trainer::train(&graph, &fold.train, &[], ModelDims::default(), &cfg)?;
        let test = trainer::prepare_all(&graph, &fold.test, 2)?;
        let scores = trainer::predict_all(&test, &state, &cfg.forward)?;
        let mut explanations = Vec::new();
        for p in &test {
            explanations.extend(trainer::explain(p, &state, &cfg.forward, &[])?.explanations);
        }
        let json = serde_json::to_string_pretty(&explanations).expect("explanations serialize");
        Ok((state.to_bytes(), predictions_tsv(graph.entities(), &test, &scores), json, state, test, cfg))
    };
    let a = run()?;
    let b = run()?;
    let dir = tempfile::tempdir().map_err(|e| dgib::Error::io("tempdir", e))?;
    let path = dir.path().join("model.ckpt");
    a.3.save(&path)?;
    let reloaded = ModelState::load(&path)?;
    let before = trainer::predict_all(&a.4, &a.3, &a.5.forward)?;
    let after = trainer::predict_all(&a.4, &reloaded, &a.5.forward)?;
    let bit_exact = before.iter().zip(&after).all(|(x, y)| x.to_bits() == y.to_bits());
    let checks = [
        ("checkpoint", a.0 == b.0),
        ("predictions", a.1 == b.1),
        ("explanations", a.2 == b.2),
        ("round-trip", bit_exact && reloaded.to_bytes() == a.0),
    ];
    let failing: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    verdict(
        failing.is_empty(),
        format!("checkpoint, predictions, explanation JSON and reload compared; failing: {failing:?}"),
    )
}

fn seed_stability(l: &Learnability) -> Result<Verdict> {
    let idx = l.runs[0]
        .test
        .iter()
        .position(|p| p.pair.label && p.eg.num_edges() >= 10)
        .unwrap_or(0);
    let per_run: Vec<Vec<f64>> = l
        .runs
        .iter()
        .map(|r| {
            let p = &r.test[idx];
            let out = trainer::forward_with(p, &r.state, None, &r.cfg.forward)?;
            Ok((0..p.eg.num_edges())
                .map(|i| out.scores.iter().map(|s| s[i]).sum::<f64>() / out.scores.len() as f64)
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut rhos = Vec::new();
    for i in 0..per_run.len() {
        for j in i + 1..per_run.len() {
            rhos.push(spearman(&per_run[i], &per_run[j]).unwrap_or(f64::NAN));
        }
    }
    let rho = mean(&rhos);
    verdict(
        rho > 0.8,
        format!(
            "pair with {} edges: mean pairwise Spearman {rho:.4} (> 0.8), pairs {rhos:.3?}",
            per_run[0].len()
        ),
    )
}

fn report(id: usize, name: &str, outcome: Result<Verdict>) -> bool {
    let (passed, detail) = match outcome {
        Ok(v) => (v.passed, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "criterion {id:>2} {} {name}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    passed
}

fn on_runs(l: &Result<Learnability>, check: fn(&Learnability) -> Result<Verdict>) -> Result<Verdict> {
    match l {
        Ok(l) => check(l),
        Err(e) => Err(dgib::Error::Config(format!("training failed: {e}"))),
    }
}

fn main() {
    let mut all = true;
    all &= report(1, "motif oracle equivalence", motif_equivalence());
    all &= report(2, "full-chain gradient check", gradients());
    all &= report(3, "closed-form identities", closed_forms());
    let runs = learnability_runs();
    all &= report(
        4,
        "planted-structure learnability",
        on_runs(&runs, planted_structure),
    );
    all &= report(5, "explanation fidelity", on_runs(&runs, explanation_fidelity));
    all &= report(6, "diversity ablation", diversity_ablation());
    all &= report(7, "ranking-metric unit values", metric_units());
    all &= report(8, "k-range heuristic", krange_sanity());
    all &= report(9, "determinism and round-trip", determinism());
    all &= report(10, "seed stability", on_runs(&runs, seed_stability));
    if !all {
        std::process::exit(1);
    }
}
