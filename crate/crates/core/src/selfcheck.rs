//! Built-in oracle suite: motif adjacency against exhaustive enumeration,
//! analytic gradients against central differences, and closed-form loss
//! identities.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gate;
use crate::graph::{build_joint_graph, LabeledPair, TripleSet};
use crate::model::{param_class, ModelDims, ModelState};
use crate::motif::{self, MotifCatalog, NUM_MOTIFS};
use crate::objective::{self, DgibConfig};
use crate::trainer::{self, ForwardConfig, Noise, PreparedPair};

/// Result of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Random simple digraph without self-loops.
pub fn random_digraph(n: usize, density: f64, rng: &mut impl Rng) -> Array2<u8> {
    Array2::from_shape_fn((n, n), |(i, j)| u8::from(i != j && rng.random::<f64>() < density))
}

/// Motif adjacency by enumerating every ordered triple of distinct nodes.
pub fn brute_force_motif_adjacency(adj: &Array2<u8>, motif_index: usize) -> Result<Array2<f64>> {
    let target = MotifCatalog::global().get(motif_index)?.matrix;
    let n = adj.nrows();
    let mut m = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if a == b || b == c || a == c {
                    continue;
                }
                if motif::induced(adj, [a, b, c]) == target {
                    for (x, y) in [(a, b), (a, c), (b, c)] {
                        m[[x, y]] += 1.0;
                        m[[y, x]] += 1.0;
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Compares the fast motif adjacency with the brute-force one on `graphs`
/// random digraphs (up to 12 nodes, cycling through three densities).
pub fn motif_oracle(graphs: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let densities = [0.15, 0.35, 0.6];
    let mut mismatches = 0;
    for g in 0..graphs {
        let n = rng.random_range(3..=12);
        let adj = random_digraph(n, densities[g % densities.len()], &mut rng);
        for k in 1..=NUM_MOTIFS {
            if motif::motif_adjacency(&adj, k)? != brute_force_motif_adjacency(&adj, k)? {
                mismatches += 1;
            }
        }
    }
    Ok(CheckOutcome::new(
        "motif-oracle",
        mismatches == 0,
        format!("{graphs} graphs x {NUM_MOTIFS} motifs, {mismatches} mismatches"),
    ))
}

/// A small random pair, model and training noise for gradient checking.
pub struct GradientInstance {
    pub pair: PreparedPair,
    pub state: ModelState,
    pub noise: Noise,
    pub cfg: ForwardConfig,
}

/// Builds an instance with at most `max_nodes` entities (the pair included),
/// `k` explanations and `d3 = 6`. Loss coefficients are large enough that
/// every term shapes the gradient.
pub fn gradient_instance(seed: u64, k: usize, max_nodes: usize) -> Result<GradientInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(3..=max_nodes.max(3));
        let mut kg = TripleSet::new();
        for i in 0..n {
            kg.entities.intern(&format!("n{i}"));
        }
        for h in 0..n {
            for t in 0..n {
                if h != t && rng.random::<f64>() < 0.4 {
                    let r = rng.random_range(0..3);
                    kg.push(&format!("n{h}"), &format!("r{r}"), &format!("n{t}"));
                }
            }
        }
        let pair = LabeledPair::new(0, 1, rng.random());
        let dims = ModelDims {
            d0: 4,
            d1: 4,
            d2: 3,
            d3: 6,
            d4: 3,
            gin_hidden: 4,
            cls_hidden: 4,
            k,
            motifs_enabled: true,
        };
        let graph = build_joint_graph(&kg, &[pair], dims.d0, dims.d1, rng.random())?;
        let prepared = trainer::prepare(&graph, pair, 2)?;
        if prepared.eg.num_edges() < 2 {
            continue;
        }
        let mut state = ModelState::init(&graph, dims, rng.random())?;
        for t in state.params.tensors_mut() {
            t.mapv_inplace(|x| x + rng.random_range(-0.2..0.2));
        }
        let noise = Noise::draw(prepared.eg.num_edges(), k, dims.d3, &mut rng);
        let cfg = ForwardConfig {
            dgib: DgibConfig {
                beta1: rng.random_range(0.1..1.0),
                beta2: rng.random_range(0.1..1.0),
                k,
            },
            ..ForwardConfig::default()
        };
        return Ok(GradientInstance {
            pair: prepared,
            state,
            noise,
            cfg,
        });
    }
}

fn loss_at(inst: &GradientInstance, state: &ModelState) -> Result<f64> {
    trainer::loss_value(&inst.pair, state, Some(&inst.noise), &inst.cfg)
}

/// Relative error `|a - n| / max(|a|, |n|)` per parameter class, with
/// vectors compared as wholes. Classes whose gradients both vanish report 0.
pub fn gradient_errors(inst: &GradientInstance, step: f64) -> Result<BTreeMap<String, f64>> {
    let (_, grads) = trainer::loss_and_gradients(&inst.pair, &inst.state, Some(&inst.noise), &inst.cfg)?;
    let mut analytic: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut numeric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut probe = inst.state.clone();
    for &id in &inst.pair.eg.nodes {
        let row = grads.node_rows.get(&id);
        for c in 0..probe.node_features.ncols() {
            let orig = probe.node_features[[id, c]];
            probe.node_features[[id, c]] = orig + step;
            let up = loss_at(inst, &probe)?;
            probe.node_features[[id, c]] = orig - step;
            let down = loss_at(inst, &probe)?;
            probe.node_features[[id, c]] = orig;
            numeric
                .entry("node_features".into())
                .or_default()
                .push((up - down) / (2.0 * step));
            analytic
                .entry("node_features".into())
                .or_default()
                .push(row.map_or(0.0, |r| r[c]));
        }
    }
    let names: Vec<String> = inst.state.params.named().into_iter().map(|(n, _)| n).collect();
    let grad_tensors: Vec<Array2<f64>> = grads.params.named().into_iter().map(|(_, t)| t.clone()).collect();
    for (t, (name, g)) in names.iter().zip(&grad_tensors).enumerate() {
        let class = param_class(name).to_string();
        for idx in 0..g.len() {
            let (r, c) = (idx / g.ncols(), idx % g.ncols());
            let orig = probe.params.tensors_mut()[t][[r, c]];
            probe.params.tensors_mut()[t][[r, c]] = orig + step;
            let up = loss_at(inst, &probe)?;
            probe.params.tensors_mut()[t][[r, c]] = orig - step;
            let down = loss_at(inst, &probe)?;
            probe.params.tensors_mut()[t][[r, c]] = orig;
            numeric
                .entry(class.clone())
                .or_default()
                .push((up - down) / (2.0 * step));
            analytic.entry(class.clone()).or_default().push(g[[r, c]]);
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(analytic
        .into_iter()
        .map(|(class, a)| {
            let n = &numeric[&class];
            let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
            let scale = norm(&a).max(norm(n));
            let err = if scale < 1e-12 { 0.0 } else { norm(&diff) / scale };
            (class, err)
        })
        .collect())
}

/// Worst per-class relative error over `instances` random instances, K
/// cycling through 1, 2, 3.
pub fn gradient_check(instances: usize, seed: u64, tolerance: f64) -> Result<CheckOutcome> {
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for i in 0..instances {
        let inst = gradient_instance(seed.wrapping_add(i as u64), 1 + i % 3, 8)?;
        for (class, err) in gradient_errors(&inst, 1e-5)? {
            let slot = worst.entry(class).or_insert(0.0);
            *slot = slot.max(err);
        }
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    let detail = worst
        .iter()
        .map(|(c, e)| format!("{c}={e:.2e}"))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(CheckOutcome::new("gradient-check", max < tolerance, detail))
}

/// Closed-form values of the KL, Gram determinant and relaxation.
pub fn identities() -> Result<Vec<CheckOutcome>> {
    let within = |name: &str, got: f64, want: f64, tol: f64| {
        CheckOutcome::new(
            name,
            (got - want).abs() <= tol,
            format!("got {got:e}, want {want} +- {tol:e}"),
        )
    };
    Ok(vec![
        within(
            "kl-standard",
            objective::gaussian_kl(&[0.0, 0.0], &[1.0, 1.0])?,
            0.0,
            1e-12,
        ),
        within(
            "kl-shifted-mean",
            objective::gaussian_kl(&[1.0, 0.0], &[1.0, 1.0])?,
            0.5,
            1e-12,
        ),
        within(
            "gram-duplicate-rows",
            objective::gram_det(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]])?,
            0.0,
            1e-10,
        ),
        within(
            "gram-orthonormal-rows",
            objective::gram_det(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]])?,
            1.0,
            1e-10,
        ),
        within("relax-identity", gate::relax(0.3, 1.0, 0.5), 0.3, 1e-12),
    ])
}

/// The complete suite at the sizes used by the `selftest` command.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = vec![motif_oracle(200, seed)?, gradient_check(20, seed, 1e-4)?];
    out.extend(identities()?);
    Ok(out)
}
