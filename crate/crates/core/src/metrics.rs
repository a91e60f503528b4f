//! Top-C ranking metrics and explanation quality metrics.

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{EntityId, LabeledPair};
use crate::objective;

/// One query gene's ranked candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingTask {
    pub query: EntityId,
    /// Candidates by descending confidence, ties by ascending id.
    pub ranked: Vec<EntityId>,
    pub relevant: HashSet<EntityId>,
    pub cutoff: usize,
}

impl RankingTask {
    pub fn from_scores(
        query: EntityId,
        scored: &[(EntityId, f64)],
        relevant: HashSet<EntityId>,
        cutoff: usize,
    ) -> Self {
        let mut s: Vec<(EntityId, f64)> = scored.to_vec();
        s.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut seen = HashSet::new();
        let ranked = s
            .into_iter()
            .map(|(e, _)| e)
            .filter(|e| seen.insert(*e))
            .collect();
        RankingTask {
            query,
            ranked,
            relevant,
            cutoff,
        }
    }

    fn hits(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.ranked
            .iter()
            .take(self.cutoff)
            .enumerate()
            .map(|(i, e)| (i + 1, self.relevant.contains(e)))
    }
}

/// NDCG with binary gains; 0 when nothing is relevant.
pub fn ndcg_at(task: &RankingTask) -> f64 {
    if task.relevant.is_empty() || task.cutoff == 0 {
        return 0.0;
    }
    let dcg: f64 = task
        .hits()
        .filter(|(_, rel)| *rel)
        .map(|(r, _)| 1.0 / ((r + 1) as f64).log2())
        .sum();
    let ideal: f64 = (1..=task.cutoff.min(task.relevant.len()))
        .map(|r| 1.0 / ((r + 1) as f64).log2())
        .sum();
    dcg / ideal
}

/// `(hits / C, hits / |relevant|)`; `None` when nothing is relevant.
pub fn precision_recall_at(task: &RankingTask) -> Option<(f64, f64)> {
    if task.relevant.is_empty() || task.cutoff == 0 {
        return None;
    }
    let hits = task.hits().filter(|(_, rel)| *rel).count() as f64;
    Some((hits / task.cutoff as f64, hits / task.relevant.len() as f64))
}

/// Average precision truncated at C, normalized by `min(C, |relevant|)`.
pub fn average_precision_at(task: &RankingTask) -> Option<f64> {
    if task.relevant.is_empty() || task.cutoff == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, rel) in task.hits() {
        if rel {
            hits += 1;
            sum += hits as f64 / r as f64;
        }
    }
    Some(sum / task.cutoff.min(task.relevant.len()) as f64)
}

/// Mean AP over queries with at least one relevant item.
pub fn map_at(tasks: &[RankingTask]) -> Result<f64> {
    let aps: Vec<f64> = tasks.iter().filter_map(average_precision_at).collect();
    if aps.is_empty() {
        return Err(Error::Domain("no query has a relevant item".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Per-gene queries: each gene ranks every partner it is paired with in
/// `pairs`; queries without a positive partner are dropped.
pub fn ranking_tasks(pairs: &[LabeledPair], scores: &[f64], cutoff: usize) -> Vec<RankingTask> {
    let mut by_gene: BTreeMap<EntityId, (Vec<(EntityId, f64)>, HashSet<EntityId>)> = BTreeMap::new();
    for (p, &s) in pairs.iter().zip(scores) {
        for (q, c) in [(p.u, p.v), (p.v, p.u)] {
            let entry = by_gene.entry(q).or_default();
            entry.0.push((c, s));
            if p.label {
                entry.1.insert(c);
            }
        }
    }
    by_gene
        .into_iter()
        .filter(|(_, (_, rel))| !rel.is_empty())
        .map(|(q, (scored, rel))| RankingTask::from_scores(q, &scored, rel, cutoff))
        .collect()
}

/// Aggregated ranking metrics at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingReport {
    pub cutoff: usize,
    pub ndcg: f64,
    pub recall: f64,
    pub precision: f64,
    pub map: f64,
    pub queries: usize,
}

pub fn ranking_report(pairs: &[LabeledPair], scores: &[f64], cutoff: usize) -> Result<RankingReport> {
    let tasks = ranking_tasks(pairs, scores, cutoff);
    if tasks.is_empty() {
        return Err(Error::Domain("no query has a relevant item".into()));
    }
    let n = tasks.len() as f64;
    let mut report = RankingReport {
        cutoff,
        ndcg: 0.0,
        recall: 0.0,
        precision: 0.0,
        map: map_at(&tasks)?,
        queries: tasks.len(),
    };
    for t in &tasks {
        report.ndcg += ndcg_at(t) / n;
        let (p, r) = precision_recall_at(t).expect("tasks have relevant items");
        report.precision += p / n;
        report.recall += r / n;
    }
    Ok(report)
}

/// Gini index of `|w|`; 0 for uniform, `(n-1)/n` for one-hot.
pub fn sparseness(w: &[f64]) -> Result<f64> {
    let mut a: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    let total: f64 = a.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Domain("importance vector has no finite mass".into()));
    }
    a.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    let num: f64 = a
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i + 1) as f64 - n - 1.0) * x)
        .sum();
    Ok(num / (n * total))
}

/// Expected squared gap between the explanation's predicted effect `Iᵀw`
/// and the model's change `f(g) − f(clamp(g − I))` under `I ~ N(0, σ²)`.
pub fn infidelity(
    f: impl Fn(&[f64]) -> f64,
    baseline: &[f64],
    w: &[f64],
    sigma: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    if samples == 0 {
        return Err(Error::Domain("need at least one perturbation".into()));
    }
    if baseline.len() != w.len() {
        return Err(Error::Shape(format!(
            "baseline has {} entries, importance {}",
            baseline.len(),
            w.len()
        )));
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fx = f(baseline);
    let mut acc = 0.0;
    let mut perturbed = vec![0.0; baseline.len()];
    for _ in 0..samples {
        let mut dot = 0.0;
        for ((p, &g), &wi) in perturbed.iter_mut().zip(baseline).zip(w) {
            let i: f64 = normal.sample(&mut rng);
            dot += i * wi;
            *p = (g - i).clamp(0.0, 1.0);
        }
        let diff = dot - (fx - f(&perturbed));
        acc += diff * diff;
    }
    Ok(acc / samples as f64)
}

/// Gram-determinant diversity of explanation representations.
pub fn dpp_diversity(zs: &[Vec<f64>]) -> Result<f64> {
    objective::gram_det(zs)
}

/// Area under the ROC curve with tied scores counted as half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks over ties.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let p = pos as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}
