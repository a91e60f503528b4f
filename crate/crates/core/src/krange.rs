//! PageRank-based estimate of how many disjoint mechanisms an enclosing
//! graph contains, used to pick a range for `K`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EnclosingGraph, EntityId};

pub const DAMPING: f64 = 0.85;
pub const TOLERANCE: f64 = 1e-8;
pub const MAX_ITER: usize = 200;
pub const PERCENTILE: f64 = 0.9;

/// Power-iteration PageRank over a directed graph with `n` nodes.
///
/// Parallel arcs are collapsed and self-loops ignored. Dangling mass is
/// spread uniformly. Stops when the L1 change drops below `tol`.
pub fn pagerank(
    n: usize,
    arcs: &[(usize, usize)],
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("PageRank needs at least one node".into()));
    }
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::Domain(format!("damping must be in [0, 1), got {damping}")));
    }
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in arcs {
        if a >= n || b >= n {
            return Err(Error::Shape(format!("arc ({a}, {b}) outside {n} nodes")));
        }
        if a != b {
            out[a].push(b);
        }
    }
    for o in &mut out {
        o.sort_unstable();
        o.dedup();
    }
    let nf = n as f64;
    let mut r = vec![1.0 / nf; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let dangling: f64 = (0..n).filter(|&i| out[i].is_empty()).map(|i| r[i]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        let mut next = vec![base; n];
        for (i, o) in out.iter().enumerate() {
            if !o.is_empty() {
                let share = damping * r[i] / o.len() as f64;
                for &j in o {
                    next[j] += share;
                }
            }
        }
        residual = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
        r = next;
        if residual < tol {
            return Ok(r);
        }
    }
    Err(Error::NoConvergence {
        iters: max_iter,
        residual,
    })
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(s[lo] + (pos - lo as f64) * (s[hi] - s[lo]))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Number of weakly connected components among `keep`ed nodes.
pub fn weak_components(n: usize, arcs: &[(usize, usize)], keep: &[bool]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in arcs {
        if keep[a] && keep[b] {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    (0..n).filter(|&i| keep[i] && find(&mut parent, i) == i).count()
}

/// Outcome of the core-count heuristic on one enclosing graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreCountEstimate {
    pub pair: (EntityId, EntityId),
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub retained: Vec<usize>,
    pub components: usize,
}

/// Ranks nodes by PageRank, keeps those at or above the 90th percentile
/// (ties kept) and counts weakly connected components of what remains.
///
/// Scores within a relative `1e-9` of the threshold count as ties so that
/// symmetric nodes are not split by power-iteration round-off.
pub fn estimate_core_count(eg: &EnclosingGraph) -> Result<CoreCountEstimate> {
    let n = eg.num_nodes();
    let arcs: Vec<(usize, usize)> = eg.edges.iter().map(|e| (e.head, e.tail)).collect();
    let scores = pagerank(n, &arcs, DAMPING, TOLERANCE, MAX_ITER)?;
    let threshold = percentile(&scores, PERCENTILE).unwrap_or(0.0);
    let slack = 1e-9 * threshold.abs();
    let keep: Vec<bool> = scores.iter().map(|&s| s >= threshold - slack).collect();
    let retained = (0..n).filter(|&i| keep[i]).collect();
    let components = weak_components(n, &arcs, &keep);
    Ok(CoreCountEstimate {
        pair: (eg.u, eg.v),
        scores,
        threshold,
        retained,
        components,
    })
}

/// Histogram of estimated core counts and the range it suggests for `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRange {
    pub histogram: BTreeMap<usize, usize>,
    pub min: usize,
    pub max: usize,
}

pub fn krange_histogram(counts: &[usize]) -> Option<KRange> {
    let mut histogram = BTreeMap::new();
    for &c in counts {
        *histogram.entry(c).or_insert(0) += 1;
    }
    Some(KRange {
        min: *histogram.keys().next()?,
        max: *histogram.keys().next_back()?,
        histogram,
    })
}
