//! Planted-mechanism datasets.
//!
//! Every positive pair gets one or more small gadgets wired between its two
//! genes; every negative pair is chosen so its enclosing graph holds
//! background edges only. The generator records which edges it planted so
//! learned explanations can be scored against them.

use std::collections::{HashSet, VecDeque};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, LabeledPair, Triple, TripleSet};

/// Generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    /// Total entity budget, genes included.
    pub entities: usize,
    pub genes: usize,
    /// Relation types used by background edges.
    pub relations: usize,
    /// Relation types reserved for planted gadgets.
    pub mechanism_relations: usize,
    /// Probability of each ordered entity pair carrying a background edge.
    pub background_p: f64,
    /// Mean number of decoy gadgets per pair, positive or negative. Decoys
    /// share the gadget shape and hub pool but use background relations.
    pub decoys: f64,
    pub positives: usize,
    pub negatives: usize,
    /// Gadgets per positive pair, inclusive range within `1..=3`.
    pub templates: (usize, usize),
    /// Intermediate nodes per gadget, inclusive range within `2..=6`.
    pub template_nodes: (usize, usize),
    /// Size of the recurring entity pool gadget hubs are drawn from; zero
    /// gives every hub a fresh entity.
    pub hub_pool: usize,
    /// Size of the recurring entity pool gadget spokes are drawn from; zero
    /// gives every spoke a fresh entity.
    pub spoke_pool: usize,
    pub seed: u64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            entities: 3000,
            genes: 300,
            relations: 2,
            mechanism_relations: 1,
            background_p: 2e-4,
            decoys: 1.0,
            positives: 200,
            negatives: 200,
            templates: (1, 3),
            template_nodes: (2, 6),
            hub_pool: 10,
            spoke_pool: 400,
            seed: 0,
        }
    }
}

impl PlantSpec {
    /// Positive pairs carry exactly two equal-sized gadgets.
    pub fn two_templates(seed: u64) -> Self {
        PlantSpec {
            templates: (2, 2),
            template_nodes: (5, 5),
            background_p: 1e-4,
            seed,
            ..PlantSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.background_p) {
            return Err(Error::Config(format!(
                "background probability {} outside [0, 1]",
                self.background_p
            )));
        }
        let (tmin, tmax) = self.templates;
        if tmin == 0 || tmin > tmax || tmax > 3 {
            return Err(Error::Config(format!(
                "template count range {tmin}..={tmax} outside 1..=3"
            )));
        }
        let (nmin, nmax) = self.template_nodes;
        if nmin < 2 || nmin > nmax || nmax > 6 {
            return Err(Error::Config(format!(
                "template size range {nmin}..={nmax} outside 2..=6"
            )));
        }
        if self.genes < 2 {
            return Err(Error::Config("need at least two genes".into()));
        }
        if self.mechanism_relations == 0 || self.relations == 0 {
            return Err(Error::Config("need at least one relation of each kind".into()));
        }
        if !(self.decoys >= 0.0 && self.decoys.is_finite()) {
            return Err(Error::Config(format!(
                "decoy rate {} must be finite and >= 0",
                self.decoys
            )));
        }
        if self.hub_pool > 0 && self.hub_pool < tmax {
            return Err(Error::Config(format!(
                "hub pool of {} cannot give {tmax} gadgets distinct hubs",
                self.hub_pool
            )));
        }
        if self.spoke_pool > 0 && self.spoke_pool < tmax * (nmax - 1) {
            return Err(Error::Config(format!(
                "spoke pool of {} cannot give {tmax} gadgets distinct spokes",
                self.spoke_pool
            )));
        }
        let fresh_spokes = if self.spoke_pool > 0 {
            self.spoke_pool
        } else {
            self.positives * tmax * (nmax - 1)
        };
        let worst = self.genes + self.hub_pool + fresh_spokes;
        if worst > self.entities {
            return Err(Error::Config(format!(
                "templates need up to {worst} entities but the budget is {}",
                self.entities
            )));
        }
        let max_pairs = self.genes * (self.genes - 1) / 2;
        if self.positives + self.negatives > max_pairs {
            return Err(Error::Exhausted {
                requested: self.positives + self.negatives,
                available: max_pairs,
            });
        }
        Ok(())
    }
}

/// What the generator planted for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTruth {
    pub pair: LabeledPair,
    pub planted_edges: Vec<Triple>,
    /// Edges of each gadget separately.
    pub templates: Vec<Vec<Triple>>,
    pub core_count: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub kg: TripleSet,
    pub genes: Vec<EntityId>,
    pub pairs: Vec<LabeledPair>,
    pub truth: Vec<PairTruth>,
}

#[derive(Serialize)]
struct TruthRecord<'a> {
    pair: [&'a str; 2],
    planted_edges: Vec<[&'a str; 3]>,
    core_count: usize,
}

impl SyntheticDataset {
    pub fn kg_tsv(&self) -> String {
        let mut s = String::new();
        for t in &self.kg.triples {
            s.push_str(&format!(
                "{}\t{}\t{}\n",
                self.kg.entities.name(t.head),
                self.kg.relations.name(t.relation),
                self.kg.entities.name(t.tail)
            ));
        }
        s
    }

    pub fn pairs_tsv(&self) -> String {
        let mut s = String::new();
        for p in &self.pairs {
            s.push_str(&format!(
                "{}\t{}\t{}\n",
                self.kg.entities.name(p.u),
                self.kg.entities.name(p.v),
                u8::from(p.label)
            ));
        }
        s
    }

    pub fn ground_truth_json(&self) -> String {
        let e = &self.kg.entities;
        let r = &self.kg.relations;
        let records: Vec<TruthRecord<'_>> = self
            .truth
            .iter()
            .map(|t| TruthRecord {
                pair: [e.name(t.pair.u), e.name(t.pair.v)],
                planted_edges: t
                    .planted_edges
                    .iter()
                    .map(|x| [e.name(x.head), r.name(x.relation), e.name(x.tail)])
                    .collect(),
                core_count: t.core_count,
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("plain records serialize")
    }

    /// Ground truth of a pair, in either orientation.
    pub fn truth_of(&self, pair: &LabeledPair) -> Option<&PairTruth> {
        self.truth.iter().find(|t| t.pair.key() == pair.key())
    }
}

fn gadget(u: EntityId, v: EntityId, nodes: &[EntityId], mech: &[usize], rng: &mut ChaCha8Rng) -> Vec<Triple> {
    let hub = nodes[0];
    let spokes = &nodes[1..];
    let mut rel = || mech[rng.random_range(0..mech.len())];
    let mut out = Vec::new();
    for &b in spokes {
        out.push(Triple {
            head: b,
            relation: rel(),
            tail: u,
        });
        out.push(Triple {
            head: b,
            relation: rel(),
            tail: v,
        });
        out.push(Triple {
            head: b,
            relation: rel(),
            tail: hub,
        });
    }
    out
}

/// Nodes within `t` undirected hops of both `u` and `v`, ignoring direct
/// `u`-`v` links.
fn enclosing_nodes(adj: &[Vec<EntityId>], u: EntityId, v: EntityId, t: usize) -> Vec<EntityId> {
    let ball = |s: EntityId, other: EntityId| {
        let mut dist = vec![usize::MAX; adj.len()];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(x) = q.pop_front() {
            if dist[x] == t {
                continue;
            }
            for &y in &adj[x] {
                if dist[y] == usize::MAX && !(x == s && y == other) {
                    dist[y] = dist[x] + 1;
                    q.push_back(y);
                }
            }
        }
        dist
    };
    let du = ball(u, v);
    let dv = ball(v, u);
    (0..adj.len())
        .filter(|&i| du[i] != usize::MAX && dv[i] != usize::MAX)
        .collect()
}

fn link(adj: &mut [Vec<EntityId>], edges: &[Triple]) {
    for e in edges {
        adj[e.head].push(e.tail);
        adj[e.tail].push(e.head);
    }
}

/// True when no planted edge has both endpoints in the pair's enclosing graph.
fn is_clean(
    adj: &[Vec<EntityId>],
    planted: &HashSet<(EntityId, EntityId)>,
    a: EntityId,
    b: EntityId,
) -> bool {
    let inside: HashSet<EntityId> = enclosing_nodes(adj, a, b, 2).into_iter().collect();
    inside.iter().all(|&x| {
        adj[x]
            .iter()
            .all(|&y| !inside.contains(&y) || !planted.contains(&(x.min(y), x.max(y))))
    })
}

/// Plants gadget-shaped background structure with fresh spokes.
struct DecoyPlanter<'a> {
    rate: Option<Poisson<f64>>,
    sizes: (usize, usize),
    hubs: &'a [EntityId],
    relations: &'a [usize],
    next_free: usize,
    budget: usize,
}

impl DecoyPlanter<'_> {
    fn plant(&mut self, u: EntityId, v: EntityId, rng: &mut ChaCha8Rng) -> Result<Vec<Triple>> {
        let count = self.rate.map_or(0, |d| d.sample(rng) as usize);
        let mut out = Vec::new();
        for _ in 0..count {
            let m = rng.random_range(self.sizes.0..=self.sizes.1);
            let needed = usize::from(self.hubs.is_empty()) + m - 1;
            if self.next_free + needed > self.budget {
                return Err(Error::Config(format!(
                    "entity budget {} exhausted by decoy gadgets",
                    self.budget
                )));
            }
            let hub = match self.hubs.choose(rng) {
                Some(&h) => h,
                None => {
                    self.next_free += 1;
                    self.next_free - 1
                }
            };
            let mut nodes = vec![hub];
            nodes.extend(self.next_free..self.next_free + m - 1);
            self.next_free += m - 1;
            out.extend(gadget(u, v, &nodes, self.relations, rng));
        }
        Ok(out)
    }
}

/// Generates a dataset; identical specs give identical datasets.
pub fn generate(spec: &PlantSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut kg = TripleSet::new();
    for i in 0..spec.entities {
        let name = if i < spec.genes {
            format!("G{i:04}")
        } else {
            format!("E{i:05}")
        };
        kg.entities.intern(&name);
    }
    let mech: Vec<usize> = (0..spec.mechanism_relations)
        .map(|i| kg.relations.intern(&format!("mech{i}")))
        .collect();
    let background: Vec<usize> = (0..spec.relations)
        .map(|i| kg.relations.intern(&format!("rel{i}")))
        .collect();
    let genes: Vec<EntityId> = (0..spec.genes).collect();

    let mut used: HashSet<(EntityId, EntityId)> = HashSet::new();
    let mut positives = Vec::with_capacity(spec.positives);
    while positives.len() < spec.positives {
        let a = rng.random_range(0..spec.genes);
        let b = rng.random_range(0..spec.genes);
        let key = (a.min(b), a.max(b));
        if a != b && used.insert(key) {
            positives.push(LabeledPair::new(a, b, true));
        }
    }

    let pool: Vec<EntityId> = (spec.genes..spec.genes + spec.hub_pool).collect();
    let spoke_start = spec.genes + spec.hub_pool;
    let spoke_pool: Vec<EntityId> = (spoke_start..spoke_start + spec.spoke_pool).collect();
    let mut next_free = spoke_start + spec.spoke_pool;
    let mut truth = Vec::with_capacity(spec.positives + spec.negatives);
    let mut planted_edges: HashSet<(EntityId, EntityId)> = HashSet::new();
    for p in &positives {
        let count = rng.random_range(spec.templates.0..=spec.templates.1);
        let sizes: Vec<usize> = (0..count)
            .map(|_| rng.random_range(spec.template_nodes.0..=spec.template_nodes.1))
            .collect();
        let hubs: Vec<EntityId> = if pool.is_empty() {
            let fresh = (next_free..next_free + count).collect();
            next_free += count;
            fresh
        } else {
            pool.choose_multiple(&mut rng, count).copied().collect()
        };
        let spoke_total: usize = sizes.iter().map(|m| m - 1).sum();
        let mut spokes: Vec<EntityId> = if spoke_pool.is_empty() {
            let fresh = (next_free..next_free + spoke_total).collect();
            next_free += spoke_total;
            fresh
        } else {
            spoke_pool
                .choose_multiple(&mut rng, spoke_total)
                .copied()
                .collect()
        };
        let mut templates = Vec::with_capacity(count);
        for (hub, m) in hubs.into_iter().zip(sizes) {
            let mut nodes = vec![hub];
            nodes.extend(spokes.drain(..m - 1));
            let edges = gadget(p.u, p.v, &nodes, &mech, &mut rng);
            planted_edges.extend(edges.iter().map(|e| (e.head.min(e.tail), e.head.max(e.tail))));
            templates.push(edges);
        }
        truth.push(PairTruth {
            pair: *p,
            planted_edges: templates.concat(),
            templates,
            core_count: count,
        });
    }

    let n = spec.entities;
    let expected = spec.background_p * (n * (n - 1)) as f64;
    let count = expected.floor() as usize + usize::from(rng.random::<f64>() < expected.fract());
    let mut background_edges = Vec::with_capacity(count);
    for _ in 0..count {
        let h = rng.random_range(0..n);
        let mut t = rng.random_range(0..n - 1);
        if t >= h {
            t += 1;
        }
        background_edges.push(Triple {
            head: h,
            relation: background[rng.random_range(0..background.len())],
            tail: t,
        });
    }

    let mut adj: Vec<Vec<EntityId>> = vec![Vec::new(); n];
    for t in &truth {
        link(&mut adj, &t.planted_edges);
    }
    link(&mut adj, &background_edges);
    for p in &positives {
        adj[p.u].push(p.v);
        adj[p.v].push(p.u);
    }

    let mut decoys = DecoyPlanter {
        rate: (spec.decoys > 0.0).then(|| Poisson::new(spec.decoys).expect("rate validated")),
        sizes: spec.template_nodes,
        hubs: &pool,
        relations: &background,
        next_free,
        budget: n,
    };
    for p in &positives {
        let edges = decoys.plant(p.u, p.v, &mut rng)?;
        link(&mut adj, &edges);
        background_edges.extend(edges);
    }

    let mut candidates: Vec<(EntityId, EntityId)> = Vec::new();
    for a in 0..spec.genes {
        for b in a + 1..spec.genes {
            if !used.contains(&(a, b)) {
                candidates.push((a, b));
            }
        }
    }
    candidates.shuffle(&mut rng);
    let mut candidates = candidates.into_iter();
    let mut negatives: Vec<LabeledPair> = Vec::with_capacity(spec.negatives);
    loop {
        while negatives.len() < spec.negatives {
            let Some((a, b)) = candidates.next() else {
                return Err(Error::Exhausted {
                    requested: spec.negatives,
                    available: negatives.len(),
                });
            };
            if is_clean(&adj, &planted_edges, a, b) {
                let edges = decoys.plant(a, b, &mut rng)?;
                link(&mut adj, &edges);
                background_edges.extend(edges);
                negatives.push(LabeledPair::new(a, b, false));
            }
        }
        let before = negatives.len();
        negatives.retain(|p| is_clean(&adj, &planted_edges, p.u, p.v));
        if negatives.len() == before {
            break;
        }
    }
    for p in &negatives {
        truth.push(PairTruth {
            pair: *p,
            planted_edges: Vec::new(),
            templates: Vec::new(),
            core_count: 0,
        });
    }

    kg.triples = truth
        .iter()
        .flat_map(|t| t.planted_edges.iter().copied())
        .chain(background_edges)
        .collect();
    let mut pairs: Vec<LabeledPair> = positives.into_iter().chain(negatives).collect();
    pairs.shuffle(&mut rng);
    Ok(SyntheticDataset {
        kg,
        genes,
        pairs,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_joint_graph;
    use crate::motif;

    fn small(seed: u64) -> PlantSpec {
        PlantSpec {
            entities: 1000,
            genes: 60,
            positives: 30,
            negatives: 30,
            seed,
            ..PlantSpec::default()
        }
    }

    #[test]
    fn zero_background_keeps_only_templates() {
        let spec = PlantSpec {
            background_p: 0.0,
            decoys: 0.0,
            ..small(1)
        };
        let d = generate(&spec).unwrap();
        let planted: usize = d.truth.iter().map(|t| t.planted_edges.len()).sum();
        assert_eq!(d.kg.triples.len(), planted);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        assert_eq!(a.kg_tsv(), b.kg_tsv());
        assert_eq!(a.pairs_tsv(), b.pairs_tsv());
        assert_eq!(a.ground_truth_json(), b.ground_truth_json());
        assert_ne!(a.pairs_tsv(), generate(&small(4)).unwrap().pairs_tsv());
    }

    #[test]
    fn labels_follow_planted_templates() {
        let d = generate(&small(5)).unwrap();
        assert_eq!(d.pairs.len(), 60);
        for p in &d.pairs {
            let t = d.truth_of(p).unwrap();
            assert_eq!(p.label, t.core_count >= 1);
            assert_eq!(t.core_count, t.templates.len());
        }
    }

    #[test]
    fn planted_edges_inside_enclosing_graph_and_negatives_clean() {
        let d = generate(&small(6)).unwrap();
        let g = build_joint_graph(&d.kg, &d.pairs, 4, 4, 0).unwrap();
        for t in &d.truth {
            let eg = g.extract_enclosing(t.pair.u, t.pair.v, 2).unwrap();
            let local: HashSet<Triple> = (0..eg.num_edges()).map(|i| eg.global_edge(i)).collect();
            for e in &t.planted_edges {
                assert!(local.contains(e));
            }
            if !t.pair.label {
                let planted: HashSet<Triple> = d
                    .truth
                    .iter()
                    .flat_map(|x| x.planted_edges.iter().copied())
                    .collect();
                assert!(local.iter().all(|e| !planted.contains(e)));
            }
        }
    }

    #[test]
    fn gadgets_are_connected_and_hold_motifs() {
        let d = generate(&small(7)).unwrap();
        for t in d.truth.iter().filter(|t| t.pair.label) {
            for tpl in &t.templates {
                let mut nodes: Vec<EntityId> = tpl.iter().flat_map(|e| [e.head, e.tail]).collect();
                nodes.sort_unstable();
                nodes.dedup();
                assert!((4..=8).contains(&nodes.len()));
                let idx = |x: EntityId| nodes.binary_search(&x).unwrap();
                let mut adj = ndarray::Array2::<u8>::zeros((nodes.len(), nodes.len()));
                for e in tpl {
                    adj[[idx(e.head), idx(e.tail)]] = 1;
                }
                let keep = vec![true; nodes.len()];
                let arcs: Vec<_> = tpl.iter().map(|e| (idx(e.head), idx(e.tail))).collect();
                assert_eq!(crate::krange::weak_components(nodes.len(), &arcs, &keep), 1);
                let census = motif::census(&adj).unwrap();
                assert!(census.iter().any(|(n, _)| *n > 0));
            }
        }
    }

    #[test]
    fn rejects_infeasible_specs() {
        let spec = PlantSpec {
            entities: 100,
            ..small(0)
        };
        assert!(generate(&spec).is_err());
        let spec = PlantSpec {
            background_p: 1.5,
            ..small(0)
        };
        assert!(generate(&spec).is_err());
    }
}
