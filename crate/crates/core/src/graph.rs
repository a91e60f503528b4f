//! Knowledge-graph ingestion, the joint SL+KG graph, and pairwise enclosing
//! subgraphs.
//!
//! Entities and relations are interned into [`Vocab`]s; every other structure
//! refers to them by dense integer id. The joint graph is a directed
//! multigraph: parallel edges with different relations are kept.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use log::warn;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type EntityId = usize;
pub type RelationId = usize;

/// Name of the reserved relation carrying known synthetic-lethal pairs.
pub const SL_RELATION: &str = "SL";

/// Interned string vocabulary with stable insertion-order ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names(names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Vocab { names, index }
    }

    /// Returns the id of `name`, inserting it if absent.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Rebuilds the lookup table after deserialization.
    pub(crate) fn reindex(&mut self) {
        self.index = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// Triples plus the vocabularies they were interned into.
#[derive(Debug, Clone, Default)]
pub struct TripleSet {
    pub entities: Vocab,
    pub relations: Vocab,
    pub triples: Vec<Triple>,
}

impl TripleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, head: &str, relation: &str, tail: &str) {
        let head = self.entities.intern(head);
        let relation = self.relations.intern(relation);
        let tail = self.entities.intern(tail);
        self.triples.push(Triple { head, relation, tail });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub u: EntityId,
    pub v: EntityId,
    pub label: bool,
}

impl LabeledPair {
    pub fn new(u: EntityId, v: EntityId, label: bool) -> Self {
        LabeledPair { u, v, label }
    }

    /// Order-independent key.
    pub fn key(&self) -> (EntityId, EntityId) {
        unordered(self.u, self.v)
    }

    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

pub(crate) fn unordered(a: EntityId, b: EntityId) -> (EntityId, EntityId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn split_tab_line(line: &str) -> Vec<&str> {
    line.trim_end_matches('\r').split('\t').collect()
}

/// Reads `head<TAB>relation<TAB>tail` lines. Blank lines are skipped.
pub fn load_triples(path: impl AsRef<Path>) -> Result<TripleSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triples(&text, path)
}

pub fn parse_triples(text: &str, origin: &Path) -> Result<TripleSet> {
    let mut set = TripleSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_tab_line(line);
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        set.push(fields[0], fields[1], fields[2]);
    }
    Ok(set)
}

/// Reads `gene_a<TAB>gene_b<TAB>label` lines, interning genes into `entities`.
pub fn load_pairs(path: impl AsRef<Path>, entities: &mut Vocab) -> Result<Vec<LabeledPair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, path, entities)
}

pub fn parse_pairs(text: &str, origin: &Path, entities: &mut Vocab) -> Result<Vec<LabeledPair>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields = split_tab_line(line);
        if fields.len() != 3 {
            return Err(err(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let label = match fields[2].trim() {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("label must be 0 or 1, got `{other}`"))),
        };
        if fields[0] == fields[1] {
            return Err(err(format!("self pair `{}`", fields[0])));
        }
        let u = entities.intern(fields[0]);
        let v = entities.intern(fields[1]);
        pairs.push(LabeledPair::new(u, v, label));
    }
    Ok(pairs)
}

/// Reads `entity<TAB>f1,f2,...` rows of width `d0`. Unknown entities are an error.
pub fn load_features(
    path: impl AsRef<Path>,
    entities: &Vocab,
    d0: usize,
) -> Result<Vec<(EntityId, Vec<f64>)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields = split_tab_line(line);
        if fields.len() != 2 {
            return Err(err("expected entity<TAB>values".into()));
        }
        let id = entities
            .get(fields[0])
            .ok_or_else(|| err(format!("unknown entity `{}`", fields[0])))?;
        let values = fields[1]
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(e.to_string()))?;
        if values.len() != d0 {
            return Err(err(format!("expected {d0} values, found {}", values.len())));
        }
        rows.push((id, values));
    }
    Ok(rows)
}

/// The KG merged with SL-labeled edges for known positive pairs.
///
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct JointGraph {
    entities: Vocab,
    relations: Vocab,
    sl: RelationId,
    edges: Vec<Triple>,
    /// Undirected incidence: (neighbor, edge index).
    incident: Vec<Vec<(EntityId, usize)>>,
    node_features: Array2<f64>,
    relation_features: Array2<f64>,
}

/// Half-width of the uniform range used for fresh feature rows.
pub const FEATURE_INIT: f64 = 0.1;

/// Uniform `[-FEATURE_INIT, FEATURE_INIT]` table, deterministic per seed.
pub fn init_table(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-FEATURE_INIT..=FEATURE_INIT))
}

/// Builds the joint graph. Only label-1 pairs contribute SL edges.
///
/// Pair endpoints missing from the KG keep their vocabulary slot and get a
/// fresh feature row like every other entity.
pub fn build_joint_graph(
    kg: &TripleSet,
    sl: &[LabeledPair],
    d0: usize,
    d1: usize,
    seed: u64,
) -> Result<JointGraph> {
    if d0 == 0 || d1 == 0 {
        return Err(Error::Config("feature widths d0, d1 must be >= 1".into()));
    }
    let entities = kg.entities.clone();
    let mut relations = kg.relations.clone();
    let sl_rel = relations.intern(SL_RELATION);
    let mut in_kg = vec![false; entities.len()];
    for t in &kg.triples {
        in_kg[t.head] = true;
        in_kg[t.tail] = true;
    }
    let mut edges = kg.triples.clone();
    for p in sl {
        for e in [p.u, p.v] {
            if e >= entities.len() {
                return Err(Error::UnknownEntity(format!("#{e}")));
            }
            if !in_kg[e] {
                warn!(
                    "SL pair entity `{}` does not occur in the KG; it gets a fresh feature row",
                    entities.name(e)
                );
                in_kg[e] = true;
            }
        }
        if p.label {
            edges.push(Triple {
                head: p.u,
                relation: sl_rel,
                tail: p.v,
            });
        }
    }
    let mut incident = vec![Vec::new(); entities.len()];
    for (i, e) in edges.iter().enumerate() {
        incident[e.head].push((e.tail, i));
        if e.head != e.tail {
            incident[e.tail].push((e.head, i));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let node_features = init_table(entities.len(), d0, &mut rng);
    let relation_features = init_table(relations.len(), d1, &mut rng);
    Ok(JointGraph {
        entities,
        relations,
        sl: sl_rel,
        edges,
        incident,
        node_features,
        relation_features,
    })
}

impl JointGraph {
    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn sl_relation(&self) -> RelationId {
        self.sl
    }

    pub fn edges(&self) -> &[Triple] {
        &self.edges
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn node_features(&self) -> &Array2<f64> {
        &self.node_features
    }

    pub fn relation_features(&self) -> &Array2<f64> {
        &self.relation_features
    }

    /// Replaces rows of the node-feature table (from a features file).
    pub fn with_node_features(mut self, rows: &[(EntityId, Vec<f64>)]) -> Result<Self> {
        let d0 = self.node_features.ncols();
        for (id, values) in rows {
            if values.len() != d0 {
                return Err(Error::Shape(format!(
                    "feature row for `{}` has width {}, expected {d0}",
                    self.entities.name(*id),
                    values.len()
                )));
            }
            for (c, &x) in values.iter().enumerate() {
                self.node_features[[*id, c]] = x;
            }
        }
        Ok(self)
    }

    fn is_target_edge(&self, e: &Triple, u: EntityId, v: EntityId) -> bool {
        e.relation == self.sl && unordered(e.head, e.tail) == unordered(u, v)
    }

    /// Undirected hop distances from `src`, capped at `t`, ignoring the SL
    /// edges between `u` and `v`.
    fn bfs(&self, src: EntityId, t: usize, u: EntityId, v: EntityId) -> HashMap<EntityId, usize> {
        let mut dist = HashMap::new();
        dist.insert(src, 0);
        let mut queue = VecDeque::from([src]);
        while let Some(x) = queue.pop_front() {
            let d = dist[&x];
            if d == t {
                continue;
            }
            for &(y, ei) in &self.incident[x] {
                if self.is_target_edge(&self.edges[ei], u, v) || dist.contains_key(&y) {
                    continue;
                }
                dist.insert(y, d + 1);
                queue.push_back(y);
            }
        }
        dist
    }

    /// Extracts the enclosing graph of `(u, v)`: nodes within `t` undirected
    /// hops of both endpoints, plus the endpoints themselves, with every
    /// induced edge except the SL edges joining `u` and `v`.
    pub fn extract_enclosing(&self, u: EntityId, v: EntityId, t: usize) -> Result<EnclosingGraph> {
        if u == v {
            let name = self.entities.name(u).to_string();
            return Err(Error::InvalidPair(name.clone(), name));
        }
        for e in [u, v] {
            if e >= self.num_entities() {
                return Err(Error::UnknownEntity(format!("#{e}")));
            }
        }
        let du = self.bfs(u, t, u, v);
        let dv = self.bfs(v, t, u, v);
        let mut middle: Vec<EntityId> = du
            .keys()
            .filter(|k| **k != u && **k != v && dv.contains_key(k))
            .copied()
            .collect();
        middle.sort_unstable();
        let mut nodes = vec![u, v];
        nodes.extend(middle);
        let local: HashMap<EntityId, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();

        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        for &n in &nodes {
            for &(_, ei) in &self.incident[n] {
                if !seen.insert(ei) {
                    continue;
                }
                let e = &self.edges[ei];
                if self.is_target_edge(e, u, v) {
                    continue;
                }
                if let (Some(&h), Some(&tl)) = (local.get(&e.head), local.get(&e.tail)) {
                    edges.push((
                        ei,
                        LocalEdge {
                            head: h,
                            relation: e.relation,
                            tail: tl,
                        },
                    ));
                }
            }
        }
        // Global edge order keeps extraction independent of adjacency layout.
        edges.sort_unstable_by_key(|(ei, _)| *ei);
        Ok(EnclosingGraph {
            u,
            v,
            nodes,
            edges: edges.into_iter().map(|(_, e)| e).collect(),
        })
    }
}

/// An edge of an enclosing graph, endpoints in local node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalEdge {
    pub head: usize,
    pub relation: RelationId,
    pub tail: usize,
}

/// Pairwise enclosing subgraph. `nodes[0] == u`, `nodes[1] == v`; the rest
/// are sorted by entity id.
#[derive(Debug, Clone, PartialEq)]
pub struct EnclosingGraph {
    pub u: EntityId,
    pub v: EntityId,
    pub nodes: Vec<EntityId>,
    pub edges: Vec<LocalEdge>,
}

impl EnclosingGraph {
    /// Builds an enclosing graph directly from local parts (tests, toy inputs).
    pub fn from_parts(nodes: Vec<EntityId>, edges: Vec<LocalEdge>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Shape("enclosing graph needs u and v".into()));
        }
        if let Some(e) = edges
            .iter()
            .find(|e| e.head >= nodes.len() || e.tail >= nodes.len())
        {
            return Err(Error::Shape(format!("edge {e:?} out of range")));
        }
        Ok(EnclosingGraph {
            u: nodes[0],
            v: nodes[1],
            nodes,
            edges,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Local rows of a global node-feature table.
    pub fn node_features(&self, table: &Array2<f64>) -> Array2<f64> {
        table.select(ndarray::Axis(0), &self.nodes)
    }

    /// Binary directed adjacency with self-loops dropped and parallel edges
    /// collapsed.
    pub fn binary_adjacency(&self) -> Array2<u8> {
        let n = self.num_nodes();
        let mut a = Array2::zeros((n, n));
        for e in &self.edges {
            if e.head != e.tail {
                a[[e.head, e.tail]] = 1;
            }
        }
        a
    }

    /// Global triple of local edge `i`.
    pub fn global_edge(&self, i: usize) -> Triple {
        let e = self.edges[i];
        Triple {
            head: self.nodes[e.head],
            relation: e.relation,
            tail: self.nodes[e.tail],
        }
    }
}

/// Samples `n` distinct unordered gene pairs that are not positives.
pub fn sample_negatives(
    positives: &[LabeledPair],
    genes: &[EntityId],
    n: usize,
    seed: u64,
) -> Result<Vec<LabeledPair>> {
    let mut genes = genes.to_vec();
    genes.sort_unstable();
    genes.dedup();
    let gene_set: HashSet<EntityId> = genes.iter().copied().collect();
    let known: HashSet<(EntityId, EntityId)> = positives
        .iter()
        .map(LabeledPair::key)
        .filter(|(a, b)| a != b && gene_set.contains(a) && gene_set.contains(b))
        .collect();
    let g = genes.len();
    let total = g * g.saturating_sub(1) / 2;
    let available = total - known.len();
    if n > available {
        return Err(Error::Exhausted {
            requested: n,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    if n * 4 <= available {
        let mut taken = HashSet::with_capacity(n);
        while out.len() < n {
            let i = rng.random_range(0..g);
            let j = rng.random_range(0..g);
            if i == j {
                continue;
            }
            let key = unordered(genes[i], genes[j]);
            if known.contains(&key) || !taken.insert(key) {
                continue;
            }
            out.push(LabeledPair::new(key.0, key.1, false));
        }
    } else {
        let mut cands = Vec::with_capacity(available);
        for i in 0..g {
            for j in i + 1..g {
                let key = (genes[i], genes[j]);
                if !known.contains(&key) {
                    cands.push(key);
                }
            }
        }
        cands.shuffle(&mut rng);
        out.extend(
            cands
                .into_iter()
                .take(n)
                .map(|(a, b)| LabeledPair::new(a, b, false)),
        );
    }
    Ok(out)
}

/// One cross-validation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

/// Shuffles once, then cuts `k` contiguous folds; the first `len % k` folds
/// get one extra pair.
pub fn kfold_split(pairs: &[LabeledPair], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if pairs.len() < k {
        return Err(Error::Config(format!(
            "{} pairs cannot fill {k} folds",
            pairs.len()
        )));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = pairs.len() / k;
    let extra = pairs.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let test_idx = &order[start..start + size];
        let in_test: HashSet<usize> = test_idx.iter().copied().collect();
        folds.push(FoldSplit {
            fold: f,
            train: order
                .iter()
                .filter(|i| !in_test.contains(i))
                .map(|&i| pairs[i])
                .collect(),
            test: test_idx.iter().map(|&i| pairs[i]).collect(),
        });
        start += size;
    }
    Ok(folds)
}
