//! The 13 connected directed 3-node motifs and motif-based adjacency
//! matrices.
//!
//! Motifs are numbered 1..=13 in ascending order of the lexicographically
//! minimal 9-bit row-major encoding of their isomorphism class. Matching is
//! induced and counts ordered tuples, so an unordered instance contributes
//! once per automorphic labeling.

use std::sync::OnceLock;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const NUM_MOTIFS: usize = 13;

/// Off-diagonal slots of a 3x3 matrix, in the bit order used by
/// [`pattern_bits`].
const SLOTS: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];

const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

pub type MotifMatrix = [[u8; 3]; 3];

/// One catalog entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Motif {
    pub matrix: MotifMatrix,
    /// Number of node permutations mapping the motif onto itself.
    pub automorphisms: u32,
}

impl Motif {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        SLOTS
            .iter()
            .copied()
            .filter(|&(r, c)| self.matrix[r][c] == 1)
            .collect()
    }

    pub fn encoding(&self) -> u16 {
        encode9(&self.matrix)
    }
}

/// Row-major 9-bit encoding, entry (0,0) as the most significant bit.
pub fn encode9(m: &MotifMatrix) -> u16 {
    let mut code = 0u16;
    for (r, row) in m.iter().enumerate() {
        for (c, &x) in row.iter().enumerate() {
            if x != 0 {
                code |= 1 << (8 - (3 * r + c));
            }
        }
    }
    code
}

fn from_bits(bits: u8) -> MotifMatrix {
    let mut m = [[0u8; 3]; 3];
    for (i, &(r, c)) in SLOTS.iter().enumerate() {
        if bits & (1 << i) != 0 {
            m[r][c] = 1;
        }
    }
    m
}

fn to_bits(m: &MotifMatrix) -> u8 {
    SLOTS
        .iter()
        .enumerate()
        .filter(|(_, &(r, c))| m[r][c] != 0)
        .fold(0u8, |acc, (i, _)| acc | (1 << i))
}

fn permute(m: &MotifMatrix, p: &[usize; 3]) -> MotifMatrix {
    let mut out = [[0u8; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = m[p[r]][p[c]];
        }
    }
    out
}

pub fn weakly_connected(m: &MotifMatrix) -> bool {
    let adj = |a: usize, b: usize| m[a][b] != 0 || m[b][a] != 0;
    let links = [adj(0, 1), adj(0, 2), adj(1, 2)];
    links.iter().filter(|&&x| x).count() >= 2
}

/// The ordered motif list with a 6-bit pattern lookup table.
#[derive(Debug, Clone)]
pub struct MotifCatalog {
    motifs: Vec<Motif>,
    /// 6-bit off-diagonal pattern -> 0-based motif slot.
    class_of: [Option<u8>; 64],
}

impl MotifCatalog {
    pub fn build() -> Self {
        let mut canon: Vec<u16> = Vec::new();
        let mut canon_of_bits = [None; 64];
        for bits in 0u8..64 {
            let m = from_bits(bits);
            if !weakly_connected(&m) {
                continue;
            }
            let code = PERMS.iter().map(|p| encode9(&permute(&m, p))).min().unwrap();
            canon_of_bits[bits as usize] = Some(code);
            if !canon.contains(&code) {
                canon.push(code);
            }
        }
        canon.sort_unstable();
        let motifs = canon
            .iter()
            .map(|&code| {
                let bits = (0u8..64)
                    .find(|&b| {
                        let m = from_bits(b);
                        encode9(&m) == code
                    })
                    .unwrap();
                let matrix = from_bits(bits);
                let automorphisms = PERMS.iter().filter(|p| permute(&matrix, p) == matrix).count() as u32;
                Motif {
                    matrix,
                    automorphisms,
                }
            })
            .collect();
        let mut class_of = [None; 64];
        for (bits, code) in canon_of_bits.iter().enumerate() {
            if let Some(code) = code {
                class_of[bits] = canon.iter().position(|c| c == code).map(|i| i as u8);
            }
        }
        MotifCatalog { motifs, class_of }
    }

    /// Shared immutable catalog.
    pub fn global() -> &'static MotifCatalog {
        static CATALOG: OnceLock<MotifCatalog> = OnceLock::new();
        CATALOG.get_or_init(MotifCatalog::build)
    }

    pub fn len(&self) -> usize {
        self.motifs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motifs.is_empty()
    }

    /// Motif by 1-based index.
    pub fn get(&self, index: usize) -> Result<&Motif> {
        check_index(index)?;
        Ok(&self.motifs[index - 1])
    }

    pub fn motifs(&self) -> &[Motif] {
        &self.motifs
    }

    /// 1-based index of the motif isomorphic to `m`, if `m` is connected.
    pub fn classify(&self, m: &MotifMatrix) -> Option<usize> {
        self.class_of[to_bits(m) as usize].map(|i| i as usize + 1)
    }
}

pub fn build_catalog() -> MotifCatalog {
    MotifCatalog::build()
}

fn check_index(index: usize) -> Result<()> {
    if (1..=NUM_MOTIFS).contains(&index) {
        Ok(())
    } else {
        Err(Error::MotifIndex(index))
    }
}

/// Induced 3x3 adjacency of the ordered tuple `v`.
pub fn induced(adj: &Array2<u8>, v: [usize; 3]) -> MotifMatrix {
    let mut m = [[0u8; 3]; 3];
    for (r, c) in SLOTS {
        m[r][c] = u8::from(adj[[v[r], v[c]]] != 0);
    }
    m
}

/// An unordered motif occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    /// Node indices, ascending.
    pub nodes: [usize; 3],
    /// Arcs of the induced subgraph (all of them are motif edges).
    pub arcs: Vec<(usize, usize)>,
    /// Ordered tuples matching the motif (its automorphism count).
    pub multiplicity: u32,
}

/// Node sets of all weakly connected 3-node induced subgraphs, each once.
fn connected_triples(adj: &Array2<u8>) -> Vec<[usize; 3]> {
    let n = adj.nrows();
    let linked = |a: usize, b: usize| a != b && (adj[[a, b]] != 0 || adj[[b, a]] != 0);
    let nbrs: Vec<Vec<usize>> = (0..n)
        .map(|a| (0..n).filter(|&b| linked(a, b)).collect())
        .collect();
    let mut out = Vec::new();
    for (c, nb) in nbrs.iter().enumerate() {
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                // A triangle is reachable from all three centers; keep the smallest.
                if linked(a, b) && c > a {
                    continue;
                }
                let mut t = [a, b, c];
                t.sort_unstable();
                out.push(t);
            }
        }
    }
    out.sort_unstable();
    out
}

fn check_square(adj: &Array2<u8>) -> Result<()> {
    if adj.nrows() != adj.ncols() {
        return Err(Error::Shape(format!("adjacency is {:?}, not square", adj.dim())));
    }
    Ok(())
}

/// All instances grouped by 0-based motif slot, from one connected-triple pass.
pub fn all_instances(adj: &Array2<u8>) -> Result<Vec<Vec<Instance>>> {
    check_square(adj)?;
    let catalog = MotifCatalog::global();
    let mut out = vec![Vec::new(); NUM_MOTIFS];
    for t in connected_triples(adj) {
        let m = induced(adj, t);
        let Some(idx) = catalog.classify(&m) else {
            continue;
        };
        let arcs = SLOTS
            .iter()
            .filter(|&&(r, c)| m[r][c] != 0)
            .map(|&(r, c)| (t[r], t[c]))
            .collect();
        out[idx - 1].push(Instance {
            nodes: t,
            arcs,
            multiplicity: catalog.motifs[idx - 1].automorphisms,
        });
    }
    Ok(out)
}

/// Instances of one motif (1-based index).
pub fn instances(adj: &Array2<u8>, motif: usize) -> Result<Vec<Instance>> {
    check_index(motif)?;
    Ok(all_instances(adj)?.swap_remove(motif - 1))
}

/// Every ordered tuple whose induced adjacency equals the motif matrix.
pub fn match_instances(adj: &Array2<u8>, motif: usize) -> Result<Vec<[usize; 3]>> {
    let target = MotifCatalog::global().get(motif)?.matrix;
    let mut out = Vec::new();
    for inst in instances(adj, motif)? {
        for p in PERMS {
            let v = [inst.nodes[p[0]], inst.nodes[p[1]], inst.nodes[p[2]]];
            if induced(adj, v) == target {
                out.push(v);
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn scatter_pairs(m: &mut Array2<f64>, nodes: [usize; 3], w: f64) {
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let (j, l) = (nodes[a], nodes[b]);
        m[[j, l]] += w;
        m[[l, j]] += w;
    }
}

/// Exact motif-based adjacency: `(M)_{j,l}` counts matching ordered tuples
/// whose node set contains both `j` and `l`.
pub fn motif_adjacency(adj: &Array2<u8>, motif: usize) -> Result<Array2<f64>> {
    let n = adj.nrows();
    let mut m = Array2::zeros((n, n));
    for inst in instances(adj, motif)? {
        scatter_pairs(&mut m, inst.nodes, inst.multiplicity as f64);
    }
    Ok(m)
}

/// Gate-weighted motif adjacency. Instances are matched on the binary
/// `support`; each contributes the product of `gates` over its arcs.
pub fn weighted_motif_adjacency(
    support: &Array2<u8>,
    gates: &Array2<f64>,
    motif: usize,
) -> Result<Array2<f64>> {
    if gates.dim() != support.dim() {
        return Err(Error::Shape(format!(
            "gates {:?} vs support {:?}",
            gates.dim(),
            support.dim()
        )));
    }
    for ((i, j), &g) in gates.indexed_iter() {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::Domain(format!("gate ({i},{j}) = {g} outside [0,1]")));
        }
        if g > 0.0 && i != j && support[[i, j]] == 0 {
            return Err(Error::Domain(format!("gate ({i},{j}) set on a non-edge")));
        }
    }
    let n = support.nrows();
    let mut m = Array2::zeros((n, n));
    for inst in instances(support, motif)? {
        let w: f64 = inst.arcs.iter().map(|&(a, b)| gates[[a, b]]).product();
        scatter_pairs(&mut m, inst.nodes, inst.multiplicity as f64 * w);
    }
    Ok(m)
}

/// Unordered instance and ordered tuple totals per motif.
pub fn census(adj: &Array2<u8>) -> Result<Vec<(usize, u64)>> {
    Ok(all_instances(adj)?
        .iter()
        .map(|v| {
            let ordered = v.iter().map(|i| i.multiplicity as u64).sum();
            (v.len(), ordered)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Array2<u8> {
        let mut a = Array2::zeros((n, n));
        for &(i, j) in edges {
            a[[i, j]] = 1;
        }
        a
    }

    fn out_star() -> usize {
        MotifCatalog::global()
            .classify(&[[0, 1, 1], [0, 0, 0], [0, 0, 0]])
            .unwrap()
    }

    #[test]
    fn catalog_has_thirteen_connected_distinct_motifs() {
        let cat = build_catalog();
        assert_eq!(cat.len(), 13);
        for (i, m) in cat.motifs().iter().enumerate() {
            assert!(weakly_connected(&m.matrix));
            for other in &cat.motifs()[i + 1..] {
                assert!(PERMS.iter().all(|p| permute(&m.matrix, p) != other.matrix));
            }
        }
        let codes: Vec<_> = cat.motifs().iter().map(Motif::encoding).collect();
        assert!(codes.windows(2).all(|w| w[0] < w[1]));
        let total: u32 = cat.motifs().iter().map(|m| 6 / m.automorphisms).sum();
        // Labeled weakly connected 3-node digraphs.
        assert_eq!(total, 54);
        assert!(cat.get(0).is_err() && cat.get(14).is_err());
    }

    #[test]
    fn out_star_instances() {
        let g = graph(3, &[(0, 1), (0, 2)]);
        let tuples = match_instances(&g, out_star()).unwrap();
        assert_eq!(tuples.len(), 2);
        let m = motif_adjacency(&g, out_star()).unwrap();
        assert_eq!(m[[0, 1]], 2.0);
        assert_eq!(m[[0, 2]], 2.0);
        assert_eq!(m[[1, 2]], 2.0);
        assert_eq!(m[[0, 0]], 0.0);
    }

    #[test]
    fn empty_graph_has_no_instances() {
        let g = graph(5, &[]);
        for k in 1..=13 {
            assert!(match_instances(&g, k).unwrap().is_empty());
            assert!(motif_adjacency(&g, k).unwrap().iter().all(|&x| x == 0.0));
        }
        assert!(match_instances(&g, 14).is_err());
    }

    #[test]
    fn self_loops_ignored() {
        let g = graph(3, &[(0, 1), (0, 2), (0, 0), (1, 1)]);
        assert_eq!(match_instances(&g, out_star()).unwrap().len(), 2);
    }

    #[test]
    fn weighted_rules() {
        let g = graph(3, &[(0, 1), (0, 2)]);
        let ones = g.mapv(f64::from);
        assert_eq!(
            weighted_motif_adjacency(&g, &ones, out_star()).unwrap(),
            motif_adjacency(&g, out_star()).unwrap()
        );
        let half = ones.mapv(|x| x * 0.5);
        let w = weighted_motif_adjacency(&g, &half, out_star()).unwrap();
        assert!((w[[1, 2]] - 0.5).abs() < 1e-15);
        let mut zero = ones.clone();
        zero[[0, 1]] = 0.0;
        let w = weighted_motif_adjacency(&g, &zero, out_star()).unwrap();
        assert!(w.iter().all(|&x| x == 0.0));
        let mut bad = ones.clone();
        bad[[0, 1]] = 1.5;
        assert!(matches!(
            weighted_motif_adjacency(&g, &bad, out_star()),
            Err(Error::Domain(_))
        ));
        let mut off = ones;
        off[[1, 2]] = 0.3;
        assert!(weighted_motif_adjacency(&g, &off, out_star()).is_err());
    }
}
