//! Reverse-mode automatic differentiation over small dense matrices.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! value; [`Tape::backward`] walks the nodes in reverse and accumulates
//! adjoints. Only the operator set needed by the model is provided, including
//! a few fused kernels (motif weighting, Gram determinant, logistic
//! cross-entropy) whose adjoints are written by hand.

use std::sync::Arc;

use ndarray::{s, Array2, Axis};

use crate::linalg;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sparse `n×n` pattern: entry `e` sits at `(row, col)`.
pub type Entries = Arc<Vec<(usize, usize)>>;

/// One motif occurrence over an entry pattern: the arcs whose gate product
/// weights it and the six entries (both orientations of its three node
/// pairs) it adds that weight to.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternInstance {
    pub entries: [usize; 6],
    pub arcs: Vec<usize>,
    pub multiplicity: f64,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// a · bᵀ
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    ScaleVar(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    MulConst(Var, Array2<f64>),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Ln(Var),
    Sqrt(Var),
    Clamp(Var, f64, f64),
    Logit(Var),
    Sum(Var),
    MeanRows(Var),
    RowSum(Var),
    GatherRows(Var, Arc<Vec<usize>>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SegmentMax(Var, Vec<usize>),
    Softmax(Var),
    MotifWeights(Var, Arc<Vec<PatternInstance>>),
    SpMM(Var, Entries, Var),
    GramDet(Var),
    Bce(Var, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Recorded computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node after a backward pass.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Array2<f64>>>,
}

impl Grads {
    /// Gradient of `v`, or `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads[v.0].take()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn scalar(x: f64) -> Array2<f64> {
    Array2::from_elem((1, 1), x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.leaf(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// `a` (n×c) plus the row vector `b` (1×c) broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::AddRow(a, b))
    }

    /// `a` times the 1×1 node `s`.
    pub fn scale_var(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar_value(s);
        let v = self.value(a) * k;
        self.push(v, Op::ScaleVar(a, s))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_const(&mut self, a: Var, c: &Array2<f64>) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddConst(a))
    }

    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        let v = self.value(a) * &c;
        self.push(v, Op::MulConst(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::sqrt);
        self.push(v, Op::Sqrt(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    /// `ln(x / (1 - x))`.
    pub fn logit(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| (x / (1.0 - x)).ln());
        self.push(v, Op::Logit(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .mean_axis(Axis(0))
            .expect("mean over zero rows")
            .insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::RowSum(a))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Var {
        let v = self.value(a).select(Axis(0), &idx);
        self.push(v, Op::GatherRows(a, idx))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts differ");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts differ");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end))
    }

    /// Column vector of group maxima: `out[g] = max a[i]` over `group[i] == g`.
    /// Ties resolve to the first index.
    pub fn segment_max(&mut self, a: Var, group: Vec<usize>, groups: usize) -> Var {
        let x = self.value(a);
        let mut v = Array2::from_elem((groups, 1), f64::NEG_INFINITY);
        for (i, &g) in group.iter().enumerate() {
            if x[[i, 0]] > v[[g, 0]] {
                v[[g, 0]] = x[[i, 0]];
            }
        }
        self.push(v, Op::SegmentMax(a, group))
    }

    /// Softmax over every entry of `a`.
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = x.fold(f64::NEG_INFINITY, |m, &y| m.max(y));
        let e = x.mapv(|y| (y - m).exp());
        let z = e.sum();
        self.push(e / z, Op::Softmax(a))
    }

    /// Per-entry weights (column vector of length `entries`) of a motif
    /// pattern: each instance adds `multiplicity · Π gates[arcs]` to its
    /// entries.
    pub fn motif_weights(&mut self, gates: Var, entries: usize, inst: Arc<Vec<PatternInstance>>) -> Var {
        let g = self.value(gates);
        let mut w = Array2::zeros((entries, 1));
        for it in inst.iter() {
            let v = it.multiplicity * it.arcs.iter().map(|&e| g[[e, 0]]).product::<f64>();
            for &e in &it.entries {
                w[[e, 0]] += v;
            }
        }
        self.push(w, Op::MotifWeights(gates, inst))
    }

    /// `M h` for the sparse `M` with `M[row][col] = weights[e]` summed over
    /// the entries `e` at `(row, col)`.
    pub fn spmm(&mut self, weights: Var, entries: Entries, h: Var) -> Var {
        let w = self.value(weights);
        let x = self.value(h);
        let mut out = Array2::zeros(x.raw_dim());
        for (e, &(r, c)) in entries.iter().enumerate() {
            out.row_mut(r).scaled_add(w[[e, 0]], &x.row(c));
        }
        self.push(out, Op::SpMM(weights, entries, h))
    }

    /// `det(U Uᵀ)` with the rows of `u` as the vectors.
    pub fn gram_det(&mut self, u: Var) -> Var {
        let x = self.value(u);
        let v = scalar(linalg::det(&x.dot(&x.t())));
        self.push(v, Op::GramDet(u))
    }

    /// Binary cross-entropy of a 1×1 logit against `label`.
    pub fn bce_with_logit(&mut self, logit: Var, label: f64) -> Var {
        let x = self.scalar_value(logit);
        let v = scalar(x.max(0.0) - x * label + (-x.abs()).exp().ln_1p());
        self.push(v, Op::Bce(logit, label))
    }

    /// Reverse sweep from the 1×1 node `loss`.
    pub fn backward(&self, loss: Var) -> Grads {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones(self.value(loss).raw_dim()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads { grads }
    }

    fn propagate(&self, i: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let mut acc = |v: Var, d: Array2<f64>| match &mut grads[v.0] {
            Some(x) => *x += &d,
            slot @ None => *slot = Some(d),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                acc(*a, g.dot(&self.value(*b).t()));
                acc(*b, self.value(*a).t().dot(g));
            }
            Op::MatMulT(a, b) => {
                acc(*a, g.dot(self.value(*b)));
                acc(*b, g.t().dot(self.value(*a)));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                acc(*a, g * self.value(*b));
                acc(*b, g * self.value(*a));
            }
            Op::AddRow(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::ScaleVar(a, s) => {
                acc(*a, g * self.scalar_value(*s));
                acc(*s, scalar((g * self.value(*a)).sum()));
            }
            Op::Scale(a, k) => acc(*a, g * *k),
            Op::AddConst(a) => acc(*a, g.clone()),
            Op::MulConst(a, c) => acc(*a, g * c),
            Op::Tanh(a) => acc(*a, g * &y.mapv(|t| 1.0 - t * t)),
            Op::Sigmoid(a) => acc(*a, g * &y.mapv(|s| s * (1.0 - s))),
            Op::Softplus(a) => acc(*a, g * &self.value(*a).mapv(sigmoid)),
            Op::Ln(a) => acc(*a, g / self.value(*a)),
            Op::Sqrt(a) => acc(*a, g * &y.mapv(|r| 0.5 / r)),
            Op::Clamp(a, lo, hi) => {
                let mask = self
                    .value(*a)
                    .mapv(|x| if x > *lo && x < *hi { 1.0 } else { 0.0 });
                acc(*a, g * &mask);
            }
            Op::Logit(a) => acc(*a, g * &self.value(*a).mapv(|x| 1.0 / (x * (1.0 - x)))),
            Op::Sum(a) => {
                let k = g[[0, 0]];
                acc(*a, Array2::from_elem(self.value(*a).raw_dim(), k));
            }
            Op::MeanRows(a) => {
                let n = self.value(*a).nrows();
                let row = g / n as f64;
                let full = row
                    .broadcast(self.value(*a).raw_dim())
                    .expect("broadcast mean")
                    .to_owned();
                acc(*a, full);
            }
            Op::RowSum(a) => {
                let full = g
                    .broadcast(self.value(*a).raw_dim())
                    .expect("broadcast row sum")
                    .to_owned();
                acc(*a, full);
            }
            Op::GatherRows(a, idx) => {
                let mut d = Array2::zeros(self.value(*a).raw_dim());
                for (r, &src) in idx.iter().enumerate() {
                    let mut row = d.row_mut(src);
                    row += &g.row(r);
                }
                acc(*a, d);
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    acc(p, g.slice(s![.., start..start + w]).to_owned());
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let h = self.value(p).nrows();
                    acc(p, g.slice(s![start..start + h, ..]).to_owned());
                    start += h;
                }
            }
            Op::SliceCols(a, start, end) => {
                let mut d = Array2::zeros(self.value(*a).raw_dim());
                d.slice_mut(s![.., *start..*end]).assign(g);
                acc(*a, d);
            }
            Op::SegmentMax(a, group) => {
                let x = self.value(*a);
                let mut d = Array2::zeros(x.raw_dim());
                let mut taken = vec![false; y.nrows()];
                for (r, &grp) in group.iter().enumerate() {
                    if !taken[grp] && x[[r, 0]] == y[[grp, 0]] {
                        d[[r, 0]] = g[[grp, 0]];
                        taken[grp] = true;
                    }
                }
                acc(*a, d);
            }
            Op::Softmax(a) => {
                let dot = (g * y).sum();
                acc(*a, y * &g.mapv(|x| x - dot));
            }
            Op::MotifWeights(gates, inst) => {
                let gv = self.value(*gates);
                let mut d = Array2::zeros(gv.raw_dim());
                for it in inst.iter() {
                    let up: f64 = it.entries.iter().map(|&e| g[[e, 0]]).sum();
                    for (k, &e) in it.arcs.iter().enumerate() {
                        let rest: f64 = it
                            .arcs
                            .iter()
                            .enumerate()
                            .filter(|(k2, _)| *k2 != k)
                            .map(|(_, &e2)| gv[[e2, 0]])
                            .product();
                        d[[e, 0]] += up * it.multiplicity * rest;
                    }
                }
                acc(*gates, d);
            }
            Op::SpMM(weights, entries, h) => {
                let w = self.value(*weights);
                let x = self.value(*h);
                let mut dw = Array2::zeros(w.raw_dim());
                let mut dh = Array2::zeros(x.raw_dim());
                for (e, &(r, c)) in entries.iter().enumerate() {
                    dw[[e, 0]] = g.row(r).dot(&x.row(c));
                    dh.row_mut(c).scaled_add(w[[e, 0]], &g.row(r));
                }
                acc(*weights, dw);
                acc(*h, dh);
            }
            Op::GramDet(u) => {
                let x = self.value(*u);
                let cof = linalg::cofactor(&x.dot(&x.t()));
                // d det(U Uᵀ) / dU = (C + Cᵀ) U for cofactor matrix C.
                let d = (&cof + &cof.t()).dot(x) * g[[0, 0]];
                acc(*u, d);
            }
            Op::Bce(logit, label) => {
                let x = self.scalar_value(*logit);
                acc(*logit, scalar(g[[0, 0]] * (sigmoid(x) - label)));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central differences of a scalar function of one matrix input.
    fn numeric(x: &Array2<f64>, f: &dyn Fn(&Array2<f64>) -> f64) -> Array2<f64> {
        let h = 1e-6;
        let mut out = Array2::zeros(x.raw_dim());
        for idx in 0..x.len() {
            let mut p = x.clone();
            let mut m = x.clone();
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            p[[r, c]] += h;
            m[[r, c]] -= h;
            out[[r, c]] = (f(&p) - f(&m)) / (2.0 * h);
        }
        out
    }

    fn check(x: Array2<f64>, build: &dyn Fn(&mut Tape, Var) -> Var) {
        let f = |x: &Array2<f64>| {
            let mut t = Tape::new();
            let v = t.leaf(x.clone());
            let out = build(&mut t, v);
            t.scalar_value(out)
        };
        let mut t = Tape::new();
        let v = t.leaf(x.clone());
        let out = build(&mut t, v);
        let g = t.backward(out);
        let analytic = g.get(v).unwrap();
        let num = numeric(&x, &f);
        for (a, n) in analytic.iter().zip(num.iter()) {
            assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "{analytic} vs {num}");
        }
    }

    #[test]
    fn elementwise_ops() {
        let x = array![[0.3, -0.7], [1.1, 0.2]];
        check(x.clone(), &|t, v| {
            let a = t.tanh(v);
            let b = t.sigmoid(a);
            let c = t.softplus(b);
            let d = t.mul(c, v);
            t.sum(d)
        });
        check(x.mapv(|a: f64| a.abs() + 0.1), &|t, v| {
            let a = t.ln(v);
            let b = t.sqrt(v);
            let c = t.sub(a, b);
            t.sum(c)
        });
    }

    #[test]
    fn matrix_ops() {
        let x = array![[0.3, -0.7, 0.5], [1.1, 0.2, -0.4]];
        let w = array![[0.1, 0.2], [-0.3, 0.4], [0.5, 0.6]];
        check(x.clone(), &|t, v| {
            let wv = t.leaf(w.clone());
            let a = t.matmul(v, wv);
            let b = t.matmul_t(a, a);
            let m = t.mean_rows(b);
            let r = t.row_sum(m);
            t.sum(r)
        });
        check(x.clone(), &|t, v| {
            let g = t.gather_rows(v, Arc::new(vec![1, 0, 1]));
            let c = t.concat_cols(&[g, g]);
            let s = t.slice_cols(c, 1, 4);
            let rows = t.concat_rows(&[s, s]);
            let q = t.tanh(rows);
            t.sum(q)
        });
    }

    #[test]
    fn scalar_ops() {
        check(array![[0.7]], &|t, v| {
            let m = t.leaf(array![[1.0, 2.0], [3.0, 4.0]]);
            let a = t.scale_var(m, v);
            let b = t.tanh(a);
            t.sum(b)
        });
        check(array![[-0.4]], &|t, v| t.bce_with_logit(v, 1.0));
        check(array![[2.0]], &|t, v| t.bce_with_logit(v, 0.0));
    }

    #[test]
    fn clamp_logit_softmax_segment() {
        check(array![[0.2], [0.6], [0.9]], &|t, v| {
            let c = t.clamp(v, 1e-6, 1.0 - 1e-6);
            let l = t.logit(c);
            let s = t.scale(l, 0.5);
            let q = t.sigmoid(s);
            let sm = t.softmax(q);
            let w = t.leaf(array![[1.0], [2.0], [3.0]]);
            let p = t.mul(sm, w);
            t.sum(p)
        });
        check(array![[0.2], [0.6], [0.9], [0.1]], &|t, v| {
            let m = t.segment_max(v, vec![0, 0, 1, 1], 2);
            let sq = t.mul(m, m);
            t.sum(sq)
        });
    }

    #[test]
    fn sparse_motif_ops_and_gram() {
        let inst = Arc::new(vec![
            PatternInstance {
                entries: [0, 1, 2, 3, 4, 5],
                arcs: vec![0, 1],
                multiplicity: 2.0,
            },
            PatternInstance {
                entries: [2, 3, 4, 5, 6, 7],
                arcs: vec![1, 2, 3],
                multiplicity: 1.0,
            },
        ]);
        check(array![[0.3], [0.8], [0.5], [0.9]], &|t, v| {
            let w = t.motif_weights(v, 8, inst.clone());
            let c = t.leaf(Array2::from_shape_fn((8, 1), |(i, _)| i as f64 * 0.1 - 0.3));
            let p = t.mul(w, c);
            t.sum(p)
        });
        let entries: Entries = Arc::new(vec![(0, 1), (1, 0), (2, 2), (1, 2), (1, 2)]);
        let h = array![[0.3, -0.2], [0.8, 0.1], [-0.5, 0.7]];
        check(array![[0.3], [0.8], [0.5], [-0.4], [1.2]], &|t, v| {
            let hv = t.leaf(h.clone());
            let out = t.spmm(v, entries.clone(), hv);
            let q = t.tanh(out);
            t.sum(q)
        });
        check(h.clone(), &|t, v| {
            let w = t.leaf(array![[0.3], [0.8], [0.5], [-0.4], [1.2]]);
            let out = t.spmm(w, entries.clone(), v);
            let q = t.tanh(out);
            t.sum(q)
        });
        let mut t = Tape::new();
        let w = t.leaf(array![[2.0], [3.0]]);
        let hv = t.leaf(array![[1.0], [10.0]]);
        let out = t.spmm(w, Arc::new(vec![(0, 1), (0, 1)]), hv);
        assert_eq!(t.value(out), &array![[50.0], [0.0]]);
        check(array![[0.3, 0.8, -0.5], [0.9, 0.1, 0.4]], &|t, v| t.gram_det(v));
        check(array![[0.3, 0.8, -0.5]], &|t, v| t.gram_det(v));
        // Rank-deficient Gram: gradient still defined through the cofactors.
        check(array![[1.0, 0.0], [1.0, 0.0]], &|t, v| t.gram_det(v));
    }
}
