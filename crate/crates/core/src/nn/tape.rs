//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a scalar node propagates gradients back through the
//! recorded graph and accumulates them into the [`ParamStore`] the parameters
//! were read from.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;

use rand::Rng;

use super::{Matrix, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    ParamRows(ParamId, Vec<usize>),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulConst(Var, Matrix),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    GroupMean(Var, Vec<Vec<usize>>),
    SpanAttention {
        states: Var,
        scores: Var,
        spans: Vec<(usize, usize)>,
        weights: Vec<Vec<f64>>,
    },
    SoftmaxNll {
        logits: Var,
        targets: Vec<usize>,
        probs: Matrix,
    },
    SumScalars(Vec<Var>),
    /// Scalar-valued function whose gradient w.r.t. its input was computed
    /// during the forward pass.
    Precomputed(Var, Matrix),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<HashMap<ParamId, Var>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Matrix, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Matrix> {
        Ref::map(self.nodes.borrow(), |nodes| &nodes[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.shape()
    }

    pub fn constant(&self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Reads a parameter into the tape. Repeated reads share one node.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.borrow().get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.params.borrow_mut().insert(id, v);
        v
    }

    /// Embedding lookup: selected rows of a parameter matrix.
    pub fn param_rows(&self, store: &ParamStore, id: ParamId, rows: &[usize]) -> Var {
        let table = store.value(id);
        let mut out = Matrix::zeros(rows.len(), table.cols());
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(table.row(r));
        }
        self.push(out, Op::ParamRows(id, rows.to_vec()))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.matmul(&nodes[b.0].value)
        };
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.zip_map(&nodes[b.0].value, |x, y| x + y)
        };
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.zip_map(&nodes[b.0].value, |x, y| x - y)
        };
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.zip_map(&nodes[b.0].value, |x, y| x * y)
        };
        self.push(value, Op::Mul(a, b))
    }

    /// Adds a `1 × c` row vector to every row of an `r × c` matrix.
    pub fn add_row(&self, a: Var, row: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let (m, r) = (&nodes[a.0].value, &nodes[row.0].value);
            assert_eq!(r.rows(), 1, "add_row expects a row vector");
            assert_eq!(m.cols(), r.cols(), "add_row width mismatch");
            let mut out = m.clone();
            for i in 0..out.rows() {
                for (x, b) in out.row_mut(i).iter_mut().zip(r.row(0)) {
                    *x += b;
                }
            }
            out
        };
        self.push(value, Op::AddRow(a, row))
    }

    pub fn mul_const(&self, a: Var, factor: Matrix) -> Var {
        let value = self.nodes.borrow()[a.0]
            .value
            .zip_map(&factor, |x, y| x * y);
        self.push(value, Op::MulConst(a, factor))
    }

    /// Inverted dropout. A rate of zero returns the input unchanged.
    pub fn dropout(&self, a: Var, rate: f64, rng: &mut impl Rng) -> Var {
        if rate <= 0.0 {
            return a;
        }
        let (rows, cols) = self.shape(a);
        let keep = 1.0 - rate;
        let mask = (0..rows * cols)
            .map(|_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        self.mul_const(a, Matrix::from_vec(rows, cols, mask))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let rows = nodes[parts[0].0].value.rows();
            let cols: usize = parts.iter().map(|p| nodes[p.0].value.cols()).sum();
            let mut out = Matrix::zeros(rows, cols);
            for r in 0..rows {
                let mut offset = 0;
                let dst = out.row_mut(r);
                for p in parts {
                    let src = &nodes[p.0].value;
                    assert_eq!(src.rows(), rows, "concat_cols row mismatch");
                    dst[offset..offset + src.cols()].copy_from_slice(src.row(r));
                    offset += src.cols();
                }
            }
            out
        };
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let cols = nodes[parts[0].0].value.cols();
            let mut data = Vec::new();
            let mut rows = 0;
            for p in parts {
                let src = &nodes[p.0].value;
                assert_eq!(src.cols(), cols, "concat_rows column mismatch");
                data.extend_from_slice(src.data());
                rows += src.rows();
            }
            Matrix::from_vec(rows, cols, data)
        };
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn gather_rows(&self, a: Var, rows: &[usize]) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let src = &nodes[a.0].value;
            let mut out = Matrix::zeros(rows.len(), src.cols());
            for (i, &r) in rows.iter().enumerate() {
                out.row_mut(i).copy_from_slice(src.row(r));
            }
            out
        };
        self.push(value, Op::GatherRows(a, rows.to_vec()))
    }

    pub fn slice_cols(&self, a: Var, start: usize, width: usize) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let src = &nodes[a.0].value;
            assert!(start + width <= src.cols(), "slice_cols out of range");
            let mut out = Matrix::zeros(src.rows(), width);
            for r in 0..src.rows() {
                out.row_mut(r)
                    .copy_from_slice(&src.row(r)[start..start + width]);
            }
            out
        };
        self.push(value, Op::SliceCols(a, start))
    }

    /// One output row per group: the mean of the listed input rows.
    pub fn group_mean(&self, a: Var, groups: &[Vec<usize>]) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let src = &nodes[a.0].value;
            let mut out = Matrix::zeros(groups.len(), src.cols());
            for (g, members) in groups.iter().enumerate() {
                assert!(!members.is_empty(), "empty group in group_mean");
                let scale = 1.0 / members.len() as f64;
                let dst = out.row_mut(g);
                for &m in members {
                    for (d, s) in dst.iter_mut().zip(src.row(m)) {
                        *d += s * scale;
                    }
                }
            }
            out
        };
        self.push(value, Op::GroupMean(a, groups.to_vec()))
    }

    /// Attention-pooled span vectors. `states` is `n × d`, `scores` is
    /// `n × 1`; each output row is the softmax(scores)-weighted sum of the
    /// state rows inside the closed interval `[start, end]`.
    pub fn span_attention(&self, states: Var, scores: Var, spans: &[(usize, usize)]) -> Var {
        let (value, weights) = {
            let nodes = self.nodes.borrow();
            let h = &nodes[states.0].value;
            let s = &nodes[scores.0].value;
            assert_eq!(s.cols(), 1, "span_attention scores must be a column");
            let mut out = Matrix::zeros(spans.len(), h.cols());
            let mut weights = Vec::with_capacity(spans.len());
            for (k, &(start, end)) in spans.iter().enumerate() {
                let local: Vec<f64> = (start..=end).map(|t| s.get(t, 0)).collect();
                let alpha = softmax(&local);
                let dst = out.row_mut(k);
                for (offset, &a) in alpha.iter().enumerate() {
                    for (d, x) in dst.iter_mut().zip(h.row(start + offset)) {
                        *d += a * x;
                    }
                }
                weights.push(alpha);
            }
            (out, weights)
        };
        self.push(
            value,
            Op::SpanAttention {
                states,
                scores,
                spans: spans.to_vec(),
                weights,
            },
        )
    }

    /// Attention weights recorded by a [`Tape::span_attention`] node.
    pub fn attention_weights(&self, v: Var) -> Option<Vec<Vec<f64>>> {
        match &self.nodes.borrow()[v.0].op {
            Op::SpanAttention { weights, .. } => Some(weights.clone()),
            _ => None,
        }
    }

    /// Summed negative log-likelihood of `targets` under a row-wise softmax
    /// of `logits`. `mask`, when present, is row-major over the logits and
    /// marks the admissible classes of each row; inadmissible classes get
    /// zero probability and the softmax renormalises over the rest.
    pub fn softmax_nll(&self, logits: Var, targets: &[usize], mask: Option<&[bool]>) -> Var {
        let (loss, probs) = {
            let nodes = self.nodes.borrow();
            let z = &nodes[logits.0].value;
            assert_eq!(z.rows(), targets.len(), "one target per logit row");
            if let Some(m) = mask {
                assert_eq!(m.len(), z.len(), "mask shape mismatch");
            }
            let mut probs = Matrix::zeros(z.rows(), z.cols());
            let mut loss = 0.0;
            for (r, &t) in targets.iter().enumerate() {
                let row_mask = mask.map(|m| &m[r * z.cols()..(r + 1) * z.cols()]);
                let lp = log_softmax(z.row(r), row_mask);
                loss -= lp[t];
                for (p, l) in probs.row_mut(r).iter_mut().zip(&lp) {
                    *p = l.exp();
                }
            }
            (loss, probs)
        };
        self.push(
            Matrix::scalar(loss),
            Op::SoftmaxNll {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    pub fn sum_scalars(&self, parts: &[Var]) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            parts.iter().map(|p| nodes[p.0].value.item()).sum::<f64>()
        };
        self.push(Matrix::scalar(value), Op::SumScalars(parts.to_vec()))
    }

    /// Records a scalar `value = f(input)` whose gradient `∂f/∂input` is
    /// already known.
    pub fn precomputed(&self, input: Var, value: f64, grad: Matrix) -> Var {
        assert_eq!(
            self.shape(input),
            grad.shape(),
            "precomputed gradient shape"
        );
        self.push(Matrix::scalar(value), Op::Precomputed(input, grad))
    }

    /// Back-propagates from a scalar node, accumulating parameter gradients
    /// into `store`.
    pub fn backward(&self, output: Var, store: &mut ParamStore) {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[output.0].value.len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(Matrix::scalar(1.0));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        fn acc_with(
            grads: &mut [Option<Matrix>],
            v: Var,
            shape: (usize, usize),
            f: impl FnOnce(&mut Matrix),
        ) {
            let slot = grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1));
            f(slot);
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => store.grad_mut(*id).add_assign(&g),
                Op::ParamRows(id, rows) => {
                    let target = store.grad_mut(*id);
                    for (i, &r) in rows.iter().enumerate() {
                        for (d, s) in target.row_mut(r).iter_mut().zip(g.row(i)) {
                            *d += s;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    acc_with(&mut grads, *a, av.shape(), |ga| g.matmul_nt_into(bv, ga));
                    acc_with(&mut grads, *b, bv.shape(), |gb| av.matmul_tn_into(&g, gb));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|x| -x));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    acc(&mut grads, *a, g.zip_map(bv, |x, y| x * y));
                    acc(&mut grads, *b, g.zip_map(av, |x, y| x * y));
                }
                Op::AddRow(a, row) => {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, s) in gr.row_mut(0).iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, g);
                }
                Op::MulConst(a, factor) => acc(&mut grads, *a, g.zip_map(factor, |x, y| x * y)),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut grads, *a, g.zip_map(y, |x, s| x * s * (1.0 - s)));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut grads, *a, g.zip_map(y, |x, t| x * (1.0 - t * t)));
                }
                Op::Relu(a) => {
                    let inp = &nodes[a.0].value;
                    acc(
                        &mut grads,
                        *a,
                        g.zip_map(inp, |x, v| if v > 0.0 { x } else { 0.0 }),
                    );
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (rows, cols) = nodes[p.0].value.shape();
                        let mut gp = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            gp.row_mut(r)
                                .copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        acc(&mut grads, *p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (rows, cols) = nodes[p.0].value.shape();
                        let gp = Matrix::from_vec(
                            rows,
                            cols,
                            g.data()[offset * cols..(offset + rows) * cols].to_vec(),
                        );
                        offset += rows;
                        acc(&mut grads, *p, gp);
                    }
                }
                Op::GatherRows(a, rows) => {
                    let shape = nodes[a.0].value.shape();
                    acc_with(&mut grads, *a, shape, |ga| {
                        for (i, &r) in rows.iter().enumerate() {
                            for (d, s) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                                *d += s;
                            }
                        }
                    });
                }
                Op::SliceCols(a, start) => {
                    let shape = nodes[a.0].value.shape();
                    let width = g.cols();
                    acc_with(&mut grads, *a, shape, |ga| {
                        for r in 0..g.rows() {
                            for (d, s) in ga.row_mut(r)[*start..*start + width]
                                .iter_mut()
                                .zip(g.row(r))
                            {
                                *d += s;
                            }
                        }
                    });
                }
                Op::GroupMean(a, groups) => {
                    let shape = nodes[a.0].value.shape();
                    acc_with(&mut grads, *a, shape, |ga| {
                        for (gi, members) in groups.iter().enumerate() {
                            let scale = 1.0 / members.len() as f64;
                            for &m in members {
                                for (d, s) in ga.row_mut(m).iter_mut().zip(g.row(gi)) {
                                    *d += s * scale;
                                }
                            }
                        }
                    });
                }
                Op::SpanAttention {
                    states,
                    scores,
                    spans,
                    weights,
                } => {
                    let h = &nodes[states.0].value;
                    let mut gh = Matrix::zeros(h.rows(), h.cols());
                    let mut gs = Matrix::zeros(h.rows(), 1);
                    for (k, (&(start, _), alpha)) in spans.iter().zip(weights).enumerate() {
                        let gout = g.row(k);
                        let dalpha: Vec<f64> = (0..alpha.len())
                            .map(|o| dot(gout, h.row(start + o)))
                            .collect();
                        let mean: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
                        for (o, &a) in alpha.iter().enumerate() {
                            let t = start + o;
                            for (d, s) in gh.row_mut(t).iter_mut().zip(gout) {
                                *d += a * s;
                            }
                            let cur = gs.get(t, 0);
                            gs.set(t, 0, cur + a * (dalpha[o] - mean));
                        }
                    }
                    acc(&mut grads, *states, gh);
                    acc(&mut grads, *scores, gs);
                }
                Op::SoftmaxNll {
                    logits,
                    targets,
                    probs,
                } => {
                    let scale = g.item();
                    let mut gl = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        let cur = gl.get(r, t);
                        gl.set(r, t, cur - 1.0);
                    }
                    gl.scale_assign(scale);
                    acc(&mut grads, *logits, gl);
                }
                Op::SumScalars(parts) => {
                    for p in parts {
                        acc(&mut grads, *p, g.clone());
                    }
                }
                Op::Precomputed(a, local) => {
                    let scale = g.item();
                    acc(&mut grads, *a, local.map(|x| x * scale));
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    log_softmax(xs, None).into_iter().map(f64::exp).collect()
}

/// Log-softmax over the admissible entries of `xs`. Inadmissible entries
/// get `-inf`. With no admissible entry at all the mask is ignored.
pub fn log_softmax(xs: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let allowed = |i: usize| mask.is_none_or(|m| m[i]);
    let any = (0..xs.len()).any(allowed);
    let allowed = |i: usize| !any || allowed(i);
    let max = (0..xs.len())
        .filter(|&i| allowed(i))
        .map(|i| xs[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = (0..xs.len())
        .filter(|&i| allowed(i))
        .map(|i| (xs[i] - max).exp())
        .sum();
    let lse = max + sum.ln();
    (0..xs.len())
        .map(|i| {
            if allowed(i) {
                xs[i] - lse
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// Masked softmax; see [`log_softmax`].
pub fn masked_softmax(xs: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    log_softmax(xs, mask).into_iter().map(f64::exp).collect()
}

pub fn logsumexp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Head, ParamGroup};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Checks the analytic gradient of `f` w.r.t. every parameter against
    /// central differences.
    fn check_gradients(store: &mut ParamStore, f: impl Fn(&Tape, &ParamStore) -> Var) {
        store.zero_grads();
        let tape = Tape::new();
        let out = f(&tape, store);
        tape.backward(out, store);
        let eps = 1e-6;
        for id in store.ids().collect::<Vec<_>>() {
            let analytic = store.grad(id).clone();
            for i in 0..analytic.len() {
                let orig = store.value(id).data()[i];
                store.value_mut(id).data_mut()[i] = orig + eps;
                let plus = {
                    let t = Tape::new();
                    let v = f(&t, store);
                    let x = t.value(v).item();
                    x
                };
                store.value_mut(id).data_mut()[i] = orig - eps;
                let minus = {
                    let t = Tape::new();
                    let v = f(&t, store);
                    let x = t.value(v).item();
                    x
                };
                store.value_mut(id).data_mut()[i] = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                let a = analytic.data()[i];
                let denom = a.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (a - numeric).abs() / denom < 1e-5,
                    "param {} entry {i}: analytic {a} numeric {numeric}",
                    store.param(id).name
                );
            }
        }
    }

    fn random_store(shapes: &[(&str, usize, usize)], seed: u64) -> (ParamStore, Vec<ParamId>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let ids = shapes
            .iter()
            .map(|&(n, r, c)| {
                store.add(
                    n,
                    crate::nn::uniform(r, c, 1.0, &mut rng),
                    ParamGroup::Other,
                    Head::NodeType,
                )
            })
            .collect();
        (store, ids)
    }

    #[test]
    fn elementwise_and_matrix_ops_have_correct_gradients() {
        let (mut store, ids) =
            random_store(&[("x", 3, 4), ("w", 4, 2), ("b", 1, 2), ("y", 3, 2)], 1);
        check_gradients(&mut store, |t, s| {
            let x = t.param(s, ids[0]);
            let w = t.param(s, ids[1]);
            let b = t.param(s, ids[2]);
            let y = t.param(s, ids[3]);
            let h = t.add_row(t.matmul(x, w), b);
            let a = t.sigmoid(h);
            let c = t.tanh(t.sub(a, y));
            let d = t.mul(c, t.relu(t.add(h, y)));
            let cat = t.concat_cols(&[d, t.slice_cols(h, 1, 1)]);
            let stacked = t.concat_rows(&[cat, t.gather_rows(cat, &[2, 0])]);
            let pooled = t.group_mean(stacked, &[vec![0, 1], vec![4], vec![2, 3, 4]]);
            t.softmax_nll(pooled, &[1, 0, 2], None)
        });
    }

    #[test]
    fn span_attention_and_masked_nll_have_correct_gradients() {
        let (mut store, ids) = random_store(&[("h", 5, 3), ("s", 5, 1), ("emb", 4, 3)], 2);
        check_gradients(&mut store, |t, s| {
            let h = t.param(s, ids[0]);
            let sc = t.param(s, ids[1]);
            let spans = [(0, 0), (1, 3), (2, 4), (0, 4)];
            let att = t.span_attention(h, sc, &spans);
            let emb = t.param_rows(s, ids[2], &[0, 2, 2, 3]);
            let logits = t.add(att, emb);
            let mask = [
                true, true, true, //
                false, true, true, //
                true, false, false, //
                true, true, false,
            ];
            t.softmax_nll(logits, &[2, 1, 0, 1], Some(&mask))
        });
    }

    #[test]
    fn single_token_attention_returns_the_state() {
        let tape = Tape::new();
        let h = tape.constant(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let s = tape.constant(Matrix::from_vec(2, 1, vec![0.3, -5.0]));
        let out = tape.span_attention(h, s, &[(1, 1)]);
        assert_eq!(tape.value(out).row(0), &[3.0, 4.0]);
    }

    #[test]
    fn masked_softmax_zeroes_outside_mask() {
        let p = masked_softmax(&[5.0, 1.0, 2.0], Some(&[false, true, true]));
        assert_eq!(p[0], 0.0);
        assert!((p[1] + p[2] - 1.0).abs() < 1e-12);
        let uniform = masked_softmax(&[0.0; 8], None);
        assert!(uniform.iter().all(|&x| (x - 0.125).abs() < 1e-15));
    }
}
