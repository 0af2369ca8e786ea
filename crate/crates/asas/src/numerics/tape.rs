//! Reverse-mode autodiff over a record-and-replay tape.
//!
//! Ops are recorded in forward order with eagerly computed values; the
//! backward pass walks the tape in reverse, which is a reverse topological
//! order because an op may only reference earlier nodes. Each node is
//! visited exactly once.

use std::sync::Arc;

use crate::numerics::tensor::{softmax_unchecked, Tensor};
use crate::numerics::Scalar;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Floor applied to probabilities before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

enum Op<S> {
    Leaf,
    /// out = a @ b, a: [m,k], b: [k,n]
    MatMul { a: Var, b: Var },
    /// out = a @ b^T, a: [m,k], b: [n,k]
    MatMulTB { a: Var, b: Var },
    /// out = m @ v, m: [r,c], v: [c]
    MatVec { m: Var, v: Var },
    /// out = a . b (scalar)
    Dot { a: Var, b: Var },
    /// out = m^T w = sum_i w[i] * m[i,:], m: [L,d], w: [L]
    WeightedSumRows { m: Var, w: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    /// out[i,:] = m[i,:] + v
    AddRowBroadcast { m: Var, v: Var },
    /// out[i,:] = m[i,:] + v[i]
    AddPerRowScalar { m: Var, v: Var },
    /// out = v * s (s a scalar node)
    ScaleByScalar { v: Var, s: Var },
    /// out = x .* mask (mask is constant; dropout etc.)
    MulMask { x: Var, mask: Vec<S> },
    Sigmoid { x: Var },
    Tanh { x: Var },
    /// 1-D softmax, max-subtracted
    Softmax { x: Var },
    /// out = min(a, b) elementwise; ties route the gradient to `a`
    MinElem { a: Var, b: Var },
    /// row-wise max over columns: [m,n] -> [m]
    MaxOverCols { m: Var, argmax: Vec<usize> },
    /// column-wise max over rows: [m,n] -> [n]
    MaxOverRows { m: Var, argmax: Vec<usize> },
    /// mean of rows 0..valid: [L,d] -> [d]
    MeanRows { m: Var, valid: usize },
    SumVec { x: Var },
    Concat { parts: Vec<Var> },
    Slice { x: Var, start: usize, len: usize },
    /// k vectors of width d stacked into [k,d]
    StackRows { rows: Vec<Var> },
    /// row i of a matrix: [L,d] -> [d]
    RowOf { m: Var, i: usize },
    /// table rows gathered by id: [V,d] -> [ids.len(),d]
    EmbedRows { table: Var, ids: Vec<usize> },
    /// single table row: [V,d] -> [d]
    EmbedRow { table: Var, id: usize },
    /// Mix of a vocabulary distribution and copy attention over the
    /// extended vocabulary: out[w] = pg*pv[w] (w < |V|), plus
    /// (1-pg)*attn[i] scattered onto ext_ids[i].
    PointerMix { p_vocab: Var, attn: Var, p_gen: Var, ext_ids: Vec<usize> },
    /// out = -ln(max(v[idx], LOG_CLAMP)) (scalar)
    PickNegLog { v: Var, idx: usize },
    /// out = sum_k coeffs[k] * xs[k] over scalar nodes
    AffineScalars { xs: Vec<Var>, coeffs: Vec<S> },
}

struct Node<S> {
    value: Arc<Tensor<S>>,
    op: Op<S>,
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

/// Per-node gradient buffers produced by `Tape::backward`.
pub struct Gradients<S> {
    by_node: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of the loss w.r.t. a node. A node the loss does not
    /// reach has a zero gradient, returned as `None` here.
    pub fn get(&self, v: Var) -> Option<&[S]> {
        self.by_node[v.0].as_deref()
    }

    /// Gradient as an owned dense buffer, zeros when disconnected.
    pub fn dense(&self, v: Var, numel: usize) -> Vec<S> {
        match &self.by_node[v.0] {
            Some(g) => g.clone(),
            None => vec![S::zero(); numel],
        }
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1-element node.
    pub fn scalar_value(&self, v: Var) -> S {
        let t = self.value(v);
        assert!(t.is_scalar_shape(), "scalar_value on shape {:?}", t.shape());
        t.data()[0]
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Var {
        debug_assert!(
            value.data().iter().all(|v| v.is_finite()),
            "non-finite value produced by tape op"
        );
        self.nodes.push(Node { value: Arc::new(value), op });
        Var(self.nodes.len() - 1)
    }

    /// Register an input or parameter tensor. Leaves are shared, not copied.
    pub fn leaf(&mut self, t: Arc<Tensor<S>>) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf_owned(&mut self, t: Tensor<S>) -> Var {
        self.leaf(Arc::new(t))
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Var {
        self.leaf_owned(Tensor::zeros(shape))
    }

    // ── op constructors ──────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = ta.data()[i * k + p];
                for j in 0..n {
                    out[i * n + j] += aip * tb.data()[p * n + j];
                }
            }
        }
        self.push(Tensor::new(vec![m, n], out), Op::MatMul { a, b })
    }

    pub fn matmul_tb(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        let (n, k2) = (tb.rows(), tb.cols());
        assert_eq!(k, k2, "matmul_tb inner dims {k} vs {k2}");
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = S::zero();
                for p in 0..k {
                    acc += ta.data()[i * k + p] * tb.data()[j * k + p];
                }
                out[i * n + j] = acc;
            }
        }
        self.push(Tensor::new(vec![m, n], out), Op::MatMulTB { a, b })
    }

    pub fn matvec(&mut self, m: Var, v: Var) -> Var {
        let (tm, tv) = (self.value(m), self.value(v));
        let (r, c) = (tm.rows(), tm.cols());
        assert_eq!(c, tv.numel(), "matvec dims [{r},{c}] x [{}]", tv.numel());
        let mut out = vec![S::zero(); r];
        for i in 0..r {
            let mut acc = S::zero();
            for j in 0..c {
                acc += tm.data()[i * c + j] * tv.data()[j];
            }
            out[i] = acc;
        }
        self.push(Tensor::vector(out), Op::MatVec { m, v })
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.numel(), tb.numel(), "dot length mismatch");
        let mut acc = S::zero();
        for (x, y) in ta.data().iter().zip(tb.data()) {
            acc += *x * *y;
        }
        self.push(Tensor::scalar(acc), Op::Dot { a, b })
    }

    pub fn weighted_sum_rows(&mut self, m: Var, w: Var) -> Var {
        let (tm, tw) = (self.value(m), self.value(w));
        let (rows, d) = (tm.rows(), tm.cols());
        assert_eq!(rows, tw.numel(), "weighted_sum_rows: {rows} rows vs {} weights", tw.numel());
        let mut out = vec![S::zero(); d];
        for i in 0..rows {
            let wi = tw.data()[i];
            for j in 0..d {
                out[j] += wi * tm.data()[i * d + j];
            }
        }
        self.push(Tensor::vector(out), Op::WeightedSumRows { m, w })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| *x + *y).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::Add { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| *x * *y).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::Mul { a, b })
    }

    pub fn add_row_broadcast(&mut self, m: Var, v: Var) -> Var {
        let (tm, tv) = (self.value(m), self.value(v));
        let (rows, d) = (tm.rows(), tm.cols());
        assert_eq!(d, tv.numel(), "add_row_broadcast width {d} vs {}", tv.numel());
        let mut data = tm.data().to_vec();
        for i in 0..rows {
            for j in 0..d {
                data[i * d + j] += tv.data()[j];
            }
        }
        self.push(Tensor::new(vec![rows, d], data), Op::AddRowBroadcast { m, v })
    }

    pub fn add_per_row_scalar(&mut self, m: Var, v: Var) -> Var {
        let (tm, tv) = (self.value(m), self.value(v));
        let (rows, d) = (tm.rows(), tm.cols());
        assert_eq!(rows, tv.numel(), "add_per_row_scalar rows {rows} vs {}", tv.numel());
        let mut data = tm.data().to_vec();
        for i in 0..rows {
            let vi = tv.data()[i];
            for j in 0..d {
                data[i * d + j] += vi;
            }
        }
        self.push(Tensor::new(vec![rows, d], data), Op::AddPerRowScalar { m, v })
    }

    pub fn scale_by_scalar(&mut self, v: Var, s: Var) -> Var {
        let sv = self.scalar_value(s);
        let tv = self.value(v);
        let data = tv.data().iter().map(|&x| x * sv).collect();
        let shape = tv.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::ScaleByScalar { v, s })
    }

    pub fn mul_mask(&mut self, x: Var, mask: Vec<S>) -> Var {
        let tx = self.value(x);
        assert_eq!(tx.numel(), mask.len(), "mul_mask length mismatch");
        let data = tx.data().iter().zip(&mask).map(|(v, m)| *v * *m).collect();
        let shape = tx.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::MulMask { x, mask })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let one = S::one();
        let data = tx.data().iter().map(|&v| one / (one + (-v).exp())).collect();
        let shape = tx.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v.tanh()).collect();
        let shape = tx.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::Tanh { x })
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        assert!(tx.numel() > 0, "softmax of empty vector");
        let data = softmax_unchecked(tx.data());
        self.push(Tensor::vector(data), Op::Softmax { x })
    }

    pub fn min_elem(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "min_elem shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x.min(*y)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::MinElem { a, b })
    }

    pub fn max_over_cols(&mut self, m: Var) -> Var {
        let tm = self.value(m);
        let (rows, cols) = (tm.rows(), tm.cols());
        assert!(cols > 0, "max_over_cols on empty rows");
        let mut out = Vec::with_capacity(rows);
        let mut argmax = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = tm.row(i);
            let (mut best, mut bj) = (row[0], 0usize);
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > best {
                    best = v;
                    bj = j;
                }
            }
            out.push(best);
            argmax.push(bj);
        }
        self.push(Tensor::vector(out), Op::MaxOverCols { m, argmax })
    }

    pub fn max_over_rows(&mut self, m: Var) -> Var {
        let tm = self.value(m);
        let (rows, cols) = (tm.rows(), tm.cols());
        assert!(rows > 0, "max_over_rows on empty columns");
        let mut out = Vec::with_capacity(cols);
        let mut argmax = Vec::with_capacity(cols);
        for j in 0..cols {
            let (mut best, mut bi) = (tm.data()[j], 0usize);
            for i in 1..rows {
                let v = tm.data()[i * cols + j];
                if v > best {
                    best = v;
                    bi = i;
                }
            }
            out.push(best);
            argmax.push(bi);
        }
        self.push(Tensor::vector(out), Op::MaxOverRows { m, argmax })
    }

    pub fn mean_rows(&mut self, m: Var, valid: usize) -> Var {
        let tm = self.value(m);
        let (rows, d) = (tm.rows(), tm.cols());
        assert!(valid >= 1 && valid <= rows, "mean_rows valid {valid} of {rows}");
        let inv = S::one() / S::c(valid as f64);
        let mut out = vec![S::zero(); d];
        for i in 0..valid {
            for j in 0..d {
                out[j] += tm.data()[i * d + j];
            }
        }
        for v in out.iter_mut() {
            *v = *v * inv;
        }
        self.push(Tensor::vector(out), Op::MeanRows { m, valid })
    }

    pub fn sum_vec(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let mut acc = S::zero();
        for v in tx.data() {
            acc += *v;
        }
        self.push(Tensor::scalar(acc), Op::SumVec { x })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        self.push(Tensor::vector(data), Op::Concat { parts: parts.to_vec() })
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let tx = self.value(x);
        assert!(start + len <= tx.numel(), "slice out of range");
        let data = tx.data()[start..start + len].to_vec();
        self.push(Tensor::vector(data), Op::Slice { x, start, len })
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack_rows of nothing");
        let d = self.value(rows[0]).numel();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let t = self.value(r);
            assert_eq!(t.numel(), d, "stack_rows ragged width");
            data.extend_from_slice(t.data());
        }
        self.push(Tensor::new(vec![rows.len(), d], data), Op::StackRows { rows: rows.to_vec() })
    }

    pub fn row_of(&mut self, m: Var, i: usize) -> Var {
        let tm = self.value(m);
        assert!(i < tm.rows(), "row_of index {i} of {}", tm.rows());
        let data = tm.row(i).to_vec();
        self.push(Tensor::vector(data), Op::RowOf { m, i })
    }

    pub fn embed_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let tt = self.value(table);
        let (v, d) = (tt.rows(), tt.cols());
        assert!(!ids.is_empty(), "embed_rows with no ids");
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < v, "token id {id} out of vocabulary {v}");
            data.extend_from_slice(tt.row(id));
        }
        self.push(
            Tensor::new(vec![ids.len(), d], data),
            Op::EmbedRows { table, ids: ids.to_vec() },
        )
    }

    pub fn embed_row(&mut self, table: Var, id: usize) -> Var {
        let tt = self.value(table);
        assert!(id < tt.rows(), "token id {id} out of vocabulary {}", tt.rows());
        let data = tt.row(id).to_vec();
        self.push(Tensor::vector(data), Op::EmbedRow { table, id })
    }

    pub fn pointer_mix(
        &mut self,
        p_vocab: Var,
        attn: Var,
        p_gen: Var,
        ext_ids: &[usize],
        ext_total: usize,
    ) -> Var {
        let pv = self.value(p_vocab);
        let at = self.value(attn);
        let vsize = pv.numel();
        assert_eq!(at.numel(), ext_ids.len(), "pointer_mix attention/source length mismatch");
        assert!(ext_total >= vsize, "extended size {ext_total} < vocabulary {vsize}");
        assert!(
            ext_ids.iter().all(|&id| id < ext_total),
            "extended id out of range {ext_total}"
        );
        let pg = self.scalar_value(p_gen);
        let copy = S::one() - pg;
        let mut out = vec![S::zero(); ext_total];
        for (o, &p) in out.iter_mut().zip(pv.data()) {
            *o = pg * p;
        }
        for (i, &id) in ext_ids.iter().enumerate() {
            out[id] += copy * at.data()[i];
        }
        self.push(
            Tensor::vector(out),
            Op::PointerMix { p_vocab, attn, p_gen, ext_ids: ext_ids.to_vec() },
        )
    }

    pub fn pick_neg_log(&mut self, v: Var, idx: usize) -> Var {
        let tv = self.value(v);
        assert!(idx < tv.numel(), "pick_neg_log index {idx} of {}", tv.numel());
        let clamp = S::c(LOG_CLAMP);
        let val = tv.data()[idx].max(clamp);
        self.push(Tensor::scalar(-val.ln()), Op::PickNegLog { v, idx })
    }

    pub fn affine_scalars(&mut self, terms: &[(Var, S)]) -> Var {
        assert!(!terms.is_empty(), "affine_scalars of nothing");
        let mut acc = S::zero();
        for &(v, c) in terms {
            acc += self.scalar_value(v) * c;
        }
        let (xs, coeffs) = terms.iter().cloned().unzip();
        self.push(Tensor::scalar(acc), Op::AffineScalars { xs, coeffs })
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Every reachable node receives a
    /// gradient buffer; unreachable nodes (e.g. parameters the loss does
    /// not depend on) are left at zero.
    pub fn backward(&self, loss: Var) -> Gradients<S> {
        assert!(
            self.value(loss).is_scalar_shape(),
            "backward requires a scalar loss, got shape {:?}",
            self.value(loss).shape()
        );
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(d_out) = grads[idx].take() else { continue };
            self.backward_op(idx, &d_out, &mut grads);
            grads[idx] = Some(d_out);
        }
        Gradients { by_node: grads }
    }

    fn accum(grads: &mut [Option<Vec<S>>], v: Var, numel: usize, f: impl FnOnce(&mut [S])) {
        let slot = grads[v.0].get_or_insert_with(|| vec![S::zero(); numel]);
        f(slot);
    }

    fn backward_op(&self, idx: usize, d_out: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}

            Op::MatMul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.rows(), ta.cols());
                let n = tb.cols();
                Self::accum(grads, *a, m * k, |da| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = S::zero();
                            for j in 0..n {
                                acc += d_out[i * n + j] * tb.data()[p * n + j];
                            }
                            da[i * k + p] += acc;
                        }
                    }
                });
                Self::accum(grads, *b, k * n, |db| {
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = S::zero();
                            for i in 0..m {
                                acc += ta.data()[i * k + p] * d_out[i * n + j];
                            }
                            db[p * n + j] += acc;
                        }
                    }
                });
            }

            Op::MatMulTB { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.rows(), ta.cols());
                let n = tb.rows();
                // out[i,j] = sum_p a[i,p] b[j,p]
                Self::accum(grads, *a, m * k, |da| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = S::zero();
                            for j in 0..n {
                                acc += d_out[i * n + j] * tb.data()[j * k + p];
                            }
                            da[i * k + p] += acc;
                        }
                    }
                });
                Self::accum(grads, *b, n * k, |db| {
                    for j in 0..n {
                        for p in 0..k {
                            let mut acc = S::zero();
                            for i in 0..m {
                                acc += d_out[i * n + j] * ta.data()[i * k + p];
                            }
                            db[j * k + p] += acc;
                        }
                    }
                });
            }

            Op::MatVec { m, v } => {
                let (tm, tv) = (self.value(*m), self.value(*v));
                let (r, c) = (tm.rows(), tm.cols());
                Self::accum(grads, *m, r * c, |dm| {
                    for i in 0..r {
                        for j in 0..c {
                            dm[i * c + j] += d_out[i] * tv.data()[j];
                        }
                    }
                });
                Self::accum(grads, *v, c, |dv| {
                    for i in 0..r {
                        for j in 0..c {
                            dv[j] += tm.data()[i * c + j] * d_out[i];
                        }
                    }
                });
            }

            Op::Dot { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let d = d_out[0];
                Self::accum(grads, *a, ta.numel(), |da| {
                    for (g, y) in da.iter_mut().zip(tb.data()) {
                        *g += d * *y;
                    }
                });
                Self::accum(grads, *b, tb.numel(), |db| {
                    for (g, x) in db.iter_mut().zip(ta.data()) {
                        *g += d * *x;
                    }
                });
            }

            Op::WeightedSumRows { m, w } => {
                let (tm, tw) = (self.value(*m), self.value(*w));
                let (rows, d) = (tm.rows(), tm.cols());
                Self::accum(grads, *m, rows * d, |dm| {
                    for i in 0..rows {
                        let wi = tw.data()[i];
                        for j in 0..d {
                            dm[i * d + j] += wi * d_out[j];
                        }
                    }
                });
                Self::accum(grads, *w, rows, |dw| {
                    for i in 0..rows {
                        let mut acc = S::zero();
                        for j in 0..d {
                            acc += tm.data()[i * d + j] * d_out[j];
                        }
                        dw[i] += acc;
                    }
                });
            }

            Op::Add { a, b } => {
                let n = d_out.len();
                Self::accum(grads, *a, n, |da| {
                    for (g, d) in da.iter_mut().zip(d_out) {
                        *g += *d;
                    }
                });
                Self::accum(grads, *b, n, |db| {
                    for (g, d) in db.iter_mut().zip(d_out) {
                        *g += *d;
                    }
                });
            }

            Op::Mul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let n = d_out.len();
                Self::accum(grads, *a, n, |da| {
                    for i in 0..n {
                        da[i] += d_out[i] * tb.data()[i];
                    }
                });
                Self::accum(grads, *b, n, |db| {
                    for i in 0..n {
                        db[i] += d_out[i] * ta.data()[i];
                    }
                });
            }

            Op::AddRowBroadcast { m, v } => {
                let tm = self.value(*m);
                let (rows, d) = (tm.rows(), tm.cols());
                Self::accum(grads, *m, rows * d, |dm| {
                    for (g, dd) in dm.iter_mut().zip(d_out) {
                        *g += *dd;
                    }
                });
                Self::accum(grads, *v, d, |dv| {
                    for i in 0..rows {
                        for j in 0..d {
                            dv[j] += d_out[i * d + j];
                        }
                    }
                });
            }

            Op::AddPerRowScalar { m, v } => {
                let tm = self.value(*m);
                let (rows, d) = (tm.rows(), tm.cols());
                Self::accum(grads, *m, rows * d, |dm| {
                    for (g, dd) in dm.iter_mut().zip(d_out) {
                        *g += *dd;
                    }
                });
                Self::accum(grads, *v, rows, |dv| {
                    for i in 0..rows {
                        let mut acc = S::zero();
                        for j in 0..d {
                            acc += d_out[i * d + j];
                        }
                        dv[i] += acc;
                    }
                });
            }

            Op::ScaleByScalar { v, s } => {
                let (tv, sv) = (self.value(*v), self.scalar_value(*s));
                let n = tv.numel();
                Self::accum(grads, *v, n, |dv| {
                    for i in 0..n {
                        dv[i] += sv * d_out[i];
                    }
                });
                Self::accum(grads, *s, 1, |ds| {
                    let mut acc = S::zero();
                    for i in 0..n {
                        acc += tv.data()[i] * d_out[i];
                    }
                    ds[0] += acc;
                });
            }

            Op::MulMask { x, mask } => {
                Self::accum(grads, *x, mask.len(), |dx| {
                    for i in 0..mask.len() {
                        dx[i] += mask[i] * d_out[i];
                    }
                });
            }

            Op::Sigmoid { x } => {
                let y = &node.value;
                Self::accum(grads, *x, y.numel(), |dx| {
                    for (i, g) in dx.iter_mut().enumerate() {
                        let yi = y.data()[i];
                        *g += d_out[i] * yi * (S::one() - yi);
                    }
                });
            }

            Op::Tanh { x } => {
                let y = &node.value;
                Self::accum(grads, *x, y.numel(), |dx| {
                    for (i, g) in dx.iter_mut().enumerate() {
                        let yi = y.data()[i];
                        *g += d_out[i] * (S::one() - yi * yi);
                    }
                });
            }

            Op::Softmax { x } => {
                let y = &node.value;
                let n = y.numel();
                let mut inner = S::zero();
                for i in 0..n {
                    inner += d_out[i] * y.data()[i];
                }
                Self::accum(grads, *x, n, |dx| {
                    for i in 0..n {
                        dx[i] += y.data()[i] * (d_out[i] - inner);
                    }
                });
            }

            Op::MinElem { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let n = d_out.len();
                Self::accum(grads, *a, n, |da| {
                    for i in 0..n {
                        if ta.data()[i] <= tb.data()[i] {
                            da[i] += d_out[i];
                        }
                    }
                });
                Self::accum(grads, *b, n, |db| {
                    for i in 0..n {
                        if tb.data()[i] < ta.data()[i] {
                            db[i] += d_out[i];
                        }
                    }
                });
            }

            Op::MaxOverCols { m, argmax } => {
                let tm = self.value(*m);
                let (rows, cols) = (tm.rows(), tm.cols());
                Self::accum(grads, *m, rows * cols, |dm| {
                    for (i, &j) in argmax.iter().enumerate() {
                        dm[i * cols + j] += d_out[i];
                    }
                });
            }

            Op::MaxOverRows { m, argmax } => {
                let tm = self.value(*m);
                let (rows, cols) = (tm.rows(), tm.cols());
                Self::accum(grads, *m, rows * cols, |dm| {
                    for (j, &i) in argmax.iter().enumerate() {
                        dm[i * cols + j] += d_out[j];
                    }
                });
            }

            Op::MeanRows { m, valid } => {
                let tm = self.value(*m);
                let (rows, d) = (tm.rows(), tm.cols());
                let inv = S::one() / S::c(*valid as f64);
                Self::accum(grads, *m, rows * d, |dm| {
                    for i in 0..*valid {
                        for j in 0..d {
                            dm[i * d + j] += d_out[j] * inv;
                        }
                    }
                });
            }

            Op::SumVec { x } => {
                let n = self.value(*x).numel();
                let d = d_out[0];
                Self::accum(grads, *x, n, |dx| {
                    for g in dx.iter_mut() {
                        *g += d;
                    }
                });
            }

            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    Self::accum(grads, p, n, |dp| {
                        for i in 0..n {
                            dp[i] += d_out[offset + i];
                        }
                    });
                    offset += n;
                }
            }

            Op::Slice { x, start, len } => {
                let n = self.value(*x).numel();
                Self::accum(grads, *x, n, |dx| {
                    for i in 0..*len {
                        dx[start + i] += d_out[i];
                    }
                });
            }

            Op::StackRows { rows } => {
                let d = self.value(rows[0]).numel();
                for (i, &r) in rows.iter().enumerate() {
                    Self::accum(grads, r, d, |dr| {
                        for j in 0..d {
                            dr[j] += d_out[i * d + j];
                        }
                    });
                }
            }

            Op::RowOf { m, i } => {
                let tm = self.value(*m);
                let (rows, d) = (tm.rows(), tm.cols());
                Self::accum(grads, *m, rows * d, |dm| {
                    for j in 0..d {
                        dm[i * d + j] += d_out[j];
                    }
                });
            }

            Op::EmbedRows { table, ids } => {
                let tt = self.value(*table);
                let (v, d) = (tt.rows(), tt.cols());
                Self::accum(grads, *table, v * d, |dt| {
                    for (t, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            dt[id * d + j] += d_out[t * d + j];
                        }
                    }
                });
            }

            Op::EmbedRow { table, id } => {
                let tt = self.value(*table);
                let (v, d) = (tt.rows(), tt.cols());
                Self::accum(grads, *table, v * d, |dt| {
                    for j in 0..d {
                        dt[id * d + j] += d_out[j];
                    }
                });
            }

            Op::PointerMix { p_vocab, attn, p_gen, ext_ids } => {
                let pv = self.value(*p_vocab);
                let at = self.value(*attn);
                let pg = self.scalar_value(*p_gen);
                let copy = S::one() - pg;
                let vsize = pv.numel();
                Self::accum(grads, *p_vocab, vsize, |dpv| {
                    for i in 0..vsize {
                        dpv[i] += pg * d_out[i];
                    }
                });
                Self::accum(grads, *attn, at.numel(), |dat| {
                    for (i, &id) in ext_ids.iter().enumerate() {
                        dat[i] += copy * d_out[id];
                    }
                });
                Self::accum(grads, *p_gen, 1, |dpg| {
                    let mut acc = S::zero();
                    for i in 0..vsize {
                        acc += pv.data()[i] * d_out[i];
                    }
                    for (i, &id) in ext_ids.iter().enumerate() {
                        acc += -at.data()[i] * d_out[id];
                    }
                    dpg[0] += acc;
                });
            }

            Op::PickNegLog { v, idx } => {
                let tv = self.value(*v);
                let val = tv.data()[*idx];
                let clamp = S::c(LOG_CLAMP);
                let n = tv.numel();
                Self::accum(grads, *v, n, |dv| {
                    if val > clamp {
                        dv[*idx] += -d_out[0] / val;
                    }
                    // below the clamp the output is constant, so no gradient
                });
            }

            Op::AffineScalars { xs, coeffs } => {
                for (&x, &c) in xs.iter().zip(coeffs) {
                    Self::accum(grads, x, 1, |dx| {
                        dx[0] += c * d_out[0];
                    });
                }
            }
        }
    }
}
