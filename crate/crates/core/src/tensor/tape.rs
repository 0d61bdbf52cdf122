use super::cell::{self, ACTS};
use super::gemm::gemm_acc;
use super::math;
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Unary {
    Tanh,
    Sigmoid,
    Relu,
    Clamp { lo: f64, hi: f64 },
    Scale(f64),
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Broadcast {
    Same,
    LhsScalar,
    RhsScalar,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Matmul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    Unary {
        x: Var,
        kind: Unary,
    },
    Binary {
        a: Var,
        b: Var,
        kind: Binary,
        bcast: Broadcast,
    },
    Concat {
        a: Var,
        b: Var,
        axis: usize,
    },
    Select {
        x: Var,
        axis: usize,
        index: usize,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
    MinPairwise {
        a: Var,
        b: Var,
    },
    /// Per-row `[i, f, o, g, c', tanh(c')]` blocks kept for the reverse pass.
    LstmCell {
        z: Var,
        c: Var,
        acts: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Node ids grow monotonically, so every node's inputs precede it and a
/// single reverse sweep is a valid topological traversal.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of the gradient-bearing leaves after [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, or `None` when the loss
    /// does not depend on it (read: all zeros).
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn accumulate<'a>(grads: &'a mut [Option<Vec<f64>>], var: Var, len: usize) -> &'a mut [f64] {
    grads[var.0].get_or_insert_with(|| vec![0.0; len])
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

    /// Drops every recorded node; outstanding `Var`s become invalid.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a gradient-bearing leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn matrix_dims(&self, var: Var, op: &'static str) -> Result<(usize, usize)> {
        match *self.shape(var) {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::dim(op, s, &[0, 0])),
        }
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a[m×k] · b[n×k]ᵀ`, the layout used by linear layers.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (br, bc) = self.matrix_dims(b, "matmul")?;
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            trans_b,
            &mut out,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Tensor {
                shape: vec![m, n],
                data: out,
            },
            Op::Matmul { a, b, trans_b },
            rg,
        ))
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, n) = self.matrix_dims(x, "add_bias")?;
        if self.shape(bias) != [n] {
            return Err(Error::dim("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_exact_mut(n) {
            for (o, bj) in row.iter_mut().zip(b) {
                *o += bj;
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x, bias]);
        Ok(self.push(Tensor { shape, data: out }, Op::AddBias { x, bias }, rg))
    }

    fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let src = self.value(x);
        let data: Vec<f64> = match kind {
            Unary::Tanh => src.data().iter().map(|&v| math::tanh(v)).collect(),
            Unary::Sigmoid => src.data().iter().map(|&v| math::sigmoid(v)).collect(),
            Unary::Relu => src
                .data()
                .iter()
                .map(|&v| if v > 0.0 { v } else { 0.0 })
                .collect(),
            Unary::Clamp { lo, hi } => src.data().iter().map(|v| v.clamp(lo, hi)).collect(),
            Unary::Scale(c) => src.data().iter().map(|v| c * v).collect(),
        };
        let shape = src.shape().to_vec();
        let rg = self.rg(&[x]);
        self.push(Tensor { shape, data }, Op::Unary { x, kind }, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    /// Elementwise clip to `[lo, hi]`; the local derivative is 1 on the closed
    /// interval and 0 outside it.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Unary::Clamp { lo, hi })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Unary::Scale(c))
    }

    fn binary(&mut self, a: Var, b: Var, kind: Binary, op: &'static str) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let bcast = if va.shape() == vb.shape() {
            Broadcast::Same
        } else if vb.numel() == 1 {
            Broadcast::RhsScalar
        } else if va.numel() == 1 {
            Broadcast::LhsScalar
        } else {
            return Err(Error::dim(op, va.shape(), vb.shape()));
        };
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let (shape, data) = match bcast {
            Broadcast::Same => (
                va.shape().to_vec(),
                va.data()
                    .iter()
                    .zip(vb.data())
                    .map(|(&x, &y)| f(x, y))
                    .collect(),
            ),
            Broadcast::RhsScalar => {
                let y = vb.data()[0];
                (
                    va.shape().to_vec(),
                    va.data().iter().map(|&x| f(x, y)).collect(),
                )
            }
            Broadcast::LhsScalar => {
                let x = va.data()[0];
                (
                    vb.shape().to_vec(),
                    vb.data().iter().map(|&y| f(x, y)).collect(),
                )
            }
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor { shape, data }, Op::Binary { a, b, kind, bcast }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Sub, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul, "mul")
    }

    /// Joins `a` and `b` along `axis`; every other extent must agree.
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let compatible = sa.len() == sb.len()
            && axis < sa.len()
            && sa
                .iter()
                .zip(sb)
                .enumerate()
                .all(|(d, (x, y))| d == axis || x == y);
        if !compatible {
            return Err(Error::dim("concat", sa, sb));
        }
        let mut shape = sa.to_vec();
        shape[axis] += sb[axis];
        let outer: usize = sa[..axis].iter().product();
        let ia: usize = sa[axis..].iter().product();
        let ib: usize = sb[axis..].iter().product();
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(da.len() + db.len());
        for o in 0..outer {
            data.extend_from_slice(&da[o * ia..(o + 1) * ia]);
            data.extend_from_slice(&db[o * ib..(o + 1) * ib]);
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor { shape, data }, Op::Concat { a, b, axis }, rg))
    }

    /// Picks slice `index` along `axis`, removing that axis.
    pub fn select(&mut self, x: Var, axis: usize, index: usize) -> Result<Var> {
        let s = self.shape(x);
        if axis >= s.len() || index >= s[axis] {
            return Err(Error::dim("select", s, &[axis, index]));
        }
        let (outer, mid, inner) = outer_inner(s, axis);
        let mut shape = s.to_vec();
        shape.remove(axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let start = (o * mid + index) * inner;
            data.extend_from_slice(&src[start..start + inner]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor { shape, data }, Op::Select { x, axis, index }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x).data();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(m), Op::Mean { x }, rg)
    }

    /// Elementwise minimum; gradient goes to the smaller operand, and to `a`
    /// on ties.
    pub fn min_pairwise(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::dim("min_pairwise", va.shape(), vb.shape()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| if x <= y { x } else { y })
            .collect();
        let shape = va.shape().to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor { shape, data }, Op::MinPairwise { a, b }, rg))
    }

    /// Pointwise half of an LSTM update.
    ///
    /// `z: [batch×4H]` holds the input, forget, output and candidate
    /// pre-activations in that order and `c: [batch×H]` is the previous cell.
    /// Returns `[batch×2×H]` with the new hidden state at index 0 and the new
    /// cell at index 1 of the middle axis.
    pub fn lstm_cell(&mut self, z: Var, c: Var) -> Result<Var> {
        let (n, h) = match (self.shape(z), self.shape(c)) {
            (&[n, h4], &[nc, h]) if n == nc && h4 == 4 * h => (n, h),
            (sz, sc) => return Err(Error::dim("lstm_cell", sz, sc)),
        };
        let mut out = vec![0.0; n * 2 * h];
        let mut acts = vec![0.0; n * ACTS * h];
        cell::forward(
            self.value(z).data(),
            self.value(c).data(),
            h,
            &mut acts,
            &mut out,
        );
        let rg = self.rg(&[z, c]);
        let value = Tensor {
            shape: vec![n, 2, h],
            data: out,
        };
        Ok(self.push(value, Op::LstmCell { z, c, acts }, rg))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Returns the adjoint of every gradient-bearing leaf the loss depends
    /// on. Intermediate adjoints are released as the sweep passes them.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !root.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match node.op {
            Op::Leaf => {}
            Op::Matmul { a, b, trans_b } => {
                let (m, k) = (val(a).shape()[0], val(a).shape()[1]);
                let n = node.value.shape()[1];
                if rg(a) {
                    let da = accumulate(grads, a, m * k);
                    // dA = dC · op(B)ᵀ
                    gemm_acc(m, n, k, g, false, val(b).data(), !trans_b, da);
                }
                if rg(b) {
                    let db = accumulate(grads, b, k * n);
                    if trans_b {
                        // B stored n×k: dB = dCᵀ · A
                        gemm_acc(n, m, k, g, true, val(a).data(), false, db);
                    } else {
                        // dB = Aᵀ · dC
                        gemm_acc(k, m, n, val(a).data(), true, g, false, db);
                    }
                }
            }
            Op::AddBias { x, bias } => {
                let n = val(bias).numel();
                if rg(x) {
                    let dx = accumulate(grads, x, g.len());
                    dx.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
                }
                if rg(bias) {
                    let db = accumulate(grads, bias, n);
                    for row in g.chunks_exact(n) {
                        db.iter_mut().zip(row).for_each(|(d, gi)| *d += gi);
                    }
                }
            }
            Op::Unary { x, kind } => {
                if !rg(x) {
                    return;
                }
                let input = val(x).data();
                let out = node.value.data();
                let dx = accumulate(grads, x, g.len());
                for i in 0..g.len() {
                    let local = match kind {
                        Unary::Tanh => 1.0 - out[i] * out[i],
                        Unary::Sigmoid => out[i] * (1.0 - out[i]),
                        Unary::Relu => {
                            if input[i] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Unary::Clamp { lo, hi } => {
                            if input[i] >= lo && input[i] <= hi {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Unary::Scale(c) => c,
                    };
                    dx[i] += g[i] * local;
                }
            }
            Op::Binary { a, b, kind, bcast } => {
                let (va, vb) = (val(a).data(), val(b).data());
                let at = |i: usize| {
                    if bcast == Broadcast::LhsScalar {
                        va[0]
                    } else {
                        va[i]
                    }
                };
                let bt = |i: usize| {
                    if bcast == Broadcast::RhsScalar {
                        vb[0]
                    } else {
                        vb[i]
                    }
                };
                if rg(a) {
                    let da = accumulate(grads, a, va.len());
                    for i in 0..g.len() {
                        let local = match kind {
                            Binary::Add | Binary::Sub => 1.0,
                            Binary::Mul => bt(i),
                        };
                        let slot = if bcast == Broadcast::LhsScalar { 0 } else { i };
                        da[slot] += g[i] * local;
                    }
                }
                if rg(b) {
                    let db = accumulate(grads, b, vb.len());
                    for i in 0..g.len() {
                        let local = match kind {
                            Binary::Add => 1.0,
                            Binary::Sub => -1.0,
                            Binary::Mul => at(i),
                        };
                        let slot = if bcast == Broadcast::RhsScalar { 0 } else { i };
                        db[slot] += g[i] * local;
                    }
                }
            }
            Op::Concat { a, b, axis } => {
                let (sa, sb) = (val(a).shape(), val(b).shape());
                let outer: usize = sa[..axis].iter().product();
                let ia: usize = sa[axis..].iter().product();
                let ib: usize = sb[axis..].iter().product();
                if rg(a) {
                    let da = accumulate(grads, a, outer * ia);
                    for o in 0..outer {
                        let src = &g[o * (ia + ib)..o * (ia + ib) + ia];
                        da[o * ia..(o + 1) * ia]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, s)| *d += s);
                    }
                }
                if rg(b) {
                    let db = accumulate(grads, b, outer * ib);
                    for o in 0..outer {
                        let src = &g[o * (ia + ib) + ia..(o + 1) * (ia + ib)];
                        db[o * ib..(o + 1) * ib]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::Select { x, axis, index } => {
                if !rg(x) {
                    return;
                }
                let (outer, mid, inner) = outer_inner(val(x).shape(), axis);
                let dx = accumulate(grads, x, outer * mid * inner);
                for o in 0..outer {
                    let start = (o * mid + index) * inner;
                    dx[start..start + inner]
                        .iter_mut()
                        .zip(&g[o * inner..(o + 1) * inner])
                        .for_each(|(d, s)| *d += s);
                }
            }
            Op::Sum { x } | Op::Mean { x } => {
                if !rg(x) {
                    return;
                }
                let n = val(x).numel();
                let scale = if matches!(node.op, Op::Mean { .. }) {
                    1.0 / n as f64
                } else {
                    1.0
                };
                let dx = accumulate(grads, x, n);
                dx.iter_mut().for_each(|d| *d += g[0] * scale);
            }
            Op::MinPairwise { a, b } => {
                let (va, vb) = (val(a).data(), val(b).data());
                if rg(a) {
                    let da = accumulate(grads, a, va.len());
                    for i in 0..g.len() {
                        if va[i] <= vb[i] {
                            da[i] += g[i];
                        }
                    }
                }
                if rg(b) {
                    let db = accumulate(grads, b, vb.len());
                    for i in 0..g.len() {
                        if va[i] > vb[i] {
                            db[i] += g[i];
                        }
                    }
                }
            }
            Op::LstmCell { z, c, ref acts } => {
                let h = val(c).shape()[1];
                let n = val(c).shape()[0];
                let mut dz = vec![0.0; n * 4 * h];
                let mut dc = vec![0.0; n * h];
                cell::backward(acts, val(c).data(), g, h, &mut dz, &mut dc);
                for (v, d) in [(z, dz), (c, dc)] {
                    if !rg(v) {
                        continue;
                    }
                    match &mut grads[v.0] {
                        Some(acc) => acc.iter_mut().zip(&d).for_each(|(x, y)| *x += y),
                        slot => *slot = Some(d),
                    }
                }
            }
        }
    }
}
