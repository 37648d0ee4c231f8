use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use super::{Matrix, Scalar};
use crate::error::{CdganError, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tensor {
    id: usize,
    tape: u64,
}

impl Tensor {
    pub fn node_id(self) -> usize {
        self.id
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    MatMulT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    LeakyRelu(usize, T),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    LogSumExp(usize, usize),
    Sum(usize),
    Mean(usize),
    SumAxis(usize, usize),
    /// Saved per-row divisors `max(‖x‖, eps)` and whether the norm cleared eps.
    L2Normalize(usize, Vec<(T, bool)>),
    Concat(Vec<usize>, usize),
    Slice {
        x: usize,
        axis: usize,
        start: usize,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Linear record of forward operations, replayed backwards for gradients.
///
/// Records are appended in evaluation order, so every record's inputs precede
/// it and a single reverse sweep visits each node once.
#[derive(Debug)]
pub struct Tape<T: Scalar = f32> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, t: Tensor) -> &Node<T> {
        assert_eq!(t.tape, self.id, "tensor belongs to a different tape");
        &self.nodes[t.id]
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>, requires_grad: bool) -> Tensor {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad,
        });
        Tensor {
            id: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    pub fn leaf(&mut self, m: &Matrix<T>, requires_grad: bool) -> Tensor {
        self.push(m.rows(), m.cols(), m.as_slice().to_vec(), Op::Leaf, requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, m: &Matrix<T>) -> Tensor {
        self.leaf(m, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, m: &Matrix<T>) -> Tensor {
        self.leaf(m, false)
    }

    pub fn scalar_constant(&mut self, v: T) -> Tensor {
        self.push(1, 1, vec![v], Op::Leaf, false)
    }

    pub fn shape(&self, t: Tensor) -> [usize; 2] {
        let n = self.node(t);
        [n.rows, n.cols]
    }

    pub fn value(&self, t: Tensor) -> &[T] {
        &self.node(t).value
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.node(t).requires_grad
    }

    pub fn to_matrix(&self, t: Tensor) -> Matrix<T> {
        let n = self.node(t);
        Matrix::new(n.rows, n.cols, n.value.clone()).expect("node shape is consistent")
    }

    /// Value of a `[1, 1]` tensor.
    pub fn scalar(&self, t: Tensor) -> Result<T> {
        let n = self.node(t);
        if n.rows != 1 || n.cols != 1 {
            return Err(CdganError::contract(format!(
                "expected scalar, got {}x{}",
                n.rows, n.cols
            )));
        }
        Ok(n.value[0])
    }

    fn rg(&self, ids: &[Tensor]) -> bool {
        ids.iter().any(|&t| self.node(t).requires_grad)
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let [m, k] = self.shape(a);
        let [k2, n] = self.shape(b);
        if k != k2 {
            return Err(CdganError::Shape {
                op: "matmul",
                lhs: [m, k],
                rhs: [k2, n],
            });
        }
        let mut out = vec![T::zero(); m * n];
        matmul_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(m, n, out, Op::MatMul(a.id, b.id), rg))
    }

    /// `a[m×k] · b[n×k]ᵀ`, the product against a transposed right operand.
    pub fn matmul_t(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let [m, k] = self.shape(a);
        let [n, k2] = self.shape(b);
        if k != k2 {
            return Err(CdganError::Shape {
                op: "matmul_t",
                lhs: [m, k],
                rhs: [n, k2],
            });
        }
        let mut out = vec![T::zero(); m * n];
        matmul_nt_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(m, n, out, Op::MatMulT(a.id, b.id), rg))
    }

    fn zip_same(&mut self, a: Tensor, b: Tensor, name: &'static str, f: impl Fn(T, T) -> T) -> Result<(usize, usize, Vec<T>)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(CdganError::Shape {
                op: name,
                lhs: sa,
                rhs: sb,
            });
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok((sa[0], sa[1], out))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (r, c, out) = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(r, c, out, Op::Add(a.id, b.id), rg))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (r, c, out) = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(r, c, out, Op::Sub(a.id, b.id), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (r, c, out) = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(r, c, out, Op::Mul(a.id, b.id), rg))
    }

    /// `x[m×n] + bias[1×n]`, the bias broadcast over rows.
    pub fn add_row(&mut self, x: Tensor, bias: Tensor) -> Result<Tensor> {
        let [m, n] = self.shape(x);
        let sb = self.shape(bias);
        if sb != [1, n] {
            return Err(CdganError::Shape {
                op: "add_row",
                lhs: [m, n],
                rhs: sb,
            });
        }
        let b = self.value(bias);
        let out = self
            .value(x)
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &bv)| v + bv))
            .collect();
        let rg = self.rg(&[x, bias]);
        Ok(self.push(m, n, out, Op::AddRow(x.id, bias.id), rg))
    }

    pub fn scale(&mut self, x: Tensor, s: T) -> Tensor {
        let [m, n] = self.shape(x);
        let out = self.value(x).iter().map(|&v| v * s).collect();
        let rg = self.rg(&[x]);
        self.push(m, n, out, Op::Scale(x.id, s), rg)
    }

    pub fn neg(&mut self, x: Tensor) -> Tensor {
        self.scale(x, -T::one())
    }

    pub fn add_scalar(&mut self, x: Tensor, s: T) -> Tensor {
        let [m, n] = self.shape(x);
        let out = self.value(x).iter().map(|&v| v + s).collect();
        let rg = self.rg(&[x]);
        self.push(m, n, out, Op::AddScalar(x.id), rg)
    }

    fn unary(&mut self, x: Tensor, op: Op<T>, f: impl Fn(T) -> T) -> Tensor {
        let [m, n] = self.shape(x);
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        let rg = self.rg(&[x]);
        self.push(m, n, out, op, rg)
    }

    /// `max(x, slope·x)` elementwise; the derivative at 0 is taken as `slope`.
    pub fn leaky_relu(&mut self, x: Tensor, slope: T) -> Result<Tensor> {
        if !(slope >= T::zero() && slope < T::one()) {
            return Err(CdganError::validation(format!(
                "leaky_relu slope must lie in [0, 1), got {slope:?}"
            )));
        }
        Ok(self.unary(x, Op::LeakyRelu(x.id, slope), |v| if v > T::zero() { v } else { v * slope }))
    }

    pub fn tanh(&mut self, x: Tensor) -> Tensor {
        self.unary(x, Op::Tanh(x.id), |v| v.tanh())
    }

    pub fn sigmoid(&mut self, x: Tensor) -> Tensor {
        self.unary(x, Op::Sigmoid(x.id), |v| {
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        })
    }

    pub fn exp(&mut self, x: Tensor) -> Tensor {
        self.unary(x, Op::Exp(x.id), |v| v.exp())
    }

    pub fn log(&mut self, x: Tensor) -> Tensor {
        self.unary(x, Op::Log(x.id), |v| v.ln())
    }

    fn check_axis(axis: usize) -> Result<()> {
        if axis > 1 {
            return Err(CdganError::contract(format!("axis must be 0 or 1, got {axis}")));
        }
        Ok(())
    }

    /// Max-shifted `log Σ exp` along `axis` (0 reduces rows to `[1, n]`,
    /// 1 reduces columns to `[m, 1]`).
    pub fn log_sum_exp(&mut self, x: Tensor, axis: usize) -> Result<Tensor> {
        Self::check_axis(axis)?;
        let [m, n] = self.shape(x);
        let v = self.value(x);
        let lse = |it: &mut dyn Iterator<Item = T>| -> T {
            let vals: Vec<T> = it.collect();
            let mx = vals.iter().copied().fold(T::neg_infinity(), T::max);
            if mx == T::neg_infinity() || mx == T::infinity() {
                return mx;
            }
            let s: T = vals.iter().map(|&a| (a - mx).exp()).sum();
            mx + s.ln()
        };
        let (r, c, out) = if axis == 1 {
            let out = (0..m).map(|i| lse(&mut v[i * n..(i + 1) * n].iter().copied())).collect();
            (m, 1, out)
        } else {
            let out = (0..n).map(|j| lse(&mut (0..m).map(|i| v[i * n + j]))).collect();
            (1, n, out)
        };
        let rg = self.rg(&[x]);
        Ok(self.push(r, c, out, Op::LogSumExp(x.id, axis), rg))
    }

    pub fn sum(&mut self, x: Tensor) -> Tensor {
        let s = self.value(x).iter().copied().sum();
        let rg = self.rg(&[x]);
        self.push(1, 1, vec![s], Op::Sum(x.id), rg)
    }

    pub fn mean(&mut self, x: Tensor) -> Tensor {
        let v = self.value(x);
        let s: T = v.iter().copied().sum();
        let mean = s / T::of(v.len() as f64);
        let rg = self.rg(&[x]);
        self.push(1, 1, vec![mean], Op::Mean(x.id), rg)
    }

    /// Sum along `axis` (0 reduces rows to `[1, n]`, 1 reduces columns to `[m, 1]`).
    pub fn sum_axis(&mut self, x: Tensor, axis: usize) -> Result<Tensor> {
        Self::check_axis(axis)?;
        let [m, n] = self.shape(x);
        let v = self.value(x);
        let (r, c, out) = if axis == 1 {
            (m, 1, v.chunks(n).map(|row| row.iter().copied().sum()).collect())
        } else {
            let mut out = vec![T::zero(); n];
            for row in v.chunks(n) {
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += a;
                }
            }
            (1, n, out)
        };
        let rg = self.rg(&[x]);
        Ok(self.push(r, c, out, Op::SumAxis(x.id, axis), rg))
    }

    /// Divides each row by `max(‖row‖₂, eps)`.
    pub fn l2_normalize(&mut self, x: Tensor, eps: T) -> Tensor {
        let [m, n] = self.shape(x);
        let v = self.value(x);
        let mut out = Vec::with_capacity(m * n);
        let mut saved = Vec::with_capacity(m);
        for row in v.chunks(n) {
            let norm = row.iter().map(|&a| a * a).sum::<T>().sqrt();
            let above = norm >= eps;
            let d = if above { norm } else { eps };
            out.extend(row.iter().map(|&a| a / d));
            saved.push((d, above));
        }
        let rg = self.rg(&[x]);
        self.push(m, n, out, Op::L2Normalize(x.id, saved), rg)
    }

    /// Concatenate along `axis` (0 stacks rows, 1 joins columns).
    pub fn concat(&mut self, parts: &[Tensor], axis: usize) -> Result<Tensor> {
        Self::check_axis(axis)?;
        let first = *parts
            .first()
            .ok_or_else(|| CdganError::contract("concat of zero tensors"))?;
        let s0 = self.shape(first);
        for &p in &parts[1..] {
            let s = self.shape(p);
            if s[1 - axis] != s0[1 - axis] {
                return Err(CdganError::Shape {
                    op: "concat",
                    lhs: s0,
                    rhs: s,
                });
            }
        }
        let (r, c, out) = if axis == 0 {
            let rows = parts.iter().map(|&p| self.shape(p)[0]).sum();
            let mut out = Vec::with_capacity(rows * s0[1]);
            for &p in parts {
                out.extend_from_slice(self.value(p));
            }
            (rows, s0[1], out)
        } else {
            let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
            let mut out = Vec::with_capacity(s0[0] * cols);
            for i in 0..s0[0] {
                for &p in parts {
                    let pc = self.shape(p)[1];
                    out.extend_from_slice(&self.value(p)[i * pc..(i + 1) * pc]);
                }
            }
            (s0[0], cols, out)
        };
        let rg = self.rg(parts);
        Ok(self.push(r, c, out, Op::Concat(parts.iter().map(|p| p.id).collect(), axis), rg))
    }

    /// Contiguous block `[start, start + len)` along `axis`.
    pub fn slice(&mut self, x: Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        Self::check_axis(axis)?;
        let [m, n] = self.shape(x);
        let extent = if axis == 0 { m } else { n };
        if len == 0 || start + len > extent {
            return Err(CdganError::contract(format!(
                "slice [{start}, {}) out of range for axis {axis} of {m}x{n}",
                start + len
            )));
        }
        let v = self.value(x);
        let (r, c, out) = if axis == 0 {
            (len, n, v[start * n..(start + len) * n].to_vec())
        } else {
            let out = v.chunks(n).flat_map(|row| row[start..start + len].iter().copied()).collect();
            (m, len, out)
        };
        let rg = self.rg(&[x]);
        Ok(self.push(r, c, out, Op::Slice { x: x.id, axis, start }, rg))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every leaf that requires a gradient gets an entry in the result, zero
    /// if the loss does not depend on it.
    pub fn backward(&self, loss: Tensor) -> Result<Gradients<T>> {
        if loss.tape != self.id || loss.id >= self.nodes.len() {
            return Err(CdganError::contract("loss tensor is not recorded on this tape"));
        }
        let ln = &self.nodes[loss.id];
        if ln.rows != 1 || ln.cols != 1 {
            return Err(CdganError::contract(format!(
                "backward needs a scalar loss, got {}x{}",
                ln.rows, ln.cols
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.id + 1];
        if ln.requires_grad {
            grads[loss.id] = Some(vec![T::one()]);
        }

        for id in (0..=loss.id).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        for (id, node) in self.nodes.iter().enumerate().take(loss.id + 1) {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[id].is_none() {
                grads[id] = Some(vec![T::zero(); node.value.len()]);
            }
        }
        // leaves recorded after the loss cannot influence it
        for node in &self.nodes[loss.id + 1..] {
            grads.push(if node.requires_grad && matches!(node.op, Op::Leaf) {
                Some(vec![T::zero(); node.value.len()])
            } else {
                None
            });
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        // Lazily allocated accumulator for input `i`, None when it needs no gradient.
        let slot = |grads: &mut [Option<Vec<T>>], i: usize| -> bool {
            if !nodes[i].requires_grad {
                return false;
            }
            if grads[i].is_none() {
                grads[i] = Some(vec![T::zero(); nodes[i].value.len()]);
            }
            true
        };
        macro_rules! acc {
            ($i:expr) => {
                grads[$i].as_mut().unwrap()
            };
        }

        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k, n) = (nodes[a].rows, nodes[a].cols, nodes[b].cols);
                if slot(grads, a) {
                    matmul_nt_acc(g, &nodes[b].value, acc!(a), m, n, k);
                }
                if slot(grads, b) {
                    matmul_tn_acc(&nodes[a].value, g, acc!(b), m, k, n);
                }
            }
            &Op::MatMulT(a, b) => {
                let (m, k, n) = (nodes[a].rows, nodes[a].cols, nodes[b].rows);
                if slot(grads, a) {
                    matmul_acc(g, &nodes[b].value, acc!(a), m, n, k);
                }
                if slot(grads, b) {
                    matmul_tn_acc(g, &nodes[a].value, acc!(b), m, n, k);
                }
            }
            &Op::Add(a, b) | &Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -T::one() } else { T::one() };
                if slot(grads, a) {
                    add_into(acc!(a), g, T::one());
                }
                if slot(grads, b) {
                    add_into(acc!(b), g, sign);
                }
            }
            &Op::Mul(a, b) => {
                if slot(grads, a) {
                    let bv = &nodes[b].value;
                    for ((o, &gv), &y) in acc!(a).iter_mut().zip(g).zip(bv) {
                        *o += gv * y;
                    }
                }
                if slot(grads, b) {
                    let av = &nodes[a].value;
                    for ((o, &gv), &x) in acc!(b).iter_mut().zip(g).zip(av) {
                        *o += gv * x;
                    }
                }
            }
            &Op::AddRow(x, b) => {
                if slot(grads, x) {
                    add_into(acc!(x), g, T::one());
                }
                if slot(grads, b) {
                    let n = node.cols;
                    let gb = acc!(b);
                    for row in g.chunks(n) {
                        for (o, &gv) in gb.iter_mut().zip(row) {
                            *o += gv;
                        }
                    }
                }
            }
            &Op::Scale(x, s) => {
                if slot(grads, x) {
                    add_into(acc!(x), g, s);
                }
            }
            &Op::AddScalar(x) => {
                if slot(grads, x) {
                    add_into(acc!(x), g, T::one());
                }
            }
            &Op::LeakyRelu(x, slope) => {
                if slot(grads, x) {
                    let xv = &nodes[x].value;
                    for ((o, &gv), &v) in acc!(x).iter_mut().zip(g).zip(xv) {
                        *o += if v > T::zero() { gv } else { gv * slope };
                    }
                }
            }
            &Op::Tanh(x) => {
                if slot(grads, x) {
                    for ((o, &gv), &y) in acc!(x).iter_mut().zip(g).zip(&node.value) {
                        *o += gv * (T::one() - y * y);
                    }
                }
            }
            &Op::Sigmoid(x) => {
                if slot(grads, x) {
                    for ((o, &gv), &y) in acc!(x).iter_mut().zip(g).zip(&node.value) {
                        *o += gv * y * (T::one() - y);
                    }
                }
            }
            &Op::Exp(x) => {
                if slot(grads, x) {
                    for ((o, &gv), &y) in acc!(x).iter_mut().zip(g).zip(&node.value) {
                        *o += gv * y;
                    }
                }
            }
            &Op::Log(x) => {
                if slot(grads, x) {
                    let xv = &nodes[x].value;
                    for ((o, &gv), &v) in acc!(x).iter_mut().zip(g).zip(xv) {
                        *o += gv / v;
                    }
                }
            }
            &Op::LogSumExp(x, axis) => {
                if slot(grads, x) {
                    let (m, n) = (nodes[x].rows, nodes[x].cols);
                    let xv = &nodes[x].value;
                    let gx = acc!(x);
                    for i in 0..m {
                        for j in 0..n {
                            let r = if axis == 1 { i } else { j };
                            let w = (xv[i * n + j] - node.value[r]).exp();
                            gx[i * n + j] += g[r] * w;
                        }
                    }
                }
            }
            &Op::Sum(x) => {
                if slot(grads, x) {
                    for o in acc!(x).iter_mut() {
                        *o += g[0];
                    }
                }
            }
            &Op::Mean(x) => {
                if slot(grads, x) {
                    let gx = acc!(x);
                    let share = g[0] / T::of(gx.len() as f64);
                    for o in gx.iter_mut() {
                        *o += share;
                    }
                }
            }
            &Op::SumAxis(x, axis) => {
                if slot(grads, x) {
                    let n = nodes[x].cols;
                    for (idx, o) in acc!(x).iter_mut().enumerate() {
                        let (i, j) = (idx / n, idx % n);
                        *o += if axis == 1 { g[i] } else { g[j] };
                    }
                }
            }
            Op::L2Normalize(x, saved) => {
                let x = *x;
                if slot(grads, x) {
                    let n = node.cols;
                    let gx = acc!(x);
                    for (i, &(d, above)) in saved.iter().enumerate() {
                        let y = &node.value[i * n..(i + 1) * n];
                        let gr = &g[i * n..(i + 1) * n];
                        let proj = if above {
                            y.iter().zip(gr).map(|(&a, &b)| a * b).sum::<T>()
                        } else {
                            T::zero()
                        };
                        for j in 0..n {
                            gx[i * n + j] += (gr[j] - y[j] * proj) / d;
                        }
                    }
                }
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = (nodes[p].rows, nodes[p].cols);
                    if slot(grads, p) {
                        let gp = acc!(p);
                        if *axis == 0 {
                            add_into(gp, &g[offset * pc..(offset + pr) * pc], T::one());
                        } else {
                            for i in 0..pr {
                                let src = &g[i * node.cols + offset..i * node.cols + offset + pc];
                                add_into(&mut gp[i * pc..(i + 1) * pc], src, T::one());
                            }
                        }
                    }
                    offset += if *axis == 0 { pr } else { pc };
                }
            }
            &Op::Slice { x, axis, start } => {
                if slot(grads, x) {
                    let n = nodes[x].cols;
                    let gx = acc!(x);
                    if axis == 0 {
                        add_into(&mut gx[start * n..(start + node.rows) * n], g, T::one());
                    } else {
                        for i in 0..node.rows {
                            let dst = &mut gx[i * n + start..i * n + start + node.cols];
                            add_into(dst, &g[i * node.cols..(i + 1) * node.cols], T::one());
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn add_into<T: Scalar>(dst: &mut [T], src: &[T], s: T) {
    for (o, &v) in dst.iter_mut().zip(src) {
        *o += s * v;
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for a tensor that requires one.
    pub fn get(&self, t: Tensor) -> Result<&[T]> {
        if t.tape != self.tape {
            return Err(CdganError::contract("tensor is from a different tape"));
        }
        self.grads
            .get(t.id)
            .and_then(|g| g.as_deref())
            .ok_or_else(|| CdganError::contract(format!("node {} has no gradient", t.id)))
    }
}
