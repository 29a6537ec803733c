//! Wengert tape: records primitive operations during the forward pass and
//! replays them in reverse for gradient computation.
//!
//! Nodes are appended in construction order, so the tape is topologically
//! sorted by construction: every operation's inputs precede it. Backward
//! visits each node exactly once, from the loss down.

use crate::error::{Error, Result};
use crate::numerics::kernels;
use crate::numerics::{Scalar, Tensor};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<S: Scalar> {
    Leaf,
    MatMul { a: Var, b: Var },
    AddBiasRow { x: Var, bias: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    MulElem { a: Var, b: Var },
    MaxElem { a: Var, b: Var },
    Scale { x: Var, c: S },
    Gelu { x: Var },
    Sigmoid { x: Var },
    Ln { x: Var },
    Softmax { x: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, eps: S },
    Attention { q: Var, k: Var, v: Var, groups: usize, len: usize, heads: usize },
    BroadcastRow { x: Var, n: usize },
    Interleave3 { a: Var, b: Var, c: Var },
    StrideRows { x: Var, start: usize, stride: usize },
    ConcatCols { a: Var, b: Var },
    SumAll { x: Var },
    MeanAll { x: Var },
    SoftmaxCrossEntropy { logits: Var, targets: Vec<usize> },
}

struct Node<S: Scalar> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
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

    /// Register an input tensor. Only leaves with `requires_grad` receive
    /// gradients; everything downstream tracks grads as needed.
    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass for `v`; zeros if the node never
    /// received one (e.g. a leaf the loss does not depend on).
    pub fn grad(&self, v: Var) -> Tensor<S> {
        let node = &self.nodes[v.0];
        match &node.grad {
            Some(g) => Tensor::new(node.value.shape().to_vec(), g.clone())
                .expect("grad buffer mirrors value shape"),
            None => Tensor::zeros(node.value.shape().to_vec()),
        }
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::ShapeMismatch {
            op,
            lhs: self.value(a).shape().to_vec(),
            rhs: self.value(b).shape().to_vec(),
        }
    }

    // -- ops ----------------------------------------------------------------

    /// Standard matrix product `[m x k] . [k x n] -> [m x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(self.shape_err("matmul", a, b));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![S::zero(); m * n];
        kernels::matmul(&mut out, ta.data(), tb.data(), m, k, n);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul { a, b }, rg))
    }

    /// `[n x d] + [d]`, broadcasting the bias over rows.
    pub fn add_bias_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tx.cols() != tb.numel() {
            return Err(self.shape_err("add_bias_row", x, bias));
        }
        let d = tx.cols();
        let mut out = tx.data().to_vec();
        for row in out.chunks_exact_mut(d) {
            for (o, &b) in row.iter_mut().zip(tb.data()) {
                *o = *o + b;
            }
        }
        let rg = self.any_grad(&[x, bias]);
        let shape = tx.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::AddBiasRow { x, bias }, rg))
    }

    fn elementwise2(
        &mut self,
        opname: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(self.shape_err(opname, a, b));
        }
        let out: Vec<S> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.any_grad(&[a, b]);
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2("mul_elem", a, b, |x, y| x * y, Op::MulElem { a, b })
    }

    /// Elementwise max; gradient flows to the larger input (ties to `a`).
    pub fn max_elem(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2(
            "max_elem",
            a,
            b,
            |x, y| if y > x { y } else { x },
            Op::MaxElem { a, b },
        )
    }

    pub fn scale(&mut self, x: Var, c: S) -> Var {
        let tx = self.value(x);
        let out: Vec<S> = tx.data().iter().map(|&v| v * c).collect();
        let shape = tx.shape().to_vec();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::new(shape, out).unwrap(), Op::Scale { x, c }, rg)
    }

    /// Exact erf-based GELU, elementwise.
    pub fn gelu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let mut out = vec![S::zero(); tx.numel()];
        kernels::map(&mut out, tx.data(), gelu_value);
        let shape = tx.shape().to_vec();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::new(shape, out).unwrap(), Op::Gelu { x }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let mut out = vec![S::zero(); tx.numel()];
        kernels::map(&mut out, tx.data(), sigmoid_value);
        let shape = tx.shape().to_vec();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::new(shape, out).unwrap(), Op::Sigmoid { x }, rg)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let out: Vec<S> = tx.data().iter().map(|&v| v.ln()).collect();
        let shape = tx.shape().to_vec();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::new(shape, out).unwrap(), Op::Ln { x }, rg)
    }

    /// Row-wise softmax along the last axis, max-subtracted for stability.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        tx.validate("softmax input")?;
        let cols = tx.cols();
        let mut out = vec![S::zero(); tx.numel()];
        kernels::softmax_rows(&mut out, tx.data(), cols);
        let shape = tx.shape().to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax { x }, rg))
    }

    /// Per-row `(x - mean)/sqrt(var + eps) * gain + bias` with population
    /// variance over the last dimension.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: S) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let d = tx.cols();
        if tg.numel() != d {
            return Err(self.shape_err("layer_norm", x, gain));
        }
        if tb.numel() != d {
            return Err(self.shape_err("layer_norm", x, bias));
        }
        if eps <= S::zero() {
            return Err(Error::Contract("layer_norm eps must be > 0".into()));
        }
        let mut out = vec![S::zero(); tx.numel()];
        kernels::layer_norm_rows(&mut out, tx.data(), tg.data(), tb.data(), eps);
        let rg = self.any_grad(&[x, gain, bias]);
        let shape = tx.shape().to_vec();
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::LayerNorm { x, gain, bias, eps },
            rg,
        ))
    }

    /// Multi-head self-attention within consecutive token groups of `len`
    /// rows. `q`, `k`, `v` are `[groups*len x d_model]`.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        groups: usize,
        len: usize,
        heads: usize,
    ) -> Result<Var> {
        let tq = self.value(q);
        let d_model = tq.cols();
        if tq.rows() != groups * len {
            return Err(Error::Contract(format!(
                "attention expects {} rows, got {}",
                groups * len,
                tq.rows()
            )));
        }
        if d_model % heads != 0 {
            return Err(Error::Config(format!(
                "d_model {d_model} not divisible by {heads} heads"
            )));
        }
        for other in [k, v] {
            if self.value(other).shape() != self.value(q).shape() {
                return Err(self.shape_err("attention", q, other));
            }
        }
        let mut out = vec![S::zero(); tq.numel()];
        kernels::attention(
            &mut out,
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            groups,
            len,
            d_model,
            heads,
        );
        let rg = self.any_grad(&[q, k, v]);
        let shape = self.value(q).shape().to_vec();
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Attention { q, k, v, groups, len, heads },
            rg,
        ))
    }

    /// `[d] -> [n x d]` by repeating the single row.
    pub fn broadcast_row(&mut self, x: Var, n: usize) -> Var {
        let tx = self.value(x);
        let d = tx.numel();
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            out.extend_from_slice(tx.data());
        }
        let rg = self.any_grad(&[x]);
        self.push(
            Tensor::new(vec![n, d], out).unwrap(),
            Op::BroadcastRow { x, n },
            rg,
        )
    }

    /// Rows of `a`, `b`, `c` interleaved as (a0,b0,c0,a1,b1,c1,...);
    /// builds the `[label, z_i, z_j]` token sequence for a whole batch.
    pub fn interleave3(&mut self, a: Var, b: Var, c: Var) -> Result<Var> {
        let (ta, tb, tc) = (self.value(a), self.value(b), self.value(c));
        if ta.shape() != tb.shape() {
            return Err(self.shape_err("interleave3", a, b));
        }
        if ta.shape() != tc.shape() {
            return Err(self.shape_err("interleave3", a, c));
        }
        let (n, d) = (ta.rows(), ta.cols());
        let mut out = Vec::with_capacity(3 * n * d);
        for i in 0..n {
            out.extend_from_slice(ta.row(i));
            out.extend_from_slice(tb.row(i));
            out.extend_from_slice(tc.row(i));
        }
        let rg = self.any_grad(&[a, b, c]);
        Ok(self.push(
            Tensor::new(vec![3 * n, d], out)?,
            Op::Interleave3 { a, b, c },
            rg,
        ))
    }

    /// Select rows `start, start+stride, ...` of a 2-D tensor.
    pub fn stride_rows(&mut self, x: Var, start: usize, stride: usize) -> Result<Var> {
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        if stride == 0 || start >= n {
            return Err(Error::Contract(format!(
                "stride_rows start {start} stride {stride} out of range for {n} rows"
            )));
        }
        let count = (n - start).div_ceil(stride);
        let mut out = Vec::with_capacity(count * d);
        let mut i = start;
        while i < n {
            out.extend_from_slice(tx.row(i));
            i += stride;
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            Tensor::new(vec![count, d], out)?,
            Op::StrideRows { x, start, stride },
            rg,
        ))
    }

    /// Concatenate two `[n x *]` tensors along the last axis.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(self.shape_err("concat_cols", a, b));
        }
        let (n, da, db) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = Vec::with_capacity(n * (da + db));
        for i in 0..n {
            out.extend_from_slice(ta.row(i));
            out.extend_from_slice(tb.row(i));
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(
            Tensor::new(vec![n, da + db], out)?,
            Op::ConcatCols { a, b },
            rg,
        ))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::SumAll { x }, rg)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let n = S::from_f64(tx.numel() as f64);
        let s = tx.data().iter().copied().sum::<S>() / n;
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::MeanAll { x }, rg)
    }

    /// Mean softmax cross-entropy of `[n x c]` logits against class indices,
    /// computed via max-subtracted log-sum-exp.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        let (n, c) = (tl.rows(), tl.cols());
        if targets.len() != n {
            return Err(Error::Contract(format!(
                "{} logit rows vs {} targets",
                n,
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Contract(format!("target {bad} out of {c} classes")));
        }
        let mut total = S::zero();
        for (row, &t) in tl.data().chunks_exact(c).zip(targets) {
            let m = row.iter().copied().fold(row[0], S::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<S>().ln();
            total = total + (lse - row[t]);
        }
        let mean = total / S::from_f64(n as f64);
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(mean),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    // -- backward -------------------------------------------------------------

    /// Reverse-mode sweep from a scalar `loss`. Gradients of `requires_grad`
    /// leaves accumulate across calls; intermediate gradients are reset at
    /// the start of each call.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        // reset non-leaf grads; leaf grads persist (accumulate semantics)
        for node in self.nodes.iter_mut() {
            if !matches!(node.op, Op::Leaf) {
                node.grad = None;
            }
        }
        self.accum(loss, &[S::one()]);

        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            if !self.nodes[i].requires_grad {
                continue;
            }
            let g = self.nodes[i].grad.clone().expect("checked above");
            let op = self.nodes[i].op.clone();
            self.propagate(i, &op, &g)?;
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accum(&mut self, v: Var, contribution: &[S]) {
        let node = &mut self.nodes[v.0];
        let buf = node
            .grad
            .get_or_insert_with(|| vec![S::zero(); node.value.numel()]);
        for (b, &c) in buf.iter_mut().zip(contribution) {
            *b = *b + c;
        }
    }

    fn propagate(&mut self, out_idx: usize, op: &Op<S>, g: &[S]) -> Result<()> {
        match *op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = {
                    let ta = self.value(a);
                    (ta.shape()[0], ta.shape()[1])
                };
                let n = self.value(b).shape()[1];
                if self.needs(a) {
                    let mut da = vec![S::zero(); m * k];
                    kernels::matmul_acc_nt(&mut da, g, self.value(b).data(), m, k, n);
                    self.accum(a, &da);
                }
                if self.needs(b) {
                    let mut db = vec![S::zero(); k * n];
                    kernels::matmul_acc_tn(&mut db, self.value(a).data(), g, m, k, n);
                    self.accum(b, &db);
                }
            }
            Op::AddBiasRow { x, bias } => {
                if self.needs(x) {
                    self.accum(x, g);
                }
                if self.needs(bias) {
                    let d = self.value(bias).numel();
                    let mut db = vec![S::zero(); d];
                    for row in g.chunks_exact(d) {
                        for (o, &gv) in db.iter_mut().zip(row) {
                            *o = *o + gv;
                        }
                    }
                    self.accum(bias, &db);
                }
            }
            Op::Add { a, b } => {
                if self.needs(a) {
                    self.accum(a, g);
                }
                if self.needs(b) {
                    self.accum(b, g);
                }
            }
            Op::Sub { a, b } => {
                if self.needs(a) {
                    self.accum(a, g);
                }
                if self.needs(b) {
                    let neg: Vec<S> = g.iter().map(|&v| -v).collect();
                    self.accum(b, &neg);
                }
            }
            Op::MulElem { a, b } => {
                if self.needs(a) {
                    let mut da = vec![S::zero(); g.len()];
                    kernels::zip_acc(&mut da, g, self.value(b).data(), |gv, bv| gv * bv);
                    self.accum(a, &da);
                }
                if self.needs(b) {
                    let mut db = vec![S::zero(); g.len()];
                    kernels::zip_acc(&mut db, g, self.value(a).data(), |gv, av| gv * av);
                    self.accum(b, &db);
                }
            }
            Op::MaxElem { a, b } => {
                let pick_a: Vec<bool> = self
                    .value(a)
                    .data()
                    .iter()
                    .zip(self.value(b).data())
                    .map(|(&x, &y)| !(y > x))
                    .collect();
                if self.needs(a) {
                    let da: Vec<S> = g
                        .iter()
                        .zip(&pick_a)
                        .map(|(&gv, &p)| if p { gv } else { S::zero() })
                        .collect();
                    self.accum(a, &da);
                }
                if self.needs(b) {
                    let db: Vec<S> = g
                        .iter()
                        .zip(&pick_a)
                        .map(|(&gv, &p)| if p { S::zero() } else { gv })
                        .collect();
                    self.accum(b, &db);
                }
            }
            Op::Scale { x, c } => {
                if self.needs(x) {
                    let dx: Vec<S> = g.iter().map(|&v| v * c).collect();
                    self.accum(x, &dx);
                }
            }
            Op::Gelu { x } => {
                if self.needs(x) {
                    let mut dx = vec![S::zero(); g.len()];
                    kernels::zip_acc(&mut dx, g, self.value(x).data(), |gv, xv| {
                        gv * gelu_derivative(xv)
                    });
                    self.accum(x, &dx);
                }
            }
            Op::Sigmoid { x } => {
                if self.needs(x) {
                    let y = &self.nodes[out_idx].value;
                    let dx: Vec<S> = g
                        .iter()
                        .zip(y.data())
                        .map(|(&gv, &yv)| gv * yv * (S::one() - yv))
                        .collect();
                    self.accum(x, &dx);
                }
            }
            Op::Ln { x } => {
                if self.needs(x) {
                    let dx: Vec<S> = g
                        .iter()
                        .zip(self.value(x).data())
                        .map(|(&gv, &xv)| gv / xv)
                        .collect();
                    self.accum(x, &dx);
                }
            }
            Op::Softmax { x } => {
                if self.needs(x) {
                    let y = self.nodes[out_idx].value.clone();
                    let cols = y.cols();
                    let mut dx = vec![S::zero(); g.len()];
                    for ((dx_row, g_row), y_row) in dx
                        .chunks_exact_mut(cols)
                        .zip(g.chunks_exact(cols))
                        .zip(y.data().chunks_exact(cols))
                    {
                        let inner: S = g_row.iter().zip(y_row).map(|(&gv, &yv)| gv * yv).sum();
                        for ((d, &gv), &yv) in dx_row.iter_mut().zip(g_row).zip(y_row) {
                            *d = yv * (gv - inner);
                        }
                    }
                    self.accum(x, &dx);
                }
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let tx = self.value(x).clone();
                let tg = self.value(gain).clone();
                let d = tx.cols();
                let dn = S::from_f64(d as f64);
                let mut dx = vec![S::zero(); tx.numel()];
                let mut dgain = vec![S::zero(); d];
                let mut dbias = vec![S::zero(); d];
                for ((x_row, g_row), dx_row) in tx
                    .data()
                    .chunks_exact(d)
                    .zip(g.chunks_exact(d))
                    .zip(dx.chunks_exact_mut(d))
                {
                    let mean = x_row.iter().copied().sum::<S>() / dn;
                    let mut var = S::zero();
                    for &v in x_row {
                        let c = v - mean;
                        var = var + c * c;
                    }
                    var = var / dn;
                    let inv = S::one() / (var + eps).sqrt();
                    // dxhat, accumulated stats
                    let mut sum_dxhat = S::zero();
                    let mut sum_dxhat_c = S::zero();
                    for ((&gv, &gn), &xv) in g_row.iter().zip(tg.data()).zip(x_row) {
                        let dxhat = gv * gn;
                        sum_dxhat = sum_dxhat + dxhat;
                        sum_dxhat_c = sum_dxhat_c + dxhat * (xv - mean);
                    }
                    let half = S::from_f64(0.5);
                    let two = S::from_f64(2.0);
                    let dvar = -half * sum_dxhat_c * inv * inv * inv;
                    let dmean = -inv * sum_dxhat; // sum of centered x is ~0; term dropped below rounding
                    for ((dxv, (&gv, &gn)), &xv) in dx_row
                        .iter_mut()
                        .zip(g_row.iter().zip(tg.data()))
                        .zip(x_row)
                    {
                        let dxhat = gv * gn;
                        *dxv = dxhat * inv + dvar * two * (xv - mean) / dn + dmean / dn;
                    }
                    for ((dg, db), (&gv, &xv)) in dgain
                        .iter_mut()
                        .zip(dbias.iter_mut())
                        .zip(g_row.iter().zip(x_row))
                    {
                        *dg = *dg + gv * (xv - mean) * inv;
                        *db = *db + gv;
                    }
                }
                if self.needs(x) {
                    self.accum(x, &dx);
                }
                if self.needs(gain) {
                    self.accum(gain, &dgain);
                }
                if self.needs(bias) {
                    self.accum(bias, &dbias);
                }
            }
            Op::Attention { q, k, v, groups, len, heads } => {
                let d_model = self.value(q).cols();
                let numel = self.value(q).numel();
                let mut dq = vec![S::zero(); numel];
                let mut dk = vec![S::zero(); numel];
                let mut dv = vec![S::zero(); numel];
                kernels::attention_backward(
                    &mut dq,
                    &mut dk,
                    &mut dv,
                    g,
                    self.value(q).data(),
                    self.value(k).data(),
                    self.value(v).data(),
                    groups,
                    len,
                    d_model,
                    heads,
                );
                if self.needs(q) {
                    self.accum(q, &dq);
                }
                if self.needs(k) {
                    self.accum(k, &dk);
                }
                if self.needs(v) {
                    self.accum(v, &dv);
                }
            }
            Op::BroadcastRow { x, n } => {
                if self.needs(x) {
                    let d = self.value(x).numel();
                    let mut dx = vec![S::zero(); d];
                    for row in g.chunks_exact(d).take(n) {
                        for (o, &gv) in dx.iter_mut().zip(row) {
                            *o = *o + gv;
                        }
                    }
                    self.accum(x, &dx);
                }
            }
            Op::Interleave3 { a, b, c } => {
                let d = self.value(a).cols();
                let n = self.value(a).rows();
                for (slot, var) in [(0usize, a), (1, b), (2, c)] {
                    if self.needs(var) {
                        let mut dv = Vec::with_capacity(n * d);
                        for i in 0..n {
                            let s = (3 * i + slot) * d;
                            dv.extend_from_slice(&g[s..s + d]);
                        }
                        self.accum(var, &dv);
                    }
                }
            }
            Op::StrideRows { x, start, stride } => {
                if self.needs(x) {
                    let tx = self.value(x);
                    let (n, d) = (tx.rows(), tx.cols());
                    let mut dx = vec![S::zero(); n * d];
                    let mut i = start;
                    let mut r = 0;
                    while i < n {
                        dx[i * d..(i + 1) * d].copy_from_slice(&g[r * d..(r + 1) * d]);
                        i += stride;
                        r += 1;
                    }
                    self.accum(x, &dx);
                }
            }
            Op::ConcatCols { a, b } => {
                let (n, da) = (self.value(a).rows(), self.value(a).cols());
                let db_w = self.value(b).cols();
                let w = da + db_w;
                if self.needs(a) {
                    let mut da_buf = Vec::with_capacity(n * da);
                    for i in 0..n {
                        da_buf.extend_from_slice(&g[i * w..i * w + da]);
                    }
                    self.accum(a, &da_buf);
                }
                if self.needs(b) {
                    let mut db_buf = Vec::with_capacity(n * db_w);
                    for i in 0..n {
                        db_buf.extend_from_slice(&g[i * w + da..(i + 1) * w]);
                    }
                    self.accum(b, &db_buf);
                }
            }
            Op::SumAll { x } => {
                if self.needs(x) {
                    let dx = vec![g[0]; self.value(x).numel()];
                    self.accum(x, &dx);
                }
            }
            Op::MeanAll { x } => {
                if self.needs(x) {
                    let n = self.value(x).numel();
                    let gv = g[0] / S::from_f64(n as f64);
                    let dx = vec![gv; n];
                    self.accum(x, &dx);
                }
            }
            Op::SoftmaxCrossEntropy { logits, ref targets } => {
                if self.needs(logits) {
                    let tl = self.value(logits);
                    let (n, c) = (tl.rows(), tl.cols());
                    let mut dl = vec![S::zero(); n * c];
                    let gn = g[0] / S::from_f64(n as f64);
                    for ((dl_row, row), &t) in dl
                        .chunks_exact_mut(c)
                        .zip(tl.data().chunks_exact(c))
                        .zip(targets)
                    {
                        let m = row.iter().copied().fold(row[0], S::max);
                        let denom: S = row.iter().map(|&v| (v - m).exp()).sum();
                        for (j, (d, &v)) in dl_row.iter_mut().zip(row).enumerate() {
                            let p = (v - m).exp() / denom;
                            let ind = if j == t { S::one() } else { S::zero() };
                            *d = gn * (p - ind);
                        }
                    }
                    self.accum(logits, &dl);
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn gelu_value<S: Scalar>(x: S) -> S {
    let half = S::from_f64(0.5);
    let inv_sqrt2 = S::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    x * half * (S::one() + (x * inv_sqrt2).erf())
}

#[inline]
fn gelu_derivative<S: Scalar>(x: S) -> S {
    let half = S::from_f64(0.5);
    let inv_sqrt2 = S::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    let inv_sqrt_2pi = S::from_f64(0.3989422804014327); // 1/sqrt(2*pi)
    let phi_cdf = half * (S::one() + (x * inv_sqrt2).erf());
    let phi_pdf = inv_sqrt_2pi * (-half * x * x).exp();
    phi_cdf + x * phi_pdf
}

#[inline]
fn sigmoid_value<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}
