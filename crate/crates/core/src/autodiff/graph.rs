use rand::Rng;

use super::sparsemax;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Reshape(Var),
    Embedding(Var, Vec<usize>),
    EmbeddingBag(Var, Vec<Vec<usize>>),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var, usize),
    Sparsemax(Var, usize),
    LayerNorm(Var, Vec<f64>),
    Sum(Var),
    Mean(Var),
    Dropout(Var, Vec<f64>),
    FocalLoss {
        logits: Var,
        labels: Vec<f64>,
        gamma: f64,
        alpha: f64,
    },
    Mse(Var, Vec<f64>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Affine(..) => "affine",
            Op::Concat(_) => "concat",
            Op::Slice(..) => "slice",
            Op::Reshape(_) => "reshape",
            Op::Embedding(..) => "embedding_lookup",
            Op::EmbeddingBag(..) => "embedding_bag_mean",
            Op::Relu(_) => "relu",
            Op::Gelu(_) => "gelu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Softplus(_) => "softplus",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Softmax(..) => "softmax",
            Op::Sparsemax(..) => "sparsemax",
            Op::LayerNorm(..) => "layer_norm",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Dropout(..) => "dropout",
            Op::FocalLoss { .. } => "focal_loss",
            Op::Mse(..) => "mse",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `var`, zeros if nothing flowed into it.
    pub fn get_or_zeros(&self, var: Var, len: usize) -> Vec<f64> {
        self.get(var).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;
const FOCAL_CLAMP: f64 = 1e-7;

/// Tape of tensor operations in topological (insertion) order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn gemm(
    (m, k, n): (usize, usize, usize),
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: slice lengths cover every (row, col) addressed by the strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Per-sample focal loss and its derivative with respect to the logit.
pub(crate) fn focal_terms(logit: f64, label: f64, gamma: f64, alpha: f64) -> (f64, f64) {
    let raw = sigmoid(logit);
    let p = raw.clamp(FOCAL_CLAMP, 1.0 - FOCAL_CLAMP);
    let clamped = p != raw;
    let positive = label > 0.5;
    // Negatives carry unit weight so that gamma = 0, alpha = 1 is plain BCE.
    let (pt, at) = if positive { (p, alpha) } else { (1.0 - p, 1.0) };
    let one_minus = 1.0 - pt;
    let loss = -at * one_minus.powf(gamma) * pt.ln();
    if clamped {
        return (loss, 0.0);
    }
    // dL/dpt
    let mut dpt = -at * one_minus.powf(gamma) / pt;
    if gamma != 0.0 {
        dpt += at * gamma * one_minus.powf(gamma - 1.0) * pt.ln();
    }
    let dpt_dp = if positive { 1.0 } else { -1.0 };
    (loss, dpt * dpt_dp * p * (1.0 - p))
}

/// Splits a shape around `axis` into (outer, len, inner).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shapes(&self, vars: &[Var]) -> String {
        vars.iter()
            .map(|v| format!("{:?}", self.shape(*v)))
            .collect::<Vec<_>>()
            .join(" vs ")
    }

    /// Differentiable leaf (parameter or input under attribution).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = &self.nodes[x.0].value;
        let data = src.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    /// `a @ b` for 2-D operands, or batched over matching leading axes.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ok = sa.len() >= 2
            && sa.len() == sb.len()
            && sa[..sa.len() - 2] == sb[..sb.len() - 2]
            && sa[sa.len() - 1] == sb[sb.len() - 2];
        if !ok {
            return Err(Error::shape("matmul", self.shapes(&[a, b])));
        }
        let r = sa.len();
        let (m, k, n) = (sa[r - 2], sa[r - 1], sb[r - 1]);
        let batch: usize = sa[..r - 2].iter().product();
        let mut out_shape = sa[..r - 2].to_vec();
        out_shape.extend([m, n]);
        let mut out = vec![0.0; batch * m * n];
        {
            let (ad, bd) = (self.value(a).data(), self.value(b).data());
            for i in 0..batch {
                gemm(
                    (m, k, n),
                    (&ad[i * m * k..], k as isize, 1),
                    (&bd[i * k * n..], n as isize, 1),
                    &mut out[i * m * n..(i + 1) * m * n],
                    0.0,
                );
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(out_shape, out)?, Op::MatMul(a, b), rg))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 {
            return Err(Error::shape("transpose", format!("{s:?}")));
        }
        let r = s.len();
        let (m, n) = (s[r - 2], s[r - 1]);
        let batch: usize = s[..r - 2].iter().product();
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for b in 0..batch {
            let off = b * m * n;
            for i in 0..m {
                for j in 0..n {
                    out[off + j * m + i] = src[off + i * n + j];
                }
            }
        }
        let mut shape = s;
        shape.swap(r - 2, r - 1);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::Transpose(x), rg))
    }

    fn broadcast_ok(&self, a: Var, b: Var) -> Option<bool> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Some(false);
        }
        let last = *sa.last()?;
        let row = matches!(sb, [n] if *n == last) || matches!(sb, [1, n] if *n == last);
        row.then_some(true)
    }

    /// Elementwise sum; `b` may also be a row vector matching the last axis of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    /// Elementwise product; `b` may also be a row vector matching the last axis of `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let Some(_) = self.broadcast_ok(a, b) else {
            return Err(Error::shape(name, self.shapes(&[a, b])));
        };
        let va = self.value(a);
        let vb = self.value(b).data();
        let c = vb.len();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, vb[i % c]))
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    /// `scale * x + shift` with constant scalars.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.unary(x, |v| scale * v + shift, Op::Affine(x, scale))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.affine(b, -1.0, 0.0);
        self.add(a, nb)
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no operands"))?;
        let lead = {
            let s = self.shape(*first);
            s[..s.len() - 1].to_vec()
        };
        for p in parts {
            let s = self.shape(*p);
            if s.len() != lead.len() + 1 || s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat", self.shapes(parts)));
            }
        }
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `start..end` of the last axis.
    pub fn slice(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(x);
        let c = v.cols();
        if start >= end || end > c {
            return Err(Error::shape(
                "slice",
                format!("{:?} [{start}..{end}]", v.shape()),
            ));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(v.rows() * w);
        for r in 0..v.rows() {
            out.extend_from_slice(&v.data()[r * c + start..r * c + end]);
        }
        let mut shape = v.shape().to_vec();
        *shape.last_mut().expect("non-empty") = w;
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::Slice(x, start), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).clone().reshaped(shape.to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(v, Op::Reshape(x), rg))
    }

    /// Rows of a `(vocab, dim)` table.
    pub fn embedding_lookup(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.shape().len() != 2 || indices.iter().any(|&i| i >= t.shape()[0]) {
            return Err(Error::shape(
                "embedding_lookup",
                format!("table {:?}, max index {:?}", t.shape(), indices.iter().max()),
            ));
        }
        let value = t.select_rows(indices);
        let rg = self.rg(table);
        Ok(self.push(value, Op::Embedding(table, indices.to_vec()), rg))
    }

    /// Mean of table rows per bag; an empty bag yields the zero vector.
    pub fn embedding_bag_mean(&mut self, table: Var, bags: &[Vec<usize>]) -> Result<Var> {
        let t = self.value(table);
        let vocab = t.shape()[0];
        if t.shape().len() != 2 || bags.iter().flatten().any(|&i| i >= vocab) {
            return Err(Error::shape(
                "embedding_bag_mean",
                format!("table {:?}", t.shape()),
            ));
        }
        let d = t.cols();
        let mut out = vec![0.0; bags.len() * d];
        for (b, bag) in bags.iter().enumerate() {
            if bag.is_empty() {
                continue;
            }
            let w = 1.0 / bag.len() as f64;
            let dst = &mut out[b * d..(b + 1) * d];
            for &i in bag {
                for (o, &v) in dst.iter_mut().zip(t.row(i)) {
                    *o += w * v;
                }
            }
        }
        let rg = self.rg(table);
        Ok(self.push(
            Tensor::new(vec![bags.len(), d], out)?,
            Op::EmbeddingBag(table, bags.to_vec()),
            rg,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, gelu, Op::Gelu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    fn check_axis(&self, x: Var, axis: usize, op: &'static str) -> Result<(usize, usize, usize)> {
        let s = self.shape(x);
        if axis >= s.len() {
            return Err(Error::shape(op, format!("axis {axis} of {s:?}")));
        }
        Ok(axis_split(s, axis))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, len, inner) = self.check_axis(x, axis, "softmax")?;
        let src = self.value(x);
        let mut out = vec![0.0; src.len()];
        let d = src.data();
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * len * inner + k * inner + i;
                let max = (0..len).map(|k| d[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for k in 0..len {
                    let e = (d[at(k)] - max).exp();
                    out[at(k)] = e;
                    z += e;
                }
                for k in 0..len {
                    out[at(k)] /= z;
                }
            }
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Softmax(x, axis), rg))
    }

    pub fn sparsemax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, len, inner) = self.check_axis(x, axis, "sparsemax")?;
        let src = self.value(x);
        let d = src.data();
        let mut out = vec![0.0; src.len()];
        let mut buf = vec![0.0; len];
        let mut res = vec![0.0; len];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * len * inner + k * inner + i;
                for k in 0..len {
                    buf[k] = d[at(k)];
                }
                sparsemax::sparsemax_into(&buf, &mut res);
                for k in 0..len {
                    out[at(k)] = res[k];
                }
            }
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Sparsemax(x, axis), rg))
    }

    /// Normalizes the last axis to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let c = src.cols();
        let rows = src.rows();
        let mut out = vec![0.0; src.len()];
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &src.data()[r * c..(r + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (o, v) in out[r * c..(r + 1) * c].iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let value = Tensor::new(src.shape().to_vec(), out).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::LayerNorm(x, inv_std), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len().max(1) as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Inverted dropout. Identity when `train` is false or `rate` is zero.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, train: bool, rng: &mut R) -> Var {
        if !train || rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Dropout(x, mask), rg)
    }

    /// Mean focal loss over a column of logits.
    pub fn focal_loss(&mut self, logits: Var, labels: &[f64], gamma: f64, alpha: f64) -> Result<Var> {
        let v = self.value(logits);
        if v.len() != labels.len() {
            return Err(Error::shape(
                "focal_loss",
                format!("{:?} vs {} labels", v.shape(), labels.len()),
            ));
        }
        let total: f64 = v
            .data()
            .iter()
            .zip(labels)
            .map(|(&z, &y)| focal_terms(z, y, gamma, alpha).0)
            .sum();
        let loss = total / labels.len().max(1) as f64;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::FocalLoss {
                logits,
                labels: labels.to_vec(),
                gamma,
                alpha,
            },
            rg,
        ))
    }

    /// Mean squared error against constant targets.
    pub fn mse(&mut self, pred: Var, targets: &[f64]) -> Result<Var> {
        let v = self.value(pred);
        if v.len() != targets.len() {
            return Err(Error::shape(
                "mse",
                format!("{:?} vs {} targets", v.shape(), targets.len()),
            ));
        }
        let total: f64 = v
            .data()
            .iter()
            .zip(targets)
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let loss = total / targets.len().max(1) as f64;
        let rg = self.rg(pred);
        Ok(self.push(Tensor::scalar(loss), Op::Mse(pred, targets.to_vec()), rg))
    }

    /// Smallest distance from any relu input to zero and from any sparsemax
    /// entry to its threshold. Finite differences are only meaningful when
    /// this exceeds the probe step.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            match node.op {
                Op::Relu(x) => {
                    for v in self.value(x).data() {
                        margin = margin.min(v.abs());
                    }
                }
                Op::Sparsemax(x, axis) => {
                    let s = self.shape(x);
                    let (outer, len, inner) = axis_split(s, axis);
                    let d = self.value(x).data();
                    for o in 0..outer {
                        for i in 0..inner {
                            let z: Vec<f64> =
                                (0..len).map(|k| d[o * len * inner + k * inner + i]).collect();
                            margin = margin.min(sparsemax::support_margin(&z));
                        }
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient {bad} flowing into `{}` (node {idx})",
                    node.op.name()
                )));
            }
            if node.requires_grad {
                self.propagate(idx, &g, &mut grads)?;
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.rg(v) {
            return None;
        }
        let len = self.value(v).len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let r = sa.len();
                let (m, k, n) = (sa[r - 2], sa[r - 1], sb[r - 1]);
                let batch: usize = sa[..r - 2].iter().product();
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..batch {
                        // dA = dC · Bᵀ
                        gemm(
                            (m, n, k),
                            (&g[i * m * n..], n as isize, 1),
                            (&bd[i * k * n..], 1, n as isize),
                            &mut ga[i * m * k..(i + 1) * m * k],
                            1.0,
                        );
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for i in 0..batch {
                        // dB = Aᵀ · dC
                        gemm(
                            (k, m, n),
                            (&ad[i * m * k..], 1, k as isize),
                            (&g[i * m * n..], n as isize, 1),
                            &mut gb[i * k * n..(i + 1) * k * n],
                            1.0,
                        );
                    }
                }
            }
            Op::Transpose(x) => {
                let s = self.shape(*x);
                let r = s.len();
                let (m, n) = (s[r - 2], s[r - 1]);
                let batch: usize = s[..r - 2].iter().product();
                if let Some(gx) = self.acc(grads, *x) {
                    for b in 0..batch {
                        let off = b * m * n;
                        for i in 0..m {
                            for j in 0..n {
                                gx[off + i * n + j] += g[off + j * m + i];
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                }
                let c = self.value(*b).len();
                if let Some(gb) = self.acc(grads, *b) {
                    for (i, y) in g.iter().enumerate() {
                        gb[i % c] += y;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                let c = bd.len();
                if let Some(ga) = self.acc(grads, *a) {
                    for (i, y) in g.iter().enumerate() {
                        ga[i] += y * bd[i % c];
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (i, y) in g.iter().enumerate() {
                        gb[i % c] += y * ad[i];
                    }
                }
            }
            Op::Affine(x, scale) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for (a, y) in gx.iter_mut().zip(g) {
                        *a += scale * y;
                    }
                }
            }
            Op::Concat(parts) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if let Some(gp) = self.acc(grads, *p) {
                        for r in 0..rows {
                            for j in 0..w {
                                gp[r * w + j] += g[r * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Slice(x, start) => {
                let c = self.value(*x).cols();
                let w = node.value.cols();
                let rows = node.value.rows();
                if let Some(gx) = self.acc(grads, *x) {
                    for r in 0..rows {
                        for j in 0..w {
                            gx[r * c + start + j] += g[r * w + j];
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for (a, y) in gx.iter_mut().zip(g) {
                        *a += y;
                    }
                }
            }
            Op::Embedding(table, indices) => {
                let d = node.value.cols();
                if let Some(gt) = self.acc(grads, *table) {
                    for (r, &i) in indices.iter().enumerate() {
                        for j in 0..d {
                            gt[i * d + j] += g[r * d + j];
                        }
                    }
                }
            }
            Op::EmbeddingBag(table, bags) => {
                let d = node.value.cols();
                if let Some(gt) = self.acc(grads, *table) {
                    for (r, bag) in bags.iter().enumerate() {
                        if bag.is_empty() {
                            continue;
                        }
                        let w = 1.0 / bag.len() as f64;
                        for &i in bag {
                            for j in 0..d {
                                gt[i * d + j] += w * g[r * d + j];
                            }
                        }
                    }
                }
            }
            Op::Relu(x) => self.elementwise_back(*x, g, grads, |xi, _| if xi > 0.0 { 1.0 } else { 0.0 }, out),
            Op::Gelu(x) => self.elementwise_back(*x, g, grads, |xi, _| gelu_grad(xi), out),
            Op::Sigmoid(x) => self.elementwise_back(*x, g, grads, |_, y| y * (1.0 - y), out),
            Op::Tanh(x) => self.elementwise_back(*x, g, grads, |_, y| 1.0 - y * y, out),
            Op::Softplus(x) => self.elementwise_back(*x, g, grads, |xi, _| sigmoid(xi), out),
            Op::Exp(x) => self.elementwise_back(*x, g, grads, |_, y| y, out),
            Op::Log(x) => self.elementwise_back(*x, g, grads, |xi, _| 1.0 / xi, out),
            Op::Softmax(x, axis) => {
                let (outer, len, inner) = axis_split(node.value.shape(), *axis);
                if let Some(gx) = self.acc(grads, *x) {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| o * len * inner + k * inner + i;
                            let dot: f64 = (0..len).map(|k| out[at(k)] * g[at(k)]).sum();
                            for k in 0..len {
                                gx[at(k)] += out[at(k)] * (g[at(k)] - dot);
                            }
                        }
                    }
                }
            }
            Op::Sparsemax(x, axis) => {
                let (outer, len, inner) = axis_split(node.value.shape(), *axis);
                if let Some(gx) = self.acc(grads, *x) {
                    let mut p = vec![0.0; len];
                    let mut up = vec![0.0; len];
                    let mut down = vec![0.0; len];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| o * len * inner + k * inner + i;
                            for k in 0..len {
                                p[k] = out[at(k)];
                                up[k] = g[at(k)];
                                down[k] = 0.0;
                            }
                            sparsemax::sparsemax_vjp(&p, &up, &mut down);
                            for k in 0..len {
                                gx[at(k)] += down[k];
                            }
                        }
                    }
                }
            }
            Op::LayerNorm(x, inv_std) => {
                let c = node.value.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, &is) in inv_std.iter().enumerate() {
                        let y = &out[r * c..(r + 1) * c];
                        let dy = &g[r * c..(r + 1) * c];
                        let mean_dy = dy.iter().sum::<f64>() / c as f64;
                        let mean_dyy = dy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                        for j in 0..c {
                            gx[r * c + j] += is * (dy[j] - mean_dy - y[j] * mean_dyy);
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for a in gx.iter_mut() {
                        *a += g[0];
                    }
                }
            }
            Op::Mean(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    let w = g[0] / gx.len().max(1) as f64;
                    for a in gx.iter_mut() {
                        *a += w;
                    }
                }
            }
            Op::Dropout(x, mask) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for ((a, y), m) in gx.iter_mut().zip(g).zip(mask) {
                        *a += y * m;
                    }
                }
            }
            Op::FocalLoss {
                logits,
                labels,
                gamma,
                alpha,
            } => {
                let z = self.value(*logits).data();
                let w = g[0] / labels.len().max(1) as f64;
                if let Some(gz) = self.acc(grads, *logits) {
                    for ((a, &zi), &yi) in gz.iter_mut().zip(z).zip(labels) {
                        *a += w * focal_terms(zi, yi, *gamma, *alpha).1;
                    }
                }
            }
            Op::Mse(pred, targets) => {
                let p = self.value(*pred).data();
                let w = 2.0 * g[0] / targets.len().max(1) as f64;
                if let Some(gp) = self.acc(grads, *pred) {
                    for ((a, &pi), &ti) in gp.iter_mut().zip(p).zip(targets) {
                        *a += w * (pi - ti);
                    }
                }
            }
        }
        Ok(())
    }

    fn elementwise_back(
        &self,
        x: Var,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        local: impl Fn(f64, f64) -> f64,
        out: &[f64],
    ) {
        let xd = self.value(x).data();
        if let Some(gx) = self.acc(grads, x) {
            for i in 0..gx.len() {
                gx[i] += g[i] * local(xd[i], out[i]);
            }
        }
    }
}
