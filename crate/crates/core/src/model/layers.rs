use rand::Rng;

use crate::autodiff::{Bound, Graph, ParamStore, Var};
use crate::error::Result;

/// Named parameter lookup against a bound store.
pub(crate) struct Ctx<'a> {
    pub params: &'a ParamStore,
    pub bound: &'a Bound,
}

impl Ctx<'_> {
    pub fn p(&self, name: &str) -> Var {
        let id = self
            .params
            .id(name)
            .unwrap_or_else(|| panic!("parameter {name} missing"));
        self.bound.var(id)
    }

    /// `x @ W + b` over the last axis of any-rank `x`.
    pub fn linear(&self, g: &mut Graph, x: Var, name: &str) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let w = self.p(&format!("{name}.w"));
        let b = self.p(&format!("{name}.b"));
        let out_dim = g.shape(w)[1];
        let flat = if shape.len() == 2 {
            x
        } else {
            let rows = shape[..shape.len() - 1].iter().product();
            g.reshape(x, &[rows, shape[shape.len() - 1]])?
        };
        let y = g.matmul(flat, w)?;
        let y = g.add(y, b)?;
        if shape.len() == 2 {
            Ok(y)
        } else {
            let mut s = shape;
            *s.last_mut().expect("rank >= 1") = out_dim;
            g.reshape(y, &s)
        }
    }
}

pub(crate) fn add_linear<R: Rng + ?Sized>(
    ps: &mut ParamStore,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) {
    ps.add_glorot(format!("{name}.w"), fan_in, fan_out, rng);
    ps.add_filled(format!("{name}.b"), &[fan_out], 0.0);
}

/// Gated linear unit: `a * sigmoid(b)` over the two halves of a linear map.
pub(crate) fn glu(ctx: &Ctx, g: &mut Graph, x: Var, name: &str, width: usize) -> Result<Var> {
    let h = ctx.linear(g, x, name)?;
    let a = g.slice(h, 0, width)?;
    let b = g.slice(h, width, 2 * width)?;
    let gate = g.sigmoid(b);
    g.mul(a, gate)
}

/// Multi-head self-attention over `(batch, tokens, dim)`. Returns the output
/// and each head's `(batch, tokens, tokens)` weights.
pub(crate) fn self_attention(
    ctx: &Ctx,
    g: &mut Graph,
    x: Var,
    name: &str,
    heads: usize,
) -> Result<(Var, Vec<Var>)> {
    let dim = g.shape(x)[2];
    let dh = dim / heads;
    let q = ctx.linear(g, x, &format!("{name}.q"))?;
    let k = ctx.linear(g, x, &format!("{name}.k"))?;
    let v = ctx.linear(g, x, &format!("{name}.v"))?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (s, e) = (h * dh, (h + 1) * dh);
        let qh = g.slice(q, s, e)?;
        let kh = g.slice(k, s, e)?;
        let vh = g.slice(v, s, e)?;
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.affine(scores, scale, 0.0);
        let a = g.softmax(scores, 2)?;
        outs.push(g.matmul(a, vh)?);
        weights.push(a);
    }
    let cat = g.concat(&outs)?;
    let out = ctx.linear(g, cat, &format!("{name}.o"))?;
    Ok((out, weights))
}
