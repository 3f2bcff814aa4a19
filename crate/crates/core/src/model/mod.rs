//! Encoder fusion and the three tabular backbones.
//!
//! Every input block is projected to width `d`: numeric columns through an
//! MLP, each categorical column through its own embedding table, each code
//! field as the mean of its code vectors followed by an MLP, and optional
//! per-code text vectors through a linear map. ResNet and TabNet consume the
//! concatenated blocks; TabTransformer attends over the categorical and code
//! blocks as tokens and joins the layer-normed raw numerics at the head.

mod layers;
pub mod vectors;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, softplus, Bound, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSchema, Task};
use layers::{add_linear, glu, self_attention, Ctx};

pub const TEXT_TABLE: &str = "enc.text.table";
/// Per-token column embedding added before the transformer layers.
pub const COLUMN_EMBEDDING: &str = "enc.col";

/// Parameters excluded from optimisation.
pub fn is_frozen_param(name: &str) -> bool {
    name == TEXT_TABLE
}
const PREDICT_CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Resnet,
    Tabtransformer,
    Tabnet,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 3] = [Self::Resnet, Self::Tabtransformer, Self::Tabnet];

    pub fn name(self) -> &'static str {
        match self {
            Self::Resnet => "resnet",
            Self::Tabtransformer => "tabtransformer",
            Self::Tabnet => "tabnet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub d: usize,
    pub numeric_hidden: usize,
    /// CSV `code,v1,...,vK` initialising diagnosis and procedure code tables.
    pub code_vectors: Option<PathBuf>,
    /// CSV `code,v1,...,v768` of frozen per-code description vectors.
    pub text_vectors: Option<PathBuf>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d: 32,
            numeric_hidden: 64,
            code_vectors: None,
            text_vectors: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    /// Residual blocks (ResNet) or transformer layers.
    pub depth: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub steps: usize,
    pub gamma: f64,
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self::for_kind(BackboneKind::Tabtransformer)
    }
}

impl BackboneConfig {
    pub fn for_kind(kind: BackboneKind) -> Self {
        Self {
            kind,
            depth: if kind == BackboneKind::Resnet { 4 } else { 2 },
            heads: 4,
            ffn_mult: 2,
            steps: 3,
            gamma: 1.3,
            hidden: 64,
            dropout: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub backbone: BackboneConfig,
}

impl ModelConfig {
    pub fn for_kind(kind: BackboneKind) -> Self {
        Self {
            encoder: EncoderConfig::default(),
            backbone: BackboneConfig::for_kind(kind),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.backbone;
        if self.encoder.d == 0 || self.encoder.numeric_hidden == 0 || b.hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if b.kind == BackboneKind::Tabtransformer && (b.heads == 0 || self.encoder.d % b.heads != 0) {
            return Err(Error::Config(format!(
                "{} heads do not divide model width {}",
                b.heads, self.encoder.d
            )));
        }
        if b.kind == BackboneKind::Tabnet && (b.steps == 0 || b.gamma < 1.0) {
            return Err(Error::Config(format!(
                "tabnet needs steps >= 1 and gamma >= 1 (got {}, {})",
                b.steps, b.gamma
            )));
        }
        if !(0.0..1.0).contains(&b.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", b.dropout)));
        }
        Ok(())
    }
}

/// Input widths and vocabulary sizes a model was built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDims {
    pub numeric: Vec<String>,
    pub categorical: Vec<(String, usize)>,
    pub codes: Vec<(String, usize)>,
    pub code_dim: usize,
    pub text_dim: Option<usize>,
}

impl InputDims {
    pub fn from_schema(schema: &FeatureSchema, code_dim: usize, text_dim: Option<usize>) -> Self {
        Self {
            numeric: schema.numeric.iter().map(|s| s.name.clone()).collect(),
            categorical: schema
                .categorical
                .iter()
                .map(|v| (v.name.clone(), v.len()))
                .collect(),
            codes: schema.codes.iter().map(|v| (v.name.clone(), v.len())).collect(),
            code_dim,
            text_dim,
        }
    }

    /// Attribution units in order: numeric, categorical, code fields, text.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.numeric.clone();
        names.extend(self.categorical.iter().map(|(n, _)| n.clone()));
        names.extend(self.codes.iter().map(|(n, _)| n.clone()));
        if self.text_dim.is_some() {
            names.push("code_text".to_string());
        }
        names
    }

    /// Number of width-`d` blocks in the fused representation.
    pub fn n_blocks(&self) -> usize {
        1 + self.categorical.len() + self.codes.len() + usize::from(self.text_dim.is_some())
    }
}

/// Rows of a feature matrix in model layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub numeric: Tensor,
    /// Per categorical column, one vocabulary index per row.
    pub categorical: Vec<Vec<usize>>,
    /// Per code field, one bag per row.
    pub codes: Vec<Vec<Vec<usize>>>,
}

impl Batch {
    pub fn from_matrix(m: &FeatureMatrix, idx: &[usize]) -> Self {
        let n_cat = m.categorical.first().map_or(0, Vec::len);
        Self {
            numeric: m.numeric.select_rows(idx),
            categorical: (0..n_cat)
                .map(|c| idx.iter().map(|&i| m.categorical[i][c]).collect())
                .collect(),
            codes: m
                .codes
                .iter()
                .map(|f| idx.iter().map(|&i| f[i].clone()).collect())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.numeric.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-feature inputs after lookup and pooling: the space attributions live in.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddedRef<'a> {
    pub numeric: Var,
    pub categorical: &'a [Var],
    pub codes: &'a [Var],
    pub text: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Embedded {
    pub numeric: Var,
    pub categorical: Vec<Var>,
    /// Mean code vector per field, before the projection MLP.
    pub codes: Vec<Var>,
    /// Mean text vector of the diagnosis codes.
    pub text: Option<Var>,
}

impl Embedded {
    pub fn as_ref(&self) -> EmbeddedRef<'_> {
        EmbeddedRef {
            numeric: self.numeric,
            categorical: &self.categorical,
            codes: &self.codes,
            text: self.text,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Forward {
    /// `(batch, 1)` pre-activation output.
    pub logit: Var,
    /// Penultimate representation used for projections.
    pub representation: Var,
    /// Per transformer layer, per head `(batch, tokens, tokens)` weights.
    pub attention: Vec<Vec<Var>>,
    /// Per TabNet step, `(batch, fused width)` feature masks.
    pub masks: Vec<Var>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    config: ModelConfig,
    dims: InputDims,
    task: Task,
    schema_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub dims: InputDims,
    pub task: Task,
    pub schema_hash: String,
    pub params: ParamStore,
}

impl Model {
    /// Randomly initialised model for `schema`. Code tables are seeded from
    /// `code_vectors` when given; `text_vectors` supplies the frozen text table.
    pub fn new(
        config: ModelConfig,
        schema: &FeatureSchema,
        code_vectors: Option<&vectors::VectorTable>,
        text_vectors: Option<&vectors::VectorTable>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.encoder.d;
        let code_dim = code_vectors.map_or(d, |v| v.dim);
        let dims = InputDims::from_schema(schema, code_dim, text_vectors.map(|v| v.dim));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new();
        let n_num = dims.numeric.len();
        let b = &config.backbone;
        if b.kind != BackboneKind::Tabtransformer {
            add_linear(&mut ps, "enc.num.fc1", n_num.max(1), config.encoder.numeric_hidden, &mut rng);
            add_linear(&mut ps, "enc.num.fc2", config.encoder.numeric_hidden, d, &mut rng);
        }
        for (name, vocab) in &dims.categorical {
            ps.add_normal(format!("enc.cat.{name}"), &[*vocab, d], 0.1, &mut rng);
        }
        for (f, (name, vocab)) in dims.codes.iter().enumerate() {
            let table = ps.add_normal(format!("enc.code.{name}"), &[*vocab, code_dim], 0.1, &mut rng);
            if let Some(vt) = code_vectors {
                vt.fill_table(ps.get_mut(table), &schema.codes[f].tokens, name);
            }
            add_linear(&mut ps, &format!("enc.code.{name}.fc1"), code_dim, d, &mut rng);
            add_linear(&mut ps, &format!("enc.code.{name}.fc2"), d, d, &mut rng);
        }
        if let Some(vt) = text_vectors {
            let diag = schema
                .codes
                .first()
                .ok_or_else(|| Error::Schema("text vectors need a code field".into()))?;
            let mut table = Tensor::zeros(&[diag.len(), vt.dim]);
            vt.fill_table(&mut table, &diag.tokens, "code_text");
            ps.add(TEXT_TABLE, table);
            add_linear(&mut ps, "enc.text", vt.dim, d, &mut rng);
        }
        let fused = dims.n_blocks() * d;
        match b.kind {
            BackboneKind::Resnet => {
                for i in 0..b.depth {
                    add_linear(&mut ps, &format!("res{i}.fc1"), fused, b.hidden, &mut rng);
                    add_linear(&mut ps, &format!("res{i}.fc2"), b.hidden, fused, &mut rng);
                }
                add_linear(&mut ps, "head", fused, 1, &mut rng);
            }
            BackboneKind::Tabtransformer => {
                let tokens = dims.n_blocks() - 1;
                if tokens == 0 {
                    return Err(Error::Config(
                        "tabtransformer needs at least one categorical or code column".into(),
                    ));
                }
                ps.add_normal(COLUMN_EMBEDDING, &[1, tokens * d], 1.0, &mut rng);
                for l in 0..b.depth {
                    for p in ["q", "k", "v", "o"] {
                        add_linear(&mut ps, &format!("tf{l}.attn.{p}"), d, d, &mut rng);
                    }
                    add_linear(&mut ps, &format!("tf{l}.ff1"), d, b.ffn_mult * d, &mut rng);
                    add_linear(&mut ps, &format!("tf{l}.ff2"), b.ffn_mult * d, d, &mut rng);
                }
                add_linear(&mut ps, "head.fc1", tokens * d + n_num, b.hidden, &mut rng);
                add_linear(&mut ps, "head.out", b.hidden, 1, &mut rng);
            }
            BackboneKind::Tabnet => {
                let n = d;
                add_linear(&mut ps, "tn.shared", fused, 4 * n, &mut rng);
                for i in 0..=b.steps {
                    add_linear(&mut ps, &format!("tn.step{i}"), 2 * n, 4 * n, &mut rng);
                    if i > 0 {
                        add_linear(&mut ps, &format!("tn.att{i}"), n, fused, &mut rng);
                    }
                }
                add_linear(&mut ps, "head", n, 1, &mut rng);
            }
        }
        Ok(Self {
            config,
            dims,
            task: schema.task,
            schema_hash: schema.hash(),
            params: ps,
        })
    }

    pub fn kind(&self) -> BackboneKind {
        self.config.backbone.kind
    }

    /// Parameters excluded from optimisation.
    pub fn is_frozen(&self, name: &str) -> bool {
        is_frozen_param(name)
    }

    /// Rejects matrices whose layout or vocabularies differ from the model's.
    pub fn check_matrix(&self, m: &FeatureMatrix) -> Result<()> {
        let n_cat = m.categorical.first().map_or(self.dims.categorical.len(), Vec::len);
        if m.n_numeric() != self.dims.numeric.len()
            || n_cat != self.dims.categorical.len()
            || m.codes.len() != self.dims.codes.len()
        {
            return Err(Error::Schema(format!(
                "matrix has {} numeric, {} categorical, {} code fields; model expects {}, {}, {}",
                m.n_numeric(),
                n_cat,
                m.codes.len(),
                self.dims.numeric.len(),
                self.dims.categorical.len(),
                self.dims.codes.len()
            )));
        }
        for (c, (name, vocab)) in self.dims.categorical.iter().enumerate() {
            if m.categorical.iter().any(|r| r[c] >= *vocab) {
                return Err(Error::Schema(format!("`{name}` index outside vocabulary")));
            }
        }
        for (f, (name, vocab)) in self.dims.codes.iter().enumerate() {
            if m.codes[f].iter().flatten().any(|&i| i >= *vocab) {
                return Err(Error::Schema(format!("`{name}` code outside vocabulary")));
            }
        }
        Ok(())
    }

    pub(crate) fn ctx<'a>(&'a self, bound: &'a Bound) -> Ctx<'a> {
        Ctx {
            params: &self.params,
            bound,
        }
    }

    /// Looks up and pools a batch into per-feature embedded inputs.
    pub fn embed(&self, g: &mut Graph, bound: &Bound, batch: &Batch) -> Result<Embedded> {
        let ctx = self.ctx(bound);
        let numeric = g.constant(batch.numeric.clone());
        let categorical = self
            .dims
            .categorical
            .iter()
            .zip(&batch.categorical)
            .map(|((name, _), idx)| g.embedding_lookup(ctx.p(&format!("enc.cat.{name}")), idx))
            .collect::<Result<Vec<_>>>()?;
        let codes = self
            .dims
            .codes
            .iter()
            .zip(&batch.codes)
            .map(|((name, _), bags)| g.embedding_bag_mean(ctx.p(&format!("enc.code.{name}")), bags))
            .collect::<Result<Vec<_>>>()?;
        let text = match (self.dims.text_dim, batch.codes.first()) {
            (Some(_), Some(bags)) => Some(g.embedding_bag_mean(ctx.p(TEXT_TABLE), bags)?),
            _ => None,
        };
        Ok(Embedded {
            numeric,
            categorical,
            codes,
            text,
        })
    }

    /// Baseline embedded inputs for `n` rows: numeric zeros (the training
    /// mean after standardisation), the `None` embedding per categorical
    /// column, and empty code bags.
    pub fn baseline_batch(&self, n: usize) -> Batch {
        Batch {
            numeric: Tensor::zeros(&[n, self.dims.numeric.len()]),
            categorical: vec![vec![1; n]; self.dims.categorical.len()],
            codes: vec![vec![Vec::new(); n]; self.dims.codes.len()],
        }
    }

    /// Width-`d` blocks in fusion order (numeric block first unless omitted).
    fn encode_blocks(&self, ctx: &Ctx, g: &mut Graph, emb: EmbeddedRef, with_numeric: bool) -> Result<Vec<Var>> {
        let mut blocks = Vec::with_capacity(self.dims.n_blocks());
        if with_numeric {
            let h = ctx.linear(g, emb.numeric, "enc.num.fc1")?;
            let h = g.gelu(h);
            blocks.push(ctx.linear(g, h, "enc.num.fc2")?);
        }
        blocks.extend_from_slice(emb.categorical);
        for ((name, _), &pooled) in self.dims.codes.iter().zip(emb.codes) {
            let h = ctx.linear(g, pooled, &format!("enc.code.{name}.fc1"))?;
            let h = g.gelu(h);
            blocks.push(ctx.linear(g, h, &format!("enc.code.{name}.fc2"))?);
        }
        if let Some(t) = emb.text {
            blocks.push(ctx.linear(g, t, "enc.text")?);
        }
        Ok(blocks)
    }

    /// Fused `(batch, n_blocks * d)` representation (ResNet/TabNet input).
    pub fn encode(&self, g: &mut Graph, bound: &Bound, emb: EmbeddedRef) -> Result<Var> {
        let ctx = self.ctx(bound);
        let blocks = self.encode_blocks(&ctx, g, emb, true)?;
        g.concat(&blocks)
    }

    pub fn forward_embedded<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        bound: &Bound,
        emb: EmbeddedRef,
        train: bool,
        rng: &mut R,
    ) -> Result<Forward> {
        let ctx = self.ctx(bound);
        let b = &self.config.backbone;
        match b.kind {
            BackboneKind::Resnet => {
                let blocks = self.encode_blocks(&ctx, g, emb, true)?;
                let mut x = g.concat(&blocks)?;
                for i in 0..b.depth {
                    let h = g.layer_norm(x);
                    let h = ctx.linear(g, h, &format!("res{i}.fc1"))?;
                    let h = g.gelu(h);
                    let h = g.dropout(h, b.dropout, train, rng);
                    let h = ctx.linear(g, h, &format!("res{i}.fc2"))?;
                    x = g.add(x, h)?;
                }
                let logit = ctx.linear(g, x, "head")?;
                Ok(Forward {
                    logit,
                    representation: x,
                    attention: Vec::new(),
                    masks: Vec::new(),
                })
            }
            BackboneKind::Tabtransformer => {
                let tokens = self.encode_blocks(&ctx, g, emb, false)?;
                let d = self.config.encoder.d;
                let n = g.shape(emb.numeric)[0];
                let t = tokens.len();
                let flat = g.concat(&tokens)?;
                let flat = g.add(flat, ctx.p(COLUMN_EMBEDDING))?;
                let x = g.reshape(flat, &[n, t, d])?;
                let (x, attention) = self.transformer_layers(g, bound, x, train, rng)?;
                let flat = g.reshape(x, &[n, t * d])?;
                let head_in = if self.dims.numeric.is_empty() {
                    flat
                } else {
                    g.concat(&[flat, emb.numeric])?
                };
                let h = ctx.linear(g, head_in, "head.fc1")?;
                let h = g.gelu(h);
                let representation = h;
                let h = g.dropout(h, b.dropout, train, rng);
                let logit = ctx.linear(g, h, "head.out")?;
                Ok(Forward {
                    logit,
                    representation,
                    attention,
                    masks: Vec::new(),
                })
            }
            BackboneKind::Tabnet => {
                let blocks = self.encode_blocks(&ctx, g, emb, true)?;
                let f = g.concat(&blocks)?;
                let (rows, width) = (g.shape(f)[0], g.shape(f)[1]);
                let n = self.config.encoder.d;
                let transform = |g: &mut Graph, x: Var, step: usize| -> Result<Var> {
                    let y1 = glu(&ctx, g, x, "tn.shared", 2 * n)?;
                    let y2 = glu(&ctx, g, y1, &format!("tn.step{step}"), 2 * n)?;
                    let s = g.add(y1, y2)?;
                    Ok(g.affine(s, std::f64::consts::FRAC_1_SQRT_2, 0.0))
                };
                let out0 = transform(g, f, 0)?;
                let mut att = g.slice(out0, n, 2 * n)?;
                let mut prior = g.constant(Tensor::filled(&[rows, width], 1.0));
                let mut agg: Option<Var> = None;
                let mut masks = Vec::with_capacity(b.steps);
                for i in 1..=b.steps {
                    let a = ctx.linear(g, att, &format!("tn.att{i}"))?;
                    let a = g.mul(a, prior)?;
                    let m = g.sparsemax(a, 1)?;
                    let relax = g.affine(m, -1.0, b.gamma);
                    prior = g.mul(prior, relax)?;
                    let masked = g.mul(m, f)?;
                    let out = transform(g, masked, i)?;
                    let di = g.slice(out, 0, n)?;
                    let di = g.gelu(di);
                    agg = Some(match agg {
                        Some(acc) => g.add(acc, di)?,
                        None => di,
                    });
                    att = g.slice(out, n, 2 * n)?;
                    masks.push(m);
                }
                let representation = agg.expect("steps >= 1");
                let h = g.dropout(representation, b.dropout, train, rng);
                let logit = ctx.linear(g, h, "head")?;
                Ok(Forward {
                    logit,
                    representation,
                    attention: Vec::new(),
                    masks,
                })
            }
        }
    }

    /// Post-norm encoder layers over `(batch, tokens, d)`, no positional
    /// encoding.
    pub fn transformer_layers<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        bound: &Bound,
        mut x: Var,
        train: bool,
        rng: &mut R,
    ) -> Result<(Var, Vec<Vec<Var>>)> {
        let ctx = self.ctx(bound);
        let b = &self.config.backbone;
        let mut attention = Vec::with_capacity(b.depth);
        for l in 0..b.depth {
            let (a, w) = self_attention(&ctx, g, x, &format!("tf{l}.attn"), b.heads)?;
            let a = g.dropout(a, b.dropout, train, rng);
            let s = g.add(x, a)?;
            x = g.layer_norm(s);
            let f = ctx.linear(g, x, &format!("tf{l}.ff1"))?;
            let f = g.gelu(f);
            let f = g.dropout(f, b.dropout, train, rng);
            let f = ctx.linear(g, f, &format!("tf{l}.ff2"))?;
            let s = g.add(x, f)?;
            x = g.layer_norm(s);
            attention.push(w);
        }
        Ok((x, attention))
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        bound: &Bound,
        batch: &Batch,
        train: bool,
        rng: &mut R,
    ) -> Result<Forward> {
        let emb = self.embed(g, bound, batch)?;
        self.forward_embedded(g, bound, emb.as_ref(), train, rng)
    }

    /// Maps a raw output to the reported scale: a probability, or days.
    pub fn output_transform(&self, logit: f64) -> f64 {
        if self.task.is_regression() {
            softplus(logit).exp_m1()
        } else {
            sigmoid(logit)
        }
    }

    /// Applies [`Model::output_transform`] on the graph so IG and training
    /// see the same function.
    pub fn output_on_graph(&self, g: &mut Graph, logit: Var) -> Var {
        if self.task.is_regression() {
            g.softplus(logit)
        } else {
            g.sigmoid(logit)
        }
    }

    fn eval_chunks<T>(
        &self,
        m: &FeatureMatrix,
        mut f: impl FnMut(&Graph, &Forward, &mut Vec<T>),
    ) -> Result<Vec<T>> {
        self.check_matrix(m)?;
        let mut out = Vec::with_capacity(m.len());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let idx: Vec<usize> = (0..m.len()).collect();
        for chunk in idx.chunks(PREDICT_CHUNK) {
            let mut g = Graph::new();
            let bound = self.params.bind_frozen(&mut g);
            let batch = Batch::from_matrix(m, chunk);
            let fw = self.forward(&mut g, &bound, &batch, false, &mut rng)?;
            f(&g, &fw, &mut out);
        }
        Ok(out)
    }

    /// Eval-mode scores: probabilities, or next-LOS days for the LOS task.
    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        let scores = self.eval_chunks(m, |g, fw, out| {
            out.extend(g.value(fw.logit).data().iter().map(|&z| self.output_transform(z)));
        })?;
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("prediction for row {i}")));
        }
        Ok(scores)
    }

    /// Penultimate representations, one row per matrix row.
    pub fn representations(&self, m: &FeatureMatrix) -> Result<Tensor> {
        let mut width = 0;
        let data = self.eval_chunks(m, |g, fw, out| {
            let v = g.value(fw.representation);
            width = v.cols();
            out.extend_from_slice(v.data());
        })?;
        Tensor::new(vec![m.len(), width], data)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.params.save(&dir.join("checkpoint.csv"))?;
        crate::io::write_json(
            &dir.join("config.json"),
            &ModelFile {
                config: self.config.clone(),
                dims: self.dims.clone(),
                task: self.task,
                schema_hash: self.schema_hash.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cfg_path = dir.join("config.json");
        let text = std::fs::read_to_string(&cfg_path).map_err(|_| Error::MissingArtifact(cfg_path))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        let ckpt = dir.join("checkpoint.csv");
        if !ckpt.exists() {
            return Err(Error::MissingArtifact(ckpt));
        }
        Ok(Self {
            config: file.config,
            dims: file.dims,
            task: file.task,
            schema_hash: file.schema_hash,
            params: ParamStore::load(&ckpt)?,
        })
    }

    /// Parameter counts per name prefix, for logging.
    pub fn param_summary(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for (_, name, t) in self.params.iter() {
            let prefix = name.split('.').next().unwrap_or(name).to_string();
            *m.entry(prefix).or_insert(0) += t.len();
        }
        m
    }
}

#[cfg(test)]
pub(crate) mod tests;
