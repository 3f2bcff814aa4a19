//! Integrated Gradients with the midpoint Riemann rule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::model::{Batch, EmbeddedRef, Model};

pub const MIN_STEPS: usize = 16;

/// Interpolated rows evaluated per graph.
const ROWS_PER_GRAPH: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IgConfig {
    pub steps: usize,
    /// Ranks codes jointly with feature units instead of among codes only.
    pub joint_code_ranking: bool,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self {
            steps: 256,
            joint_code_ranking: false,
        }
    }
}

impl IgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < MIN_STEPS {
            return Err(Error::Config(format!("IG steps must be at least {MIN_STEPS}, got {}", self.steps)));
        }
        Ok(())
    }
}

/// Result of [`path_integral`] for `n` samples.
#[derive(Clone, Debug)]
pub struct PathIntegral {
    /// Per input block, `(n, width)` attributions.
    pub attributions: Vec<Tensor>,
    /// Per input block, `(n, width)` path-averaged gradients.
    pub mean_grads: Vec<Tensor>,
    pub outputs: Vec<f64>,
    pub baseline_outputs: Vec<f64>,
    /// `|Σ attributions − (F(x) − F(x′))|` per sample.
    pub residuals: Vec<f64>,
}

fn check_blocks(inputs: &[Tensor], baselines: &[Tensor]) -> Result<usize> {
    let n = inputs.first().map_or(0, Tensor::rows);
    if inputs.len() != baselines.len()
        || inputs
            .iter()
            .zip(baselines)
            .any(|(x, b)| x.shape().len() != 2 || x.shape() != b.shape() || x.rows() != n)
    {
        return Err(Error::shape(
            "integrated_gradients",
            format!(
                "inputs {:?} vs baselines {:?}",
                inputs.iter().map(Tensor::shape).collect::<Vec<_>>(),
                baselines.iter().map(Tensor::shape).collect::<Vec<_>>()
            ),
        ));
    }
    Ok(n)
}

/// Integrated Gradients of a scalar-per-row function `f` over 2-D input
/// blocks. `f` receives one var per block and must return `(rows, 1)` or
/// `(rows,)` outputs where row `r` depends only on input row `r`.
pub fn path_integral<F>(inputs: &[Tensor], baselines: &[Tensor], steps: usize, f: F) -> Result<PathIntegral>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if steps == 0 {
        return Err(Error::Config("IG needs at least one step".into()));
    }
    let n = check_blocks(inputs, baselines)?;
    let widths: Vec<usize> = inputs.iter().map(Tensor::cols).collect();
    let mut sums: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; n * w]).collect();

    let samples_per_graph = (ROWS_PER_GRAPH / steps).max(1);
    let mut start = 0;
    while start < n {
        let end = (start + samples_per_graph).min(n);
        let rows = (end - start) * steps;
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs
            .iter()
            .zip(baselines)
            .zip(&widths)
            .map(|((x, b), &w)| {
                let mut data = Vec::with_capacity(rows * w);
                for s in start..end {
                    let (xr, br) = (x.row(s), b.row(s));
                    for k in 0..steps {
                        let alpha = (k as f64 + 0.5) / steps as f64;
                        data.extend(xr.iter().zip(br).map(|(&xv, &bv)| bv + alpha * (xv - bv)));
                    }
                }
                Ok(g.input(Tensor::new(vec![rows, w], data)?))
            })
            .collect::<Result<_>>()?;
        let out = f(&mut g, &vars)?;
        let total = g.sum(out);
        let grads = match g.backward(total) {
            Ok(gr) => gr,
            Err(Error::NonFinite(msg)) => {
                let bad = g.value(out).data().iter().position(|v| !v.is_finite());
                return Err(Error::NonFinite(match bad {
                    Some(r) => format!(
                        "IG output at step {} of {steps} (sample {}): {msg}",
                        r % steps + 1,
                        start + r / steps
                    ),
                    None => format!("IG gradient for samples {start}..{end}: {msg}"),
                }));
            }
            Err(e) => return Err(e),
        };
        for ((var, &w), sum) in vars.iter().zip(&widths).zip(sums.iter_mut()) {
            if w == 0 {
                continue;
            }
            let gr = grads.get_or_zeros(*var, rows * w);
            for (r, row) in gr.chunks(w).enumerate() {
                if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "IG gradient at step {} of {steps} (sample {}, coordinate {j})",
                        r % steps + 1,
                        start + r / steps
                    )));
                }
                let s = start + r / steps;
                for (acc, &v) in sum[s * w..(s + 1) * w].iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        start = end;
    }

    let mut g = Graph::new();
    let both: Vec<Var> = inputs
        .iter()
        .zip(baselines)
        .map(|(x, b)| {
            let mut data = x.data().to_vec();
            data.extend_from_slice(b.data());
            Ok(g.constant(Tensor::new(vec![2 * n, x.cols()], data)?))
        })
        .collect::<Result<_>>()?;
    let out = f(&mut g, &both)?;
    let ends = g.value(out).data();
    let (outputs, baseline_outputs) = (ends[..n].to_vec(), ends[n..].to_vec());

    let mut attributions = Vec::with_capacity(inputs.len());
    let mut mean_grads = Vec::with_capacity(inputs.len());
    for ((x, b), sum) in inputs.iter().zip(baselines).zip(sums) {
        let mg: Vec<f64> = sum.iter().map(|v| v / steps as f64).collect();
        let attr: Vec<f64> = x
            .data()
            .iter()
            .zip(b.data())
            .zip(&mg)
            .map(|((&xv, &bv), &gv)| (xv - bv) * gv)
            .collect();
        attributions.push(Tensor::new(x.shape().to_vec(), attr)?);
        mean_grads.push(Tensor::new(x.shape().to_vec(), mg)?);
    }
    let residuals = (0..n)
        .map(|s| {
            let total: f64 = attributions.iter().map(|a| a.row(s).iter().sum::<f64>()).sum();
            (total - (outputs[s] - baseline_outputs[s])).abs()
        })
        .collect();
    Ok(PathIntegral {
        attributions,
        mean_grads,
        outputs,
        baseline_outputs,
        residuals,
    })
}

/// One code's share of a code field's attribution.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeAttribution {
    pub field: usize,
    /// Vocabulary index within the field.
    pub token: usize,
    pub value: f64,
}

/// Attributions for one episode toward the model output (probability, or
/// softplus of the LOS head).
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeAttribution {
    pub episode_id: String,
    /// One value per [`crate::model::InputDims::feature_names`] unit.
    pub features: Vec<f64>,
    pub codes: Vec<CodeAttribution>,
    pub output: f64,
    pub baseline_output: f64,
    pub residual: f64,
}

impl EpisodeAttribution {
    /// Whether the residual is at most `rel * (1 + |F(x) − F(x′)|)`.
    pub fn within_tolerance(&self, rel: f64) -> bool {
        self.residual <= rel * (1.0 + (self.output - self.baseline_output).abs())
    }
}

/// Embedding-space input blocks of `batch`: numeric, one per categorical
/// field, one per code field, then text.
pub fn embedded_inputs(model: &Model, batch: &Batch) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let bound = model.params.bind_frozen(&mut g);
    let emb = model.embed(&mut g, &bound, batch)?;
    let mut vars = vec![emb.numeric];
    vars.extend(&emb.categorical);
    vars.extend(&emb.codes);
    vars.extend(emb.text);
    Ok(vars.into_iter().map(|v| g.value(v).clone()).collect())
}

/// Runs the model on embedded blocks laid out as numeric, categorical,
/// codes, then text.
pub fn model_output(model: &Model, g: &mut Graph, blocks: &[Var]) -> Result<Var> {
    let bound = model.params.bind_frozen(g);
    let n_cat = model.dims.categorical.len();
    let n_codes = model.dims.codes.len();
    let emb = EmbeddedRef {
        numeric: blocks[0],
        categorical: &blocks[1..1 + n_cat],
        codes: &blocks[1 + n_cat..1 + n_cat + n_codes],
        text: blocks.get(1 + n_cat + n_codes).copied(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fw = model.forward_embedded(g, &bound, emb, false, &mut rng)?;
    Ok(model.output_on_graph(g, fw.logit))
}

/// Integrated Gradients for `rows` of `m`, attributed in embedding space
/// and summed per feature. Code fields are further split per code.
pub fn integrated_gradients(model: &Model, m: &FeatureMatrix, rows: &[usize], cfg: &IgConfig) -> Result<Vec<EpisodeAttribution>> {
    cfg.validate()?;
    model.check_matrix(m)?;
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let batch = Batch::from_matrix(m, rows);
    let inputs = embedded_inputs(model, &batch)?;
    let baselines = embedded_inputs(model, &model.baseline_batch(rows.len()))?;
    let pi = path_integral(&inputs, &baselines, cfg.steps, |g, vars| model_output(model, g, vars))?;

    let n_num = model.dims.numeric.len();
    let n_cat = model.dims.categorical.len();
    let tables: Vec<&Tensor> = model
        .dims
        .codes
        .iter()
        .map(|(name, _)| {
            let key = format!("enc.code.{name}");
            let id = model.params.id(&key).ok_or_else(|| Error::UnknownNode(key.clone()))?;
            Ok(model.params.get(id))
        })
        .collect::<Result<_>>()?;

    Ok(rows
        .iter()
        .enumerate()
        .map(|(s, &row)| {
            let mut features: Vec<f64> = pi.attributions[0].row(s)[..n_num].to_vec();
            features.extend(pi.attributions[1..].iter().map(|a| a.row(s).iter().sum::<f64>()));
            let mut codes = Vec::new();
            for (f, table) in tables.iter().enumerate() {
                let block = 1 + n_cat + f;
                let bag = &batch.codes[f][s];
                let grad = pi.mean_grads[block].row(s);
                let base = baselines[block].row(s);
                let w = 1.0 / bag.len().max(1) as f64;
                for &token in bag {
                    let value = table
                        .row(token)
                        .iter()
                        .zip(base)
                        .zip(grad)
                        .map(|((&e, &b), &gv)| (e - b) * w * gv)
                        .sum();
                    codes.push(CodeAttribution { field: f, token, value });
                }
            }
            EpisodeAttribution {
                episode_id: m.episode_ids[row].clone(),
                features,
                codes,
                output: pi.outputs[s],
                baseline_output: pi.baseline_outputs[s],
                residual: pi.residuals[s],
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::toy_model;
    use crate::model::BackboneKind;

    fn linear(w: Vec<f64>) -> impl Fn(&mut Graph, &[Var]) -> Result<Var> {
        move |g: &mut Graph, v: &[Var]| {
            let k = w.len();
            let wv = g.constant(Tensor::new(vec![k, 1], w.clone())?);
            g.matmul(v[0], wv)
        }
    }

    #[test]
    fn linear_model_is_exact() {
        let x = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[1, 2]);
        let pi = path_integral(&[x], &[b], 16, linear(vec![1.0, 2.0])).unwrap();
        assert_eq!(pi.attributions[0].data(), &[1.0, 2.0]);
        assert!(pi.residuals[0] <= 1e-12);
    }

    #[test]
    fn zero_path_gives_zero() {
        let (model, m) = toy_model(BackboneKind::Tabnet, 1);
        let inputs = embedded_inputs(&model, &Batch::from_matrix(&m, &[0])).unwrap();
        let pi = path_integral(&inputs, &inputs, 32, |g, v| model_output(&model, g, v)).unwrap();
        assert!(pi.attributions.iter().all(|a| a.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn completeness_on_every_backbone() {
        for kind in BackboneKind::ALL {
            let (model, m) = toy_model(kind, 3);
            let out = integrated_gradients(&model, &m, &[0, 1, 2, 3], &IgConfig::default()).unwrap();
            for a in &out {
                assert!(a.within_tolerance(1e-3), "{kind:?}: residual {}", a.residual);
                let fx = model.predict(&m).unwrap();
                assert!(fx.iter().any(|p| (p - a.output).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn code_shares_sum_to_field() {
        let (model, m) = toy_model(BackboneKind::Resnet, 5);
        let n_num = model.dims.numeric.len();
        let n_cat = model.dims.categorical.len();
        for a in integrated_gradients(&model, &m, &[0, 1, 2], &IgConfig { steps: 32, ..IgConfig::default() }).unwrap() {
            for f in 0..model.dims.codes.len() {
                let share: f64 = a.codes.iter().filter(|c| c.field == f).map(|c| c.value).sum();
                assert!((share - a.features[n_num + n_cat + f]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_inputs_share_credit() {
        let f = |g: &mut Graph, v: &[Var]| -> Result<Var> {
            let w = g.constant(Tensor::new(vec![3, 1], vec![1.5, 1.5, -0.7])?);
            let h = g.matmul(v[0], w)?;
            Ok(g.tanh(h))
        };
        let x = Tensor::new(vec![1, 3], vec![0.8, 0.8, 0.3]).unwrap();
        let pi = path_integral(&[x], &[Tensor::zeros(&[1, 3])], 64, f).unwrap();
        let a = pi.attributions[0].data();
        assert_eq!(a[0], a[1]);
    }

    #[test]
    fn too_few_steps_rejected() {
        assert!(IgConfig { steps: 8, ..IgConfig::default() }.validate().is_err());
    }

    #[test]
    fn nan_gradient_names_step() {
        let f = |g: &mut Graph, v: &[Var]| -> Result<Var> { Ok(g.tanh(v[0])) };
        let x = Tensor::new(vec![1, 1], vec![f64::NAN]).unwrap();
        let b = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        let err = path_integral(&[x], &[b], 16, f).unwrap_err();
        assert!(err.to_string().contains("step"), "{err}");
    }
}
