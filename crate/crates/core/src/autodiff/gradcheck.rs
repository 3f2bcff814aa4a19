//! Central finite-difference checks against reverse-mode gradients.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Outcome of comparing analytic and numeric gradients.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// Distance of the probed point from the nearest relu/sparsemax kink.
    pub kink_margin: f64,
}

/// Relative error with a unit floor on the denominator, so tiny gradients
/// are judged on absolute error.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compares `backward` against `(f(x+h) - f(x-h)) / 2h` for every entry of
/// every input. `build` receives the graph and one differentiable leaf per
/// input and must return a scalar.
pub fn check<F>(inputs: &[Tensor], step: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<(Graph, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.input(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok((g, vars, out))
    };
    let (g, vars, out) = eval(inputs)?;
    let grads = g.backward(out)?;
    let kink_margin = g.kink_margin();

    let mut result = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
        kink_margin,
    };
    let mut probe = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, inputs[i].len());
        for j in 0..inputs[i].len() {
            let orig = probe[i].data()[j];
            probe[i].data_mut()[j] = orig + step;
            let (gp, _, op) = eval(&probe)?;
            let fp = gp.value(op).item();
            probe[i].data_mut()[j] = orig - step;
            let (gm, _, om) = eval(&probe)?;
            let fm = gm.value(om).item();
            probe[i].data_mut()[j] = orig;
            let numeric = (fp - fm) / (2.0 * step);
            result.max_rel_error = result.max_rel_error.max(rel_error(analytic[j], numeric));
            result.max_abs_error = result.max_abs_error.max((analytic[j] - numeric).abs());
            result.checked += 1;
        }
    }
    Ok(result)
}
