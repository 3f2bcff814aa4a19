use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: OptimizerConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(params: &ParamStore, cfg: OptimizerConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            cfg,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One update; parameters for which `frozen(name)` holds are left alone.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Vec<f64>], frozen: impl Fn(&str) -> bool) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let ids: Vec<_> = params.iter().map(|(id, name, _)| (id, frozen(name))).collect();
        for (k, (id, skip)) in ids.into_iter().enumerate() {
            if skip {
                continue;
            }
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for ((w, (mi, vi)), gi) in params
                .get_mut(id)
                .data_mut()
                .iter_mut()
                .zip(m.iter_mut().zip(v.iter_mut()))
                .zip(g)
            {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= c.lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn first_step_moves_by_lr() {
        let mut ps = ParamStore::new();
        ps.add("w", Tensor::vector(vec![1.0, -1.0]));
        let mut opt = Adam::new(&ps, OptimizerConfig::default());
        opt.step(&mut ps, &[vec![0.5, -2.0]], |_| false);
        let w = ps.get(ps.id("w").unwrap()).data();
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[1] - (-1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn zero_lr_and_frozen_are_no_ops() {
        let mut ps = ParamStore::new();
        ps.add("a", Tensor::vector(vec![1.0]));
        ps.add("b", Tensor::vector(vec![2.0]));
        let before = ps.clone();
        let mut opt = Adam::new(
            &ps,
            OptimizerConfig {
                lr: 0.0,
                ..OptimizerConfig::default()
            },
        );
        opt.step(&mut ps, &[vec![1.0], vec![1.0]], |_| false);
        assert_eq!(ps, before);
        let mut opt = Adam::new(&ps, OptimizerConfig::default());
        opt.step(&mut ps, &[vec![1.0], vec![1.0]], |n| n == "b");
        assert_eq!(ps.get(ps.id("b").unwrap()).item(), 2.0);
        assert_ne!(ps.get(ps.id("a").unwrap()).item(), 1.0);
    }
}
