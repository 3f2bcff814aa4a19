//! Exact t-SNE for small cohorts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MAX_POINTS: usize = 5000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iters: usize,
    pub exaggeration_iters: usize,
    pub exaggeration: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iters: 1000,
            exaggeration_iters: 250,
            exaggeration: 12.0,
            learning_rate: 200.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// KL(P‖Q) at the last iteration.
    pub kl: f64,
    /// KL(P‖Q) on the last exaggerated iteration, measured against the
    /// unexaggerated P.
    pub kl_after_exaggeration: f64,
}

fn sq_distances(x: &Tensor) -> Vec<f64> {
    let n = x.rows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Conditional affinities with per-point precision tuned by bisection so
/// each row's perplexity matches the target.
fn conditional_p(d: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &d[i * n..(i + 1) * n];
        let dmin = (0..n).filter(|&j| j != i).map(|j| row[j]).fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi, mut beta) = (0.0, f64::INFINITY, 1.0);
        let mut w = vec![0.0; n];
        for _ in 0..100 {
            let mut sum = 0.0;
            for j in 0..n {
                w[j] = if j == i { 0.0 } else { (-(row[j] - dmin) * beta).exp() };
                sum += w[j];
            }
            let mean_d: f64 = (0..n).map(|j| w[j] * (row[j] - dmin)).sum::<f64>() / sum;
            let entropy = sum.ln() + beta * mean_d;
            if (entropy - target).abs() < 1e-10 {
                break;
            }
            if entropy > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        let sum: f64 = w.iter().sum();
        for j in 0..n {
            p[i * n + j] = w[j] / sum;
        }
    }
    p
}

fn kl(p: &[f64], q_num: &[f64], q_sum: f64) -> f64 {
    p.iter()
        .zip(q_num)
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &qn)| pv * (pv / (qn / q_sum).max(1e-300)).ln())
        .sum()
}

/// Student-t kernel numerators (zero diagonal) and their sum.
fn q_numerators(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            sum += 2.0 * v;
        }
    }
    (num, sum.max(1e-300))
}

/// Projects `(n, dim)` representations to two dimensions.
pub fn project_embeddings(x: &Tensor, cfg: &TsneConfig) -> Result<Projection> {
    let n = x.rows();
    if x.shape().len() != 2 || x.cols() < 2 {
        return Err(Error::Validation(format!("t-SNE needs (n, dim >= 2) input, got {:?}", x.shape())));
    }
    if n > MAX_POINTS {
        return Err(Error::Config(format!("exact t-SNE supports at most {MAX_POINTS} points, got {n}")));
    }
    if !(cfg.perplexity > 0.0) || cfg.perplexity >= n as f64 / 3.0 {
        return Err(Error::Config(format!(
            "perplexity {} must be positive and below n/3 = {:.3}",
            cfg.perplexity,
            n as f64 / 3.0
        )));
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("t-SNE input".into()));
    }
    let cond = conditional_p(&sq_distances(x), n, cfg.perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [1e-4 * a, 1e-4 * b]
        })
        .collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_after_exaggeration = f64::NAN;
    for it in 0..cfg.iters {
        let exaggerating = it < cfg.exaggeration_iters;
        let ex = if exaggerating { cfg.exaggeration } else { 1.0 };
        let momentum = if exaggerating { 0.5 } else { 0.8 };
        let (num, sum) = q_numerators(&y);
        if it + 1 == cfg.exaggeration_iters {
            kl_after_exaggeration = kl(&p, &num, sum);
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let k = i * n + j;
                let f = 4.0 * (ex * p[k] - num[k] / sum) * num[k];
                grad[0] += f * (y[i][0] - y[j][0]);
                grad[1] += f * (y[i][1] - y[j][1]);
            }
            for c in 0..2 {
                gains[i][c] = if (grad[c] > 0.0) != (update[i][c] > 0.0) {
                    gains[i][c] + 0.2
                } else {
                    (gains[i][c] * 0.8).max(0.01)
                };
                update[i][c] = momentum * update[i][c] - cfg.learning_rate * gains[i][c] * grad[c];
            }
        }
        for (yi, u) in y.iter_mut().zip(&update) {
            yi[0] += u[0];
            yi[1] += u[1];
        }
        let (mx, my) = y.iter().fold((0.0, 0.0), |(a, b), v| (a + v[0], b + v[1]));
        for yi in &mut y {
            yi[0] -= mx / n as f64;
            yi[1] -= my / n as f64;
        }
    }
    let (num, sum) = q_numerators(&y);
    let kl_final = kl(&p, &num, sum);
    if y.iter().flatten().any(|v| !v.is_finite()) || !kl_final.is_finite() {
        return Err(Error::NonFinite("t-SNE coordinates".into()));
    }
    Ok(Projection {
        coords: y,
        kl: kl_final,
        kl_after_exaggeration,
    })
}

/// Leave-one-out 1-nearest-neighbour accuracy of `labels` in the plane.
pub fn nn1_accuracy(coords: &[[f64; 2]], labels: &[bool]) -> f64 {
    let n = coords.len();
    if n < 2 {
        return f64::NAN;
    }
    let hits = (0..n)
        .filter(|&i| {
            let nearest = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    let da = (coords[a][0] - coords[i][0]).powi(2) + (coords[a][1] - coords[i][1]).powi(2);
                    let db = (coords[b][0] - coords[i][0]).powi(2) + (coords[b][1] - coords[i][1]).powi(2);
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("n >= 2");
            labels[nearest] == labels[i]
        })
        .count();
    hits as f64 / n as f64
}
