//! Euclidean projection onto the probability simplex.

/// Threshold `tau` such that `max(z - tau, 0)` sums to one.
pub fn simplex_threshold(z: &[f64]) -> f64 {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut support = 0;
    let mut support_sum = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        if 1.0 + (k as f64 + 1.0) * v > cumsum {
            support = k + 1;
            support_sum = cumsum;
        }
    }
    (support_sum - 1.0) / support as f64
}

/// Writes `sparsemax(z)` into `out`.
pub fn sparsemax_into(z: &[f64], out: &mut [f64]) {
    let tau = simplex_threshold(z);
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - tau).max(0.0);
    }
}

pub fn sparsemax(z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    sparsemax_into(z, &mut out);
    out
}

/// Vector-Jacobian product: identity minus the uniform average over the
/// support, zero off the support.
pub fn sparsemax_vjp(output: &[f64], upstream: &[f64], grad_in: &mut [f64]) {
    let mut count = 0usize;
    let mut total = 0.0;
    for (&p, &g) in output.iter().zip(upstream) {
        if p > 0.0 {
            count += 1;
            total += g;
        }
    }
    let mean = if count > 0 { total / count as f64 } else { 0.0 };
    for ((gi, &p), &g) in grad_in.iter_mut().zip(output).zip(upstream) {
        if p > 0.0 {
            *gi += g - mean;
        }
    }
}

/// Smallest distance from an entry of `z` to the threshold; the map is
/// differentiable only when this is positive.
pub fn support_margin(z: &[f64]) -> f64 {
    let tau = simplex_threshold(z);
    z.iter().map(|v| (v - tau).abs()).fold(f64::INFINITY, f64::min)
}
