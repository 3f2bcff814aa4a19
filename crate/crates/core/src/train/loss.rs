use serde::{Deserialize, Serialize};

pub const PROB_CLAMP: f64 = 1e-7;

/// Focal loss parameters. `gamma = 0, alpha = 1` is binary cross-entropy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalLossConfig {
    pub gamma: f64,
    /// Weight on positive examples; negatives carry weight 1.
    pub alpha: f64,
}

impl Default for FocalLossConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: 0.25,
        }
    }
}

/// `-alpha_t (1 - p_t)^gamma log p_t` on a probability clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn focal_loss(p: f64, y: bool, cfg: &FocalLossConfig) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let (pt, at) = if y { (p, cfg.alpha) } else { (1.0 - p, 1.0) };
    -at * (1.0 - pt).powf(cfg.gamma) * pt.ln()
}

pub fn binary_cross_entropy(p: f64, y: bool) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduces_to_cross_entropy() {
        let cfg = FocalLossConfig {
            gamma: 0.0,
            alpha: 1.0,
        };
        assert!((focal_loss(0.5, true, &cfg) - 0.693_147_180_559_945_3).abs() < 1e-12);
    }

    #[test]
    fn canonical_defaults() {
        let v = focal_loss(0.5, true, &FocalLossConfig::default());
        assert!((v - 0.25 * 0.25 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((v - 0.04332).abs() < 1e-5);
    }

    #[test]
    fn confident_correct_is_near_zero() {
        assert!(focal_loss(1.0, true, &FocalLossConfig::default()) < 1e-12);
    }
}
