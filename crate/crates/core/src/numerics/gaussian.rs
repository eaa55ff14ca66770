//! Value-level Gaussian and classification utilities.
//!
//! These mirror the differentiable tape ops and are used wherever a loss is
//! recomputed from recorded values rather than on a tape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounds applied to every log-variance produced by a Gaussian head.
pub const LOGVAR_MIN: f64 = -8.0;
pub const LOGVAR_MAX: f64 = 8.0;

/// Diagonal Gaussian given by mean and per-dimension log-variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianDiag {
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
}

impl GaussianDiag {
    pub fn new(mean: Vec<f64>, logvar: Vec<f64>) -> Result<Self> {
        if mean.len() != logvar.len() {
            return Err(Error::dim("gaussian", &[mean.len()], &[logvar.len()]));
        }
        Ok(Self { mean, logvar })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            logvar: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `mean + exp(logvar / 2) ⊙ eps`.
pub fn reparam_sample(g: &GaussianDiag, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != g.dim() {
        return Err(Error::dim("reparam_sample", &[g.dim()], &[eps.len()]));
    }
    Ok(g.mean
        .iter()
        .zip(&g.logvar)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// Closed-form `KL(q ‖ p)` summed over dimensions.
pub fn kl_diag(q: &GaussianDiag, p: &GaussianDiag) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::dim("kl_diag", &[q.dim()], &[p.dim()]));
    }
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let d = q.mean[i] - p.mean[i];
        kl += 0.5
            * (p.logvar[i] - q.logvar[i] + (q.logvar[i].exp() + d * d) / p.logvar[i].exp() - 1.0);
    }
    Ok(kl)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            n_classes: logits.len(),
        });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|x| (x - max).exp()).sum();
    Ok(total.ln() - (logits[label] - max))
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn log_normal_pdf(x: f64, mean: f64, logvar: f64) -> f64 {
        -0.5 * ((2.0 * std::f64::consts::PI).ln() + logvar + (x - mean).powi(2) / logvar.exp())
    }

    #[test]
    fn zero_noise_returns_mean() {
        let g = GaussianDiag::new(vec![1.5, -2.0], vec![0.3, -1.0]).unwrap();
        assert_eq!(reparam_sample(&g, &[0.0, 0.0]).unwrap(), g.mean);
        let unit = GaussianDiag::new(vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(reparam_sample(&unit, &[1.0, 1.0]).unwrap(), vec![2.0, 3.0]);
        assert!(reparam_sample(&g, &[0.0]).is_err());
    }

    #[test]
    fn reparam_monte_carlo_mean() {
        let g = GaussianDiag::new(vec![0.7, -1.2], vec![0.5, -0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let eps: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let s = reparam_sample(&g, &eps).unwrap();
            sums[0] += s[0];
            sums[1] += s[1];
        }
        for (i, sum) in sums.iter().enumerate() {
            let sd = (0.5 * g.logvar[i]).exp();
            let bound = 3.0 * sd / (n as f64).sqrt();
            assert!((sum / n as f64 - g.mean[i]).abs() < bound);
        }
    }

    #[test]
    fn kl_identical_is_zero() {
        let g = GaussianDiag::standard(4);
        assert_eq!(kl_diag(&g, &g).unwrap(), 0.0);
        let h = GaussianDiag::new(vec![0.3, -0.1], vec![1.2, -0.7]).unwrap();
        assert!(kl_diag(&h, &h).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kl_shifted_unit_gaussian_matches_monte_carlo() {
        let q = GaussianDiag::new(vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let p = GaussianDiag::standard(2);
        let closed = kl_diag(&q, &p).unwrap();
        assert!((closed - 1.0).abs() < 1e-15);

        // E_q[log q - log p], one dimension, 2e5 draws.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            let x = 1.0 + e;
            acc += log_normal_pdf(x, 1.0, 0.0) - log_normal_pdf(x, 0.0, 0.0);
        }
        let mc = acc / n as f64;
        assert!((mc - 0.5).abs() < 0.01, "mc = {mc}");
    }

    #[test]
    fn kl_dimension_mismatch() {
        assert!(kl_diag(&GaussianDiag::standard(2), &GaussianDiag::standard(3)).is_err());
    }

    #[test]
    fn kl_nonnegative_for_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let mut draw = |scale: f64| -> Vec<f64> {
                (0..3)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        scale * e
                    })
                    .collect()
            };
            let q = GaussianDiag::new(draw(2.0), draw(1.5)).unwrap();
            let p = GaussianDiag::new(draw(2.0), draw(1.5)).unwrap();
            assert!(kl_diag(&q, &p).unwrap() >= 0.0);
        }
    }

    #[test]
    fn cross_entropy_matches_naive_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let logits: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
            let naive = -(logits[2].exp() / logits.iter().map(|x| x.exp()).sum::<f64>()).ln();
            assert!((softmax_cross_entropy(&logits, 2).unwrap() - naive).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(logits in proptest::collection::vec(-50.0f64..50.0, 1..10)) {
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for k in 0..logits.len() {
                prop_assert!(softmax_cross_entropy(&logits, k).unwrap() >= 0.0);
            }
        }
    }
}
