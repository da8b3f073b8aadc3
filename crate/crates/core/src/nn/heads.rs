use super::Real;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exp: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = exp.iter().copied().sum();
    exp.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

pub fn categorical_entropy<T: Real>(probs: &[T]) -> T {
    -probs
        .iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| p * p.ln())
        .sum::<T>()
}

/// A Gaussian head's outputs after clamping the log standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOutput<T> {
    pub mean: T,
    pub log_std: T,
    /// True when the raw log-std was outside the clamp range; its gradient is then zero.
    pub clamped: bool,
}

impl<T: Real> GaussianOutput<T> {
    pub fn std(&self) -> T {
        self.log_std.exp()
    }
}

pub fn split_gaussian<T: Real>(mean: T, raw_log_std: T) -> GaussianOutput<T> {
    let (lo, hi) = (T::of(LOG_STD_MIN), T::of(LOG_STD_MAX));
    GaussianOutput {
        mean,
        log_std: raw_log_std.max(lo).min(hi),
        clamped: raw_log_std < lo || raw_log_std > hi,
    }
}

pub fn gaussian_log_prob<T: Real>(x: T, mean: T, log_std: T) -> T {
    let z = (x - mean) / log_std.exp();
    T::of(-0.5) * z * z - log_std - T::of(0.5 * (2.0 * std::f64::consts::PI).ln())
}

/// `ln(1 - tanh(u)^2)`, evaluated without cancellation for large `|u|`.
pub fn squash_log_det<T: Real>(u: T) -> T {
    let x = T::of(-2.0) * u;
    let softplus = x.max(T::zero()) + (-x.abs()).exp().ln_1p();
    T::of(2.0) * (T::of(std::f64::consts::LN_2) - u - softplus)
}

/// Log-density of `tanh(u)` on `(-1, 1)` when `u ~ N(mean, exp(log_std)^2)`.
pub fn squashed_log_prob<T: Real>(u: T, mean: T, log_std: T) -> T {
    gaussian_log_prob(u, mean, log_std) - squash_log_det(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn squash_log_det_matches_direct_formula() {
        for &u in &[-3.0f64, -0.7, 0.0, 0.2, 1.5, 4.0] {
            let direct = (1.0 - u.tanh().powi(2)).ln();
            assert!((squash_log_det(u) - direct).abs() < 1e-12, "{u}");
        }
        assert!(squash_log_det(40.0f64).is_finite());
    }

    #[test]
    fn clamp_reports_saturation() {
        let g = split_gaussian(0.0f64, 5.0);
        assert_eq!(g.log_std, LOG_STD_MAX);
        assert!(g.clamped);
        assert!(!split_gaussian(0.0f64, -1.0).clamped);
    }

    proptest! {
        #[test]
        fn log_softmax_normalizes(logits in proptest::collection::vec(-30.0..30.0f64, 1..20)) {
            let lp = log_softmax(&logits);
            let lse = lp.iter().map(|v| v.exp()).sum::<f64>().ln();
            prop_assert!(lse.abs() < 1e-10);
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
