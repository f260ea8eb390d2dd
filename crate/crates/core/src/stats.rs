//! Standard normal helpers.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::standard()
}

/// `Phi(x)`, via the complementary error function so both tails keep full
/// relative precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Phi^{-1}(q)` for `q` in `(0, 1)`.
pub fn normal_quantile(q: f64) -> f64 {
    standard().inverse_cdf(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_quantiles() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.95) - 1.644_853_626_951_472_7).abs() < 1e-12);
        assert!(normal_quantile(0.5).abs() < 1e-15);
    }

    #[test]
    fn cdf_inverts_quantile() {
        for &q in &[1e-6, 0.001, 0.05, 0.3, 0.5, 0.77, 0.95, 0.999] {
            let err = normal_cdf(normal_quantile(q)) - q;
            assert!(err.abs() < 1e-14, "q = {q}, err = {err:e}");
        }
    }
}
