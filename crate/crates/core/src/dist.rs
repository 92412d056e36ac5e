//! Normal and χ² quantiles and tail probabilities.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Two-sided p-value `2(1 − Φ(|u|))`, evaluated through the upper tail.
pub fn two_sided_p(u: f64) -> f64 {
    (2.0 * standard_normal().sf(u.abs())).min(1.0)
}

/// Upper quantile `z` with `P(N(0,1) > z) = tail`.
pub fn normal_upper_quantile(tail: f64) -> f64 {
    -standard_normal().inverse_cdf(tail)
}

/// `P(χ²_df > x)`.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .sf(x)
}

/// `(1 − α)` quantile of χ²_df.
pub fn chi2_upper_quantile(alpha: f64, df: usize) -> f64 {
    ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha)
}
