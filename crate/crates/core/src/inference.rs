//! Entry-wise inference on Θ and the χ² test for hidden effects.
//!
//! For a response `j` the hidden effect is projected out, `ỹ = Y P̂_B⊥ e_j`,
//! and a lasso of `ỹ` on `X` gives the initial estimate Θ̂_j. The entry
//! `(i, j)` is then corrected with a node-wise estimate ω̂ᵢ of the i-th
//! precision column:
//!
//! ```text
//! Θ̃ᵢⱼ = Θ̂ᵢⱼ + ω̂ᵢᵀ n⁻¹Xᵀ(ỹ − XΘ̂_j),     √n Θ̃ᵢⱼ / √(σ̂²_Ej ω̂ᵢᵀΣ̂ω̂ᵢ) ≈ N(0, 1).
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};
use crate::factor::FactorEstimate;
use crate::lasso::{lasso_cd, solve_gram, LassoOptions};
use crate::linalg::scaled_gram;

/// Below this τ̂² the feature is treated as a linear combination of the others.
pub const TAU2_FLOOR: f64 = 1e-12;

/// Node-wise lasso output for feature `i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecisionColumn {
    pub i: usize,
    /// Coefficients on the p−1 remaining features, in their original order.
    pub gamma: Vec<f64>,
    pub tau2: f64,
    pub omega: Vec<f64>,
    pub lambda_tilde: f64,
    /// `ω̂ᵀΣ̂ω̂` with `Σ̂ = XᵀX/n`.
    pub var_term: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaInference {
    pub i: usize,
    pub j: usize,
    pub theta_init: f64,
    pub theta_debiased: f64,
    pub var_term: f64,
    pub sigma2_ej: f64,
    pub u_stat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

impl ThetaInference {
    /// Standard error `√(σ̂² ω̂ᵀΣ̂ω̂ / n)`, recovered from the CI half-width.
    pub fn std_error(&self) -> f64 {
        (self.ci_high - self.ci_low) / (2.0 * dist::normal_upper_quantile(self.alpha / 2.0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HiddenEffectResult {
    pub j: usize,
    pub r_stat: f64,
    pub df: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

/// `Y P̂_B⊥ e_j`.
pub fn projected_response(y: &DMatrix<f64>, fe: &FactorEstimate, j: usize) -> Result<DVector<f64>> {
    if j >= y.ncols() || fe.m() != y.ncols() {
        return Err(Error::InvalidArgument(format!(
            "response index {j} out of range for {} columns",
            y.ncols()
        )));
    }
    Ok(y * fe.p_b_perp.column(j))
}

/// Initial lasso estimate Θ̂_j on the projected response.
pub fn initial_theta_lasso(
    x: &DMatrix<f64>,
    y_tilde: &DVector<f64>,
    lambda3: f64,
    opts: &LassoOptions,
) -> Result<DVector<f64>> {
    Ok(lasso_cd(x, y_tilde, lambda3, opts, None)?.coef)
}

/// Node-wise lasso of `xᵢ` on the other columns.
pub fn nodewise_precision_column(
    x: &DMatrix<f64>,
    i: usize,
    lambda_tilde: f64,
    opts: &LassoOptions,
) -> Result<PrecisionColumn> {
    let gram = scaled_gram(x);
    nodewise_from_gram(&gram, i, lambda_tilde, opts)
}

/// Node-wise lasso from a precomputed `Σ̂ = XᵀX/n`, shared across features.
pub fn nodewise_from_gram(
    gram: &DMatrix<f64>,
    i: usize,
    lambda_tilde: f64,
    opts: &LassoOptions,
) -> Result<PrecisionColumn> {
    let p = gram.nrows();
    if p < 2 {
        return Err(Error::InvalidArgument("node-wise lasso needs at least two features".into()));
    }
    if i >= p {
        return Err(Error::InvalidArgument(format!("feature index {i} out of range for {p}")));
    }
    if gram[(i, i)] <= 0.0 {
        return Err(Error::Singular { feature: i, tau2: 0.0 });
    }
    let cross = gram.column(i).into_owned();
    let fit = solve_gram(gram, &cross, lambda_tilde, opts, None, Some(i))?;
    // full-length coefficient vector with a zero at i
    let coef = fit.coef;

    // τ̂² = n⁻¹xᵢᵀ(xᵢ − X₋ᵢγ̂) = Σ̂ᵢᵢ − Σ̂ᵢ,₋ᵢ γ̂
    let tau2 = gram[(i, i)] - gram.column(i).dot(&coef);
    if tau2 <= TAU2_FLOOR {
        return Err(Error::Singular { feature: i, tau2 });
    }
    let mut omega = -&coef / tau2;
    omega[i] = 1.0 / tau2;
    let var_term = omega.dot(&(gram * &omega));
    let gamma = (0..p).filter(|&k| k != i).map(|k| coef[k]).collect();
    Ok(PrecisionColumn {
        i,
        gamma,
        tau2,
        omega: omega.as_slice().to_vec(),
        lambda_tilde,
        var_term,
    })
}

/// `Θ̂ᵢ + ω̂ᵢᵀ n⁻¹Xᵀ(ỹ − XΘ̂)`.
pub fn debias_entry(
    x: &DMatrix<f64>,
    y_tilde: &DVector<f64>,
    theta_init: &DVector<f64>,
    pc: &PrecisionColumn,
) -> f64 {
    let n = x.nrows() as f64;
    let resid = y_tilde - x * theta_init;
    let score = x.tr_mul(&resid) / n;
    let omega = DVector::from_column_slice(&pc.omega);
    theta_init[pc.i] + omega.dot(&score)
}

/// Wald statistic, p-value and `(1 − α)` confidence interval for one entry.
#[allow(clippy::too_many_arguments)]
pub fn theta_test_ci(
    i: usize,
    j: usize,
    n: usize,
    theta_init: f64,
    theta_debiased: f64,
    var_term: f64,
    sigma2_ej: f64,
    alpha: f64,
) -> Result<ThetaInference> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if sigma2_ej < 0.0 || var_term < 0.0 {
        return Err(Error::InvalidArgument("variances must be nonnegative".into()));
    }
    let variance = sigma2_ej * var_term;
    if !variance.is_finite() || variance <= 0.0 {
        return Err(Error::DegenerateVariance(variance));
    }
    let nf = n as f64;
    let u_stat = nf.sqrt() * theta_debiased / variance.sqrt();
    let z = dist::normal_upper_quantile(alpha / 2.0);
    let half = z * (variance / nf).sqrt();
    Ok(ThetaInference {
        i,
        j,
        theta_init,
        theta_debiased,
        var_term,
        sigma2_ej,
        u_stat,
        ci_low: theta_debiased - half,
        ci_high: theta_debiased + half,
        p_value: dist::two_sided_p(u_stat),
        alpha,
        reject: u_stat.abs() > z,
    })
}

/// χ² test of `B_j = 0` with `R = n‖B̂_j‖²/σ̂²_Ej` and K degrees of freedom.
pub fn hidden_effect_test(fe: &FactorEstimate, j: usize, n: usize, alpha: f64) -> Result<HiddenEffectResult> {
    if fe.k == 0 {
        return Err(Error::InvalidArgument("hidden-effect test needs K >= 1".into()));
    }
    if j >= fe.m() || j >= fe.sigma2_e.len() {
        return Err(Error::InvalidArgument(format!("response index {j} out of range")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let sigma2 = fe.sigma2_e[j];
    if sigma2 <= TAU2_FLOOR {
        return Err(Error::DegenerateVariance(sigma2));
    }
    let r_stat = n as f64 * fe.b_hat.column(j).norm_squared() / sigma2;
    let critical = dist::chi2_upper_quantile(alpha, fe.k);
    Ok(HiddenEffectResult {
        j,
        r_stat,
        df: fe.k,
        p_value: dist::chi2_sf(r_stat, fe.k),
        alpha,
        reject: r_stat > critical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::{estimate_factors, estimate_loadings_factors, svd_scaled_residuals};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    fn orthogonal_design() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0, -1.0, -1.0, -1.0, 1.0],
        )
    }

    fn fe_with(p_perp: DMatrix<f64>) -> FactorEstimate {
        let m = p_perp.nrows();
        let mut fe = estimate_loadings_factors(&svd_scaled_residuals(&DMatrix::identity(3, m)), 0).unwrap();
        fe.p_b_perp = p_perp;
        fe
    }

    #[test]
    fn projection_examples() {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let id = fe_with(DMatrix::identity(2, 2));
        assert_eq!(projected_response(&y, &id, 0).unwrap(), y.column(0).into_owned());
        let diag = fe_with(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        assert_eq!(projected_response(&y, &diag, 1).unwrap(), y.column(1).into_owned());
        assert!(projected_response(&y, &id, 2).is_err());
    }

    #[test]
    fn responses_in_loading_span_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = gaussian(&mut rng, 30, 2);
        let b = gaussian(&mut rng, 2, 6);
        let y = &w * &b;
        let fe = estimate_factors(&y, 2).unwrap();
        for j in 0..6 {
            assert!(projected_response(&y, &fe, j).unwrap().amax() < 1e-8);
        }
    }

    #[test]
    fn initial_lasso_zero_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian(&mut rng, 20, 5);
        let zero = initial_theta_lasso(&x, &DVector::zeros(20), 0.1, &LassoOptions::default()).unwrap();
        assert!(zero.iter().all(|&t| t == 0.0));
        let y = DVector::from_fn(20, |_, _| rng.sample(StandardNormal));
        let big = initial_theta_lasso(&x, &y, 1e3, &LassoOptions::default()).unwrap();
        assert!(big.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn nodewise_orthogonal_design() {
        let x = orthogonal_design();
        let pc = nodewise_precision_column(&x, 1, 0.1, &LassoOptions::default()).unwrap();
        assert!(pc.gamma.iter().all(|&g| g == 0.0));
        assert!((pc.tau2 - 1.0).abs() < 1e-15);
        assert_eq!(pc.omega, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn nodewise_unpenalized_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 500;
        let x1 = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x2 = &x1 * 0.5 + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = DMatrix::zeros(n, 2);
        x.set_column(0, &x1);
        x.set_column(1, &x2);
        let opts = LassoOptions { max_iter: 100_000, tol: 1e-12 };
        let pc = nodewise_precision_column(&x, 1, 0.0, &opts).unwrap();
        let slope = x1.dot(&x2) / x1.dot(&x1);
        assert!((pc.gamma[0] - slope).abs() < 1e-6);
        // invariants: τ̂² recomputed and ω̂ layout
        let resid = &x2 - &x1 * pc.gamma[0];
        assert!((pc.tau2 - x2.dot(&resid) / n as f64).abs() < 1e-8);
        assert!((pc.omega[1] - 1.0 / pc.tau2).abs() < 1e-15);
        assert!((pc.omega[0] + pc.gamma[0] / pc.tau2).abs() < 1e-15);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let col = DVector::from_fn(30, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = gaussian(&mut rng, 30, 3);
        x.set_column(0, &col);
        x.set_column(1, &col);
        let opts = LassoOptions { max_iter: 100_000, tol: 1e-12 };
        assert!(matches!(
            nodewise_precision_column(&x, 0, 0.0, &opts),
            Err(Error::Singular { feature: 0, .. })
        ));
    }

    #[test]
    fn debias_examples() {
        let x = orthogonal_design();
        let pc = nodewise_precision_column(&x, 0, 0.1, &LassoOptions::default()).unwrap();
        // zero residual leaves the initial value
        let theta = DVector::from_vec(vec![0.7, -0.2, 0.0]);
        let y = &x * &theta;
        assert!((debias_entry(&x, &y, &theta, &pc) - 0.7).abs() < 1e-15);
        // zero initializer with ω̂ = e₀ returns n⁻¹x₀ᵀỹ
        let y = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
        let expected = x.column(0).dot(&y) / 4.0;
        assert!((debias_entry(&x, &y, &DVector::zeros(3), &pc) - expected).abs() < 1e-15);
    }

    #[test]
    fn debias_exact_with_inverse_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian(&mut rng, 60, 5);
        let y = DVector::from_fn(60, |_, _| rng.sample(StandardNormal));
        let opts = LassoOptions { max_iter: 100_000, tol: 1e-13 };
        let pc = nodewise_precision_column(&x, 2, 0.0, &opts).unwrap();
        let a = debias_entry(&x, &y, &DVector::zeros(5), &pc);
        let b = debias_entry(&x, &y, &DVector::from_vec(vec![1.0, -3.0, 2.0, 0.5, 4.0]), &pc);
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn test_and_ci_arithmetic() {
        let r = theta_test_ci(0, 0, 100, 0.9, 1.0, 4.0, 1.0, 0.05).unwrap();
        assert!((r.ci_low - 0.608).abs() < 1e-3);
        assert!((r.ci_high - 1.392).abs() < 1e-3);
        assert!((r.u_stat - 5.0).abs() < 1e-12);
        assert!(r.reject);
        assert!((r.std_error() - 0.2).abs() < 1e-12);

        let r = theta_test_ci(0, 0, 100, 0.0, 0.0, 2.0, 1.5, 0.05).unwrap();
        assert_eq!(r.u_stat, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-15);
        assert!((r.ci_low + r.ci_high).abs() < 1e-15);
        assert!(r.ci_low < r.ci_high);
    }

    #[test]
    fn boundary_is_not_rejected() {
        let z = dist::normal_upper_quantile(0.025);
        // u = √n·θ/√v = z with n = 1, v = 1
        let r = theta_test_ci(0, 0, 1, 0.0, z, 1.0, 1.0, 0.05).unwrap();
        assert_eq!(r.u_stat, z);
        assert!(!r.reject);
    }

    #[test]
    fn degenerate_variance() {
        assert!(matches!(
            theta_test_ci(0, 0, 10, 0.0, 1.0, 1.0, 0.0, 0.05),
            Err(Error::DegenerateVariance(_))
        ));
    }

    fn manual_fe(b: DMatrix<f64>, sigma2: Vec<f64>) -> FactorEstimate {
        let (k, m) = b.shape();
        FactorEstimate {
            k,
            b_hat: b,
            w_hat: DMatrix::zeros(1, k),
            d_k: DVector::zeros(k),
            v_k: DMatrix::zeros(m, k),
            p_b_perp: DMatrix::identity(m, m),
            sigma2_e: DVector::from_vec(sigma2),
        }
    }

    #[test]
    fn chi2_statistic_examples() {
        let fe = manual_fe(DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.2, 0.0]), vec![0.5, 0.5]);
        let r = hidden_effect_test(&fe, 0, 100, 0.05).unwrap();
        assert!((r.r_stat - 10.0).abs() < 1e-12);
        assert_eq!(r.df, 2);
        assert!((r.p_value - (-5.0f64).exp()).abs() < 1e-12);
        assert!(r.reject);

        let r = hidden_effect_test(&fe, 1, 100, 0.05).unwrap();
        assert_eq!(r.r_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject);
    }

    #[test]
    fn chi2_degenerate_and_k_zero() {
        let fe = manual_fe(DMatrix::from_row_slice(1, 1, &[0.3]), vec![0.0]);
        assert!(matches!(hidden_effect_test(&fe, 0, 10, 0.05), Err(Error::DegenerateVariance(_))));
        let fe = manual_fe(DMatrix::zeros(0, 2), vec![1.0, 1.0]);
        assert!(hidden_effect_test(&fe, 0, 10, 0.05).is_err());
    }
}
