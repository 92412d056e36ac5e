//! Lava: sparse-plus-dense column fits of the best linear predictor.
//!
//! For a response column `y` the lava problem is
//!
//! ```text
//! min_{θ,δ} (1/n)‖y − X(θ + δ)‖²₂ + λ₁‖θ‖₁ + λ₂‖δ‖²₂ .
//! ```
//!
//! Profiling out δ gives a lasso in θ with the quadratic loss
//! `(1/n)(y − Xθ)ᵀ Q (y − Xθ)`, where `P = X(XᵀX + nλ₂I)⁻¹Xᵀ` and `Q = I − P`,
//! after which `δ = (XᵀX + nλ₂I)⁻¹Xᵀ(y − Xθ)` and `Xθ + Xδ = Py + QXθ`.
//! The `n` inside the ridge inverse is exactly what the `1/n` loss scaling
//! produces, so both forms share the same λ₂.
//!
//! Everything is built from one thin SVD `X = U S Vᵀ`: on the singular
//! direction with value `s`, `P` has eigenvalue `s²/(s² + nλ₂)` and `Q` has
//! `nλ₂/(s² + nλ₂)`. `λ₂ = +∞` is accepted and means `P = 0`, `Q = I`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lasso::{solve_gram, LassoOptions};
use crate::linalg::{all_finite, scaled_gram, ThinSvd};

/// Ridge smoother `P_λ₂`, its complement `Q_λ₂`, and the Q-weighted quantities
/// the lava solver needs.
#[derive(Debug, Clone)]
pub struct RidgeProjectors {
    pub lambda2: f64,
    pub p_mat: DMatrix<f64>,
    pub q_mat: DMatrix<f64>,
    /// Diagonal of `M = n⁻¹XᵀQ²X`.
    pub m_diag: DVector<f64>,
    /// Thin SVD of X truncated to numerical rank.
    pub svd_cache: ThinSvd,
    /// `n⁻¹XᵀQX`.
    gram_q: DMatrix<f64>,
    /// `XᵀQ` scaled by `1/n`, shape p×n.
    cross_q: DMatrix<f64>,
    /// Per singular direction: `s/(s² + nλ₂)`, mapping `Uᵀr` to the ridge δ.
    ridge_gain: DVector<f64>,
}

pub fn build_ridge_projectors(x: &DMatrix<f64>, lambda2: f64) -> Result<RidgeProjectors> {
    if !all_finite(x.as_slice()) {
        return Err(Error::NonFinite("design"));
    }
    RidgeProjectors::from_svd(x, ThinSvd::reduced(x), lambda2)
}

impl RidgeProjectors {
    /// Builds the projectors for `x` from a precomputed (reduced) SVD of `x`,
    /// so several λ₂ values can share one decomposition.
    pub fn from_svd(x: &DMatrix<f64>, svd: ThinSvd, lambda2: f64) -> Result<Self> {
        if lambda2.is_nan() || lambda2 < 0.0 {
            return Err(Error::InvalidArgument(format!("lambda2 must be >= 0, got {lambda2}")));
        }
        let (n, p) = x.shape();
        let nf = n as f64;
        let r = svd.s.len();

        if lambda2.is_infinite() {
            let gram_q = scaled_gram(x);
            let m_diag = gram_q.diagonal();
            return Ok(RidgeProjectors {
                lambda2,
                p_mat: DMatrix::zeros(n, n),
                q_mat: DMatrix::identity(n, n),
                m_diag,
                gram_q,
                cross_q: x.transpose() / nf,
                ridge_gain: DVector::zeros(r),
                svd_cache: svd,
            });
        }

        let nl = nf * lambda2;
        // eigenvalues on the retained singular directions
        let p_eig = DVector::from_fn(r, |k, _| {
            let s2 = svd.s[k] * svd.s[k];
            s2 / (s2 + nl)
        });
        let q_eig = DVector::from_fn(r, |k, _| {
            let s2 = svd.s[k] * svd.s[k];
            nl / (s2 + nl)
        });
        let ridge_gain = DVector::from_fn(r, |k, _| {
            let s = svd.s[k];
            s / (s * s + nl)
        });

        let u = &svd.u;
        let mut u_scaled = u.clone();
        for (k, mut col) in u_scaled.column_iter_mut().enumerate() {
            col *= p_eig[k];
        }
        let p_mat = symmetrize(&u_scaled * u.transpose());
        let q_mat = DMatrix::identity(n, n) - &p_mat;

        // XᵀQX = V diag(s² q) Vᵀ ; XᵀQ = V diag(s q) Uᵀ
        let v = &svd.v;
        let mut v_sq = v.clone();
        let mut v_sq2 = v.clone();
        for k in 0..r {
            let s = svd.s[k];
            v_sq.column_mut(k).scale_mut(s * s * q_eig[k]);
            v_sq2.column_mut(k).scale_mut((s * q_eig[k]).powi(2));
        }
        let gram_q = symmetrize(&v_sq * v.transpose()) / nf;
        let m_diag = DVector::from_fn(p, |l, _| {
            (0..r).map(|k| v[(l, k)] * v_sq2[(l, k)]).sum::<f64>() / nf
        });
        let mut v_sq_cross = v.clone();
        for k in 0..r {
            v_sq_cross.column_mut(k).scale_mut(svd.s[k] * q_eig[k] / nf);
        }
        let cross_q = &v_sq_cross * u.transpose();

        Ok(RidgeProjectors {
            lambda2,
            p_mat,
            q_mat,
            m_diag,
            svd_cache: svd,
            gram_q,
            cross_q,
            ridge_gain,
        })
    }

    pub fn n(&self) -> usize {
        self.p_mat.nrows()
    }

    /// `n⁻¹XᵀQX`.
    pub fn q_gram(&self) -> &DMatrix<f64> {
        &self.gram_q
    }

    /// `n⁻¹XᵀQy`.
    pub fn q_cross(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.cross_q * y
    }

    /// `(XᵀX + nλ₂I)⁻¹Xᵀr`, with the pseudo-inverse when λ₂ = 0.
    pub fn ridge_solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let svd = &self.svd_cache;
        if self.lambda2.is_infinite() {
            return DVector::zeros(svd.v.nrows());
        }
        let coords = svd.u.tr_mul(r).component_mul(&self.ridge_gain);
        &svd.v * coords
    }

    pub fn max_m_diag(&self) -> f64 {
        self.m_diag.iter().copied().fold(0.0, f64::max)
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Output of one lava column fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LavaColumnFit {
    pub theta: Vec<f64>,
    pub delta: Vec<f64>,
    pub fitted: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub converged: bool,
}

impl LavaColumnFit {
    pub fn coefficients(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.theta.len(),
            self.theta.iter().zip(&self.delta).map(|(a, b)| a + b),
        )
    }
}

/// Fits one response column by the closed form: Q-weighted lasso for θ, then ridge for δ.
pub fn lava_fit_column(
    x: &DMatrix<f64>,
    y_col: &DVector<f64>,
    lambda1: f64,
    proj: &RidgeProjectors,
    opts: &LassoOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<LavaColumnFit> {
    if x.nrows() != y_col.len() || proj.n() != x.nrows() {
        return Err(Error::Dimension("lava: design, response and projectors disagree".into()));
    }
    if !all_finite(y_col.as_slice()) {
        return Err(Error::NonFinite("response column"));
    }
    let cross = proj.q_cross(y_col);
    let fit = solve_gram(proj.q_gram(), &cross, lambda1, opts, warm_start, None)?;
    let theta = fit.coef;
    let resid = y_col - x * &theta;
    let delta = proj.ridge_solve(&resid);
    let fitted = x * (&theta + &delta);
    Ok(LavaColumnFit {
        theta: theta.as_slice().to_vec(),
        delta: delta.as_slice().to_vec(),
        fitted: fitted.as_slice().to_vec(),
        lambda1,
        lambda2: proj.lambda2,
        converged: fit.converged,
    })
}

/// Lava objective; the ridge term is dropped when λ₂ = ∞ and δ = 0.
pub fn lava_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    theta: &DVector<f64>,
    delta: &DVector<f64>,
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    let r = y - x * (theta + delta);
    let ridge = if lambda2.is_infinite() {
        if delta.iter().all(|&d| d == 0.0) {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        lambda2 * delta.norm_squared()
    };
    r.norm_squared() / x.nrows() as f64 + lambda1 * theta.lp_norm(1) + ridge
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LavaTuning {
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Column-wise lava fits for every response.
#[derive(Debug, Clone)]
pub struct LavaFit {
    /// p×m coefficient estimate F̂.
    pub f_hat: DMatrix<f64>,
    /// n×m residuals ε̂ = Y − XF̂.
    pub residuals: DMatrix<f64>,
    pub column_fits: Vec<LavaColumnFit>,
}

impl LavaFit {
    pub fn tuning(&self) -> Vec<LavaTuning> {
        self.column_fits
            .iter()
            .map(|c| LavaTuning {
                lambda1: c.lambda1,
                lambda2: c.lambda2,
            })
            .collect()
    }
}

/// Fits all columns of `data.y()`; columns sharing a λ₂ share one projector.
pub fn lava_fit_all(data: &Dataset, tuning: &[LavaTuning], opts: &LassoOptions) -> Result<LavaFit> {
    let (x, y) = (data.x(), data.y());
    let m = y.ncols();
    if tuning.len() != m {
        return Err(Error::Dimension(format!(
            "{} tuning pairs for {m} response columns",
            tuning.len()
        )));
    }
    let svd = ThinSvd::reduced(x);
    let mut projectors: BTreeMap<u64, RidgeProjectors> = BTreeMap::new();
    for t in tuning {
        let key = t.lambda2.to_bits();
        if let std::collections::btree_map::Entry::Vacant(slot) = projectors.entry(key) {
            slot.insert(RidgeProjectors::from_svd(x, svd.clone(), t.lambda2)?);
        }
    }
    let column_fits = (0..m)
        .into_par_iter()
        .map(|j| {
            let proj = &projectors[&tuning[j].lambda2.to_bits()];
            lava_fit_column(x, &y.column(j).into_owned(), tuning[j].lambda1, proj, opts, None)
                .map_err(|e| e.in_column(j))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(x, y, column_fits))
}

pub(crate) fn assemble(x: &DMatrix<f64>, y: &DMatrix<f64>, column_fits: Vec<LavaColumnFit>) -> LavaFit {
    let p = x.ncols();
    let m = y.ncols();
    let mut f_hat = DMatrix::zeros(p, m);
    for (j, fit) in column_fits.iter().enumerate() {
        f_hat.set_column(j, &fit.coefficients());
    }
    let residuals = y - x * &f_hat;
    LavaFit {
        f_hat,
        residuals,
        column_fits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lasso::lasso_cd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    fn tight() -> LassoOptions {
        LassoOptions {
            max_iter: 1_000_000,
            tol: 1e-12,
        }
    }

    #[test]
    fn projector_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(n, p) in &[(20, 30), (30, 10)] {
            let x = gaussian(&mut rng, n, p);
            let proj = build_ridge_projectors(&x, 0.3).unwrap();
            let sum = &proj.p_mat + &proj.q_mat;
            assert!((sum - DMatrix::identity(n, n)).amax() < 1e-8);
            assert!((&proj.p_mat - proj.p_mat.transpose()).amax() < 1e-8);
            let eig = proj.p_mat.clone().symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e > -1e-10 && e < 1.0));
            // m_diag recomputed directly from Q
            let q2x = &proj.q_mat * &proj.q_mat * &x;
            for k in 0..p {
                let direct = x.column(k).dot(&q2x.column(k)) / n as f64;
                assert!((direct - proj.m_diag[k]).abs() < 1e-8);
                assert!(proj.m_diag[k] >= 0.0);
            }
            // gram_q and cross_q against explicit Q
            let gq = x.transpose() * &proj.q_mat * &x / n as f64;
            assert!((gq - proj.q_gram()).amax() < 1e-8);
        }
    }

    #[test]
    fn infinite_lambda2_is_identity_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(&mut rng, 10, 4);
        let proj = build_ridge_projectors(&x, f64::INFINITY).unwrap();
        assert_eq!(proj.p_mat, DMatrix::zeros(10, 10));
        assert_eq!(proj.q_mat, DMatrix::identity(10, 10));
        let diag = (x.tr_mul(&x) / 10.0).diagonal();
        assert!((diag - &proj.m_diag).amax() < 1e-14);
    }

    #[test]
    fn orthogonal_design_half_eigenvalues() {
        // XᵀX = nI with n = 4, p = 2; λ₂ = 1 gives s²/(s²+n) = 1/2.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let proj = build_ridge_projectors(&x, 1.0).unwrap();
        let mut eig: Vec<f64> = proj.p_mat.clone().symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        assert!(eig[0].abs() < 1e-12 && eig[1].abs() < 1e-12);
        assert!((eig[2] - 0.5).abs() < 1e-12 && (eig[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_lambda2_gives_orthogonal_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = gaussian(&mut rng, 8, 12);
        let proj = build_ridge_projectors(&x, 0.0).unwrap();
        let p2 = &proj.p_mat * &proj.p_mat;
        assert!((p2 - &proj.p_mat).amax() < 1e-8);
    }

    #[test]
    fn infinite_lambda2_reduces_to_lasso() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = gaussian(&mut rng, 25, 10);
        let y = DVector::from_fn(25, |_, _| rng.sample(StandardNormal));
        let proj = build_ridge_projectors(&x, f64::INFINITY).unwrap();
        let fit = lava_fit_column(&x, &y, 0.1, &proj, &LassoOptions::default(), None).unwrap();
        let lasso = lasso_cd(&x, &y, 0.1, &LassoOptions::default(), None).unwrap();
        assert!(fit.delta.iter().all(|&d| d == 0.0));
        assert!((DVector::from_vec(fit.theta) - lasso.coef).amax() < 1e-12);
    }

    #[test]
    fn large_lambda1_fits_ridge_smoother() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = gaussian(&mut rng, 20, 30);
        let y = DVector::from_fn(20, |_, _| rng.sample(StandardNormal));
        let proj = build_ridge_projectors(&x, 0.5).unwrap();
        let fit = lava_fit_column(&x, &y, 1e6, &proj, &LassoOptions::default(), None).unwrap();
        assert!(fit.theta.iter().all(|&t| t == 0.0));
        let py = &proj.p_mat * &y;
        assert!((DVector::from_vec(fit.fitted) - py).amax() < 1e-10);
    }

    #[test]
    fn fitted_identity_and_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = gaussian(&mut rng, 20, 30);
        let y = DVector::from_fn(20, |_, _| rng.sample(StandardNormal));
        let lambda1 = 0.15;
        let proj = build_ridge_projectors(&x, 0.2).unwrap();
        let fit = lava_fit_column(&x, &y, lambda1, &proj, &tight(), None).unwrap();
        let theta = DVector::from_vec(fit.theta.clone());
        let expected = &proj.p_mat * &y + &proj.q_mat * &x * &theta;
        assert!((DVector::from_vec(fit.fitted.clone()) - expected).amax() < 1e-6);

        let grad = x.transpose() * &proj.q_mat * (&y - &x * &theta) * (2.0 / 20.0);
        for k in 0..30 {
            if theta[k] != 0.0 {
                assert!((grad[k] - lambda1 * theta[k].signum()).abs() < 1e-4);
            } else {
                assert!(grad[k].abs() <= lambda1 + 1e-6);
            }
        }
    }

    #[test]
    fn objective_beats_single_component_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = gaussian(&mut rng, 20, 30);
        let y = DVector::from_fn(20, |_, _| rng.sample(StandardNormal));
        let (l1, l2) = (0.1, 0.05);
        let proj = build_ridge_projectors(&x, l2).unwrap();
        let fit = lava_fit_column(&x, &y, l1, &proj, &tight(), None).unwrap();
        let obj = lava_objective(&x, &y, &DVector::from_vec(fit.theta), &DVector::from_vec(fit.delta), l1, l2);

        let zero = DVector::zeros(30);
        let ridge_only = proj.ridge_solve(&y);
        let lasso_only = lasso_cd(&x, &y, l1, &tight(), None).unwrap().coef;
        assert!(obj <= lava_objective(&x, &y, &zero, &ridge_only, l1, l2) + 1e-12);
        assert!(obj <= lava_objective(&x, &y, &lasso_only, &zero, l1, l2) + 1e-12);
    }

    #[test]
    fn interpolation_regime_has_zero_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = crate::data::center_columns(&gaussian(&mut rng, 30, 5));
        let f = gaussian(&mut rng, 5, 3);
        let y = &x * &f;
        let data = Dataset::new(x, y).unwrap();
        let tuning = vec![LavaTuning { lambda1: 0.0, lambda2: 0.0 }; 3];
        let fit = lava_fit_all(&data, &tuning, &LassoOptions::default()).unwrap();
        assert!(fit.residuals.amax() < 1e-6);
    }

    #[test]
    fn single_column_matches_column_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = gaussian(&mut rng, 15, 6);
        let y = gaussian(&mut rng, 15, 1);
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let t = LavaTuning { lambda1: 0.05, lambda2: 0.1 };
        let all = lava_fit_all(&data, &[t], &LassoOptions::default()).unwrap();
        let proj = build_ridge_projectors(&x, 0.1).unwrap();
        let one = lava_fit_column(&x, &y.column(0).into_owned(), 0.05, &proj, &LassoOptions::default(), None).unwrap();
        assert_eq!(all.column_fits[0].theta, one.theta);
        assert_eq!(all.column_fits[0].delta, one.delta);
    }

    #[test]
    fn residuals_consistent_with_column_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = gaussian(&mut rng, 15, 6);
        let y = gaussian(&mut rng, 15, 3);
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let tuning = vec![
            LavaTuning { lambda1: 0.05, lambda2: 0.1 },
            LavaTuning { lambda1: 0.1, lambda2: f64::INFINITY },
            LavaTuning { lambda1: 0.02, lambda2: 0.1 },
        ];
        let fit = lava_fit_all(&data, &tuning, &LassoOptions::default()).unwrap();
        for j in 0..3 {
            let r = y.column(j) - DVector::from_vec(fit.column_fits[j].fitted.clone());
            assert!((r - fit.residuals.column(j)).amax() < 1e-10);
        }
    }

    #[test]
    fn rejects_negative_lambda2() {
        let x = DMatrix::from_element(3, 2, 1.0);
        assert!(build_ridge_projectors(&x, -1.0).is_err());
    }
}
