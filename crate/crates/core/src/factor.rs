//! Hidden-factor estimation from the lava residuals.
//!
//! The residual matrix ε̂ (n×m) is modelled as `WB + E`. With the SVD
//! `ε̂/√(nm) = Σ dₖ uₖ vₖᵀ`, the loadings and factors are
//! `B̂ᵀ = √m V_K D_K` and `Ŵ = √n U_K`, which satisfy `ŴᵀŴ/n = I_K` and make
//! `B̂B̂ᵀ/m` diagonal. The hidden effects are removed from the responses with
//! `P̂_B⊥ = I_m − V_K V_Kᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{ThinSvd, RANK_TOL};

/// Singular triplets of `residuals / √(nm)`, decreasing.
#[derive(Debug, Clone)]
pub struct ResidualSvd {
    pub d: DVector<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
}

impl ResidualSvd {
    pub fn numerical_rank(&self) -> usize {
        let dmax = self.d.iter().copied().fold(0.0, f64::max);
        if dmax <= 0.0 {
            return 0;
        }
        self.d.iter().filter(|&&x| x > RANK_TOL * dmax).count()
    }
}

pub fn svd_scaled_residuals(residuals: &DMatrix<f64>) -> ResidualSvd {
    let (n, m) = residuals.shape();
    let scale = ((n * m) as f64).sqrt();
    let svd = ThinSvd::new(&(residuals / scale));
    ResidualSvd {
        d: svd.s,
        u: svd.u,
        v: svd.v,
        n,
        m,
    }
}

/// `⌊(n ∧ m)/2⌋`, at least 1.
pub fn default_k_bar(n: usize, m: usize) -> usize {
    (n.min(m) / 2).max(1)
}

/// Eigenvalue-ratio criterion `argmax_{j ≤ K̄} d_j / d_{j+1}` (1-based result).
///
/// Ties resolve to the smallest index. A zero successor `d_{j+1} = 0` counts as
/// an infinite ratio, so the first such `j` wins.
pub fn select_num_factors(singular_values: &[f64], k_bar: usize) -> Result<usize> {
    if k_bar == 0 {
        return Err(Error::InvalidArgument("k_bar must be at least 1".into()));
    }
    if singular_values.len() < k_bar + 1 {
        return Err(Error::InvalidArgument(format!(
            "need {} singular values for k_bar = {k_bar}, got {}",
            k_bar + 1,
            singular_values.len()
        )));
    }
    let mut best = 1;
    let mut best_ratio = f64::NEG_INFINITY;
    for j in 1..=k_bar {
        let (dj, next) = (singular_values[j - 1], singular_values[j]);
        if next == 0.0 {
            return Ok(j);
        }
        let ratio = dj / next;
        if ratio > best_ratio {
            best_ratio = ratio;
            best = j;
        }
    }
    Ok(best)
}

/// Estimated loadings, factors and derived quantities for a given K.
#[derive(Debug, Clone)]
pub struct FactorEstimate {
    pub k: usize,
    /// K×m loadings B̂.
    pub b_hat: DMatrix<f64>,
    /// n×K factors Ŵ.
    pub w_hat: DMatrix<f64>,
    /// Leading K singular values of ε̂/√(nm).
    pub d_k: DVector<f64>,
    /// m×K right singular vectors.
    pub v_k: DMatrix<f64>,
    /// m×m projector I − V_K V_Kᵀ.
    pub p_b_perp: DMatrix<f64>,
    /// Per-response noise variances σ̂²_Ej; empty until filled.
    pub sigma2_e: DVector<f64>,
}

/// Loadings and factors from the leading `k` triplets; `sigma2_e` is left empty.
pub fn estimate_loadings_factors(svd: &ResidualSvd, k: usize) -> Result<FactorEstimate> {
    let (n, m) = (svd.n, svd.m);
    let rank = svd.numerical_rank();
    if k > rank {
        return Err(Error::RankDeficient { requested: k, rank });
    }
    let v_k = svd.v.columns(0, k).into_owned();
    let u_k = svd.u.columns(0, k).into_owned();
    let d_k = svd.d.rows(0, k).into_owned();

    let mut bt = &v_k * (m as f64).sqrt();
    for (c, mut col) in bt.column_iter_mut().enumerate() {
        col *= d_k[c];
    }
    let b_hat = bt.transpose();
    let w_hat = u_k * (n as f64).sqrt();

    let vvt = &v_k * v_k.transpose();
    let p_b_perp = DMatrix::identity(m, m) - (&vvt + vvt.transpose()) * 0.5;

    Ok(FactorEstimate {
        k,
        b_hat,
        w_hat,
        d_k,
        v_k,
        p_b_perp,
        sigma2_e: DVector::zeros(0),
    })
}

/// `σ̂²_Ej = n⁻¹‖ε̂_j − ŴB̂_j‖²`.
pub fn noise_variance(residuals: &DMatrix<f64>, fe: &FactorEstimate, j: usize) -> f64 {
    let n = residuals.nrows();
    let fitted = &fe.w_hat * fe.b_hat.column(j);
    (residuals.column(j) - fitted).norm_squared() / n as f64
}

impl FactorEstimate {
    pub fn with_noise_variances(mut self, residuals: &DMatrix<f64>) -> Self {
        let m = residuals.ncols();
        self.sigma2_e = DVector::from_fn(m, |j, _| noise_variance(residuals, &self, j));
        self
    }

    pub fn m(&self) -> usize {
        self.p_b_perp.nrows()
    }
}

/// SVD, loadings and noise variances for a fixed K in one call.
pub fn estimate_factors(residuals: &DMatrix<f64>, k: usize) -> Result<FactorEstimate> {
    let svd = svd_scaled_residuals(residuals);
    Ok(estimate_loadings_factors(&svd, k)?.with_noise_variances(residuals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn ratio_selection_examples() {
        assert_eq!(select_num_factors(&[3.0, 2.5, 2.0, 0.1, 0.09], 4).unwrap(), 3);
        assert_eq!(select_num_factors(&[5.0, 0.0, 0.0], 2).unwrap(), 1);
        // tie resolves to the smaller index
        assert_eq!(select_num_factors(&[4.0, 2.0, 1.0, 0.9], 2).unwrap(), 1);
        assert!(select_num_factors(&[1.0, 0.5], 2).is_err());
        assert!(select_num_factors(&[1.0, 0.5], 0).is_err());
    }

    #[test]
    fn zero_residuals_have_zero_spectrum() {
        let svd = svd_scaled_residuals(&DMatrix::zeros(6, 4));
        assert!(svd.d.iter().all(|&d| d == 0.0));
        assert_eq!(svd.numerical_rank(), 0);
    }

    #[test]
    fn rank_one_residuals() {
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 1.0]);
        let v = DVector::from_vec(vec![0.3, 1.0, -1.0]);
        let svd = svd_scaled_residuals(&(&u * v.transpose()));
        assert_eq!(svd.numerical_rank(), 1);
    }

    #[test]
    fn reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = gaussian(&mut rng, 12, 5);
        let svd = svd_scaled_residuals(&e);
        let scale = (60.0f64).sqrt();
        let rebuilt = &svd.u * DMatrix::from_diagonal(&svd.d) * svd.v.transpose() * scale;
        assert!((rebuilt - &e).amax() < 1e-8);
        let utu = svd.u.tr_mul(&svd.u);
        assert!((utu - DMatrix::identity(5, 5)).amax() < 1e-8);
    }

    #[test]
    fn full_rank_projector_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = gaussian(&mut rng, 10, 4);
        let fe = estimate_factors(&e, 4).unwrap();
        assert!(fe.p_b_perp.amax() < 1e-10);
    }

    #[test]
    fn projector_for_first_axis() {
        // residual columns: first carries all the variation
        let e = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 2.0, 0.0, -2.0, 0.0]);
        let svd = svd_scaled_residuals(&e);
        let fe = estimate_loadings_factors(&svd, 1).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!((&fe.p_b_perp - expected).amax() < 1e-12);
    }

    #[test]
    fn product_is_truncated_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = gaussian(&mut rng, 15, 6);
        let fe = estimate_factors(&e, 2).unwrap();
        // independent truncated SVD through nalgebra directly
        let svd = e.clone().svd(true, true);
        let mut idx: Vec<usize> = (0..6).collect();
        idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let mut trunc = DMatrix::zeros(15, 6);
        for &k in &idx[..2] {
            trunc += u.column(k) * vt.row(k) * svd.singular_values[k];
        }
        assert!((&fe.w_hat * &fe.b_hat - trunc).amax() < 1e-8);
    }

    #[test]
    fn rank_check() {
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let v = DVector::from_vec(vec![0.3, 1.0, -1.0]);
        let svd = svd_scaled_residuals(&(&u * v.transpose()));
        match estimate_loadings_factors(&svd, 2) {
            Err(Error::RankDeficient { requested: 2, rank: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn k_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = gaussian(&mut rng, 10, 4);
        let fe = estimate_factors(&e, 0).unwrap();
        assert_eq!(fe.b_hat.shape(), (0, 4));
        assert_eq!(fe.p_b_perp, DMatrix::identity(4, 4));
        for j in 0..4 {
            assert!((fe.sigma2_e[j] - e.column(j).norm_squared() / 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_variance_arithmetic() {
        // ε̂_j − ŴB̂_j = 1 with K = 0 and n = 4
        let e = DMatrix::from_element(4, 1, 1.0);
        let fe = estimate_loadings_factors(&svd_scaled_residuals(&e), 0).unwrap();
        assert!((noise_variance(&e, &fe, 0) - 1.0).abs() < 1e-15);
        // exact factor fit leaves nothing
        let fe = estimate_factors(&e, 1).unwrap();
        assert!(fe.sigma2_e[0].abs() < 1e-20);
    }

    #[test]
    fn sign_flip_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = gaussian(&mut rng, 20, 6);
        let svd = svd_scaled_residuals(&e);
        let fe = estimate_loadings_factors(&svd, 3).unwrap().with_noise_variances(&e);
        let mut flipped = svd.clone();
        for k in [0, 2] {
            flipped.u.column_mut(k).neg_mut();
            flipped.v.column_mut(k).neg_mut();
        }
        let fe2 = estimate_loadings_factors(&flipped, 3).unwrap().with_noise_variances(&e);
        assert!((&fe.p_b_perp - &fe2.p_b_perp).amax() < 1e-14);
        assert!((&fe.sigma2_e - &fe2.sigma2_e).amax() < 1e-14);
        assert!((fe.b_hat.row(0) + fe2.b_hat.row(0)).amax() < 1e-14);
        assert!((fe.b_hat.row(1) - fe2.b_hat.row(1)).amax() < 1e-14);
    }
}
