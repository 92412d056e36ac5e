//! Synthetic data with hidden confounders and Monte Carlo error-rate studies.
//!
//! X has rows from N(0, Σ) with `Σ_jk = (−1)^{j+k} 0.5^{|j−k|}`. Hidden
//! variables are `Z = XA + W`, responses `Y = XΘ + ZB + E`. Every replication
//! redraws X, A, B, Θ, W and E from a seed derived from `(seed, rep)`.
//!
//! Entry distributions: `A_jk = η·N(0.5, sd 0.1)`, `B_kl ~ N(0.1, 1)`, the
//! nonzero block of Θ from `N(2, sd 0.1)`, `W ~ N(0, σ_w² I)`, `E ~ N(0, I)`.
//!
//! With `project_theta` the drawn Θ is replaced by `ΘP_B⊥`, so that `ΘP_B = 0`
//! and Θ is exactly the estimand of the projected-response procedure.

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{FittedModel, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    /// Number of hidden variables.
    pub k: usize,
    /// Scale of A, i.e. strength of the X–Z dependence.
    pub eta: f64,
    /// Nonzero rows of Θ.
    pub s: usize,
    /// Nonzero columns within each nonzero row.
    pub s_m: usize,
    /// Fix every nonzero of Θ to this value instead of drawing N(2, sd 0.1).
    pub theta_signal: Option<f64>,
    /// Leading columns of B set to zero.
    pub b_m: usize,
    pub sigma_w: f64,
    pub seed: u64,
    /// Project the rows of Θ off the row space of B.
    #[serde(default)]
    pub project_theta: bool,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n: 200,
            p: 50,
            m: 20,
            k: 3,
            eta: 0.2,
            s: 3,
            s_m: 10,
            theta_signal: None,
            b_m: 0,
            sigma_w: 3.0,
            seed: 0,
            project_theta: false,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n < 2 || self.p < 1 || self.m < 1 {
            return bad(format!("need n ≥ 2, p ≥ 1, m ≥ 1 (got {}, {}, {})", self.n, self.p, self.m));
        }
        if self.s > self.p {
            return bad(format!("s = {} exceeds p = {}", self.s, self.p));
        }
        if self.s_m > self.m {
            return bad(format!("s_m = {} exceeds m = {}", self.s_m, self.m));
        }
        if self.b_m > self.m {
            return bad(format!("b_m = {} exceeds m = {}", self.b_m, self.m));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and nonnegative, got {}", self.eta));
        }
        if !(self.sigma_w > 0.0 && self.sigma_w.is_finite()) {
            return bad(format!("sigma_w must be positive, got {}", self.sigma_w));
        }
        if let Some(r) = self.theta_signal {
            if !r.is_finite() {
                return bad("theta_signal must be finite".into());
            }
        }
        Ok(())
    }

    /// Row-major indicator of the nonzero block of Θ (all columns of the
    /// first `s` rows under `project_theta`).
    pub fn support(&self) -> Vec<bool> {
        let cols = if self.project_theta { self.m } else { self.s_m };
        let mut s = vec![false; self.p * self.m];
        for i in 0..self.s {
            for j in 0..cols {
                s[i * self.m + j] = true;
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct DgpInstance {
    /// Uncentered (X, Y).
    pub data: Dataset,
    pub theta_true: DMatrix<f64>,
    pub a_true: DMatrix<f64>,
    pub b_true: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    /// Row-major `p × m` indicator of `Θ ≠ 0`.
    pub support: Vec<bool>,
}

/// `Σ_jk = (−1)^{j+k} 0.5^{|j−k|}`.
pub fn design_covariance(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |j, k| {
        let sign = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
        sign * 0.5f64.powi(j.abs_diff(k) as i32)
    })
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, mean: f64, sd: f64) -> DMatrix<f64> {
    DMatrix::from_row_iterator(
        rows,
        cols,
        (0..rows * cols).map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal)),
    )
}

pub fn generate_dgp(cfg: &DgpConfig) -> Result<DgpInstance> {
    cfg.validate()?;
    let (n, p, m, k) = (cfg.n, cfg.p, cfg.m, cfg.k);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let chol = Cholesky::new(design_covariance(p))
        .ok_or_else(|| Error::InvalidArgument("design covariance is not positive definite".into()))?;
    let x = normal_matrix(&mut rng, n, p, 0.0, 1.0) * chol.l().transpose();

    let a_true = normal_matrix(&mut rng, p, k, 0.5, 0.1) * cfg.eta;
    let mut b_true = normal_matrix(&mut rng, k, m, 0.1, 1.0);
    b_true.columns_mut(0, cfg.b_m).fill(0.0);

    // block is always drawn so that fixing r keeps the remaining draws aligned
    let block = normal_matrix(&mut rng, cfg.s, cfg.s_m, 2.0, 0.1);
    let mut theta_true = DMatrix::zeros(p, m);
    for i in 0..cfg.s {
        for j in 0..cfg.s_m {
            theta_true[(i, j)] = cfg.theta_signal.unwrap_or(block[(i, j)]);
        }
    }
    if cfg.project_theta && k > 0 {
        let bbt_inv = (&b_true * b_true.transpose())
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("project_theta needs B of full row rank".into()))?;
        let p_b = b_true.transpose() * bbt_inv * &b_true;
        theta_true = &theta_true - &theta_true * p_b;
    }

    let w = normal_matrix(&mut rng, n, k, 0.0, cfg.sigma_w);
    let noise = normal_matrix(&mut rng, n, m, 0.0, 1.0);
    let z = &x * &a_true + w;
    let y = &x * &theta_true + &z * &b_true + &noise;

    Ok(DgpInstance {
        data: Dataset::new(x, y)?,
        theta_true,
        a_true,
        b_true,
        z,
        noise,
        support: cfg.support(),
    })
}

/// Seed of replication `rep`, a SplitMix64 finalizer over `(seed, rep)`.
pub fn derive_seed(seed: u64, rep: usize) -> u64 {
    let mut z = seed ^ (rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rejection record of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepDetail {
    pub rep: usize,
    pub seed: u64,
    pub k_hat: Option<usize>,
    /// Row-major `p × m` for Θ experiments, length `m` for B experiments.
    pub rejections: Vec<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub type1: f64,
    pub power: f64,
    pub reps: usize,
    pub failures: usize,
    pub details: Vec<RepDetail>,
}

/// Mean rejection rate over null and non-null positions, averaged across
/// replications; `is_alt[k]` marks positions where the truth is nonzero.
pub fn rejection_rates<'a, I>(rejections: I, is_alt: &[bool]) -> (f64, f64)
where
    I: IntoIterator<Item = &'a [bool]>,
{
    let n_alt = is_alt.iter().filter(|&&a| a).count();
    let n_null = is_alt.len() - n_alt;
    let (mut t1, mut pw, mut reps) = (0.0, 0.0, 0usize);
    for r in rejections {
        let (mut a, mut b) = (0usize, 0usize);
        for (&rej, &alt) in r.iter().zip(is_alt) {
            if rej {
                if alt {
                    a += 1;
                } else {
                    b += 1;
                }
            }
        }
        if n_null > 0 {
            t1 += b as f64 / n_null as f64;
        }
        if n_alt > 0 {
            pw += a as f64 / n_alt as f64;
        }
        reps += 1;
    }
    if reps == 0 {
        return (0.0, 0.0);
    }
    (t1 / reps as f64, pw / reps as f64)
}

fn check_reps(reps: usize, alpha: f64) -> Result<()> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0,1), got {alpha}")));
    }
    Ok(())
}

fn run_reps<F>(cfg: &DgpConfig, reps: usize, width: usize, is_alt: &[bool], one: F) -> Result<ExperimentResult>
where
    F: Fn(&DgpInstance, u64) -> Result<(Option<usize>, Vec<bool>)> + Sync,
{
    let details: Vec<RepDetail> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(cfg.seed, rep);
            let rep_cfg = DgpConfig { seed, ..cfg.clone() };
            match generate_dgp(&rep_cfg).and_then(|inst| one(&inst, seed)) {
                Ok((k_hat, rejections)) => RepDetail {
                    rep,
                    seed,
                    k_hat,
                    rejections,
                    error: None,
                },
                Err(e) => RepDetail {
                    rep,
                    seed,
                    k_hat: None,
                    rejections: vec![false; width],
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let failures = details.iter().filter(|d| d.error.is_some()).count();
    if failures * 10 > reps {
        return Err(Error::TooManyFailures { failed: failures, reps });
    }
    let (type1, power) = rejection_rates(
        details.iter().filter(|d| d.error.is_none()).map(|d| d.rejections.as_slice()),
        is_alt,
    );
    Ok(ExperimentResult {
        type1,
        power,
        reps,
        failures,
        details,
    })
}

/// Tests every `Θ_ij = 0` in each replication. `method.seed` is replaced by
/// the replication seed.
pub fn run_theta_experiment(
    cfg: &DgpConfig,
    method: &PipelineConfig,
    reps: usize,
    alpha: f64,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    check_reps(reps, alpha)?;
    let support = cfg.support();
    run_reps(cfg, reps, cfg.p * cfg.m, &support, |inst, seed| {
        if alpha == 0.0 {
            return Ok((None, vec![false; cfg.p * cfg.m]));
        }
        let model = FittedModel::fit(inst.data.clone(), PipelineConfig { seed, ..method.clone() })?;
        let results = model.infer_all(alpha)?;
        Ok((Some(model.k()), results.iter().map(|r| r.reject).collect()))
    })
}

/// Tests every `B_j = 0`; the first `b_m` columns are the nulls.
pub fn run_b_experiment(cfg: &DgpConfig, method: &PipelineConfig, reps: usize, alpha: f64) -> Result<ExperimentResult> {
    cfg.validate()?;
    check_reps(reps, alpha)?;
    if cfg.b_m == 0 || cfg.b_m >= cfg.m {
        return Err(Error::InvalidArgument(format!(
            "B experiment needs 1 ≤ b_m < m (got b_m = {}, m = {})",
            cfg.b_m, cfg.m
        )));
    }
    let is_alt: Vec<bool> = (0..cfg.m).map(|j| j >= cfg.b_m).collect();
    run_reps(cfg, reps, cfg.m, &is_alt, |inst, seed| {
        if alpha == 0.0 {
            return Ok((None, vec![false; cfg.m]));
        }
        let model = FittedModel::fit(inst.data.clone(), PipelineConfig { seed, ..method.clone() })?;
        let results = model.hidden_effect_tests(alpha)?;
        Ok((Some(model.k()), results.iter().map(|r| r.reject).collect()))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: f64,
    pub result: ExperimentResult,
}

/// One Θ experiment per signal value, all sharing the base seed.
pub fn run_signal_sweep(
    cfg: &DgpConfig,
    method: &PipelineConfig,
    r_grid: &[f64],
    reps: usize,
    alpha: f64,
) -> Result<Vec<SweepRow>> {
    if r_grid.is_empty() {
        return Err(Error::InvalidArgument("signal grid is empty".into()));
    }
    r_grid
        .iter()
        .map(|&r| {
            let point = DgpConfig {
                theta_signal: Some(r),
                ..cfg.clone()
            };
            run_theta_experiment(&point, method, reps, alpha).map(|result| SweepRow { r, result })
        })
        .collect()
}

/// Signal grid of the sweep study.
pub const DEFAULT_SIGNAL_GRID: [f64; 9] = [0.05, 0.07, 0.1, 0.2, 0.3, 0.5, 1.0, 1.5, 2.0];

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DgpConfig {
        DgpConfig {
            n: 40,
            p: 6,
            m: 5,
            k: 2,
            s: 2,
            s_m: 3,
            ..Default::default()
        }
    }

    #[test]
    fn reconstruction_is_exact() {
        let inst = generate_dgp(&small()).unwrap();
        let x = inst.data.x();
        let y = x * &inst.theta_true + &inst.z * &inst.b_true + &inst.noise;
        assert!((y - inst.data.y()).abs().max() < 1e-12);
        assert!((&inst.z - x * &inst.a_true).column(0).norm() > 0.0);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate_dgp(&small()).unwrap();
        let b = generate_dgp(&small()).unwrap();
        assert_eq!(a.data.y(), b.data.y());
        let c = generate_dgp(&DgpConfig { seed: 9, ..small() }).unwrap();
        assert_ne!(a.data.y(), c.data.y());
    }

    #[test]
    fn structure_of_truth() {
        let cfg = DgpConfig { b_m: 2, theta_signal: Some(0.7), ..small() };
        let inst = generate_dgp(&cfg).unwrap();
        for i in 0..cfg.p {
            for j in 0..cfg.m {
                let expected = if i < cfg.s && j < cfg.s_m { 0.7 } else { 0.0 };
                assert_eq!(inst.theta_true[(i, j)], expected);
                assert_eq!(inst.support[i * cfg.m + j], expected != 0.0);
            }
        }
        assert!(inst.b_true.columns(0, 2).iter().all(|&v| v == 0.0));
        assert!(inst.b_true.columns(2, 3).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn projected_theta_is_orthogonal_to_loadings() {
        let cfg = DgpConfig { project_theta: true, ..small() };
        let inst = generate_dgp(&cfg).unwrap();
        let tb = &inst.theta_true * inst.b_true.transpose();
        assert!(tb.amax() < 1e-10);
        assert!(inst.theta_true.row(0).iter().all(|&v| v != 0.0));
        assert!(inst.theta_true.rows(cfg.s, cfg.p - cfg.s).iter().all(|&v| v == 0.0));
        assert_eq!(cfg.support().iter().filter(|&&a| a).count(), cfg.s * cfg.m);
    }

    #[test]
    fn fixed_signal_keeps_other_draws() {
        let a = generate_dgp(&small()).unwrap();
        let b = generate_dgp(&DgpConfig { theta_signal: Some(0.3), ..small() }).unwrap();
        assert_eq!(a.data.x(), b.data.x());
        assert_eq!(a.noise, b.noise);
        assert_eq!(a.z, b.z);
    }

    #[test]
    fn zero_eta_and_zero_k() {
        let inst = generate_dgp(&DgpConfig { eta: 0.0, ..small() }).unwrap();
        assert!(inst.a_true.iter().all(|&v| v == 0.0));
        let inst = generate_dgp(&DgpConfig { k: 0, ..small() }).unwrap();
        let y = inst.data.x() * &inst.theta_true + &inst.noise;
        assert!((y - inst.data.y()).abs().max() < 1e-12);
    }

    #[test]
    fn covariance_pattern() {
        let s = design_covariance(4);
        assert_eq!(s[(0, 0)], 1.0);
        assert_eq!(s[(0, 1)], -0.5);
        assert_eq!(s[(0, 2)], 0.25);
        assert_eq!(s[(1, 3)], 0.25);
        assert_eq!(s[(0, 3)], -0.125);
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            DgpConfig { eta: -0.1, ..small() },
            DgpConfig { s: 7, ..small() },
            DgpConfig { s_m: 6, ..small() },
            DgpConfig { b_m: 6, ..small() },
            DgpConfig { sigma_w: 0.0, ..small() },
        ] {
            assert!(matches!(generate_dgp(&cfg), Err(Error::InvalidArgument(_))), "{cfg:?}");
        }
    }

    #[test]
    fn rates_from_oracle_rejections() {
        let alt = [true, false, false, true];
        let all = [true; 4];
        assert_eq!(rejection_rates([&all[..], &all[..]], &alt), (1.0, 1.0));
        let r1 = [true, true, false, false];
        let r2 = [true, false, false, true];
        // type I: (1/2 + 0)/2, power: (1/2 + 1)/2
        assert_eq!(rejection_rates([&r1[..], &r2[..]], &alt), (0.25, 0.75));
    }

    #[test]
    fn alpha_zero_never_rejects() {
        let res = run_theta_experiment(&small(), &PipelineConfig::default(), 3, 0.0).unwrap();
        assert_eq!((res.type1, res.power), (0.0, 0.0));
        let cfg = DgpConfig { b_m: 2, ..small() };
        let res = run_b_experiment(&cfg, &PipelineConfig::default(), 2, 0.0).unwrap();
        assert_eq!((res.type1, res.power), (0.0, 0.0));
    }

    #[test]
    fn derived_seeds_distinct() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|r| derive_seed(7, r)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn b_experiment_bounds() {
        let pc = PipelineConfig::default();
        assert!(run_b_experiment(&small(), &pc, 1, 0.05).is_err());
        assert!(run_b_experiment(&DgpConfig { b_m: 5, ..small() }, &pc, 1, 0.05).is_err());
    }
}
