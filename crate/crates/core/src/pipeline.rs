//! End-to-end procedure: lava → factor SVD → projected lasso → node-wise
//! debiasing → tests.
//!
//! [`FittedModel::fit`] runs the shared stages once (tuning, lava, K, factors).
//! Per-feature precision columns and per-response initial estimates are
//! computed lazily and cached, so inference over many entries reuses them.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result, Stage};
use crate::factor::{
    default_k_bar, estimate_loadings_factors, select_num_factors, svd_scaled_residuals, FactorEstimate,
    ResidualSvd,
};
use crate::inference::{
    debias_entry, hidden_effect_test, nodewise_from_gram, projected_response, theta_test_ci,
    HiddenEffectResult, PrecisionColumn, ThetaInference,
};
use crate::lasso::{solve_gram, LassoOptions};
use crate::lava::{lava_fit_all, LavaFit, LavaTuning, RidgeProjectors};
use crate::linalg::{scaled_gram, ThinSvd};
use crate::tuning::{
    kfold_indices, lambda1_pilot_from, lambda2_scale, lasso_cv, CvCurvePoint, CvPlan, FoldGrams,
    LassoTarget, LavaColumnTuning, LavaCv, PathSpec, DEFAULT_LAMBDA1_FACTORS, DEFAULT_LAMBDA2_FACTORS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorCount {
    /// Use exactly this many factors; 0 disables the hidden-effect adjustment.
    Fixed(usize),
    /// Eigenvalue-ratio selection up to `k_bar` (default `⌊(n∧m)/2⌋`).
    Select { k_bar: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    /// Cross-validate every penalty that is not fixed below; otherwise use the
    /// closed-form defaults.
    pub cross_validate: bool,
    pub num_folds: usize,
    /// Constant in the pilot λ₁(λ₂) formula.
    pub c0: f64,
    /// λ₂ grid as multiples of `s̄²/n` (may include `inf`).
    pub lambda2_factors: Vec<f64>,
    /// λ₁ grid as multiples of the pilot at the chosen λ₂.
    pub lambda1_factors: Vec<f64>,
    pub path: PathSpec,
    /// Convergence tolerance of the solves made during cross-validation; fits
    /// at the selected penalties use [`PipelineConfig::lasso`].
    pub cv_tol: f64,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub lambda_tilde: Option<f64>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            cross_validate: true,
            num_folds: 5,
            c0: 1.0,
            lambda2_factors: DEFAULT_LAMBDA2_FACTORS.to_vec(),
            lambda1_factors: DEFAULT_LAMBDA1_FACTORS.to_vec(),
            path: PathSpec::default(),
            cv_tol: 1e-5,
            lambda1: None,
            lambda2: None,
            lambda3: None,
            lambda_tilde: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub factors: FactorCount,
    pub tuning: TuningConfig,
    pub lasso: LassoOptions,
    /// Significance level used by [`infer_entry_pipeline`].
    pub alpha: f64,
    /// Seeds the CV fold assignment.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            factors: FactorCount::Select { k_bar: None },
            tuning: TuningConfig::default(),
            lasso: LassoOptions::default(),
            alpha: 0.05,
            seed: 0,
        }
    }
}

/// Projected response, its initial lasso estimate, and the penalty used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialEstimate {
    pub j: usize,
    pub y_tilde: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda3: f64,
    pub cv_curve: Vec<CvCurvePoint>,
}

pub struct FittedModel {
    data: Dataset,
    config: PipelineConfig,
    plan: CvPlan,
    lava_tuning: Vec<LavaColumnTuning>,
    lava: LavaFit,
    residual_svd: ResidualSvd,
    factors: FactorEstimate,
    sigma_hat: DMatrix<f64>,
    fold_grams: Option<FoldGrams>,
    precision: Vec<OnceLock<Result<PrecisionColumn>>>,
    initial: Vec<OnceLock<Result<InitialEstimate>>>,
}

impl FittedModel {
    /// Runs tuning, lava, residual SVD, K selection and factor estimation.
    /// Uncentered data is centered first.
    pub fn fit(data: Dataset, config: PipelineConfig) -> Result<Self> {
        let data = data.into_centered();
        let (n, p, m) = (data.n(), data.p(), data.m());
        let tc = &config.tuning;
        let plan = kfold_indices(n, tc.num_folds, config.seed).map_err(|e| e.at(Stage::Tuning))?;

        let lava_tuning = tune_lava(&data, &config, &plan).map_err(|e| e.at(Stage::Tuning))?;
        let tuning: Vec<LavaTuning> = lava_tuning.iter().map(|t| t.tuning).collect();
        let lava = lava_fit_all(&data, &tuning, &config.lasso).map_err(|e| e.at(Stage::Lava))?;

        let residual_svd = svd_scaled_residuals(&lava.residuals);
        let k = match config.factors {
            FactorCount::Fixed(k) => k,
            FactorCount::Select { k_bar } => {
                let available = residual_svd.d.len();
                if available < 2 {
                    return Err(Error::InvalidArgument(
                        "selecting K needs at least two singular values".into(),
                    )
                    .at(Stage::Factors));
                }
                let k_bar = k_bar.unwrap_or_else(|| default_k_bar(n, m)).min(available - 1);
                select_num_factors(residual_svd.d.as_slice(), k_bar).map_err(|e| e.at(Stage::Factors))?
            }
        };
        let factors = estimate_loadings_factors(&residual_svd, k)
            .map_err(|e| e.at(Stage::Factors))?
            .with_noise_variances(&lava.residuals);

        let sigma_hat = scaled_gram(data.x());
        let fold_grams = if tc.cross_validate && (tc.lambda3.is_none() || tc.lambda_tilde.is_none()) {
            Some(FoldGrams::new(data.x(), &plan).map_err(|e| e.at(Stage::Tuning))?)
        } else {
            None
        };

        Ok(FittedModel {
            precision: (0..p).map(|_| OnceLock::new()).collect(),
            initial: (0..m).map(|_| OnceLock::new()).collect(),
            data,
            config,
            plan,
            lava_tuning,
            lava,
            residual_svd,
            factors,
            sigma_hat,
            fold_grams,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn plan(&self) -> &CvPlan {
        &self.plan
    }

    /// Selected lava penalties and CV curves, one per response.
    pub fn lava_tuning(&self) -> &[LavaColumnTuning] {
        &self.lava_tuning
    }

    pub fn lava(&self) -> &LavaFit {
        &self.lava
    }

    pub fn residual_svd(&self) -> &ResidualSvd {
        &self.residual_svd
    }

    pub fn factors(&self) -> &FactorEstimate {
        &self.factors
    }

    pub fn k(&self) -> usize {
        self.factors.k
    }

    /// Node-wise precision column for feature `i` (cached).
    pub fn precision_column(&self, i: usize) -> Result<&PrecisionColumn> {
        let cell = self
            .precision
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("feature index {i} out of range")))?;
        cell.get_or_init(|| self.compute_precision(i).map_err(|e| e.at(Stage::Nodewise)))
            .as_ref()
            .map_err(Clone::clone)
    }

    fn compute_precision(&self, i: usize) -> Result<PrecisionColumn> {
        let tc = &self.config.tuning;
        let p = self.data.p();
        let lambda = match (tc.lambda_tilde, &self.fold_grams) {
            (Some(l), _) => l,
            (None, Some(grams)) if tc.cross_validate => {
                lasso_cv(self.data.x(), &self.sigma_hat, LassoTarget::Column(i), grams, &tc.path, &self.cv_options())?
                    .best
            }
            _ => ((p as f64).ln() / self.data.n() as f64).sqrt(),
        };
        nodewise_from_gram(&self.sigma_hat, i, lambda, &self.config.lasso)
    }

    /// Projected response and initial lasso for response `j` (cached).
    pub fn initial_estimate(&self, j: usize) -> Result<&InitialEstimate> {
        let cell = self
            .initial
            .get(j)
            .ok_or_else(|| Error::InvalidArgument(format!("response index {j} out of range")))?;
        cell.get_or_init(|| self.compute_initial(j).map_err(|e| e.at(Stage::InitialLasso)))
            .as_ref()
            .map_err(Clone::clone)
    }

    fn compute_initial(&self, j: usize) -> Result<InitialEstimate> {
        let tc = &self.config.tuning;
        let x = self.data.x();
        let y_tilde = projected_response(self.data.y(), &self.factors, j)?;
        let (lambda3, cv_curve) = match (tc.lambda3, &self.fold_grams) {
            (Some(l), _) => (l, Vec::new()),
            (None, Some(grams)) if tc.cross_validate => {
                let sel = lasso_cv(x, &self.sigma_hat, LassoTarget::Response(&y_tilde), grams, &tc.path, &self.cv_options())?;
                (sel.best, sel.curve)
            }
            _ => (self.default_lambda3(), Vec::new()),
        };
        let cross = x.tr_mul(&y_tilde) / self.data.n() as f64;
        let theta = solve_gram(&self.sigma_hat, &cross, lambda3, &self.config.lasso, None, None)?.coef;
        Ok(InitialEstimate {
            j,
            y_tilde: y_tilde.as_slice().to_vec(),
            theta: theta.as_slice().to_vec(),
            lambda3,
            cv_curve,
        })
    }

    fn cv_options(&self) -> LassoOptions {
        cv_options(&self.config)
    }

    /// `√(max_k Σ̂_kk) √(ln p / n)`.
    pub fn default_lambda3(&self) -> f64 {
        let max_diag = self.sigma_hat.diagonal().iter().copied().fold(0.0, f64::max);
        max_diag.sqrt() * ((self.data.p() as f64).ln() / self.data.n() as f64).sqrt()
    }

    /// Debiased estimate, test and CI for entry `(i, j)`.
    pub fn infer_entry(&self, i: usize, j: usize, alpha: f64) -> Result<ThetaInference> {
        let pc = self.precision_column(i)?;
        let init = self.initial_estimate(j)?;
        let theta = DVector::from_column_slice(&init.theta);
        let y_tilde = DVector::from_column_slice(&init.y_tilde);
        let debiased = debias_entry(self.data.x(), &y_tilde, &theta, pc);
        theta_test_ci(
            i,
            j,
            self.data.n(),
            theta[i],
            debiased,
            pc.var_term,
            self.factors.sigma2_e[j],
            alpha,
        )
        .map_err(|e| e.at(Stage::Test))
    }

    /// Inference for a list of entries; shared columns are computed in parallel first.
    pub fn infer_entries(&self, entries: &[(usize, usize)], alpha: f64) -> Result<Vec<ThetaInference>> {
        let mut features: Vec<usize> = entries.iter().map(|e| e.0).collect();
        features.sort_unstable();
        features.dedup();
        let mut responses: Vec<usize> = entries.iter().map(|e| e.1).collect();
        responses.sort_unstable();
        responses.dedup();
        features.par_iter().try_for_each(|&i| self.precision_column(i).map(|_| ()))?;
        responses.par_iter().try_for_each(|&j| self.initial_estimate(j).map(|_| ()))?;
        entries.iter().map(|&(i, j)| self.infer_entry(i, j, alpha)).collect()
    }

    /// Every entry of Θ, row-major in `(i, j)`.
    pub fn infer_all(&self, alpha: f64) -> Result<Vec<ThetaInference>> {
        let entries: Vec<(usize, usize)> = (0..self.data.p())
            .flat_map(|i| (0..self.data.m()).map(move |j| (i, j)))
            .collect();
        self.infer_entries(&entries, alpha)
    }

    pub fn hidden_effect_test(&self, j: usize, alpha: f64) -> Result<HiddenEffectResult> {
        hidden_effect_test(&self.factors, j, self.data.n(), alpha).map_err(|e| e.at(Stage::Test))
    }

    pub fn hidden_effect_tests(&self, alpha: f64) -> Result<Vec<HiddenEffectResult>> {
        (0..self.data.m()).map(|j| self.hidden_effect_test(j, alpha)).collect()
    }
}

fn cv_options(config: &PipelineConfig) -> LassoOptions {
    LassoOptions {
        tol: config.tuning.cv_tol,
        ..config.lasso
    }
}

/// Per-column lava penalties with their CV curves (empty when not
/// cross-validated). Columns share the fold plan.
pub fn tune_lava(data: &Dataset, config: &PipelineConfig, plan: &CvPlan) -> Result<Vec<LavaColumnTuning>> {
    let tc = &config.tuning;
    let (x, y) = (data.x(), data.y());
    let (n, p, m) = (data.n(), data.p(), data.m());
    let fixed = |tuning: LavaTuning| {
        vec![
            LavaColumnTuning {
                tuning,
                lambda2_curve: Vec::new(),
                lambda1_curve: Vec::new(),
            };
            m
        ]
    };

    if let (Some(lambda1), Some(lambda2)) = (tc.lambda1, tc.lambda2) {
        return Ok(fixed(LavaTuning { lambda1, lambda2 }));
    }
    let svd = ThinSvd::reduced(x);
    let scale = lambda2_scale(&svd, n);

    if !tc.cross_validate {
        let lambda2 = tc.lambda2.unwrap_or(scale);
        let lambda1 = match tc.lambda1 {
            Some(l) => l,
            None => {
                let proj = RidgeProjectors::from_svd(x, svd, lambda2)?;
                lambda1_pilot_from(&proj, p, m, tc.c0)
            }
        };
        return Ok(fixed(LavaTuning { lambda1, lambda2 }));
    }

    let grid: Vec<f64> = match tc.lambda2 {
        Some(l) => vec![l],
        None => tc.lambda2_factors.iter().map(|f| f * scale).collect(),
    };
    let cv = LavaCv::new(x, m, grid, tc.lambda1_factors.clone(), tc.c0, plan, &cv_options(config))?;
    (0..m)
        .into_par_iter()
        .map(|j| cv.tune_column(&y.column(j).into_owned(), tc.lambda1).map_err(|e| e.in_column(j)))
        .collect()
}

/// Fits the model and runs inference for one entry at `config.alpha`.
pub fn infer_entry_pipeline(data: &Dataset, i: usize, j: usize, config: &PipelineConfig) -> Result<ThetaInference> {
    if i >= data.p() || j >= data.m() {
        return Err(Error::InvalidArgument(format!(
            "entry ({i}, {j}) outside {}×{}",
            data.p(),
            data.m()
        )));
    }
    FittedModel::fit(data.clone(), config.clone())?.infer_entry(i, j, config.alpha)
}
