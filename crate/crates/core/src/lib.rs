//! Estimation and inference for multivariate-response linear regression with
//! hidden variables,
//!
//! ```text
//! Y = Θᵀ X + Bᵀ Z + E,    Z correlated with X,
//! ```
//!
//! following a four step procedure: a lava fit of the best linear predictor,
//! factor estimation of the hidden loadings from its residuals, a lasso on the
//! response projected off the estimated loadings, and a node-wise debiasing
//! correction that yields asymptotically normal entry estimates.
//!
//! The crate also hosts the tuning machinery (k-fold cross-validation and the
//! pilot λ₁ formula) and a Monte Carlo harness that reproduces the standard
//! simulation design for Type I error and power.

pub mod data;
pub mod dist;
pub mod error;
pub mod factor;
pub mod inference;
pub mod lasso;
pub mod lava;
pub mod linalg;
pub mod pipeline;
pub mod simulation;
pub mod tuning;

pub use data::{center_columns, load_matrix_csv, write_matrix_csv, CsvMatrix, Dataset};
pub use error::{Error, Result, Stage};
pub use factor::{
    estimate_factors, estimate_loadings_factors, noise_variance, select_num_factors,
    svd_scaled_residuals, FactorEstimate, ResidualSvd,
};
pub use inference::{
    debias_entry, hidden_effect_test, initial_theta_lasso, nodewise_precision_column,
    projected_response, theta_test_ci, HiddenEffectResult, PrecisionColumn, ThetaInference,
};
pub use lasso::{lasso_cd, LassoFit, LassoOptions};
pub use lava::{
    build_ridge_projectors, lava_fit_all, lava_fit_column, lava_objective, LavaColumnFit,
    LavaFit, LavaTuning, RidgeProjectors,
};
pub use pipeline::{
    infer_entry_pipeline, tune_lava, FactorCount, FittedModel, InitialEstimate, PipelineConfig, TuningConfig,
};
pub use simulation::{
    derive_seed, design_covariance, generate_dgp, rejection_rates, run_b_experiment, run_signal_sweep,
    run_theta_experiment, DgpConfig, DgpInstance, ExperimentResult, RepDetail, SweepRow, DEFAULT_SIGNAL_GRID,
};
pub use tuning::{
    cv_select, kfold_indices, lambda1_pilot, lasso_cv, CvCurvePoint, CvPlan, CvSelection, FoldGrams,
    LassoTarget, LavaColumnTuning, LavaCv, PathSpec,
};

pub use nalgebra::{DMatrix, DVector};
