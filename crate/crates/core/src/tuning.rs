//! K-fold cross-validation and penalty selection.
//!
//! * [`kfold_indices`] builds a balanced shuffled partition from a seed.
//! * [`cv_select`] picks the grid point with the smallest mean held-out
//!   squared error; ties go to the larger penalty.
//! * [`lambda1_pilot`] is the λ₁(λ₂) formula used to pair each λ₂ with a lasso
//!   penalty before λ₂ is cross-validated.
//! * [`FoldGrams`] and [`LavaCv`] cache the per-fold Gram matrices and ridge
//!   projectors so that every response column and every node-wise regression
//!   reuses the same decompositions.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{lambda_max, solve_gram, LassoOptions};
use crate::lava::{build_ridge_projectors, LavaTuning, RidgeProjectors};
use crate::linalg::{scaled_gram, select_entries, select_rows, ThinSvd};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub num_folds: usize,
    pub seed: u64,
    /// Fold label of each sample.
    pub fold_assignment: Vec<usize>,
}

impl CvPlan {
    pub fn n(&self) -> usize {
        self.fold_assignment.len()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&r| self.fold_assignment[r] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&r| self.fold_assignment[r] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_folds];
        for &f in &self.fold_assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles `0..n` with a ChaCha stream keyed by `seed` and deals the
/// permutation round-robin into `num_folds` folds.
pub fn kfold_indices(n: usize, num_folds: usize, seed: u64) -> Result<CvPlan> {
    if num_folds < 2 {
        return Err(Error::InvalidArgument("need at least two folds".into()));
    }
    if num_folds > n {
        return Err(Error::InvalidArgument(format!("{num_folds} folds for {n} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold_assignment = vec![0; n];
    for (pos, &sample) in order.iter().enumerate() {
        fold_assignment[sample] = pos % num_folds;
    }
    Ok(CvPlan {
        num_folds,
        seed,
        fold_assignment,
    })
}

/// `c₀ √(max_k M_kk(λ₂)) (√(m/n) + √(2 ln p / n))`.
pub fn lambda1_pilot(x: &DMatrix<f64>, lambda2: f64, m: usize, c0: f64) -> Result<f64> {
    let proj = build_ridge_projectors(x, lambda2)?;
    Ok(lambda1_pilot_from(&proj, x.ncols(), m, c0))
}

pub fn lambda1_pilot_from(proj: &RidgeProjectors, p: usize, m: usize, c0: f64) -> f64 {
    let n = proj.n() as f64;
    let rate = (m as f64 / n).sqrt() + (2.0 * (p as f64).ln() / n).sqrt();
    c0 * proj.max_m_diag().sqrt() * rate
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvCurvePoint {
    pub candidate: f64,
    pub mean_error: f64,
    pub se_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub best: f64,
    pub best_index: usize,
    /// One point per grid candidate that succeeded on every fold, in grid order.
    pub curve: Vec<CvCurvePoint>,
}

/// Cross-validated choice over `grid`.
///
/// `fold_errors(f)` returns, for every grid candidate, the held-out mean squared
/// error `(1/n_f)‖y_f − ŷ_f‖²` on fold `f`. A candidate that fails on any fold is
/// dropped. Among minimizers the larger penalty wins.
pub fn cv_select<F>(grid: &[f64], plan: &CvPlan, mut fold_errors: F) -> Result<CvSelection>
where
    F: FnMut(usize) -> Vec<Result<f64>>,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty tuning grid".into()));
    }
    let g = grid.len();
    let mut errors: Vec<Vec<f64>> = vec![Vec::with_capacity(plan.num_folds); g];
    let mut failures: Vec<Option<String>> = vec![None; g];
    for fold in 0..plan.num_folds {
        let errs = fold_errors(fold);
        if errs.len() != g {
            return Err(Error::Dimension(format!(
                "objective returned {} errors for {g} candidates",
                errs.len()
            )));
        }
        for (c, e) in errs.into_iter().enumerate() {
            match e {
                Ok(v) if v.is_finite() => errors[c].push(v),
                Ok(v) => failures[c] = Some(format!("non-finite error {v}")),
                Err(e) => failures[c] = Some(e.to_string()),
            }
        }
    }

    let mut curve = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for c in 0..g {
        if failures[c].is_some() {
            continue;
        }
        let k = errors[c].len() as f64;
        let mean = errors[c].iter().sum::<f64>() / k;
        let var = if k > 1.0 {
            errors[c].iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        curve.push(CvCurvePoint {
            candidate: grid[c],
            mean_error: mean,
            se_error: (var / k).sqrt(),
        });
        best = match best {
            None => Some((c, mean)),
            Some((b, bm)) if mean < bm || (mean == bm && grid[c] > grid[b]) => Some((c, mean)),
            keep => keep,
        };
    }
    match best {
        Some((idx, _)) => Ok(CvSelection {
            best: grid[idx],
            best_index: idx,
            curve,
        }),
        None => Err(Error::CvFailed(
            failures
                .iter()
                .enumerate()
                .filter_map(|(c, f)| f.as_ref().map(|m| format!("[{}] {m}", grid[c])))
                .collect::<Vec<_>>()
                .join("; "),
        )),
    }
}

/// Geometric penalty path from `lmax` down to `lmax·ratio`.
pub fn penalty_path(lmax: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len <= 1 || lmax <= 0.0 {
        return vec![lmax.max(0.0)];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len).map(|k| lmax * (step * k as f64).exp()).collect()
}

/// Training/holdout split of the design for one fold.
#[derive(Debug, Clone)]
pub struct FoldDesign {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub x_train: DMatrix<f64>,
    pub x_test: DMatrix<f64>,
    /// `X_trainᵀX_train / n_train`.
    pub gram: DMatrix<f64>,
}

/// Per-fold Gram matrices of one design, shared by all lasso CV problems on it.
#[derive(Debug, Clone)]
pub struct FoldGrams {
    pub plan: CvPlan,
    pub folds: Vec<FoldDesign>,
}

impl FoldGrams {
    pub fn new(x: &DMatrix<f64>, plan: &CvPlan) -> Result<Self> {
        if plan.n() != x.nrows() {
            return Err(Error::Dimension("fold plan does not match the sample count".into()));
        }
        let folds = (0..plan.num_folds)
            .map(|f| {
                let train = plan.train_indices(f);
                let test = plan.test_indices(f);
                let x_train = select_rows(x, &train);
                let x_test = select_rows(x, &test);
                let gram = scaled_gram(&x_train);
                FoldDesign {
                    train,
                    test,
                    x_train,
                    x_test,
                    gram,
                }
            })
            .collect();
        Ok(FoldGrams {
            plan: plan.clone(),
            folds,
        })
    }
}

/// What a cross-validated lasso regresses on the design.
#[derive(Debug, Clone, Copy)]
pub enum LassoTarget<'a> {
    /// An external response vector.
    Response(&'a DVector<f64>),
    /// Column `i` of the design itself, regressed on the others.
    Column(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub len: usize,
    /// Smallest penalty as a fraction of the zero-solution threshold. When
    /// unset: 1e-4 if the training folds have more rows than columns, else 1e-2.
    pub ratio: Option<f64>,
    /// Stop a fold's path once the training fit explains more than 99.9% of
    /// the response variance or the explained fraction stalls (gain < 1e-5).
    /// The CV curve is then evaluated on the prefix shared by all folds.
    pub early_stop: bool,
    /// Stop once the mean held-out error has not improved for this many
    /// consecutive penalties; 0 runs the whole path.
    pub patience: usize,
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec {
            len: 30,
            ratio: None,
            early_stop: true,
            patience: 5,
        }
    }
}

impl PathSpec {
    pub fn ratio_for(&self, n_train: usize, p: usize) -> f64 {
        self.ratio.unwrap_or(if n_train > p { 1e-4 } else { 1e-2 })
    }
}

const DEV_RATIO_MAX: f64 = 0.999;
const DEV_GAIN_MIN: f64 = 1e-5;

/// Lasso penalty chosen by K-fold CV along a warm-started path.
pub fn lasso_cv(
    x: &DMatrix<f64>,
    full_gram: &DMatrix<f64>,
    target: LassoTarget<'_>,
    folds: &FoldGrams,
    path: &PathSpec,
    opts: &LassoOptions,
) -> Result<CvSelection> {
    let n = x.nrows() as f64;
    let (full_cross, excluded) = match target {
        LassoTarget::Response(y) => (x.tr_mul(y) / n, None),
        LassoTarget::Column(i) => (full_gram.column(i).into_owned(), Some(i)),
    };
    let min_train = folds.folds.iter().map(|f| f.train.len()).min().unwrap_or(0);
    let ratio = path.ratio_for(min_train, x.ncols());
    let grid = penalty_path(lambda_max(&full_cross, excluded), path.len, ratio);

    struct FoldState<'f> {
        fold: &'f FoldDesign,
        cross: DVector<f64>,
        y_test: DVector<f64>,
        yy: f64,
        warm: Option<DVector<f64>>,
        dev_ratio: f64,
        errs: Vec<Result<f64>>,
    }
    let mut states: Vec<FoldState<'_>> = folds
        .folds
        .iter()
        .map(|fold| {
            let nt = fold.train.len() as f64;
            let (cross, y_test, yy) = match target {
                LassoTarget::Response(y) => {
                    let y_train = select_entries(y, &fold.train);
                    let yy = y_train.norm_squared() / nt;
                    (fold.x_train.tr_mul(&y_train) / nt, select_entries(y, &fold.test), yy)
                }
                LassoTarget::Column(i) => (
                    fold.gram.column(i).into_owned(),
                    fold.x_test.column(i).into_owned(),
                    fold.gram[(i, i)],
                ),
            };
            FoldState {
                fold,
                cross,
                y_test,
                yy,
                warm: None,
                dev_ratio: 0.0,
                errs: Vec::with_capacity(grid.len()),
            }
        })
        .collect();

    let mut best_mean = f64::INFINITY;
    let mut since_best = 0;
    for (g, &lambda) in grid.iter().enumerate() {
        let mut stop = false;
        let mut total = 0.0;
        for st in states.iter_mut() {
            let fold = st.fold;
            match solve_gram(&fold.gram, &st.cross, lambda, opts, st.warm.as_ref(), excluded) {
                Ok(fit) => {
                    let err = (&st.y_test - &fold.x_test * &fit.coef).norm_squared() / st.y_test.len() as f64;
                    total += err;
                    st.errs.push(Ok(err));
                    if path.early_stop && st.yy > 0.0 {
                        // training rss/n = yy − 2cᵀβ + βᵀGβ
                        let rss = st.yy - 2.0 * st.cross.dot(&fit.coef) + fit.coef.dot(&(&fold.gram * &fit.coef));
                        let ratio = 1.0 - rss / st.yy;
                        if ratio > DEV_RATIO_MAX || (g > 0 && ratio - st.dev_ratio < DEV_GAIN_MIN * ratio) {
                            stop = true;
                        }
                        st.dev_ratio = ratio;
                    }
                    st.warm = Some(fit.coef);
                }
                Err(e) => {
                    total = f64::NAN;
                    st.errs.push(Err(e));
                }
            }
        }
        if path.patience > 0 && total.is_finite() {
            if total < best_mean {
                best_mean = total;
                since_best = 0;
            } else {
                since_best += 1;
                stop |= since_best >= path.patience;
            }
        }
        if stop {
            break;
        }
    }
    let common = states[0].errs.len();
    let mut per_fold: Vec<Vec<Result<f64>>> = states.into_iter().map(|st| st.errs).collect();
    cv_select(&grid[..common], &folds.plan, |f| std::mem::take(&mut per_fold[f]))
}

/// Default λ₂ grid multipliers, scaled by `s̄²/n` with s̄ the median singular value of X.
pub const DEFAULT_LAMBDA2_FACTORS: [f64; 6] = [0.01, 0.1, 1.0, 10.0, 100.0, f64::INFINITY];

/// Multipliers of the pilot λ₁ searched once λ₂ is fixed.
pub const DEFAULT_LAMBDA1_FACTORS: [f64; 7] = [4.0, 2.0, 1.0, 0.5, 0.25, 0.125, 0.0625];

/// `s̄²/n` for the design.
pub fn lambda2_scale(svd: &ThinSvd, n: usize) -> f64 {
    let mut s: Vec<f64> = svd.s.iter().copied().collect();
    if s.is_empty() {
        return 1.0;
    }
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    let median = if s.len() % 2 == 1 {
        s[mid]
    } else {
        0.5 * (s[mid - 1] + s[mid])
    };
    (median * median / n as f64).max(f64::MIN_POSITIVE)
}

/// Outcome of tuning one lava column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LavaColumnTuning {
    pub tuning: LavaTuning,
    pub lambda2_curve: Vec<CvCurvePoint>,
    pub lambda1_curve: Vec<CvCurvePoint>,
}

/// Projector caches for cross-validating lava over a λ₂ grid.
///
/// For each λ₂ the full-data projector supplies the pilot λ₁; the per-fold
/// projectors are built once and shared by every response column.
pub struct LavaCv {
    pub lambda2_grid: Vec<f64>,
    pub pilots: Vec<f64>,
    pub lambda1_factors: Vec<f64>,
    folds: Vec<FoldDesign>,
    /// `[fold][λ₂ index]`
    fold_projectors: Vec<Vec<RidgeProjectors>>,
    plan: CvPlan,
    opts: LassoOptions,
}

impl LavaCv {
    pub fn new(
        x: &DMatrix<f64>,
        m: usize,
        lambda2_grid: Vec<f64>,
        lambda1_factors: Vec<f64>,
        c0: f64,
        plan: &CvPlan,
        opts: &LassoOptions,
    ) -> Result<Self> {
        if lambda2_grid.is_empty() || lambda1_factors.is_empty() {
            return Err(Error::InvalidArgument("empty lava tuning grid".into()));
        }
        let p = x.ncols();
        let full_svd = ThinSvd::reduced(x);
        let pilots = lambda2_grid
            .iter()
            .map(|&l2| {
                RidgeProjectors::from_svd(x, full_svd.clone(), l2).map(|proj| lambda1_pilot_from(&proj, p, m, c0))
            })
            .collect::<Result<Vec<_>>>()?;
        let grams = FoldGrams::new(x, plan)?;
        let mut fold_projectors = Vec::with_capacity(plan.num_folds);
        for fold in &grams.folds {
            let svd = ThinSvd::reduced(&fold.x_train);
            fold_projectors.push(
                lambda2_grid
                    .iter()
                    .map(|&l2| RidgeProjectors::from_svd(&fold.x_train, svd.clone(), l2))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(LavaCv {
            lambda2_grid,
            pilots,
            lambda1_factors,
            folds: grams.folds,
            fold_projectors,
            plan: plan.clone(),
            opts: *opts,
        })
    }

    /// Two-stage choice for one response column: λ₂ by CV with λ₁ = pilot(λ₂),
    /// then λ₁ by CV over multiples of the pilot at the chosen λ₂.
    pub fn tune_column(&self, y: &DVector<f64>, fixed_lambda1: Option<f64>) -> Result<LavaColumnTuning> {
        let stage_one: Vec<f64> = match fixed_lambda1 {
            Some(l1) => vec![l1; self.lambda2_grid.len()],
            None => self.pilots.clone(),
        };
        let idx_grid: Vec<f64> = (0..self.lambda2_grid.len()).map(|k| k as f64).collect();
        // cv_select breaks ties toward the larger candidate; index order follows
        // the λ₂ grid, which is increasing.
        let stage = cv_select(&idx_grid, &self.plan, |f| {
            (0..self.lambda2_grid.len())
                .map(|k| self.fold_error(f, k, y, &[stage_one[k]]).map(|v| v[0]))
                .collect()
        })?;
        let k2 = stage.best_index;
        let lambda2 = self.lambda2_grid[k2];
        let lambda2_curve = stage
            .curve
            .iter()
            .map(|pt| CvCurvePoint {
                candidate: self.lambda2_grid[pt.candidate as usize],
                ..*pt
            })
            .collect();

        if let Some(l1) = fixed_lambda1 {
            return Ok(LavaColumnTuning {
                tuning: LavaTuning { lambda1: l1, lambda2 },
                lambda2_curve,
                lambda1_curve: Vec::new(),
            });
        }
        let mut grid: Vec<f64> = self.lambda1_factors.iter().map(|c| c * self.pilots[k2]).collect();
        grid.sort_by(|a, b| b.total_cmp(a));
        let stage_two = cv_select(&grid, &self.plan, |f| match self.fold_error(f, k2, y, &grid) {
            Ok(errs) => errs.into_iter().map(Ok).collect(),
            Err(e) => vec![Err(e); grid.len()],
        })?;
        Ok(LavaColumnTuning {
            tuning: LavaTuning {
                lambda1: stage_two.best,
                lambda2,
            },
            lambda2_curve,
            lambda1_curve: stage_two.curve,
        })
    }

    /// Held-out errors on fold `f` at λ₂ index `k2` for each λ₁ in `lambda1s`
    /// (warm-started in the given order).
    fn fold_error(&self, f: usize, k2: usize, y: &DVector<f64>, lambda1s: &[f64]) -> Result<Vec<f64>> {
        let fold = &self.folds[f];
        let proj = &self.fold_projectors[f][k2];
        let y_train = select_entries(y, &fold.train);
        let y_test = select_entries(y, &fold.test);
        let cross = proj.q_cross(&y_train);
        let mut warm: Option<DVector<f64>> = None;
        let mut out = Vec::with_capacity(lambda1s.len());
        for &l1 in lambda1s {
            let fit = solve_gram(proj.q_gram(), &cross, l1, &self.opts, warm.as_ref(), None)?;
            let theta = fit.coef;
            let delta = proj.ridge_solve(&(&y_train - &fold.x_train * &theta));
            let pred = &fold.x_test * (&theta + delta);
            out.push((&y_test - pred).norm_squared() / y_test.len() as f64);
            warm = Some(theta);
        }
        Ok(out)
    }
}
