//! Coordinate-descent lasso for the objective
//!
//! ```text
//! (1/n)‖y − Xθ‖²₂ + λ‖θ‖₁
//! ```
//!
//! The solver works on the Gram form `θᵀGθ − 2cᵀθ + λ‖θ‖₁` with `G = XᵀWX/n`
//! and `c = XᵀWy/n`, which covers both the plain lasso (`W = I`) and the
//! ridge-projected lasso used by lava (`W = Q`). The running product `Gθ` is
//! updated in place whenever a coordinate moves (covariance updates).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, max_abs, scaled_gram};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Maximum number of coordinate sweeps.
    pub max_iter: usize,
    /// Convergence when the largest coordinate move is below `tol·(1+‖θ‖∞)`.
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            max_iter: 100_000,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub coef: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Soft-thresholding `S(z, t)`; `|z| = t` maps to zero.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Plain lasso on a dense design.
pub fn lasso_cd(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    opts: &LassoOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, response has {}",
            x.nrows(),
            y.len()
        )));
    }
    if !all_finite(x.as_slice()) || !all_finite(y.as_slice()) {
        return Err(Error::NonFinite("lasso input"));
    }
    let n = x.nrows() as f64;
    let gram = scaled_gram(x);
    let cross = x.tr_mul(y) / n;
    solve_gram(&gram, &cross, lambda, opts, warm_start, None)
}

/// Smallest penalty for which θ̂ = 0: `2·max_k |c_k|`.
pub fn lambda_max(cross: &DVector<f64>, excluded: Option<usize>) -> f64 {
    2.0 * cross
        .iter()
        .enumerate()
        .filter(|(k, _)| Some(*k) != excluded)
        .fold(0.0f64, |acc, (_, c)| acc.max(c.abs()))
}

/// Coordinate descent on the Gram form.
///
/// `excluded` pins one coordinate at zero, which lets node-wise regressions
/// reuse the full design Gram matrix.
pub fn solve_gram(
    gram: &DMatrix<f64>,
    cross: &DVector<f64>,
    lambda: f64,
    opts: &LassoOptions,
    warm_start: Option<&DVector<f64>>,
    excluded: Option<usize>,
) -> Result<LassoFit> {
    let p = cross.len();
    if gram.shape() != (p, p) {
        return Err(Error::Dimension(format!(
            "Gram is {:?}, cross-product has length {p}",
            gram.shape()
        )));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("penalty must be finite and >= 0, got {lambda}")));
    }
    if !all_finite(cross.as_slice()) {
        return Err(Error::NonFinite("lasso cross-product"));
    }

    let g = gram.as_slice();
    let c = cross.as_slice();
    let half = 0.5 * lambda;

    let mut beta = match warm_start {
        Some(w) if w.len() == p => w.clone(),
        Some(w) => {
            return Err(Error::Dimension(format!(
                "warm start has length {}, expected {p}",
                w.len()
            )))
        }
        None => DVector::zeros(p),
    };
    if let Some(e) = excluded {
        beta[e] = 0.0;
    }
    let mut g_beta = DVector::zeros(p);
    for k in 0..p {
        if beta[k] != 0.0 {
            axpy(&mut g_beta, &g[k * p..(k + 1) * p], beta[k]);
        }
    }

    let update = |k: usize, beta: &mut DVector<f64>, g_beta: &mut DVector<f64>| -> Result<f64> {
        let gkk = g[k * p + k];
        let old = beta[k];
        let new = if gkk > 0.0 {
            let z = c[k] - g_beta[k] + gkk * old;
            if z.is_nan() {
                return Err(Error::NonFinite("lasso coordinate update"));
            }
            soft_threshold(z, half) / gkk
        } else {
            0.0
        };
        let delta = new - old;
        if delta != 0.0 {
            beta[k] = new;
            axpy(g_beta, &g[k * p..(k + 1) * p], delta);
        }
        Ok(delta.abs())
    };

    let mut iterations = 0;
    let mut active: Vec<usize> = Vec::with_capacity(p);
    while iterations < opts.max_iter {
        // full sweep
        iterations += 1;
        let mut max_move = 0.0f64;
        for k in 0..p {
            if Some(k) == excluded {
                continue;
            }
            max_move = max_move.max(update(k, &mut beta, &mut g_beta)?);
        }
        if max_move < opts.tol * (1.0 + max_abs(beta.as_slice())) {
            return Ok(LassoFit {
                coef: beta,
                converged: true,
                iterations,
            });
        }
        // sweeps restricted to the active set until it settles
        active.clear();
        active.extend((0..p).filter(|&k| beta[k] != 0.0));
        while iterations < opts.max_iter {
            iterations += 1;
            let mut max_move = 0.0f64;
            for &k in &active {
                max_move = max_move.max(update(k, &mut beta, &mut g_beta)?);
            }
            if max_move < opts.tol * (1.0 + max_abs(beta.as_slice())) {
                break;
            }
        }
    }
    Ok(LassoFit {
        coef: beta,
        converged: false,
        iterations,
    })
}

#[inline]
fn axpy(y: &mut DVector<f64>, x: &[f64], a: f64) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `(1/n)‖y − Xθ‖² + λ‖θ‖₁`.
pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>, lambda: f64) -> f64 {
    let r = y - x * theta;
    r.norm_squared() / x.nrows() as f64 + lambda * theta.lp_norm(1)
}
