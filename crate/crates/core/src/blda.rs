//! Bayesian linear discriminant analysis.
//!
//! Classification is cast as Bayesian linear regression onto class-balanced
//! targets (`E/E₁` for targets, `-E/E₂` for non-targets) with a Gaussian prior
//! of precision `α` on the weights and Gaussian noise of precision `β`. Both
//! hyperparameters are set by MacKay's evidence fixed-point iteration:
//!
//! ```text
//! S = (β·GGᵀ + P(α))⁻¹          m = β·S·G·t
//! γ = Σ βλᵢ / (βλᵢ + α)
//! α ← γ / mᵀm                    β ← (E − γ) / ‖t − Gᵀm‖²
//! ```
//!
//! `G` is the `(D+1)×E` feature matrix with a trailing row of ones and
//! `P(α) = diag(α, …, α, 1e-10·α)`, which leaves the bias practically
//! unregularized. The `λᵢ` are the eigenvalues of the feature block of `GGᵀ`
//! (bias excluded), computed once before iterating. The posterior mean is
//! obtained from an exact Cholesky solve at every step, and once more at the
//! final hyperparameters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Bias prior precision relative to `α`.
pub const BIAS_PRECISION_RATIO: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BldaError {
    #[error("single-class training data: {targets} targets, {non_targets} non-targets")]
    SingleClass { targets: usize, non_targets: usize },
    #[error("non-finite feature value at epoch {epoch}, feature {feature}")]
    NonFinite { epoch: usize, feature: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BldaOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub alpha0: f64,
    pub beta0: f64,
}

impl Default for BldaOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, alpha0: 1.0, beta0: 1.0 }
    }
}

/// A fitted classifier.
///
/// JSON form: `{"w": [..], "alpha": .., "beta": .., "iterations": .., "converged": ..}`;
/// `w` has one entry per feature followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BldaModel {
    pub w: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Hyperparameters after every update, for diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitTrace {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BldaModel {
    pub fn n_features(&self) -> usize {
        self.w.len() - 1
    }

    /// `wᵀ[x; 1]`.
    pub fn score(&self, feature: &[f64]) -> Result<f64, BldaError> {
        if feature.len() != self.n_features() {
            return Err(BldaError::Shape(format!(
                "feature has {} entries, model expects {}",
                feature.len(),
                self.n_features()
            )));
        }
        let bias = self.w[self.n_features()];
        Ok(feature.iter().zip(&self.w).map(|(x, w)| x * w).sum::<f64>() + bias)
    }

    /// Scores every row of an `E×D` matrix.
    pub fn score_rows(&self, features: &DMatrix<f64>) -> Result<Vec<f64>, BldaError> {
        if features.ncols() != self.n_features() {
            return Err(BldaError::Shape(format!(
                "features have {} columns, model expects {}",
                features.ncols(),
                self.n_features()
            )));
        }
        let d = self.n_features();
        let w = DVector::from_column_slice(&self.w[..d]);
        Ok((features * w).iter().map(|s| s + self.w[d]).collect())
    }
}

/// Class-balanced regression targets.
pub fn regression_targets(labels: &[bool]) -> Result<DVector<f64>, BldaError> {
    let e = labels.len() as f64;
    let targets = labels.iter().filter(|&&l| l).count();
    let non_targets = labels.len() - targets;
    if targets == 0 || non_targets == 0 {
        return Err(BldaError::SingleClass { targets, non_targets });
    }
    let pos = e / targets as f64;
    let neg = -e / non_targets as f64;
    Ok(DVector::from_iterator(labels.len(), labels.iter().map(|&l| if l { pos } else { neg })))
}

/// `(D+1)×E`: features transposed, plus a row of ones.
pub fn augment(features: &DMatrix<f64>) -> DMatrix<f64> {
    let (e, d) = features.shape();
    DMatrix::from_fn(d + 1, e, |i, j| if i < d { features[(j, i)] } else { 1.0 })
}

/// Prior precision diagonal.
pub fn prior_precision(dim: usize, alpha: f64) -> DVector<f64> {
    DVector::from_fn(dim, |i, _| if i + 1 == dim { BIAS_PRECISION_RATIO * alpha } else { alpha })
}

fn posterior_mean(ggt: &DMatrix<f64>, gt: &DVector<f64>, alpha: f64, beta: f64) -> Result<DVector<f64>, BldaError> {
    let mut a = ggt * beta;
    for (i, p) in prior_precision(a.nrows(), alpha).iter().enumerate() {
        a[(i, i)] += p;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| BldaError::Numerical(format!("posterior precision not positive definite (alpha={alpha}, beta={beta})")))?;
    Ok(chol.solve(&(gt * beta)))
}

/// `‖(β·GGᵀ + P(α))·w − β·G·t‖ / ‖β·G·t‖`.
pub fn fixed_point_residual(features: &DMatrix<f64>, labels: &[bool], model: &BldaModel) -> Result<f64, BldaError> {
    let g = augment(features);
    let t = regression_targets(labels)?;
    let w = DVector::from_column_slice(&model.w);
    let mut lhs = (&g * g.transpose()) * &w * model.beta;
    lhs += prior_precision(w.len(), model.alpha).component_mul(&w);
    let rhs = &g * &t * model.beta;
    Ok((lhs - &rhs).norm() / rhs.norm())
}

pub fn fit_blda(features: &DMatrix<f64>, labels: &[bool], opts: &BldaOptions) -> Result<BldaModel, BldaError> {
    fit_blda_traced(features, labels, opts).map(|(m, _)| m)
}

/// Like [`fit_blda`], also returning the hyperparameter trajectory.
pub fn fit_blda_traced(features: &DMatrix<f64>, labels: &[bool], opts: &BldaOptions) -> Result<(BldaModel, FitTrace), BldaError> {
    let (e, d) = features.shape();
    if labels.len() != e {
        return Err(BldaError::Shape(format!("{} labels for {e} epochs", labels.len())));
    }
    if let Some(idx) = features.iter().position(|v| !v.is_finite()) {
        // column-major storage
        return Err(BldaError::NonFinite { epoch: idx % e, feature: idx / e });
    }
    let t = regression_targets(labels)?;
    if !(opts.alpha0 > 0.0 && opts.beta0 > 0.0) {
        return Err(BldaError::Numerical("initial hyperparameters must be positive".into()));
    }

    let g = augment(features);
    let ggt = &g * g.transpose();
    let gt = &g * &t;
    let spectrum = SymmetricEigen::new(ggt.view((0, 0), (d, d)).into_owned()).eigenvalues;
    let n = e as f64;

    let mut alpha = opts.alpha0;
    let mut beta = opts.beta0;
    let mut trace = FitTrace::default();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let m = posterior_mean(&ggt, &gt, alpha, beta)?;
        let gamma: f64 = spectrum.iter().map(|&l| {
            let bl = beta * l.max(0.0);
            bl / (bl + alpha)
        }).sum();
        let weights_sq = m.rows(0, d).norm_squared();
        let residual_sq = (&t - g.transpose() * &m).norm_squared();
        let new_alpha = gamma / weights_sq;
        let new_beta = (n - gamma) / residual_sq;
        if !(new_alpha.is_finite() && new_alpha > 0.0 && new_beta.is_finite() && new_beta > 0.0) {
            return Err(BldaError::Numerical(format!(
                "hyperparameter update left the positive reals (alpha={new_alpha}, beta={new_beta})"
            )));
        }
        let d_alpha = ((new_alpha - alpha) / alpha).abs();
        let d_beta = ((new_beta - beta) / beta).abs();
        alpha = new_alpha;
        beta = new_beta;
        trace.alpha.push(alpha);
        trace.beta.push(beta);
        if d_alpha < opts.tol && d_beta < opts.tol {
            converged = true;
            break;
        }
    }
    let w = posterior_mean(&ggt, &gt, alpha, beta)?;
    Ok((
        BldaModel { w: w.iter().copied().collect(), alpha, beta, iterations, converged },
        trace,
    ))
}
