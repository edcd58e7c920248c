//! Ridge-penalized generalized linear models used for the nuisance fits.
//!
//! The objective is `loss(w) + ridge * |w_{1..}|^2` where `loss` is the summed
//! squared error (identity link) or the summed negative log-likelihood
//! (logistic link). The intercept `w_0` is never penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-observation gradient tolerance; the stopping rule scales it by `n`.
pub const GRADIENT_TOLERANCE: f64 = 1e-10;
/// Stop once the squared Newton decrement is below this share of the objective.
pub const NEWTON_DECREMENT_TOLERANCE: f64 = 1e-14;
pub const MAX_NEWTON_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logistic,
    Identity,
}

/// Basis expansion applied to a unit's `(x, s)` before fitting.
///
/// The intercept is implicit. With `attribute` the indicator `s` is appended;
/// with `interactions` also `s * x_k` for every covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureRecipe {
    pub attribute: bool,
    pub interactions: bool,
}

impl FeatureRecipe {
    pub const RAW: FeatureRecipe = FeatureRecipe { attribute: false, interactions: false };

    pub fn width(&self, p: usize) -> usize {
        p + usize::from(self.attribute) + if self.interactions { p } else { 0 }
    }

    pub fn expand(&self, x: &[f64], s: u8, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(x);
        let s = f64::from(s);
        if self.attribute {
            out.push(s);
        }
        if self.interactions {
            out.extend(x.iter().map(|v| v * s));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub link: Link,
    /// `[intercept, w_1, ..., w_q]`.
    pub coefficients: Vec<f64>,
    pub ridge_penalty: f64,
    pub recipe: FeatureRecipe,
    pub gradient_norm: f64,
    pub iterations: usize,
}

impl GlmFit {
    /// Prediction from already-expanded features.
    pub fn predict_features(&self, features: &[f64]) -> f64 {
        let eta = self.coefficients[0] + features.iter().zip(&self.coefficients[1..]).map(|(a, b)| a * b).sum::<f64>();
        match self.link {
            Link::Identity => eta,
            Link::Logistic => sigmoid(eta),
        }
    }

    pub fn predict(&self, x: &[f64], s: u8) -> f64 {
        let mut buf = Vec::with_capacity(self.coefficients.len());
        self.recipe.expand(x, s, &mut buf);
        self.predict_features(&buf)
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn with_intercept(features: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, q) = features.shape();
    DMatrix::from_fn(n, q + 1, |i, j| if j == 0 { 1.0 } else { features[(i, j - 1)] })
}

fn penalty_diag(q1: usize, ridge: f64) -> DVector<f64> {
    DVector::from_fn(q1, |j, _| if j == 0 { 0.0 } else { ridge })
}

/// Fits a GLM on raw features (an intercept column is added internally).
pub fn fit_glm(features: &DMatrix<f64>, targets: &[f64], link: Link, ridge: f64) -> Result<GlmFit> {
    let n = features.nrows();
    if n != targets.len() {
        return Err(Error::DimensionMismatch(format!("{} feature rows vs {} targets", n, targets.len())));
    }
    if n < 2 {
        return Err(Error::DimensionMismatch("at least two observations are required".into()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!("ridge penalty must be nonnegative, got {ridge}")));
    }
    let design = with_intercept(features);
    let y = DVector::from_column_slice(targets);
    match link {
        Link::Identity => fit_least_squares(&design, &y, ridge),
        Link::Logistic => {
            if targets.iter().any(|&t| t != 0.0 && t != 1.0) {
                return Err(Error::NonBinaryIndicator { column: "target".into(), row: 0, value: "non-binary".into() });
            }
            fit_logistic(&design, &y, ridge)
        }
    }
}

fn fit_least_squares(design: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<GlmFit> {
    let q1 = design.ncols();
    let pen = penalty_diag(q1, ridge);
    let mut gram = design.tr_mul(design);
    for j in 0..q1 {
        gram[(j, j)] += pen[j];
    }
    let rhs = design.tr_mul(y);
    let chol = gram.clone().cholesky().ok_or(Error::SingularSystem)?;
    let l = chol.l();
    let diag: Vec<f64> = (0..q1).map(|j| l[(j, j)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > max * 1e-7) {
        return Err(Error::SingularSystem);
    }
    let w = chol.solve(&rhs);
    let grad = (&gram * &w - &rhs) * 2.0;
    Ok(GlmFit {
        link: Link::Identity,
        coefficients: w.iter().cloned().collect(),
        ridge_penalty: ridge,
        recipe: FeatureRecipe::RAW,
        gradient_norm: grad.norm(),
        iterations: 1,
    })
}

fn logistic_objective(design: &DMatrix<f64>, y: &DVector<f64>, pen: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let eta = design * w;
    let loss: f64 = eta.iter().zip(y.iter()).map(|(&e, &t)| softplus(e) - t * e).sum();
    loss + w.iter().zip(pen.iter()).map(|(a, r)| r * a * a).sum::<f64>()
}

/// Damped Newton iterations with Armijo backtracking.
fn fit_logistic(design: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<GlmFit> {
    let (n, q1) = design.shape();
    let pen = penalty_diag(q1, ridge);
    let mut w = DVector::zeros(q1);
    let mut f = logistic_objective(design, y, &pen, &w);
    let mut grad_norm = f64::INFINITY;
    let threshold = GRADIENT_TOLERANCE * n.max(1) as f64;
    for iter in 0..MAX_NEWTON_ITERATIONS {
        let eta = design * &w;
        let mu = eta.map(sigmoid);
        let mut grad = design.tr_mul(&(&mu - y));
        for j in 0..q1 {
            grad[j] += 2.0 * pen[j] * w[j];
        }
        grad_norm = grad.norm();
        let converged = |w: &DVector<f64>| GlmFit {
            link: Link::Logistic,
            coefficients: w.iter().cloned().collect(),
            ridge_penalty: ridge,
            recipe: FeatureRecipe::RAW,
            gradient_norm: grad_norm,
            iterations: iter,
        };
        if grad_norm <= threshold {
            return Ok(converged(&w));
        }
        let mut hess = DMatrix::zeros(q1, q1);
        for i in 0..n {
            let wt = (mu[i] * (1.0 - mu[i])).max(1e-12);
            let row = design.row(i);
            for a in 0..q1 {
                let ra = row[a] * wt;
                for b in a..q1 {
                    hess[(a, b)] += ra * row[b];
                }
            }
        }
        for a in 0..q1 {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
            hess[(a, a)] += 2.0 * pen[a];
        }
        // Levenberg damping only when the Hessian is not numerically PD.
        let mut damping = 0.0;
        let step = loop {
            let mut h = hess.clone();
            for a in 0..q1 {
                h[(a, a)] += damping;
            }
            if let Some(ch) = h.cholesky() {
                break ch.solve(&grad);
            }
            damping = if damping == 0.0 { 1e-10 * (1.0 + hess.diagonal().amax()) } else { damping * 10.0 };
        };
        let slope = grad.dot(&step);
        if slope <= NEWTON_DECREMENT_TOLERANCE * f.abs().max(1.0) {
            return Ok(converged(&w));
        }
        let mut t = 1.0;
        loop {
            let cand = &w - &step * t;
            let fc = logistic_objective(design, y, &pen, &cand);
            if fc <= f - 1e-4 * t * slope || t < 1e-12 {
                w = cand;
                f = fc;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NonConvergence { grad_norm })
}
