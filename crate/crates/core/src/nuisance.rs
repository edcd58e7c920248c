//! Cross-fitted nuisance estimation and doubly-robust welfare scores.
//!
//! Every unit's propensity and conditional-mean predictions come from models
//! trained without the unit's fold. Conditional means are predicted at both
//! attribute values so that cross-group measures can extrapolate.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{fit_glm, FeatureRecipe, GlmFit, Link};
use crate::model::{split_folds, Dataset, FoldAssignment, PolicyValues};
use crate::par;

/// Cross-fitting scheme for the conditional means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// `m_{d,s}` is trained on out-of-fold units with `D = d` and `S = s`.
    Separate,
    /// `m_{d,.}` is trained on all out-of-fold units with `D = d`, with the
    /// attribute (and optionally its interactions) as features.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationConfig {
    pub folds: usize,
    pub ridge: f64,
    pub clip: (f64, f64),
    pub pooling: Pooling,
    pub outcome_link: Link,
    /// Add `s * x` interactions to the pooled outcome basis.
    pub pooled_interactions: bool,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            folds: 5,
            ridge: 0.1,
            clip: (0.01, 0.99),
            pooling: Pooling::Separate,
            outcome_link: Link::Identity,
            pooled_interactions: true,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clip;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::Config(format!("clip interval ({lo}, {hi}) must satisfy 0 < lo < hi < 1")));
        }
        if self.folds < 2 {
            return Err(Error::Config("estimation.folds must be at least 2".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config("estimation.ridge must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityFit {
    pub models: Vec<GlmFit>,
    /// Clipped out-of-fold `e(x_i, s_i)`.
    pub predictions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFit {
    /// `models[fold][d][s]`; under pooling both `s` slots hold the same model.
    pub models: Vec<[[GlmFit; 2]; 2]>,
    /// Out-of-fold `m_{d,s}(x_i)` indexed `[i][d][s]`, for both `s`.
    pub predictions: Vec<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFit {
    pub folds: Option<FoldAssignment>,
    pub pooling: Pooling,
    pub clip: (f64, f64),
    pub propensity_per_fold: Vec<GlmFit>,
    pub outcome_per_fold: Vec<[[GlmFit; 2]; 2]>,
    pub propensity: Vec<f64>,
    pub outcome: Vec<[[f64; 2]; 2]>,
}

impl NuisanceFit {
    /// Wraps externally supplied per-unit predictions (e.g. true nuisances in
    /// a simulation). Propensities are clipped into `clip`.
    pub fn from_predictions(propensity: Vec<f64>, outcome: Vec<[[f64; 2]; 2]>, clip: (f64, f64)) -> Result<Self> {
        if propensity.len() != outcome.len() {
            return Err(Error::DimensionMismatch("propensity and outcome predictions differ in length".into()));
        }
        Ok(NuisanceFit {
            folds: None,
            pooling: Pooling::Separate,
            clip,
            propensity_per_fold: Vec::new(),
            outcome_per_fold: Vec::new(),
            propensity: propensity.into_iter().map(|e| e.clamp(clip.0, clip.1)).collect(),
            outcome,
        })
    }

    pub fn n(&self) -> usize {
        self.propensity.len()
    }

    /// `m_{d,s}(x_i)`.
    pub fn m(&self, i: usize, d: u8, s: u8) -> f64 {
        self.outcome[i][d as usize][s as usize]
    }
}

fn design_for(ds: &Dataset, rows: &[usize], recipe: FeatureRecipe) -> DMatrix<f64> {
    let q = recipe.width(ds.p());
    let mut buf = Vec::with_capacity(q);
    let mut m = DMatrix::zeros(rows.len(), q);
    for (r, &i) in rows.iter().enumerate() {
        recipe.expand(ds.x(i), ds.s(i), &mut buf);
        for (c, v) in buf.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    m
}

fn fit_on(ds: &Dataset, rows: &[usize], targets: impl Fn(usize) -> f64, link: Link, ridge: f64, recipe: FeatureRecipe) -> Result<GlmFit> {
    let design = design_for(ds, rows, recipe);
    let y: Vec<f64> = rows.iter().map(|&i| targets(i)).collect();
    let mut fit = fit_glm(&design, &y, link, ridge)?;
    fit.recipe = recipe;
    Ok(fit)
}

fn out_of_fold(folds: &FoldAssignment, k: usize) -> Vec<usize> {
    folds.fold_of.iter().enumerate().filter(|(_, &f)| f != k).map(|(i, _)| i).collect()
}

/// Cross-fitted logistic propensity `e(x, s)` with `s` as a feature.
pub fn estimate_propensity(ds: &Dataset, folds: &FoldAssignment, ridge: f64, clip: (f64, f64)) -> Result<PropensityFit> {
    let recipe = FeatureRecipe { attribute: true, interactions: false };
    let fold_ids: Vec<usize> = (0..folds.k).collect();
    let models = par::map(&fold_ids, |&k| {
        let train = out_of_fold(folds, k);
        fit_on(ds, &train, |i| f64::from(ds.d(i)), Link::Logistic, ridge, recipe)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let predictions = (0..ds.n())
        .map(|i| models[folds.fold_of[i]].predict(ds.x(i), ds.s(i)).clamp(clip.0, clip.1))
        .collect();
    Ok(PropensityFit { models, predictions })
}

/// Cross-fitted conditional means `m_{d,s}` under the chosen scheme.
pub fn estimate_outcome_means(
    ds: &Dataset,
    folds: &FoldAssignment,
    ridge: f64,
    pooling: Pooling,
    link: Link,
    pooled_interactions: bool,
) -> Result<OutcomeFit> {
    let fold_ids: Vec<usize> = (0..folds.k).collect();
    let models = par::map(&fold_ids, |&k| -> Result<[[GlmFit; 2]; 2]> {
        let train = out_of_fold(folds, k);
        let fit_arm = |d: u8| -> Result<[GlmFit; 2]> {
            match pooling {
                Pooling::Separate => {
                    let mk = |s: u8| {
                        let rows: Vec<usize> = train.iter().copied().filter(|&i| ds.d(i) == d && ds.s(i) == s).collect();
                        fit_on(ds, &rows, |i| ds.y(i), link, ridge, FeatureRecipe::RAW)
                    };
                    Ok([mk(0)?, mk(1)?])
                }
                Pooling::Pooled => {
                    let rows: Vec<usize> = train.iter().copied().filter(|&i| ds.d(i) == d).collect();
                    let recipe = FeatureRecipe { attribute: true, interactions: pooled_interactions };
                    let fit = fit_on(ds, &rows, |i| ds.y(i), link, ridge, recipe)?;
                    Ok([fit.clone(), fit])
                }
            }
        };
        Ok([fit_arm(0)?, fit_arm(1)?])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let predictions = (0..ds.n())
        .map(|i| {
            let m = &models[folds.fold_of[i]];
            let x = ds.x(i);
            [[m[0][0].predict(x, 0), m[0][1].predict(x, 1)], [m[1][0].predict(x, 0), m[1][1].predict(x, 1)]]
        })
        .collect();
    Ok(OutcomeFit { models, predictions })
}

/// Draws stratified folds and fits every nuisance component.
pub fn fit_nuisance(ds: &Dataset, cfg: &EstimationConfig, seed: u64) -> Result<NuisanceFit> {
    cfg.validate()?;
    let folds = split_folds(ds, cfg.folds, seed)?;
    let prop = estimate_propensity(ds, &folds, cfg.ridge, cfg.clip)?;
    let out = estimate_outcome_means(ds, &folds, cfg.ridge, cfg.pooling, cfg.outcome_link, cfg.pooled_interactions)?;
    Ok(NuisanceFit {
        folds: Some(folds),
        pooling: cfg.pooling,
        clip: cfg.clip,
        propensity_per_fold: prop.models,
        outcome_per_fold: out.models,
        propensity: prop.predictions,
        outcome: out.predictions,
    })
}

/// Doubly-robust scores `Gamma_{d,s,i}` plus group shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    /// `gamma[i][d][s]`; zero whenever `s != s_i`.
    pub gamma: Vec<[[f64; 2]; 2]>,
    pub p_hat: [f64; 2],
    /// `delta_welfare[i][s] = gamma[i][1][s] - gamma[i][0][s]`.
    pub delta_welfare: Vec<[f64; 2]>,
}

impl ScoreMatrix {
    pub fn new(gamma: Vec<[[f64; 2]; 2]>, p_hat: [f64; 2]) -> Self {
        let delta_welfare = gamma.iter().map(|g| [g[1][0] - g[0][0], g[1][1] - g[0][1]]).collect();
        ScoreMatrix { gamma, p_hat, delta_welfare }
    }

    pub fn n(&self) -> usize {
        self.gamma.len()
    }

    pub fn delta(&self, i: usize, s: u8) -> f64 {
        self.delta_welfare[i][s as usize]
    }

    /// Long-format export: `i,s,d,gamma`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "s", "d", "gamma"])?;
        for (i, g) in self.gamma.iter().enumerate() {
            for s in 0..2 {
                for d in 0..2 {
                    w.write_record([i.to_string(), s.to_string(), d.to_string(), g[d][s].to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores of one unit: `[d][s]`.
///
/// Treated arm uses `1/e`, control arm `1/(1-e)`.
pub fn dr_score(y: f64, d: u8, s_i: u8, e: f64, m: &[[f64; 2]; 2], p_hat: [f64; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    let s = s_i as usize;
    let m1 = m[1][s];
    let m0 = m[0][s];
    let treated = if d == 1 { (y - m1) / e } else { 0.0 };
    let control = if d == 0 { (y - m0) / (1.0 - e) } else { 0.0 };
    out[1][s] = (treated + m1) / p_hat[s];
    out[0][s] = (control + m0) / p_hat[s];
    out
}

pub fn compute_scores(ds: &Dataset, nf: &NuisanceFit) -> Result<ScoreMatrix> {
    if nf.n() != ds.n() {
        return Err(Error::DimensionMismatch(format!("nuisance covers {} units, dataset has {}", nf.n(), ds.n())));
    }
    let p_hat = [ds.group_share(0), ds.group_share(1)];
    let gamma = (0..ds.n()).map(|i| dr_score(ds.y(i), ds.d(i), ds.s(i), nf.propensity[i], &nf.outcome[i], p_hat)).collect();
    Ok(ScoreMatrix::new(gamma, p_hat))
}

/// `(W_0, W_1)` with `W_s = (1/n) sum_i (Gamma_{1,s,i} - Gamma_{0,s,i}) pi(x_i, s)`.
pub fn empirical_welfare(sm: &ScoreMatrix, pv: &PolicyValues) -> (f64, f64) {
    let n = sm.n() as f64;
    let w0: f64 = sm.delta_welfare.iter().zip(&pv.z0).map(|(d, z)| d[0] * z).sum();
    let w1: f64 = sm.delta_welfare.iter().zip(&pv.z1).map(|(d, z)| d[1] * z).sum();
    (w0 / n, w1 / n)
}

/// Cross-fitted nuisances together with the scores built from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub nuisance: NuisanceFit,
    pub scores: ScoreMatrix,
}

pub fn estimate(ds: &Dataset, cfg: &EstimationConfig, seed: u64) -> Result<Estimates> {
    let nuisance = fit_nuisance(ds, cfg, seed)?;
    let scores = compute_scores(ds, &nuisance)?;
    Ok(Estimates { nuisance, scores })
}
