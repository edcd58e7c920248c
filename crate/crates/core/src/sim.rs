//! Synthetic data-generating process on a finite covariate support, exact
//! population quantities and the replication harness.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{constrained_ewm, ewm_policy, fair_policy_targeting_with, FptConfig};
use crate::glm::{FeatureRecipe, GlmFit, Link};
use crate::model::{Dataset, PolicyCoefficients};
use crate::nuisance::{empirical_welfare, estimate};
use crate::par;
use crate::unfairness::EnvySecondTerm;

const MAX_DGP_ATTEMPTS: usize = 100;
const PROPENSITY_RANGE: (f64, f64) = (0.05, 0.95);
const MAX_FAILURE_SHARE: f64 = 0.05;

/// Parameters from which a synthetic DGP is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgpSpec {
    pub p: usize,
    pub support_per_group: usize,
    pub p1: f64,
    /// Standard deviation of the covariate support points.
    pub covariate_sd: f64,
    /// Propensity slopes are drawn uniformly from `[-r, r]`.
    pub propensity_coef_range: f64,
    /// Propensity shift for group 1 on the logit scale.
    pub propensity_attribute: f64,
    /// Baseline outcome slopes are drawn uniformly from `[-r, r]`.
    pub outcome_coef_range: f64,
    /// Average treatment effect in each group.
    pub effect: [f64; 2],
    /// Effect-heterogeneity slopes are drawn uniformly from `[-r, r]`.
    pub effect_coef_range: f64,
    pub noise_sd: f64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        DgpSpec {
            p: 3,
            support_per_group: 40,
            p1: 0.35,
            covariate_sd: 1.0,
            propensity_coef_range: 0.4,
            propensity_attribute: 0.2,
            outcome_coef_range: 0.5,
            effect: [0.5, 0.2],
            effect_coef_range: 0.5,
            noise_sd: 1.0,
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.support_per_group == 0 {
            return Err(Error::Config("dgp needs p >= 1 and a nonempty support".into()));
        }
        if !(self.p1 > 0.0 && self.p1 < 1.0) {
            return Err(Error::Config(format!("p1 must lie in (0, 1), got {}", self.p1)));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::Config("noise_sd must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Known data-generating process. Covariates are drawn from a finite support
/// per group, so population expectations are exact weighted sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dgp {
    pub p1: f64,
    /// Support points for each group.
    pub support: [Vec<Vec<f64>>; 2],
    /// Sampling weights on the support, summing to one per group.
    pub weights: [Vec<f64>; 2],
    pub propensity: GlmFit,
    /// `outcome[d][s]` is the conditional mean of `Y(d)` given `X` and `S = s`.
    pub outcome: [[GlmFit; 2]; 2],
    pub noise_sd: f64,
}

fn frozen(link: Link, coefficients: Vec<f64>, recipe: FeatureRecipe) -> GlmFit {
    GlmFit { link, coefficients, ridge_penalty: 0.0, recipe, gradient_norm: 0.0, iterations: 0 }
}

pub fn make_calibrated_dgp(spec: &DgpSpec, seed: u64) -> Result<Dgp> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = spec.p;
    let uniform = |rng: &mut ChaCha8Rng, r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
    let support: [Vec<Vec<f64>>; 2] = std::array::from_fn(|_| {
        (0..spec.support_per_group)
            .map(|_| (0..p).map(|_| spec.covariate_sd * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    });
    let weights: [Vec<f64>; 2] = std::array::from_fn(|_| vec![1.0 / spec.support_per_group as f64; spec.support_per_group]);

    let mut propensity = None;
    for _ in 0..MAX_DGP_ATTEMPTS {
        let mut coef = vec![0.0];
        coef.extend((0..p).map(|_| uniform(&mut rng, spec.propensity_coef_range)));
        coef.push(spec.propensity_attribute);
        let fit = frozen(Link::Logistic, coef, FeatureRecipe { attribute: true, interactions: false });
        let ok = (0..2u8).all(|s| {
            support[s as usize].iter().all(|x| {
                let e = fit.predict(x, s);
                e > PROPENSITY_RANGE.0 && e < PROPENSITY_RANGE.1
            })
        });
        if ok {
            propensity = Some(fit);
            break;
        }
    }
    let propensity = propensity.ok_or_else(|| {
        Error::InvariantViolation(format!("propensities left {PROPENSITY_RANGE:?} in {MAX_DGP_ATTEMPTS} draws"))
    })?;

    let outcome: [[GlmFit; 2]; 2] = {
        let mut base = Vec::new();
        let mut treated = Vec::new();
        for s in 0..2 {
            let mut b = vec![uniform(&mut rng, spec.outcome_coef_range)];
            b.extend((0..p).map(|_| uniform(&mut rng, spec.outcome_coef_range)));
            let mut t = b.clone();
            t[0] += spec.effect[s];
            for c in t.iter_mut().skip(1) {
                *c += uniform(&mut rng, spec.effect_coef_range);
            }
            base.push(frozen(Link::Identity, b, FeatureRecipe::RAW));
            treated.push(frozen(Link::Identity, t, FeatureRecipe::RAW));
        }
        let mut base = base.into_iter();
        let mut treated = treated.into_iter();
        [[base.next().unwrap(), base.next().unwrap()], [treated.next().unwrap(), treated.next().unwrap()]]
    };
    Ok(Dgp { p1: spec.p1, support, weights, propensity, outcome, noise_sd: spec.noise_sd })
}

impl Dgp {
    pub fn p(&self) -> usize {
        self.support[0][0].len()
    }

    pub fn group_share(&self, s: u8) -> f64 {
        if s == 1 {
            self.p1
        } else {
            1.0 - self.p1
        }
    }

    /// `m_{d,s}(x)`.
    pub fn mean(&self, d: u8, s: u8, x: &[f64]) -> f64 {
        self.outcome[d as usize][s as usize].predict(x, 0)
    }

    pub fn propensity(&self, x: &[f64], s: u8) -> f64 {
        self.propensity.predict(x, s)
    }

    /// `E[f(X) | S = s]` over the finite support.
    pub fn expect(&self, s: u8, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.support[s as usize].iter().zip(&self.weights[s as usize]).map(|(x, w)| w * f(x)).sum()
    }
}

pub fn draw_sample(dgp: &Dgp, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick: [WeightedIndex<f64>; 2] = [
        WeightedIndex::new(&dgp.weights[0]).map_err(|e| Error::InvalidModel(e.to_string()))?,
        WeightedIndex::new(&dgp.weights[1]).map_err(|e| Error::InvalidModel(e.to_string()))?,
    ];
    let p = dgp.p();
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * p);
    for _ in 0..n {
        let si = u8::from(rng.random::<f64>() < dgp.p1);
        let xi = &dgp.support[si as usize][pick[si as usize].sample(&mut rng)];
        let di = u8::from(rng.random::<f64>() < dgp.propensity(xi, si));
        let noise: f64 = rng.sample(StandardNormal);
        y.push(dgp.mean(di, si, xi) + dgp.noise_sd * noise);
        d.push(di);
        s.push(si);
        x.extend_from_slice(xi);
    }
    Dataset::new(y, d, s, x, p)
}

/// Population welfare and unfairness of a rule under the known DGP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationQuantities {
    pub w0: f64,
    pub w1: f64,
    pub prediction_disparity: f64,
    pub welfare_disparity: f64,
    pub incentive: f64,
    pub envy: f64,
}

/// Exact expectations of the welfare and unfairness measures for the rule
/// `pi(x, s)`, by weighted summation over the support.
pub fn population_quantities(dgp: &Dgp, rule: impl Fn(&[f64], u8) -> f64, envy_term: EnvySecondTerm) -> PopulationQuantities {
    let effect = |s: u8, x: &[f64]| dgp.mean(1, s, x) - dgp.mean(0, s, x);
    let w: [f64; 2] = std::array::from_fn(|s| {
        let s = s as u8;
        dgp.expect(s, |x| effect(s, x) * rule(x, s))
    });
    let rate: [f64; 2] = std::array::from_fn(|s| dgp.expect(s as u8, |x| rule(x, s as u8)));
    let incentive: f64 = (0..2u8).map(|s| dgp.expect(s, |x| effect(s, x) * rule(x, 1 - s)) - w[s as usize]).sum();
    let envy: f64 = [(1u8, 0u8), (0, 1)]
        .iter()
        .map(|&(s, other)| {
            let counterfactual = dgp.expect(s, |x| {
                let z = rule(x, s);
                dgp.mean(1, other, x) * z + dgp.mean(0, other, x) * (1.0 - z)
            });
            let own = match envy_term {
                EnvySecondTerm::AsPrinted => dgp.expect(s, |x| {
                    let z = rule(x, s);
                    dgp.mean(1, s, x) * z - dgp.mean(0, s, x) * (1.0 - z)
                }),
                EnvySecondTerm::WelfareForm => w[s as usize],
            };
            counterfactual - own
        })
        .sum();
    PopulationQuantities {
        w0: w[0],
        w1: w[1],
        prediction_disparity: rate[0] - rate[1],
        welfare_disparity: w[0] - w[1],
        incentive,
        envy,
    }
}

pub fn population_of_coefficients(dgp: &Dgp, coef: &PolicyCoefficients, envy_term: EnvySecondTerm) -> PopulationQuantities {
    population_quantities(dgp, |x, s| coef.evaluate(x, s), envy_term)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Method {
    Fpt,
    Ewm,
    ConstrainedEwm { kappa: f64 },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Fpt => "fpt".into(),
            Method::Ewm => "ewm".into(),
            Method::ConstrainedEwm { kappa } => format!("constrained_ewm_k{kappa}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub method: String,
    pub population: PopulationQuantities,
    /// In-sample estimated `(W_0, W_1)` at the fitted policy.
    pub estimated_welfare: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub se: f64,
    pub replications: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub rows: Vec<SummaryRow>,
    pub records: Vec<ReplicationRecord>,
    pub failures: usize,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
}

pub const METRICS: [&str; 7] =
    ["w0", "w1", "prediction_disparity", "abs_prediction_disparity", "welfare_disparity", "incentive", "envy"];

fn metric(q: &PopulationQuantities, name: &str) -> f64 {
    match name {
        "w0" => q.w0,
        "w1" => q.w1,
        "prediction_disparity" => q.prediction_disparity,
        "abs_prediction_disparity" => q.prediction_disparity.abs(),
        "welfare_disparity" => q.welfare_disparity,
        "incentive" => q.incentive,
        "envy" => q.envy,
        _ => unreachable!("unknown metric {name}"),
    }
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

impl ReplicationSummary {
    pub fn row(&self, method: &str, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method && r.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "metric", "mean", "se", "R", "n"])?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.metric.clone(),
                r.mean.to_string(),
                r.se.to_string(),
                r.replications.to_string(),
                r.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_one(dgp: &Dgp, n: usize, methods: &[Method], cfg: &FptConfig, seed: u64, r: usize) -> Result<Vec<ReplicationRecord>> {
    let rep_seed = seed.wrapping_add(r as u64);
    let ds = draw_sample(dgp, n, rep_seed)?;
    let est = estimate(&ds, &cfg.estimation, rep_seed)?;
    let mut out = Vec::with_capacity(methods.len());
    for m in methods {
        let policy = match *m {
            Method::Fpt => fair_policy_targeting_with(&ds, &est, cfg)?.policy,
            Method::Ewm => ewm_policy(&ds, &est, cfg, None)?.policy,
            Method::ConstrainedEwm { kappa } => constrained_ewm(&ds, &est, cfg, kappa)?.policy,
        };
        let coef = policy
            .coefficients
            .as_ref()
            .ok_or_else(|| Error::InvalidPolicyClass("population evaluation needs a coefficient rule".into()))?;
        out.push(ReplicationRecord {
            replication: r,
            method: m.label(),
            population: population_of_coefficients(dgp, coef, cfg.measure.envy_second_term),
            estimated_welfare: empirical_welfare(&est.scores, &policy),
        });
    }
    Ok(out)
}

/// Runs `replications` independent draws with seeds `seed + r`. Failed
/// replications are dropped and counted; more than 5% failures is an error.
pub fn run_replications(
    dgp: &Dgp,
    n: usize,
    replications: usize,
    methods: &[Method],
    cfg: &FptConfig,
    seed: u64,
) -> Result<ReplicationSummary> {
    if replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let idx: Vec<usize> = (0..replications).collect();
    let results = par::map(&idx, |&r| run_one(dgp, n, methods, cfg, seed, r));
    let mut records = Vec::new();
    let mut failures = 0;
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(recs) => records.extend(recs),
            Err(e) => {
                log::warn!("replication {r} failed: {e}");
                failures += 1;
            }
        }
    }
    if failures as f64 > MAX_FAILURE_SHARE * replications as f64 || failures == replications {
        return Err(Error::TooManyFailures { failed: failures, total: replications });
    }
    let mut rows = Vec::new();
    for m in methods {
        let label = m.label();
        let mine: Vec<&ReplicationRecord> = records.iter().filter(|r| r.method == label).collect();
        for name in METRICS {
            let vals: Vec<f64> = mine.iter().map(|r| metric(&r.population, name)).collect();
            let (mean, se) = mean_and_se(&vals);
            rows.push(SummaryRow { method: label.clone(), metric: name.into(), mean, se, replications: vals.len(), n });
        }
    }
    Ok(ReplicationSummary { rows, records, failures, n, replications, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dgp_is_deterministic_and_in_range() {
        let spec = DgpSpec::default();
        let a = make_calibrated_dgp(&spec, 9).unwrap();
        assert_eq!(a, make_calibrated_dgp(&spec, 9).unwrap());
        for s in 0..2u8 {
            for x in &a.support[s as usize] {
                let e = a.propensity(x, s);
                assert!(e > 0.05 && e < 0.95);
            }
        }
    }

    #[test]
    fn zero_slopes_give_constant_effects() {
        let spec = DgpSpec { outcome_coef_range: 0.0, effect_coef_range: 0.0, ..Default::default() };
        let dgp = make_calibrated_dgp(&spec, 1).unwrap();
        let q = population_quantities(&dgp, |_, _| 1.0, EnvySecondTerm::AsPrinted);
        assert!((q.w0 - 0.5).abs() < 1e-12 && (q.w1 - 0.2).abs() < 1e-12);
        assert_eq!(q.prediction_disparity, 0.0);
    }

    #[test]
    fn null_policy_has_zero_quantities() {
        let dgp = make_calibrated_dgp(&DgpSpec::default(), 2).unwrap();
        let q = population_quantities(&dgp, |_, _| 0.0, EnvySecondTerm::WelfareForm);
        assert_eq!((q.w0, q.w1, q.prediction_disparity, q.welfare_disparity, q.incentive), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn noiseless_outcomes_equal_means() {
        let spec = DgpSpec { noise_sd: 0.0, ..Default::default() };
        let dgp = make_calibrated_dgp(&spec, 3).unwrap();
        let ds = draw_sample(&dgp, 200, 4).unwrap();
        for i in 0..ds.n() {
            assert_eq!(ds.y(i), dgp.mean(ds.d(i), ds.s(i), ds.x(i)));
        }
        assert_eq!(ds, draw_sample(&dgp, 200, 4).unwrap());
    }
}
