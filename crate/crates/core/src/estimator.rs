//! Fair policy targeting and the welfare-maximizing competitors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::{
    build_frontier_constraints_encoded, build_grid, default_lambda, weighted_welfare, weighted_welfare_form, FrontierConstraintSet,
    FrontierPoint, FrontierRow, FRONTIER_TOLERANCE,
};
use crate::milp::{
    encode_policy_class_with, solve_milp, EncodingOptions, PolicyEncoding, Relation, Sense, SolveStatus, SolverLimits,
};
use crate::model::{Dataset, PolicyClass, PolicyValues};
use crate::nuisance::{empirical_welfare, estimate, EstimationConfig, Estimates};
use crate::par;
use crate::unfairness::{
    counterfactual_envy, incentive_compatibility, prediction_disparity, predictive_parity, welfare_disparity,
    EnvySecondTerm, LinearForm, MeasureInputs, UnfairnessMeasure,
};

/// Unfairness values within this distance are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontierConfig {
    /// Grid size override; `ceil(sqrt(n))` when absent.
    pub grid: Option<usize>,
    /// Slackness; `1e-6 * sqrt(n)` when absent.
    pub lambda: Option<f64>,
}

impl FrontierConfig {
    pub fn resolved_lambda(&self, n: usize) -> f64 {
        self.lambda.unwrap_or_else(|| default_lambda(n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FptConfig {
    pub class: PolicyClass,
    pub measure: UnfairnessMeasure,
    pub estimation: EstimationConfig,
    pub frontier: FrontierConfig,
    pub solver: SolverLimits,
    pub seed: u64,
}

impl FptConfig {
    pub fn new(class: PolicyClass, measure: UnfairnessMeasure) -> Self {
        FptConfig {
            class,
            measure,
            estimation: EstimationConfig::default(),
            frontier: FrontierConfig::default(),
            solver: SolverLimits::default(),
            seed: 0,
        }
    }
}

/// Every evaluable measure at a policy, signed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub w0: f64,
    pub w1: f64,
    pub prediction_disparity: f64,
    pub welfare_disparity: f64,
    pub incentive: f64,
    pub envy: f64,
    pub predictive_parity: Option<f64>,
    /// Why predictive parity was not computed.
    pub predictive_parity_skipped: Option<String>,
}

pub fn evaluate_policy(inputs: &MeasureInputs<'_>, pv: &PolicyValues, envy_term: EnvySecondTerm) -> MeasureReport {
    let (w0, w1) = empirical_welfare(inputs.scores, pv);
    let attr = inputs.ds.attributes();
    let (predictive_parity, predictive_parity_skipped) = match predictive_parity(inputs.ds, inputs.nuisance, pv, None) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    MeasureReport {
        w0,
        w1,
        prediction_disparity: prediction_disparity(pv, attr, inputs.scores.p_hat[1]),
        welfare_disparity: welfare_disparity(inputs.scores, pv),
        incentive: incentive_compatibility(inputs.scores, pv),
        envy: counterfactual_envy(attr, inputs.nuisance, inputs.scores, pv, envy_term),
        predictive_parity,
        predictive_parity_skipped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridpointDiagnostics {
    pub alpha: f64,
    pub w_bar: f64,
    pub frontier_status: SolveStatus,
    pub status: Option<SolveStatus>,
    pub gap: f64,
    pub nodes: usize,
    /// Configured measure at the decoded incumbent.
    pub unfairness: Option<f64>,
    pub w0: Option<f64>,
    pub w1: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FptResult {
    pub policy: PolicyValues,
    pub chosen_alpha: f64,
    pub measure: String,
    pub unfairness: f64,
    pub welfare: (f64, f64),
    pub unfairness_all: MeasureReport,
    pub lambda: f64,
    pub frontier: Vec<FrontierRow>,
    pub per_gridpoint: Vec<GridpointDiagnostics>,
    pub config_echo: FptConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompetitorKind {
    Ewm,
    Weighted { omega: f64 },
    Constrained { kappa: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitorResult {
    pub kind: CompetitorKind,
    pub policy: PolicyValues,
    pub welfare: (f64, f64),
    pub unfairness: f64,
    pub unfairness_all: MeasureReport,
    pub status: SolveStatus,
}

fn inputs<'a>(ds: &'a Dataset, est: &'a Estimates) -> MeasureInputs<'a> {
    MeasureInputs { ds, nuisance: &est.nuisance, scores: &est.scores }
}

fn encode_for(ds: &Dataset, class: &PolicyClass, form: Option<&LinearForm>) -> Result<PolicyEncoding> {
    let counterfactual = form.is_some_and(|f| f.uses_counterfactual(ds.attributes()));
    encode_policy_class_with(class, ds, EncodingOptions { counterfactual })
}

/// Adds `-bound <= form <= bound` (or `form <= bound` when signed).
fn bound_measure(enc: &mut PolicyEncoding, form: &LinearForm, absolute: bool, bound: f64) -> Result<()> {
    enc.add_form_constraint(form, Relation::Le, bound)?;
    if absolute {
        enc.add_form_constraint(form, Relation::Ge, -bound)?;
    }
    Ok(())
}

/// Sets the objective to minimize the measure; absolute measures use an
/// epigraph variable `t` with `-t <= form <= t`.
fn minimize_measure(enc: &mut PolicyEncoding, form: &LinearForm, absolute: bool) -> Result<()> {
    let (row, constant) = enc.form_row(form)?;
    if absolute {
        let t = enc.model.add_var("t", 0.0, f64::INFINITY, false);
        let mut upper = row.clone();
        upper.push((t, -1.0));
        enc.model.add_constraint(upper, Relation::Le, -constant);
        let mut lower = row;
        lower.push((t, 1.0));
        enc.model.add_constraint(lower, Relation::Ge, -constant);
        let mut obj = vec![0.0; enc.model.num_vars()];
        obj[t] = 1.0;
        enc.model.set_objective(Sense::Minimize, &obj, 0.0);
    } else {
        let mut obj = vec![0.0; enc.model.num_vars()];
        for (j, v) in row {
            obj[j] = v;
        }
        enc.model.set_objective(Sense::Minimize, &obj, constant);
    }
    Ok(())
}

pub fn fair_policy_targeting(ds: &Dataset, cfg: &FptConfig) -> Result<FptResult> {
    let est = estimate(ds, &cfg.estimation, cfg.seed)?;
    fair_policy_targeting_with(ds, &est, cfg)
}

/// Runs the frontier and fairness stages on precomputed estimates.
pub fn fair_policy_targeting_with(ds: &Dataset, est: &Estimates, cfg: &FptConfig) -> Result<FptResult> {
    let inp = inputs(ds, est);
    let form = cfg.measure.linear_form(&inp)?;
    let enc = encode_for(ds, &cfg.class, Some(&form))?;
    let grid = build_grid(ds.n(), cfg.frontier.grid);
    let lambda = cfg.frontier.resolved_lambda(ds.n());
    let frontier = build_frontier_constraints_encoded(&enc, ds, &est.scores, &grid, lambda, &cfg.solver)?;
    fairest_on_frontier(ds, est, cfg, &enc, &form, &frontier)
}

struct Candidate {
    policy: PolicyValues,
    unfairness: f64,
}

fn solve_gridpoint(
    ds: &Dataset,
    est: &Estimates,
    cfg: &FptConfig,
    enc: &PolicyEncoding,
    form: &LinearForm,
    frontier: &FrontierConstraintSet,
    j: usize,
) -> (GridpointDiagnostics, Option<Candidate>) {
    let point = &frontier.points[j];
    let mut diag = GridpointDiagnostics {
        alpha: point.alpha,
        w_bar: point.w_bar,
        frontier_status: point.status,
        status: None,
        gap: f64::NAN,
        nodes: 0,
        unfairness: None,
        w0: None,
        w1: None,
        error: point.error.clone(),
    };
    if !point.has_policy() {
        return (diag, None);
    }
    let mut run = || -> Result<Option<Candidate>> {
        let mut e = enc.clone();
        e.add_form_constraint(&weighted_welfare_form(&est.scores, point.alpha), Relation::Ge, frontier.solver_rhs(j))?;
        minimize_measure(&mut e, form, cfg.measure.absolute)?;
        let sol = solve_milp(&e.model, &cfg.solver)?;
        diag.status = Some(sol.status);
        diag.nodes = sol.nodes_explored;
        if !sol.status.has_solution() {
            return Ok(None);
        }
        diag.gap = sol.gap();
        let pv = e.decode(ds, &sol.values);
        let (w0, w1) = empirical_welfare(&est.scores, &pv);
        diag.w0 = Some(w0);
        diag.w1 = Some(w1);
        let v = cfg.measure.evaluate(&inputs(ds, est), &pv)?;
        diag.unfairness = Some(v);
        if !frontier.satisfies(&est.scores, &pv, j) {
            return Err(Error::InvariantViolation(format!(
                "decoded policy violates frontier constraint at alpha = {}: {} < {}",
                point.alpha,
                weighted_welfare(&est.scores, &pv, point.alpha),
                frontier.threshold(j)
            )));
        }
        Ok(Some(Candidate { policy: pv, unfairness: v }))
    };
    match run() {
        Ok(c) => (diag, c),
        Err(e) => {
            log::debug!("gridpoint {j} (alpha = {}) failed: {e}", point.alpha);
            diag.error = Some(e.to_string());
            (diag, None)
        }
    }
}

/// Index of the smallest value, preferring the last (largest alpha) among
/// values within [`TIE_TOLERANCE`] of the minimum.
pub fn select_fairest(values: &[Option<f64>]) -> Option<usize> {
    let min = values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    values.iter().rposition(|v| v.is_some_and(|v| v <= min + TIE_TOLERANCE))
}

fn fairest_on_frontier(
    ds: &Dataset,
    est: &Estimates,
    cfg: &FptConfig,
    enc: &PolicyEncoding,
    form: &LinearForm,
    frontier: &FrontierConstraintSet,
) -> Result<FptResult> {
    let idx: Vec<usize> = (0..frontier.points.len()).collect();
    let outcomes = par::map(&idx, |&j| solve_gridpoint(ds, est, cfg, enc, form, frontier, j));
    let values: Vec<Option<f64>> = outcomes.iter().map(|(_, c)| c.as_ref().map(|c| c.unfairness)).collect();
    let chosen = select_fairest(&values).ok_or(Error::AllGridpointsFailed)?;
    let (per_gridpoint, mut cands): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let cand = cands[chosen].take().expect("chosen gridpoint has a candidate");
    let report = evaluate_policy(&inputs(ds, est), &cand.policy, cfg.measure.envy_second_term);
    Ok(FptResult {
        welfare: (report.w0, report.w1),
        chosen_alpha: frontier.points[chosen].alpha,
        measure: cfg.measure.label(),
        unfairness: cand.unfairness,
        policy: cand.policy,
        unfairness_all: report,
        lambda: frontier.lambda,
        frontier: frontier.points.iter().map(FrontierPoint::row).collect(),
        per_gridpoint,
        config_echo: cfg.clone(),
    })
}

fn competitor(
    ds: &Dataset,
    est: &Estimates,
    cfg: &FptConfig,
    mut enc: PolicyEncoding,
    omega: f64,
    kind: CompetitorKind,
) -> Result<CompetitorResult> {
    let (obj, constant) = enc.objective_from_form(&weighted_welfare_form(&est.scores, omega))?;
    enc.model.set_objective(Sense::Maximize, &obj, constant);
    let sol = solve_milp(&enc.model, &cfg.solver)?;
    match sol.status {
        SolveStatus::Infeasible if matches!(kind, CompetitorKind::Constrained { .. }) => {
            return Err(Error::InfeasibleFairnessConstraint)
        }
        s if !s.has_solution() => return Err(Error::Solver(format!("competitor solve ended with status {s:?}"))),
        _ => {}
    }
    let pv = enc.decode(ds, &sol.values);
    let inp = inputs(ds, est);
    let report = evaluate_policy(&inp, &pv, cfg.measure.envy_second_term);
    let unfairness = cfg.measure.evaluate(&inp, &pv).unwrap_or(f64::NAN);
    Ok(CompetitorResult { kind, welfare: (report.w0, report.w1), policy: pv, unfairness, unfairness_all: report, status: sol.status })
}

/// Maximizes `omega * W_1 + (1 - omega) * W_0`; `omega` defaults to the
/// sample share of group 1 (utilitarian welfare).
pub fn ewm_policy(ds: &Dataset, est: &Estimates, cfg: &FptConfig, omega: Option<f64>) -> Result<CompetitorResult> {
    let (w, kind) = match omega {
        Some(w) => {
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::Config(format!("omega must lie in (0, 1), got {w}")));
            }
            (w, CompetitorKind::Weighted { omega: w })
        }
        None => (est.scores.p_hat[1], CompetitorKind::Ewm),
    };
    let enc = encode_for(ds, &cfg.class, None)?;
    competitor(ds, est, cfg, enc, w, kind)
}

/// Utilitarian welfare maximization subject to `|V| <= kappa / n` (or
/// `V <= kappa / n` for a signed measure, where `kappa` may be negative).
pub fn constrained_ewm(ds: &Dataset, est: &Estimates, cfg: &FptConfig, kappa: f64) -> Result<CompetitorResult> {
    if kappa.is_nan() || (cfg.measure.absolute && kappa < 0.0) {
        return Err(Error::Config(format!("kappa must be nonnegative for an absolute measure, got {kappa}")));
    }
    let kind = CompetitorKind::Constrained { kappa };
    if kappa.is_infinite() {
        let enc = encode_for(ds, &cfg.class, None)?;
        return competitor(ds, est, cfg, enc, est.scores.p_hat[1], kind);
    }
    let form = cfg.measure.linear_form(&inputs(ds, est))?;
    let mut enc = encode_for(ds, &cfg.class, Some(&form))?;
    bound_measure(&mut enc, &form, cfg.measure.absolute, kappa / ds.n() as f64 + FRONTIER_TOLERANCE)?;
    competitor(ds, est, cfg, enc, est.scores.p_hat[1], kind)
}
