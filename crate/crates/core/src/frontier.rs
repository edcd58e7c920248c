//! Discretized Pareto frontier: the alpha grid, the maximal weighted welfare
//! at each gridpoint and the resulting approximate-frontier constraints.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{encode_policy_class, solve_milp, PolicyEncoding, Relation, Sense, SolveStatus, SolverLimits};
use crate::model::{Dataset, PolicyClass, PolicyValues};
use crate::nuisance::{empirical_welfare, ScoreMatrix};
use crate::par;
use crate::unfairness::{welfare_form, LinearForm};

/// Absolute slack added to every frontier constraint to absorb rounding in
/// the welfare sums.
pub const FRONTIER_TOLERANCE: f64 = 1e-9;

/// Equally spaced weights `alpha_j = j / (N + 1)`, `j = 1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    pub values: Vec<f64>,
}

impl AlphaGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `N = ceil(sqrt(n))` points unless overridden.
pub fn build_grid(n: usize, override_n: Option<usize>) -> AlphaGrid {
    let size = override_n.unwrap_or_else(|| (n.max(1) as f64).sqrt().ceil() as usize).max(1);
    AlphaGrid { values: (1..=size).map(|j| j as f64 / (size + 1) as f64).collect() }
}

/// Default slackness: `lambda / sqrt(n) = 1e-6`.
pub fn default_lambda(n: usize) -> f64 {
    1e-6 * (n as f64).sqrt()
}

/// `alpha * W_1 + (1 - alpha) * W_0` as a linear form.
pub fn weighted_welfare_form(sm: &ScoreMatrix, alpha: f64) -> LinearForm {
    welfare_form(sm, 1).scaled(alpha).plus(&welfare_form(sm, 0).scaled(1.0 - alpha))
}

pub fn weighted_welfare(sm: &ScoreMatrix, pv: &PolicyValues, alpha: f64) -> f64 {
    let (w0, w1) = empirical_welfare(sm, pv);
    alpha * w1 + (1.0 - alpha) * w0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub alpha: f64,
    /// Weighted welfare of the best policy found; NaN when none was found.
    pub w_bar: f64,
    pub policy: Option<PolicyValues>,
    pub w0: f64,
    pub w1: f64,
    pub status: SolveStatus,
    pub gap: f64,
    pub nodes: usize,
    /// Solver error message when the subproblem failed outright.
    pub error: Option<String>,
}

impl FrontierPoint {
    fn failed(alpha: f64, status: SolveStatus, nodes: usize, error: Option<String>) -> Self {
        FrontierPoint { alpha, w_bar: f64::NAN, policy: None, w0: f64::NAN, w1: f64::NAN, status, gap: f64::NAN, nodes, error }
    }

    pub fn has_policy(&self) -> bool {
        self.policy.is_some()
    }

    pub fn row(&self) -> FrontierRow {
        FrontierRow { alpha: self.alpha, w_bar: self.w_bar, w0: self.w0, w1: self.w1, status: self.status, gap: self.gap }
    }
}

/// One line of the frontier export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub alpha: f64,
    pub w_bar: f64,
    pub w0: f64,
    pub w1: f64,
    pub status: SolveStatus,
    pub gap: f64,
}

/// Maximizes `alpha * W_1 + (1 - alpha) * W_0` over the class.
pub fn max_weighted_welfare(
    ds: &Dataset,
    sm: &ScoreMatrix,
    alpha: f64,
    pc: &PolicyClass,
    limits: &SolverLimits,
) -> Result<FrontierPoint> {
    let enc = encode_policy_class(pc, ds)?;
    solve_weighted(&enc, ds, sm, alpha, limits)
}

/// As [`max_weighted_welfare`], on a prebuilt encoding.
pub fn solve_weighted(
    enc: &PolicyEncoding,
    ds: &Dataset,
    sm: &ScoreMatrix,
    alpha: f64,
    limits: &SolverLimits,
) -> Result<FrontierPoint> {
    let mut model = enc.model.clone();
    let (obj, constant) = enc.objective_from_form(&weighted_welfare_form(sm, alpha))?;
    model.set_objective(Sense::Maximize, &obj, constant);
    let sol = solve_milp(&model, limits)?;
    if !sol.status.has_solution() {
        return Ok(FrontierPoint::failed(alpha, sol.status, sol.nodes_explored, None));
    }
    let pv = enc.decode(ds, &sol.values);
    let (w0, w1) = empirical_welfare(sm, &pv);
    Ok(FrontierPoint {
        alpha,
        w_bar: alpha * w1 + (1.0 - alpha) * w0,
        policy: Some(pv),
        w0,
        w1,
        status: sol.status,
        gap: sol.gap(),
        nodes: sol.nodes_explored,
        error: None,
    })
}

/// The approximate Pareto set: policies meeting at least one gridpoint
/// constraint `alpha_j W_1 + (1 - alpha_j) W_0 >= w_bar_j - lambda / sqrt(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierConstraintSet {
    pub points: Vec<FrontierPoint>,
    pub lambda: f64,
    pub n: usize,
}

impl FrontierConstraintSet {
    pub fn slack(&self) -> f64 {
        self.lambda / (self.n as f64).sqrt()
    }

    /// Right-hand side handed to the solver for constraint `j`.
    pub fn solver_rhs(&self, j: usize) -> f64 {
        self.points[j].w_bar - self.slack()
    }

    /// Membership threshold of constraint `j`, including the numerical tolerance.
    pub fn threshold(&self, j: usize) -> f64 {
        self.points[j].w_bar - self.slack() - FRONTIER_TOLERANCE
    }

    pub fn satisfies(&self, sm: &ScoreMatrix, pv: &PolicyValues, j: usize) -> bool {
        self.points[j].has_policy() && weighted_welfare(sm, pv, self.points[j].alpha) >= self.threshold(j)
    }

    pub fn contains(&self, sm: &ScoreMatrix, pv: &PolicyValues) -> bool {
        (0..self.points.len()).any(|j| self.satisfies(sm, pv, j))
    }

    pub fn solved(&self) -> impl Iterator<Item = (usize, &FrontierPoint)> {
        self.points.iter().enumerate().filter(|(_, p)| p.has_policy())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let rows: Vec<FrontierRow> = self.points.iter().map(FrontierPoint::row).collect();
        write_frontier_csv(&rows, writer)
    }
}

pub fn build_frontier_constraints(
    ds: &Dataset,
    sm: &ScoreMatrix,
    grid: &AlphaGrid,
    pc: &PolicyClass,
    lambda: f64,
    limits: &SolverLimits,
) -> Result<FrontierConstraintSet> {
    let enc = encode_policy_class(pc, ds)?;
    build_frontier_constraints_encoded(&enc, ds, sm, grid, lambda, limits)
}

/// Solves every gridpoint on a prebuilt encoding. Individual failures are
/// recorded; at least one gridpoint must solve to optimality.
pub fn build_frontier_constraints_encoded(
    enc: &PolicyEncoding,
    ds: &Dataset,
    sm: &ScoreMatrix,
    grid: &AlphaGrid,
    lambda: f64,
    limits: &SolverLimits,
) -> Result<FrontierConstraintSet> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be nonnegative, got {lambda}")));
    }
    let points = par::map(&grid.values, |&alpha| match solve_weighted(enc, ds, sm, alpha, limits) {
        Ok(p) => p,
        Err(e) => FrontierPoint::failed(alpha, SolveStatus::Timeout, 0, Some(e.to_string())),
    });
    if !points.iter().any(|p| p.status == SolveStatus::Optimal) {
        return Err(Error::AllGridpointsFailed);
    }
    Ok(FrontierConstraintSet { points, lambda, n: ds.n() })
}

/// Frontier curve for plotting: each gridpoint is solved once with
/// `W_1 >= W_0` and once with `W_0 >= W_1`; the non-dominated welfare pairs
/// are returned sorted by `w0`.
pub fn enumerate_frontier_curve(
    ds: &Dataset,
    sm: &ScoreMatrix,
    grid: &AlphaGrid,
    pc: &PolicyClass,
    limits: &SolverLimits,
) -> Result<Vec<(f64, f64)>> {
    let enc = encode_policy_class(pc, ds)?;
    let gap_form = welfare_form(sm, 1).plus(&welfare_form(sm, 0).scaled(-1.0));
    let mut halves = Vec::with_capacity(2);
    for relation in [Relation::Ge, Relation::Le] {
        let mut e = enc.clone();
        e.add_form_constraint(&gap_form, relation, 0.0)?;
        halves.push(e);
    }
    let tasks: Vec<(usize, f64)> = grid.values.iter().flat_map(|&a| [(0, a), (1, a)]).collect();
    let solved = par::map(&tasks, |&(h, alpha)| solve_weighted(&halves[h], ds, sm, alpha, limits));
    let mut pairs = Vec::new();
    for p in solved {
        let p = p?;
        if p.has_policy() {
            pairs.push((p.w0, p.w1));
        }
    }
    Ok(non_dominated(pairs))
}

/// Pairs not weakly dominated by another pair, deduplicated and sorted by `w0`.
pub fn non_dominated(mut pairs: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    const EPS: f64 = 1e-12;
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pairs.dedup_by(|a, b| (a.0 - b.0).abs() <= EPS && (a.1 - b.1).abs() <= EPS);
    let keep: Vec<bool> = pairs
        .iter()
        .map(|&(a0, a1)| {
            !pairs.iter().any(|&(b0, b1)| b0 >= a0 - EPS && b1 >= a1 - EPS && (b0 > a0 + EPS || b1 > a1 + EPS))
        })
        .collect();
    pairs.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
}

pub fn status_label(status: &SolveStatus) -> &'static str {
    match status {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Gap(_) => "gap",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Unbounded => "unbounded",
        SolveStatus::Timeout => "timeout",
    }
}

/// CSV with columns `alpha,w_bar,w0,w1,status,gap`.
pub fn write_frontier_csv<W: Write>(rows: &[FrontierRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["alpha", "w_bar", "w0", "w1", "status", "gap"])?;
    for p in rows {
        w.write_record([
            p.alpha.to_string(),
            p.w_bar.to_string(),
            p.w0.to_string(),
            p.w1.to_string(),
            status_label(&p.status).to_string(),
            p.gap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
