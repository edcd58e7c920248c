//! Best-first branch and bound over the simplex relaxation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::model::{relative_gap, LpModel, MilpSolution, Sense, SolveStatus, SolverLimits};
use super::simplex::{solve_relaxation, LpOutcome};
use crate::error::Result;

pub const INTEGER_TOLERANCE: f64 = 1e-6;

struct Node {
    /// Relaxation value in minimisation form.
    bound: f64,
    seq: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound (then the oldest node) ranks highest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

fn most_fractional(model: &LpModel, x: &[f64]) -> Option<usize> {
    most_fractional_above(model, x, INTEGER_TOLERANCE).or_else(|| most_fractional_above(model, x, 0.0))
}

fn most_fractional_above(model: &LpModel, x: &[f64], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in x.iter().enumerate() {
        if !model.integer[j] {
            continue;
        }
        let dist = (v - v.round()).abs();
        if dist > tol && best.is_none_or(|(_, d)| dist > d) {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}

/// Integer-feasible point near `x`, if `x` is integral within tolerance.
/// The integer variables are rounded and the continuous ones re-solved so
/// that the constraints hold at the rounded values. When rounding breaks
/// feasibility and `x` is not exactly integral, the caller keeps branching.
fn integral_point(model: &LpModel, x: &[f64]) -> Result<Option<Vec<f64>>> {
    if most_fractional_above(model, x, INTEGER_TOLERANCE).is_some() {
        return Ok(None);
    }
    let mut lower = model.lower.clone();
    let mut upper = model.upper.clone();
    let mut snapped = x.to_vec();
    for j in 0..x.len() {
        if model.integer[j] {
            snapped[j] = x[j].round();
            lower[j] = snapped[j];
            upper[j] = snapped[j];
        }
    }
    if model.integer.iter().all(|&b| b) {
        return Ok(Some(snapped));
    }
    Ok(match solve_relaxation(model, &lower, &upper)? {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ if most_fractional_above(model, x, 0.0).is_some() => None,
        _ => Some(snapped),
    })
}

/// Solves a mixed-integer linear program to proven optimality or until a limit
/// is reached.
pub fn solve_milp(model: &LpModel, limits: &SolverLimits) -> Result<MilpSolution> {
    model.validate()?;
    let start = Instant::now();
    let sign = match model.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut nodes = 1usize;
    let root = match solve_relaxation(model, &model.lower, &model.upper)? {
        LpOutcome::Optimal { x, objective } => Node {
            bound: sign * objective,
            seq: 0,
            lower: model.lower.clone(),
            upper: model.upper.clone(),
            x,
        },
        LpOutcome::Infeasible => return Ok(MilpSolution::without_solution(SolveStatus::Infeasible, nodes)),
        LpOutcome::Unbounded => return Ok(MilpSolution::without_solution(SolveStatus::Unbounded, nodes)),
    };

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut heap = BinaryHeap::new();
    let mut seq = 1usize;
    let offer = |x: Vec<f64>, incumbent: &mut Option<(Vec<f64>, f64)>| {
        let value = sign * model.objective_value(&x);
        if incumbent.as_ref().is_none_or(|(_, best)| value < *best) {
            *incumbent = Some((x, value));
        }
    };
    match integral_point(model, &root.x)? {
        Some(x) => offer(x, &mut incumbent),
        None => heap.push(root),
    }

    let prune_tol = |v: f64| 1e-9 * v.abs().max(1.0);
    let mut stopped = false;
    while let Some(node) = heap.pop() {
        if let Some((_, best)) = &incumbent {
            if node.bound >= best - prune_tol(*best) {
                continue;
            }
            if relative_gap(*best, node.bound) <= limits.target_gap {
                heap.push(node);
                break;
            }
        }
        if nodes >= limits.max_nodes || start.elapsed().as_secs_f64() > limits.max_seconds {
            heap.push(node);
            stopped = true;
            break;
        }
        let j = most_fractional(model, &node.x).expect("open nodes are fractional");
        let v = node.x[j];
        for branch_up in [false, true] {
            let mut lower = node.lower.clone();
            let mut upper = node.upper.clone();
            if branch_up {
                lower[j] = v.ceil();
            } else {
                upper[j] = v.floor();
            }
            nodes += 1;
            if let LpOutcome::Optimal { x, objective } = solve_relaxation(model, &lower, &upper)? {
                let bound = sign * objective;
                if incumbent.as_ref().is_some_and(|(_, best)| bound >= best - prune_tol(*best)) {
                    continue;
                }
                match integral_point(model, &x)? {
                    Some(point) => offer(point, &mut incumbent),
                    None => {
                        heap.push(Node { bound, seq, lower, upper, x });
                        seq += 1;
                    }
                }
            }
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    Ok(match incumbent {
        Some((values, best)) => {
            let bound = open_bound.min(best);
            let gap = relative_gap(best, bound);
            let status = if gap <= limits.target_gap.max(0.0) || heap.is_empty() {
                SolveStatus::Optimal
            } else {
                SolveStatus::Gap(gap)
            };
            MilpSolution { objective_value: sign * best, bound: sign * bound, values, status, nodes_explored: nodes }
        }
        None if stopped => MilpSolution::without_solution(SolveStatus::Timeout, nodes),
        None => MilpSolution::without_solution(SolveStatus::Infeasible, nodes),
    })
}
