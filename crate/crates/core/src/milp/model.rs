use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    /// Sparse `(variable, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Linear program with optional integrality flags.
#[derive(Debug, Clone, PartialEq)]
pub struct LpModel {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub constraints: Vec<LinearConstraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
    pub names: Vec<String>,
}

impl LpModel {
    pub fn new(sense: Sense) -> Self {
        LpModel {
            sense,
            objective: Vec::new(),
            objective_constant: 0.0,
            constraints: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            integer: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, integer: bool) -> usize {
        self.objective.push(0.0);
        self.lower.push(lower);
        self.upper.push(upper);
        self.integer.push(integer);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, 0.0, 1.0, true)
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(LinearConstraint { coeffs, relation, rhs });
    }

    /// Replaces the objective with a dense coefficient vector.
    pub fn set_objective(&mut self, sense: Sense, coeffs: &[f64], constant: f64) {
        self.sense = sense;
        self.objective = coeffs.to_vec();
        self.objective.resize(self.num_vars(), 0.0);
        self.objective_constant = constant;
    }

    pub fn num_integer(&self) -> usize {
        self.integer.iter().filter(|&&b| b).count()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if self.lower.len() != n || self.upper.len() != n || self.integer.len() != n {
            return Err(Error::InvalidModel("bound/integrality vectors differ in length".into()));
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidModel(format!("objective coefficient of variable {j} is not finite")));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(Error::InvalidModel(format!("variable {j} has bounds [{}, {}]", self.lower[j], self.upper[j])));
            }
            if self.integer[j] && !(self.lower[j].is_finite() && self.upper[j].is_finite()) {
                return Err(Error::InvalidModel(format!("integer variable {j} must have finite bounds")));
            }
        }
        for (r, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() || c.coeffs.iter().any(|&(j, v)| j >= n || !v.is_finite()) {
                return Err(Error::InvalidModel(format!("constraint {r} has an invalid coefficient or rhs")));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, v)| v * x[j]).sum();
            let viol = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for j in 0..x.len() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.objective_constant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped at a limit with an incumbent whose relative gap exceeds the target.
    Gap(f64),
    Infeasible,
    Unbounded,
    /// Stopped at a limit without any incumbent.
    Timeout,
}

impl SolveStatus {
    pub fn has_solution(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Gap(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub status: SolveStatus,
    /// Best proven bound in the model's sense.
    pub bound: f64,
    pub nodes_explored: usize,
}

impl MilpSolution {
    pub(crate) fn without_solution(status: SolveStatus, nodes: usize) -> Self {
        MilpSolution { values: Vec::new(), objective_value: f64::NAN, status, bound: f64::NAN, nodes_explored: nodes }
    }

    /// `|objective - bound| / max(1, |bound|)`.
    pub fn gap(&self) -> f64 {
        relative_gap(self.objective_value, self.bound)
    }
}

pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    (objective - bound).abs() / bound.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverLimits {
    pub max_nodes: usize,
    pub max_seconds: f64,
    pub target_gap: f64,
}

impl Default for SolverLimits {
    fn default() -> Self {
        SolverLimits { max_nodes: 200_000, max_seconds: 600.0, target_gap: 1e-9 }
    }
}
