//! Shared data model: observed samples, policy classes, in-sample policy
//! values and cross-fitting folds.
//!
//! Attribute coding is fixed: `s = 1` marks the disadvantaged group.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::Relation;

/// Observed sample `(y_i, d_i, s_i, x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    outcome: Vec<f64>,
    treatment: Vec<u8>,
    attribute: Vec<u8>,
    /// Row-major `n x p`.
    covariates: Vec<f64>,
    n: usize,
    p: usize,
}

impl Dataset {
    /// Builds a dataset and checks every invariant: equal lengths, 0/1
    /// indicators, finite values and a nonempty unit in each of the four
    /// attribute x treatment cells.
    pub fn new(outcome: Vec<f64>, treatment: Vec<u8>, attribute: Vec<u8>, covariates: Vec<f64>, p: usize) -> Result<Self> {
        let n = outcome.len();
        if treatment.len() != n || attribute.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "outcome has {n} rows, treatment {}, attribute {}",
                treatment.len(),
                attribute.len()
            )));
        }
        if p == 0 {
            return Err(Error::MissingColumn("x1".into()));
        }
        if covariates.len() != n * p {
            return Err(Error::DimensionMismatch(format!(
                "expected {} covariate entries, got {}",
                n * p,
                covariates.len()
            )));
        }
        for (i, &d) in treatment.iter().enumerate() {
            if d > 1 {
                return Err(Error::NonBinaryIndicator { column: "d".into(), row: i, value: d.to_string() });
            }
        }
        for (i, &s) in attribute.iter().enumerate() {
            if s > 1 {
                return Err(Error::NonBinaryIndicator { column: "s".into(), row: i, value: s.to_string() });
            }
        }
        if let Some(i) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { column: "y".into(), row: i });
        }
        if let Some(k) = covariates.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { column: format!("x{}", k % p + 1), row: k / p });
        }
        let ds = Dataset { outcome, treatment, attribute, covariates, n, p };
        for s in 0..2u8 {
            for d in 0..2u8 {
                if ds.cell_size(s, d) == 0 {
                    return Err(Error::EmptyCell { group: s, arm: d });
                }
            }
        }
        Ok(ds)
    }

    /// Reads the `y,d,s,x1,...,xp` CSV layout and validates it.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let y_col = find("y").ok_or_else(|| Error::MissingColumn("y".into()))?;
        let d_col = find("d").ok_or_else(|| Error::MissingColumn("d".into()))?;
        let s_col = find("s").ok_or_else(|| Error::MissingColumn("s".into()))?;
        let mut x_cols = Vec::new();
        while let Some(c) = find(&format!("x{}", x_cols.len() + 1)) {
            x_cols.push(c);
        }
        if x_cols.is_empty() {
            return Err(Error::MissingColumn("x1".into()));
        }
        let p = x_cols.len();

        let parse_real = |raw: &str, column: &str, row: usize| -> Result<f64> {
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NonFiniteValue { column: column.to_string(), row }),
            }
        };
        let parse_indicator = |raw: &str, column: &str, row: usize| -> Result<u8> {
            match raw.parse::<f64>() {
                Ok(0.0) => Ok(0),
                Ok(1.0) => Ok(1),
                _ => Err(Error::NonBinaryIndicator { column: column.to_string(), row, value: raw.to_string() }),
            }
        };

        let (mut y, mut d, mut s, mut x) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let get = |c: usize| rec.get(c).unwrap_or("");
            y.push(parse_real(get(y_col), "y", row)?);
            d.push(parse_indicator(get(d_col), "d", row)?);
            s.push(parse_indicator(get(s_col), "s", row)?);
            for (k, &c) in x_cols.iter().enumerate() {
                x.push(parse_real(get(c), &format!("x{}", k + 1), row)?);
            }
        }
        Dataset::new(y, d, s, x, p)
    }

    /// Writes the dataset in the same CSV layout. Reals are written in
    /// shortest round-trip form, so a read-back is bit-identical.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string(), "d".to_string(), "s".to_string()];
        header.extend((1..=self.p).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut rec = vec![self.outcome[i].to_string(), self.treatment[i].to_string(), self.attribute[i].to_string()];
            rec.extend(self.x(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self, i: usize) -> f64 {
        self.outcome[i]
    }

    pub fn d(&self, i: usize) -> u8 {
        self.treatment[i]
    }

    pub fn s(&self, i: usize) -> u8 {
        self.attribute[i]
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcome
    }

    pub fn treatments(&self) -> &[u8] {
        &self.treatment
    }

    pub fn attributes(&self) -> &[u8] {
        &self.attribute
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn cell_size(&self, s: u8, d: u8) -> usize {
        (0..self.n).filter(|&i| self.attribute[i] == s && self.treatment[i] == d).count()
    }

    /// Sample share of attribute group `s`.
    pub fn group_share(&self, s: u8) -> f64 {
        self.attribute.iter().filter(|&&a| a == s).count() as f64 / self.n as f64
    }

    /// Returns a copy with outcomes replaced (used by tests and the simulator).
    pub fn with_outcomes(&self, outcome: Vec<f64>) -> Result<Self> {
        Dataset::new(outcome, self.treatment.clone(), self.attribute.clone(), self.covariates.clone(), self.p)
    }
}

/// Assignment of every unit to one of `k` folds (0-based fold indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub k: usize,
}

impl FoldAssignment {
    pub fn members(&self, fold: usize) -> impl Iterator<Item = usize> + '_ {
        self.fold_of.iter().enumerate().filter(move |(_, &f)| f == fold).map(|(i, _)| i)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified random partition into `k` folds, stratified on `(s, d)`.
///
/// Units of each cell are shuffled and dealt round-robin; the dealing offset
/// carries over between cells so that fold sizes stay balanced overall.
pub fn split_folds(ds: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > ds.n() {
        return Err(Error::Config(format!("fold count {k} must lie in [2, {}]", ds.n())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; ds.n()];
    let mut next = 0usize;
    for s in 0..2u8 {
        for d in 0..2u8 {
            let mut cell: Vec<usize> = (0..ds.n()).filter(|&i| ds.s(i) == s && ds.d(i) == d).collect();
            if cell.len() < k {
                return Err(Error::InfeasibleStratification { group: s, arm: d, size: cell.len(), folds: k });
            }
            cell.shuffle(&mut rng);
            for i in cell {
                fold_of[i] = next % k;
                next += 1;
            }
        }
    }
    Ok(FoldAssignment { fold_of, k })
}

/// Upper bound on the number of treated units in the sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capacity {
    Count(f64),
    Fraction(f64),
}

impl Capacity {
    pub fn resolve(&self, n: usize) -> f64 {
        match *self {
            Capacity::Count(k) => k,
            Capacity::Fraction(f) => f * n as f64,
        }
    }
}

/// Linear inequality over in-sample policy values:
/// `<z0_coeffs, z0> + <z1_coeffs, z1>  (relation)  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConstraint {
    pub z0: Vec<f64>,
    pub z1: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Explicit finite policy class: each member lists its in-sample values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinitePolicySet {
    pub policies: Vec<PolicyValues>,
}

impl FinitePolicySet {
    pub fn new(policies: Vec<PolicyValues>) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::InvalidPolicyClass("finite policy set is empty".into()));
        }
        let n = policies[0].n();
        if policies.iter().any(|p| p.n() != n) {
            return Err(Error::DimensionMismatch("finite policy members differ in length".into()));
        }
        Ok(FinitePolicySet { policies })
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// `1{b0 + b1 s + x'phi >= 0}`.
    DeterministicLinear,
    /// `p_hi` above the hyperplane, `p_lo` below it.
    ProbabilisticTwoLevel,
    /// `b0 + b1 s + x'phi`, constrained to `[0, 1]` on the sample.
    LinearProbability,
    /// Enumerated class, used for exact comparisons against brute force.
    Finite(FinitePolicySet),
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::DeterministicLinear => "deterministic_linear",
            PolicyKind::ProbabilisticTwoLevel => "probabilistic_two_level",
            PolicyKind::LinearProbability => "linear_probability",
            PolicyKind::Finite(_) => "finite",
        }
    }
}

/// Declarative description of the policy class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyClass {
    pub kind: PolicyKind,
    /// When false the attribute coefficient is pinned to zero.
    pub use_attribute: bool,
    /// Symmetric bound on every rule coefficient.
    pub b_max: Option<f64>,
    pub capacity: Option<Capacity>,
    #[serde(default)]
    pub extra_constraints: Vec<PolicyConstraint>,
}

impl PolicyClass {
    pub fn new(kind: PolicyKind) -> Self {
        PolicyClass { kind, use_attribute: true, b_max: Some(1.0), capacity: None, extra_constraints: Vec::new() }
    }

    pub fn with_attribute(mut self, use_attribute: bool) -> Self {
        self.use_attribute = use_attribute;
        self
    }

    pub fn with_capacity(mut self, capacity: Capacity) -> Self {
        self.capacity = Some(capacity);
        self
    }

    pub fn with_b_max(mut self, b_max: Option<f64>) -> Self {
        self.b_max = b_max;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(b) = self.b_max {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidPolicyClass(format!("b_max must be positive and finite, got {b}")));
            }
        }
        if let Some(cap) = self.capacity {
            let k = cap.resolve(n);
            if !(k > 0.0 && k <= n as f64) {
                return Err(Error::InvalidPolicyClass(format!("capacity {k} outside (0, {n}]")));
            }
        }
        for c in &self.extra_constraints {
            if c.z0.len() != n || c.z1.len() != n {
                return Err(Error::DimensionMismatch("extra constraint length differs from sample size".into()));
            }
        }
        if let PolicyKind::Finite(set) = &self.kind {
            if set.is_empty() || set.policies[0].n() != n {
                return Err(Error::DimensionMismatch("finite policy set does not match sample size".into()));
            }
        }
        Ok(())
    }
}

/// Functional form of a decoded rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleForm {
    Threshold,
    TwoLevel,
    Linear,
}

/// Units whose index lies within this distance below zero are treated as
/// on the hyperplane (and therefore selected).
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Coefficients `(b0, b1, phi)` of a linear-index rule, plus the two
/// treatment levels of the probabilistic form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCoefficients {
    pub form: RuleForm,
    pub intercept: f64,
    pub attribute: f64,
    pub covariates: Vec<f64>,
    /// `(p_hi, p_lo)`; only for the two-level form.
    pub levels: Option<(f64, f64)>,
}

impl PolicyCoefficients {
    pub fn index(&self, x: &[f64], s: u8) -> f64 {
        self.intercept + self.attribute * f64::from(s) + x.iter().zip(&self.covariates).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Treatment probability at `(x, s)`. Linear rules are clamped to `[0, 1]`.
    pub fn evaluate(&self, x: &[f64], s: u8) -> f64 {
        let idx = self.index(x, s);
        match self.form {
            RuleForm::Threshold => f64::from(u8::from(idx >= -TIE_TOLERANCE)),
            RuleForm::TwoLevel => {
                let (hi, lo) = self.levels.unwrap_or((1.0, 0.0));
                if idx >= -TIE_TOLERANCE {
                    hi
                } else {
                    lo
                }
            }
            RuleForm::Linear => idx.clamp(0.0, 1.0),
        }
    }
}

/// In-sample policy values `z_s[i] = pi(x_i, s)` at both attribute values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValues {
    pub z0: Vec<f64>,
    pub z1: Vec<f64>,
    pub coefficients: Option<PolicyCoefficients>,
    /// Index of the chosen member when the class is finite.
    pub member: Option<usize>,
}

impl PolicyValues {
    pub fn new(z0: Vec<f64>, z1: Vec<f64>) -> Self {
        PolicyValues { z0, z1, coefficients: None, member: None }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        PolicyValues::new(vec![value; n], vec![value; n])
    }

    /// Attribute-blind policy from a single value per unit.
    pub fn blind(z: Vec<f64>) -> Self {
        PolicyValues::new(z.clone(), z)
    }

    /// Evaluates a coefficient rule on every in-sample unit at both attributes.
    pub fn from_rule(ds: &Dataset, coefficients: PolicyCoefficients) -> Self {
        let z0 = (0..ds.n()).map(|i| coefficients.evaluate(ds.x(i), 0)).collect();
        let z1 = (0..ds.n()).map(|i| coefficients.evaluate(ds.x(i), 1)).collect();
        PolicyValues { z0, z1, coefficients: Some(coefficients), member: None }
    }

    pub fn n(&self) -> usize {
        self.z0.len()
    }

    pub fn at(&self, i: usize, s: u8) -> f64 {
        if s == 0 {
            self.z0[i]
        } else {
            self.z1[i]
        }
    }

    /// Value at each unit's own attribute.
    pub fn own(&self, attribute: &[u8]) -> Vec<f64> {
        attribute.iter().enumerate().map(|(i, &s)| self.at(i, s)).collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.z0.iter().chain(&self.z1).all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn is_attribute_blind(&self) -> bool {
        self.z0 == self.z1
    }

    /// Convex combination `a * self + (1 - a) * other`.
    pub fn mix(&self, other: &PolicyValues, a: f64) -> PolicyValues {
        let m = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| a * x + (1.0 - a) * y).collect();
        PolicyValues::new(m(&self.z0, &other.z0), m(&self.z1, &other.z1))
    }
}
