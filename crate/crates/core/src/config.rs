//! Run configuration: a TOML document with dotted sections, optionally
//! patched by `key=value` overrides before validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{FptConfig, FrontierConfig};
use crate::milp::SolverLimits;
use crate::model::{Capacity, PolicyClass, PolicyKind};
use crate::nuisance::EstimationConfig;
use crate::sim::{DgpSpec, Method};
use crate::unfairness::{EnvySecondTerm, MeasureKind, UnfairnessMeasure};

/// Rule families reachable from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    DeterministicLinear,
    ProbabilisticTwoLevel,
    LinearProbability,
}

impl From<ClassKind> for PolicyKind {
    fn from(k: ClassKind) -> Self {
        match k {
            ClassKind::DeterministicLinear => PolicyKind::DeterministicLinear,
            ClassKind::ProbabilisticTwoLevel => PolicyKind::ProbabilisticTwoLevel,
            ClassKind::LinearProbability => PolicyKind::LinearProbability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub kind: ClassKind,
    pub use_attribute: bool,
    pub b_max: Option<f64>,
    /// Maximum number of treated units.
    pub capacity: Option<f64>,
    /// Maximum share of treated units; exclusive with `capacity`.
    pub capacity_fraction: Option<f64>,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            kind: ClassKind::LinearProbability,
            use_attribute: true,
            b_max: Some(1.0),
            capacity: None,
            capacity_fraction: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureSection {
    pub kind: MeasureKind,
    pub absolute: bool,
    pub envy_second_term: EnvySecondTerm,
}

impl Default for MeasureSection {
    fn default() -> Self {
        MeasureSection { kind: MeasureKind::PredictionDisparity, absolute: true, envy_second_term: EnvySecondTerm::AsPrinted }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub n: usize,
    pub replications: usize,
    pub fpt: bool,
    pub ewm: bool,
    /// One constrained competitor per value.
    pub kappas: Vec<f64>,
    /// Treated share used when the policy section sets no capacity.
    pub capacity_fraction: Option<f64>,
    pub dgp_seed: u64,
    pub dgp: DgpSpec,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            n: 400,
            replications: 100,
            fpt: true,
            ewm: true,
            kappas: vec![1.0, 10.0],
            capacity_fraction: Some(0.375),
            dgp_seed: 7,
            dgp: DgpSpec::default(),
        }
    }
}

impl SimulateSection {
    pub fn methods(&self) -> Vec<Method> {
        let mut m = Vec::new();
        if self.fpt {
            m.push(Method::Fpt);
        }
        if self.ewm {
            m.push(Method::Ewm);
        }
        m.extend(self.kappas.iter().map(|&kappa| Method::ConstrainedEwm { kappa }));
        m
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// JSON file holding either a result document or bare rule coefficients.
    pub coefficients: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    pub policy: PolicySection,
    pub measure: MeasureSection,
    pub estimation: EstimationConfig,
    pub frontier: FrontierConfig,
    pub solver: SolverLimits,
    pub simulate: SimulateSection,
    pub evaluate: EvaluateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: None,
            output_dir: PathBuf::from("out"),
            threads: None,
            policy: PolicySection::default(),
            measure: MeasureSection::default(),
            estimation: EstimationConfig::default(),
            frontier: FrontierConfig::default(),
            solver: SolverLimits::default(),
            simulate: SimulateSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `section.key=value` to a parsed document. Values are read as TOML
/// literals, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override key `{key}`: `{part}` is not a section")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.estimation.validate()?;
        if self.policy.capacity.is_some() && self.policy.capacity_fraction.is_some() {
            return Err(Error::Config("policy.capacity and policy.capacity_fraction are exclusive".into()));
        }
        if let Some(f) = self.policy.capacity_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("policy.capacity_fraction must lie in (0, 1], got {f}")));
            }
        }
        if let Some(b) = self.policy.b_max {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("policy.b_max must be positive and finite, got {b}")));
            }
        }
        if let Some(l) = self.frontier.lambda {
            if !(l >= 0.0) {
                return Err(Error::Config(format!("frontier.lambda must be nonnegative, got {l}")));
            }
        }
        if self.frontier.grid == Some(0) {
            return Err(Error::Config("frontier.grid must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if !(self.solver.target_gap >= 0.0) || !(self.solver.max_seconds > 0.0) {
            return Err(Error::Config("solver.target_gap must be >= 0 and solver.max_seconds > 0".into()));
        }
        if self.simulate.n == 0 || self.simulate.replications == 0 {
            return Err(Error::Config("simulate.n and simulate.replications must be positive".into()));
        }
        if self.simulate.kappas.iter().any(|k| k.is_nan() || (self.measure.absolute && *k < 0.0)) {
            return Err(Error::Config("simulate.kappas must be nonnegative for an absolute measure".into()));
        }
        self.simulate.dgp.validate()
    }

    pub fn policy_class(&self) -> PolicyClass {
        let mut class = PolicyClass::new(self.policy.kind.into())
            .with_attribute(self.policy.use_attribute)
            .with_b_max(self.policy.b_max);
        if let Some(k) = self.policy.capacity {
            class = class.with_capacity(Capacity::Count(k));
        } else if let Some(f) = self.policy.capacity_fraction {
            class = class.with_capacity(Capacity::Fraction(f));
        }
        class
    }

    pub fn measure(&self) -> UnfairnessMeasure {
        UnfairnessMeasure {
            kind: self.measure.kind,
            absolute: self.measure.absolute,
            envy_second_term: self.measure.envy_second_term,
        }
    }

    pub fn fpt_config(&self) -> FptConfig {
        FptConfig {
            class: self.policy_class(),
            measure: self.measure(),
            estimation: self.estimation.clone(),
            frontier: self.frontier,
            solver: self.solver,
            seed: self.seed,
        }
    }

    /// The fully resolved configuration as TOML; loading it reproduces the run.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_toml_str("", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let cfg = RunConfig::from_toml_str(
            "[policy]\nkind = \"deterministic_linear\"\n",
            &["policy.b_max=2.5".into(), "measure.kind=welfare_disparity".into(), "seed=11".into()],
        )
        .unwrap();
        assert_eq!(cfg.policy.kind, ClassKind::DeterministicLinear);
        assert_eq!(cfg.policy.b_max, Some(2.5));
        assert_eq!(cfg.measure.kind, MeasureKind::WelfareDisparity);
        assert_eq!(cfg.seed, 11);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml_str("[policy]\nkindd = \"x\"\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("kindd"), "{err}");
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::from_toml_str("", &["frontier.grid=4".into(), "policy.capacity_fraction=0.3".into()]).unwrap();
        let again = RunConfig::from_toml_str(&cfg.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(cfg, again);
    }
}
