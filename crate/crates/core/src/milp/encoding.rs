//! Mixed-integer encodings of policy classes over the in-sample values
//! `z_s[i] = pi(x_i, s)`.

use std::collections::HashMap;

use super::model::{LpModel, Relation, Sense};
use crate::error::{Error, Result};
use crate::model::{Dataset, FinitePolicySet, PolicyClass, PolicyCoefficients, PolicyKind, PolicyValues, RuleForm};
use crate::unfairness::LinearForm;

/// Margin by which a unit must fall below the hyperplane to be left untreated.
pub const STRICT_MARGIN: f64 = 1e-6;
const BIG_M_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncodingOptions {
    /// Also encode each unit's value at the attribute opposite to its own.
    pub counterfactual: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    fn var(v: usize) -> Self {
        AffineExpr { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>() + self.constant
    }
}

/// Model indices of the rule coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVars {
    pub intercept: usize,
    pub attribute: Option<usize>,
    pub covariates: Vec<usize>,
    /// `(p_hi, p_lo)` for the two-level form.
    pub levels: Option<(usize, usize)>,
}

/// Distinct `(covariates, attribute)` combination sharing one `z` variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    /// First unit carrying this profile.
    pub unit: usize,
    /// `None` when the class ignores the attribute.
    pub attribute: Option<u8>,
    pub z: usize,
    /// Big-M constant, zero for encodings without one.
    pub big_m: f64,
}

#[derive(Debug, Clone)]
pub struct PolicyEncoding {
    pub model: LpModel,
    pub form: Option<RuleForm>,
    pub coefficients: Option<CoefficientVars>,
    /// Member selectors for a finite class.
    pub selectors: Vec<usize>,
    pub profiles: Vec<Profile>,
    z: [Vec<Option<AffineExpr>>; 2],
    finite: Option<FinitePolicySet>,
}

pub fn encode_policy_class(pc: &PolicyClass, ds: &Dataset) -> Result<PolicyEncoding> {
    encode_policy_class_with(pc, ds, EncodingOptions::default())
}

pub fn encode_policy_class_with(pc: &PolicyClass, ds: &Dataset, opts: EncodingOptions) -> Result<PolicyEncoding> {
    let n = ds.n();
    pc.validate(n)?;
    let attr = ds.attributes();
    let counterfactual = opts.counterfactual
        || pc.extra_constraints.iter().any(|c| constraint_form(&c.z0, &c.z1).uses_counterfactual(attr));

    let mut enc = PolicyEncoding {
        model: LpModel::new(Sense::Maximize),
        form: None,
        coefficients: None,
        selectors: Vec::new(),
        profiles: Vec::new(),
        z: [vec![None; n], vec![None; n]],
        finite: None,
    };

    if let PolicyKind::Finite(set) = &pc.kind {
        enc.encode_finite(set);
    } else {
        enc.encode_rule(pc, ds, counterfactual)?;
    }

    if let Some(cap) = pc.capacity {
        let mut f = LinearForm::zeros(n);
        for (i, &s) in attr.iter().enumerate() {
            if s == 0 {
                f.c0[i] = 1.0;
            } else {
                f.c1[i] = 1.0;
            }
        }
        enc.add_form_constraint(&f, Relation::Le, cap.resolve(n))?;
    }
    for c in &pc.extra_constraints {
        enc.add_form_constraint(&constraint_form(&c.z0, &c.z1), c.relation, c.rhs)?;
    }
    Ok(enc)
}

fn constraint_form(z0: &[f64], z1: &[f64]) -> LinearForm {
    LinearForm { c0: z0.to_vec(), c1: z1.to_vec(), constant: 0.0 }
}

impl PolicyEncoding {
    fn encode_finite(&mut self, set: &FinitePolicySet) {
        let m = &mut self.model;
        self.selectors = (0..set.len()).map(|k| m.add_binary(format!("w{k}"))).collect();
        m.add_constraint(self.selectors.iter().map(|&w| (w, 1.0)).collect(), Relation::Eq, 1.0);
        for s in 0..2u8 {
            for i in 0..set.policies[0].n() {
                let terms = self
                    .selectors
                    .iter()
                    .zip(&set.policies)
                    .filter_map(|(&w, pv)| {
                        let v = pv.at(i, s);
                        (v != 0.0).then_some((w, v))
                    })
                    .collect();
                self.z[usize::from(s)][i] = Some(AffineExpr { terms, constant: 0.0 });
            }
        }
        self.finite = Some(set.clone());
    }

    fn encode_rule(&mut self, pc: &PolicyClass, ds: &Dataset, counterfactual: bool) -> Result<()> {
        let linear = matches!(pc.kind, PolicyKind::LinearProbability);
        let form = match pc.kind {
            PolicyKind::DeterministicLinear => RuleForm::Threshold,
            PolicyKind::ProbabilisticTwoLevel => RuleForm::TwoLevel,
            _ => RuleForm::Linear,
        };
        let b = match pc.b_max {
            Some(b) => b,
            None if linear => f64::INFINITY,
            None => return Err(Error::UnboundedBox),
        };
        let m = &mut self.model;
        let intercept = m.add_var("b0", -b, b, false);
        let attribute = pc.use_attribute.then(|| m.add_var("b1", -b, b, false));
        let covariates = (1..=ds.p()).map(|k| m.add_var(format!("phi{k}"), -b, b, false)).collect();
        let levels = (form == RuleForm::TwoLevel)
            .then(|| (m.add_var("p_hi", 0.0, 1.0, false), m.add_var("p_lo", 0.0, 1.0, false)));
        let cv = CoefficientVars { intercept, attribute, covariates, levels };

        let attr = ds.attributes();
        let mut seen: HashMap<(Vec<u64>, u8), usize> = HashMap::new();
        let passes: &[bool] = if counterfactual && pc.use_attribute { &[false, true] } else { &[false] };
        for &flip in passes {
            for i in 0..ds.n() {
                let s = if flip { 1 - attr[i] } else { attr[i] };
                let key_s = if pc.use_attribute { s } else { 2 };
                let key = (ds.x(i).iter().map(|v| v.to_bits()).collect(), key_s);
                let pid = match seen.get(&key) {
                    Some(&pid) => pid,
                    None => {
                        let pid = self.add_profile(form, &cv, b, ds.x(i), i, pc.use_attribute.then_some(s));
                        seen.insert(key, pid);
                        pid
                    }
                };
                let expr = AffineExpr::var(self.profiles[pid].z);
                if pc.use_attribute {
                    self.z[usize::from(s)][i] = Some(expr);
                } else {
                    self.z[0][i] = Some(expr.clone());
                    self.z[1][i] = Some(expr);
                }
            }
        }
        self.form = Some(form);
        self.coefficients = Some(cv);
        Ok(())
    }

    fn add_profile(&mut self, form: RuleForm, cv: &CoefficientVars, b: f64, x: &[f64], unit: usize, s: Option<u8>) -> usize {
        let m = &mut self.model;
        let tag = match s {
            Some(s) => format!("{s}_{unit}"),
            None => format!("{unit}"),
        };
        let mut index = vec![(cv.intercept, 1.0)];
        if let (Some(v), Some(1)) = (cv.attribute, s) {
            index.push((v, 1.0));
        }
        index.extend(cv.covariates.iter().zip(x).filter(|(_, &xv)| xv != 0.0).map(|(&v, &xv)| (v, xv)));
        let with = |extra: &[(usize, f64)]| {
            let mut row = index.clone();
            row.extend_from_slice(extra);
            row
        };

        let (z, big_m) = match form {
            RuleForm::Linear => {
                let z = m.add_var(format!("z{tag}"), 0.0, 1.0, false);
                m.add_constraint(with(&[(z, -1.0)]), Relation::Eq, 0.0);
                (z, 0.0)
            }
            RuleForm::Threshold | RuleForm::TwoLevel => {
                let attr_term = if s == Some(1) { 1.0 } else { 0.0 };
                let c = b * (1.0 + attr_term + x.iter().map(|v| v.abs()).sum::<f64>()) + BIG_M_SLACK;
                let above = if form == RuleForm::Threshold {
                    m.add_binary(format!("z{tag}"))
                } else {
                    m.add_binary(format!("xi{tag}"))
                };
                m.add_constraint(with(&[(above, -c)]), Relation::Le, -STRICT_MARGIN);
                m.add_constraint(with(&[(above, -c)]), Relation::Ge, -c);
                if form == RuleForm::Threshold {
                    (above, c)
                } else {
                    let (hi, lo) = cv.levels.expect("two-level form has levels");
                    let z = m.add_var(format!("z{tag}"), 0.0, 1.0, false);
                    m.add_constraint(vec![(z, 1.0), (hi, -1.0), (above, 1.0)], Relation::Le, 1.0);
                    m.add_constraint(vec![(z, 1.0), (hi, -1.0), (above, -1.0)], Relation::Ge, -1.0);
                    m.add_constraint(vec![(z, 1.0), (lo, -1.0), (above, -1.0)], Relation::Le, 0.0);
                    m.add_constraint(vec![(z, 1.0), (lo, -1.0), (above, 1.0)], Relation::Ge, 0.0);
                    (z, c)
                }
            }
        };
        self.profiles.push(Profile { unit, attribute: s, z, big_m });
        self.profiles.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.model.num_vars()
    }

    pub fn z_expr(&self, i: usize, s: u8) -> Option<&AffineExpr> {
        self.z[usize::from(s)][i].as_ref()
    }

    /// Sparse row and constant of `form` in terms of model variables.
    pub fn form_row(&self, form: &LinearForm) -> Result<(Vec<(usize, f64)>, f64)> {
        let mut dense = vec![0.0; self.num_vars()];
        let mut constant = form.constant;
        for (s, coeffs) in [&form.c0, &form.c1].into_iter().enumerate() {
            for (i, &c) in coeffs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let expr = self.z[s][i].as_ref().ok_or_else(|| {
                    Error::InvariantViolation(format!("value of unit {i} at attribute {s} is not encoded"))
                })?;
                for &(j, a) in &expr.terms {
                    dense[j] += c * a;
                }
                constant += c * expr.constant;
            }
        }
        let row = dense.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect();
        Ok((row, constant))
    }

    /// Dense objective coefficients and constant for `form`.
    pub fn objective_from_form(&self, form: &LinearForm) -> Result<(Vec<f64>, f64)> {
        let (row, constant) = self.form_row(form)?;
        let mut dense = vec![0.0; self.num_vars()];
        for (j, v) in row {
            dense[j] = v;
        }
        Ok((dense, constant))
    }

    /// Appends `form(z)  relation  rhs`.
    pub fn add_form_constraint(&mut self, form: &LinearForm, relation: Relation, rhs: f64) -> Result<()> {
        let (row, constant) = self.form_row(form)?;
        self.model.add_constraint(row, relation, rhs - constant);
        Ok(())
    }

    /// Value of the encoded `z_s[i]` at a model assignment.
    pub fn z_value(&self, values: &[f64], i: usize, s: u8) -> Option<f64> {
        self.z_expr(i, s).map(|e| e.evaluate(values))
    }

    /// Rule coefficients at a model assignment. Threshold intercepts are moved
    /// up by half the strict margin so that the hyperplane sits inside the gap
    /// separating treated from untreated profiles.
    pub fn decode_coefficients(&self, values: &[f64]) -> Option<PolicyCoefficients> {
        let cv = self.coefficients.as_ref()?;
        let form = self.form?;
        let shift = if form == RuleForm::Linear { 0.0 } else { 0.5 * STRICT_MARGIN };
        Some(PolicyCoefficients {
            form,
            intercept: values[cv.intercept] + shift,
            attribute: cv.attribute.map_or(0.0, |v| values[v]),
            covariates: cv.covariates.iter().map(|&v| values[v]).collect(),
            levels: cv.levels.map(|(hi, lo)| (values[hi], values[lo])),
        })
    }

    /// Policy implied by a model assignment. Rule classes are re-evaluated
    /// from their decoded coefficients; finite classes return the selected member.
    pub fn decode(&self, ds: &Dataset, values: &[f64]) -> PolicyValues {
        if let Some(set) = &self.finite {
            let k = self
                .selectors
                .iter()
                .enumerate()
                .max_by(|a, b| values[*a.1].total_cmp(&values[*b.1]).then(b.0.cmp(&a.0)))
                .map_or(0, |(k, _)| k);
            let mut pv = set.policies[k].clone();
            pv.member = Some(k);
            return pv;
        }
        PolicyValues::from_rule(ds, self.decode_coefficients(values).expect("rule encodings carry coefficients"))
    }
}
