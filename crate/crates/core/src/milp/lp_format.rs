//! Plain-text dump of a model in CPLEX LP format, for inspection with
//! external solvers.

use std::fmt::Write;

use super::model::{LpModel, Relation, Sense};

fn name(model: &LpModel, j: usize) -> String {
    let raw = &model.names[j];
    if raw.is_empty() {
        format!("v{j}")
    } else {
        raw.replace(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'), "_")
    }
}

fn terms(model: &LpModel, coeffs: impl Iterator<Item = (usize, f64)>) -> String {
    let mut out = String::new();
    for (j, c) in coeffs.filter(|(_, c)| *c != 0.0) {
        if out.is_empty() {
            if c < 0.0 {
                out.push_str("- ");
            }
        } else {
            out.push_str(if c < 0.0 { " - " } else { " + " });
        }
        let _ = write!(out, "{} {}", c.abs(), name(model, j));
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

pub fn write_lp(model: &LpModel) -> String {
    let mut out = String::new();
    if model.objective_constant != 0.0 {
        let _ = writeln!(out, "\\ objective constant: {}", model.objective_constant);
    }
    out.push_str(match model.sense {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    let _ = writeln!(out, " obj: {}", terms(model, model.objective.iter().copied().enumerate()));
    out.push_str("Subject To\n");
    for (r, c) in model.constraints.iter().enumerate() {
        let op = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, " c{r}: {} {op} {}", terms(model, c.coeffs.iter().copied()), c.rhs);
    }
    out.push_str("Bounds\n");
    for j in 0..model.num_vars() {
        let (lo, hi) = (model.lower[j], model.upper[j]);
        let v = name(model, j);
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {v} free");
            }
            (true, true) => {
                let _ = writeln!(out, " {lo} <= {v} <= {hi}");
            }
            (true, false) => {
                let _ = writeln!(out, " {v} >= {lo}");
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {v} <= {hi}");
            }
        }
    }
    let ints: Vec<String> = (0..model.num_vars()).filter(|&j| model.integer[j]).map(|j| name(model, j)).collect();
    if !ints.is_empty() {
        out.push_str("General\n");
        for v in ints {
            let _ = writeln!(out, " {v}");
        }
    }
    out.push_str("End\n");
    out
}
