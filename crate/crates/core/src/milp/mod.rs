//! Linear and mixed-integer programming engine with policy-class encodings.

mod branch;
mod encoding;
mod lp_format;
mod model;
mod simplex;

pub use branch::{solve_milp, INTEGER_TOLERANCE};
pub use encoding::{
    encode_policy_class, encode_policy_class_with, AffineExpr, CoefficientVars, EncodingOptions, PolicyEncoding, Profile,
    STRICT_MARGIN,
};
pub use lp_format::write_lp;
pub use model::{relative_gap, LinearConstraint, LpModel, MilpSolution, Relation, Sense, SolveStatus, SolverLimits};
pub use simplex::solve_lp;
