//! Fair policy targeting: cross-fitted doubly robust welfare scores, a
//! discretized Pareto frontier and unfairness-minimizing treatment rules.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod frontier;
pub mod glm;
pub mod milp;
pub mod model;
pub mod nuisance;
pub mod oracle;
pub mod par;
pub mod sim;
pub mod unfairness;

pub use error::{Error, Result};
