//! Command-line workflows: `estimate`, `frontier`, `simulate` and `evaluate`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, ErrorCategory, Result};
use crate::estimator::{evaluate_policy, fair_policy_targeting_with, FptResult, MeasureReport};
use crate::frontier::{build_frontier_constraints, build_grid};
use crate::model::{Capacity, Dataset, PolicyCoefficients, PolicyValues};
use crate::nuisance::estimate;
use crate::par;
use crate::sim::{make_calibrated_dgp, run_replications};
use crate::unfairness::MeasureInputs;

pub const CONFIG_ECHO: &str = "config.toml";
pub const RESULT_FILE: &str = "result.json";
pub const FRONTIER_FILE: &str = "frontier.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const EVALUATION_FILE: &str = "evaluation.json";

#[derive(Debug, Parser)]
#[command(name = "fairtarget", version, about = "Pareto-optimal, fairness-minimizing treatment rules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set policy.b_max=2`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Input CSV with columns y, d, s, x1..xp.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit the fairest Pareto-optimal policy; writes the result and frontier.
    Estimate,
    /// Write the frontier gridpoints only.
    Frontier,
    /// Run the replication study on the synthetic DGP.
    Simulate,
    /// Report every measure for a given rule.
    Evaluate {
        /// JSON with a result document or bare rule coefficients.
        #[arg(long)]
        coefficients: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Frontier => "frontier",
            Command::Simulate => "simulate",
            Command::Evaluate { .. } => "evaluate",
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Solver => 4,
    }
}

fn quoted(path: &Path) -> String {
    toml::Value::String(path.display().to_string()).to_string()
}

/// Flag values become overrides applied after `--set`, so flags win.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(t) = cli.threads {
        overrides.push(format!("threads={t}"));
    }
    if let Some(d) = &cli.data {
        overrides.push(format!("data={}", quoted(d)));
    }
    if let Some(o) = &cli.out {
        overrides.push(format!("output_dir={}", quoted(o)));
    }
    if let Command::Evaluate { coefficients: Some(c) } = &cli.command {
        overrides.push(format!("evaluate.coefficients={}", quoted(c)));
    }
    RunConfig::load(cli.config.as_deref(), &overrides)
}

#[derive(Serialize)]
struct ResultDocument<'a> {
    command: &'a str,
    config: &'a RunConfig,
    result: &'a FptResult,
}

#[derive(Debug, Serialize)]
struct EvaluationDocument<'a> {
    command: &'a str,
    config: &'a RunConfig,
    coefficients: &'a PolicyCoefficients,
    measure: String,
    unfairness: Option<f64>,
    report: &'a MeasureReport,
}

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.data.as_ref().ok_or_else(|| Error::Config("no data file given (set `data` or pass --data)".into()))?;
    Dataset::from_csv(fs::File::open(path)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads rule coefficients from a result document or a bare coefficient object.
pub fn read_coefficients(path: &Path) -> Result<PolicyCoefficients> {
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let node = value.pointer("/result/policy/coefficients").cloned().unwrap_or(value);
    if node.is_null() {
        return Err(Error::Config(format!("{} holds no rule coefficients", path.display())));
    }
    serde_json::from_value(node).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Runs one command; returns the paths written.
pub fn run(command: &Command, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    if let Some(t) = cfg.threads {
        par::set_threads(t);
    }
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let echo = out.join(CONFIG_ECHO);
    fs::write(&echo, cfg.to_toml()?)?;
    written.push(echo);

    match command {
        Command::Estimate => {
            let ds = load_data(cfg)?;
            let fpt = cfg.fpt_config();
            let est = estimate(&ds, &fpt.estimation, fpt.seed)?;
            let result = fair_policy_targeting_with(&ds, &est, &fpt)?;
            let path = out.join(RESULT_FILE);
            write_json(&path, &ResultDocument { command: command.name(), config: cfg, result: &result })?;
            written.push(path);
            let path = out.join(FRONTIER_FILE);
            crate::frontier::write_frontier_csv(&result.frontier, fs::File::create(&path)?)?;
            written.push(path);
        }
        Command::Frontier => {
            let ds = load_data(cfg)?;
            let fpt = cfg.fpt_config();
            let est = estimate(&ds, &fpt.estimation, fpt.seed)?;
            let grid = build_grid(ds.n(), fpt.frontier.grid);
            let set = build_frontier_constraints(
                &ds,
                &est.scores,
                &grid,
                &fpt.class,
                fpt.frontier.resolved_lambda(ds.n()),
                &fpt.solver,
            )?;
            let path = out.join(FRONTIER_FILE);
            set.write_csv(fs::File::create(&path)?)?;
            written.push(path);
        }
        Command::Simulate => {
            let sim = &cfg.simulate;
            let dgp = make_calibrated_dgp(&sim.dgp, sim.dgp_seed)?;
            let mut fpt = cfg.fpt_config();
            if fpt.class.capacity.is_none() {
                fpt.class.capacity = sim.capacity_fraction.map(Capacity::Fraction);
            }
            let summary = run_replications(&dgp, sim.n, sim.replications, &sim.methods(), &fpt, cfg.seed)?;
            let path = out.join(SUMMARY_FILE);
            summary.write_csv(fs::File::create(&path)?)?;
            written.push(path);
        }
        Command::Evaluate { .. } => {
            let path = cfg
                .evaluate
                .coefficients
                .as_ref()
                .ok_or_else(|| Error::Config("evaluate needs coefficients (set `evaluate.coefficients`)".into()))?;
            let coefficients = read_coefficients(path)?;
            let ds = load_data(cfg)?;
            if coefficients.covariates.len() != ds.p() {
                return Err(Error::DimensionMismatch(format!(
                    "rule has {} covariate coefficients, data has {} covariates",
                    coefficients.covariates.len(),
                    ds.p()
                )));
            }
            let est = estimate(&ds, &cfg.estimation, cfg.seed)?;
            let pv = PolicyValues::from_rule(&ds, coefficients.clone());
            let inputs = MeasureInputs { ds: &ds, nuisance: &est.nuisance, scores: &est.scores };
            let measure = cfg.measure();
            let report = evaluate_policy(&inputs, &pv, measure.envy_second_term);
            let doc = EvaluationDocument {
                command: command.name(),
                config: cfg,
                coefficients: &coefficients,
                measure: measure.label(),
                unfairness: measure.evaluate(&inputs, &pv).ok(),
                report: &report,
            };
            let path = out.join(EVALUATION_FILE);
            write_json(&path, &doc)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = resolve_config(&cli).and_then(|cfg| run(&cli.command, &cfg));
    match outcome {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
