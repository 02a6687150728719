//! Experiment runner for the fsobolev library: configuration, the registry
//! of named experiments and report serialization.

pub mod config;
pub mod experiments;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use config::{ExperimentConfig, Format};
use report::RunReport;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "FSOBOLEV_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown experiment `{0}` (see `fsobolev list`)")]
    UnknownExperiment(String),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 3,
            _ => 2,
        }
    }
}

pub fn list_experiments() -> Vec<(&'static str, &'static str)> {
    experiments::EXPERIMENTS.to_vec()
}

/// Runs a validated config. Library errors other than numerical failures
/// are reported as invalid configs; nothing is written in that case.
pub fn run(name: &str, cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    if experiments::describe(name).is_none() {
        return Err(CliError::UnknownExperiment(name.into()));
    }
    if let Some(n) = &cfg.experiment {
        if n != name {
            return Err(CliError::Config(format!("config names experiment `{n}` but `{name}` was requested")));
        }
    }
    cfg.validate()?;
    let start = Instant::now();
    let manifold = cfg.manifold.as_ref().map(|m| m.to_string()).unwrap_or_else(|| "default".into());
    let (rows, numerical, normalization) = match experiments::plan(name, cfg) {
        Ok(plan) => {
            let (rows, numerical) =
                experiments::execute(&plan.instances, name, &manifold).map_err(|e| CliError::Config(e.to_string()))?;
            (rows, numerical, plan.normalization)
        }
        Err(e) if e.is_numerical() => {
            let row = report::Row {
                experiment: name.into(),
                manifold,
                s: None,
                p: None,
                q: None,
                extra: format!("setup;error={e}"),
                lhs: f64::NAN,
                rhs: f64::NAN,
                deficit: f64::NAN,
                err_est: f64::NAN,
                pass: false,
            };
            (vec![row], true, vec![])
        }
        Err(e) => return Err(CliError::Config(e.to_string())),
    };
    Ok(RunReport {
        experiment: name.into(),
        version: fsobolev::VERSION.into(),
        config: cfg.clone(),
        normalization,
        rows,
        numerical_failure: numerical,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Output path and format after applying command-line overrides.
pub fn resolve_output(
    cfg: &ExperimentConfig,
    out: Option<PathBuf>,
    format: Option<Format>,
) -> (Option<PathBuf>, Format) {
    let out = out.or_else(|| cfg.out.clone());
    let format = format.or(cfg.format).unwrap_or_else(|| match out.as_ref().and_then(|p| p.extension()) {
        Some(e) if e == "json" => Format::Json,
        _ => Format::Csv,
    });
    (out, format)
}

/// Worker count: flag, then environment, then rayon's default.
pub fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}={v} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}
