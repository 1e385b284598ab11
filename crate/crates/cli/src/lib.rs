//! Command-line front end for the nonlocal diffusion laboratory: strict
//! config parsing, experiment orchestration, and CSV/JSON emission.

pub mod commands;
pub mod config;
pub mod formats;
pub mod parallel;

use std::fmt;

/// CLI errors carry the process exit code: 2 for configuration problems,
/// 3 for numeric failures during a run.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Entry point shared by the binary and the integration tests.
pub fn run_cli(args: &[String]) -> CliResult<()> {
    let usage = "usage: nlplab <eigen|minimizers|evolve|pinf> --config PATH \
                 [--out DIR] [--seed N] [--threads N]";
    if args.is_empty() {
        return Err(CliError::Config(usage.into()));
    }
    let command = args[0].as_str();
    let mut config_path: Option<String> = None;
    let mut out_dir: Option<String> = None;
    let mut seed: Option<u64> = None;
    let mut threads: Option<usize> = None;
    let mut it = args[1..].iter();
    while let Some(flag) = it.next() {
        let mut take = |name: &str| -> CliResult<String> {
            it.next()
                .cloned()
                .ok_or_else(|| CliError::Config(format!("{name} needs a value")))
        };
        match flag.as_str() {
            "--config" => config_path = Some(take("--config")?),
            "--out" => out_dir = Some(take("--out")?),
            "--seed" => {
                let v = take("--seed")?;
                seed = Some(
                    v.parse()
                        .map_err(|_| CliError::Config(format!("bad --seed value {v}")))?,
                );
            }
            "--threads" => {
                let v = take("--threads")?;
                threads = Some(
                    v.parse()
                        .map_err(|_| CliError::Config(format!("bad --threads value {v}")))?,
                );
            }
            other => return Err(CliError::Config(format!("unknown flag {other}\n{usage}"))),
        }
    }
    let path =
        config_path.ok_or_else(|| CliError::Config(format!("--config is required\n{usage}")))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?;
    let mut cfg = config::ExperimentConfig::parse(&text)?;
    cfg.apply_overrides(out_dir, seed, threads);
    match command {
        "eigen" => commands::cmd_eigen(&cfg),
        "minimizers" => commands::cmd_minimizers(&cfg),
        "evolve" => commands::cmd_evolve(&cfg),
        "pinf" => commands::cmd_pinf(&cfg),
        other => Err(CliError::Config(format!(
            "unknown command {other}\n{usage}"
        ))),
    }
}
