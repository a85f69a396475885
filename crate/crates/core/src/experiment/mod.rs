//! Experiment runner behind the `fbmlt` binary.
//!
//! A run reads a strict JSON config, validates it, computes, and writes
//! `report.json` plus CSV/SVG artifacts into the output directory. Exit codes:
//! 0 when every check passes, 1 when a check fails (the report is still
//! written), 2 on a configuration, IO or numerical error.

mod commands;
mod config;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

pub use commands::expected_local_time;
pub use config::{
    ConvergeConfig, FieldCheckConfig, LocaltimeConfig, MeanCheckConfig, ModulusConfig, OccupationCheckConfig, PathLevelConfig,
    ScalingConfig, SimulateConfig, VerifyConfig,
};

use crate::artifacts::write_json;
use crate::error::{Error, Result};
use crate::report::{ExperimentReport, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Localtime,
    Verify,
    Scaling,
    Converge,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::Simulate,
        Command::Localtime,
        Command::Verify,
        Command::Scaling,
        Command::Converge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Localtime => "localtime",
            Command::Verify => "verify",
            Command::Scaling => "scaling",
            Command::Converge => "converge",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config("command", format!("unknown command `{s}`")))
    }
}

/// A parsed, command-specific configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Config {
    Simulate(SimulateConfig),
    Localtime(LocaltimeConfig),
    Verify(VerifyConfig),
    Scaling(ScalingConfig),
    Converge(ConvergeConfig),
}

impl Config {
    pub fn default_for(command: Command) -> Self {
        match command {
            Command::Simulate => Config::Simulate(SimulateConfig::default()),
            Command::Localtime => Config::Localtime(LocaltimeConfig::default()),
            Command::Verify => Config::Verify(VerifyConfig::default()),
            Command::Scaling => Config::Scaling(ScalingConfig::default()),
            Command::Converge => Config::Converge(ConvergeConfig::default()),
        }
    }

    pub fn command(&self) -> Command {
        match self {
            Config::Simulate(_) => Command::Simulate,
            Config::Localtime(_) => Command::Localtime,
            Config::Verify(_) => Command::Verify,
            Config::Scaling(_) => Command::Scaling,
            Config::Converge(_) => Command::Converge,
        }
    }

    /// Parses and validates a config document for `command`.
    pub fn parse(command: Command, text: &str) -> Result<Self> {
        let cfg = match command {
            Command::Simulate => Config::Simulate(config::parse(text)?),
            Command::Localtime => Config::Localtime(config::parse(text)?),
            Command::Verify => Config::Verify(config::parse(text)?),
            Command::Scaling => Config::Scaling(config::parse(text)?),
            Command::Converge => Config::Converge(config::parse(text)?),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(command: Command, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(command, &text)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Config::Simulate(c) => c.validate(),
            Config::Localtime(c) => c.validate(),
            Config::Verify(c) => c.validate(),
            Config::Scaling(c) => c.validate(),
            Config::Converge(c) => c.validate(),
        }
    }

    /// The config as a JSON document, including `schema_version`.
    pub fn to_document(&self) -> Result<serde_json::Value> {
        match self {
            Config::Simulate(c) => config::to_document(c),
            Config::Localtime(c) => config::to_document(c),
            Config::Verify(c) => config::to_document(c),
            Config::Scaling(c) => config::to_document(c),
            Config::Converge(c) => config::to_document(c),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    /// Report `wall_ms = 0` so reports are byte-comparable.
    pub fixed_timestamp: bool,
}

/// Runs a validated config, writes artifacts and `report.json` into `out_dir`.
pub fn execute(cfg: &Config, out_dir: &Path, opts: &RunOptions) -> Result<ExperimentReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let start = Instant::now();
    let compute = || match cfg {
        Config::Simulate(c) => commands::simulate(c, out_dir),
        Config::Localtime(c) => commands::localtime(c, out_dir),
        Config::Verify(c) => commands::verify(c, out_dir),
        Config::Scaling(c) => commands::scaling(c, out_dir),
        Config::Converge(c) => commands::converge(c, out_dir),
    };
    let outcome = match opts.workers {
        Some(n) => {
            if n == 0 {
                return Err(Error::config("workers", "must be >= 1"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("workers", e.to_string()))?
                .install(compute)?
        }
        None => compute()?,
    };
    let wall_ms = if opts.fixed_timestamp {
        0
    } else {
        start.elapsed().as_millis() as u64
    };
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cfg.command().name().to_string(),
        config: cfg.to_document()?,
        seed_ledger: outcome.seed_ledger,
        checks: outcome.checks,
        statistics: outcome.statistics,
        artifacts: outcome.artifacts,
        notes: outcome.notes,
        wall_ms,
    };
    write_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}

/// Loads, runs and reports; returns the process exit code.
pub fn run(command: Command, config_path: &Path, out_dir: &Path, opts: &RunOptions) -> i32 {
    let result = Config::load(command, config_path).and_then(|cfg| execute(&cfg, out_dir, opts));
    match result {
        Ok(report) => {
            for c in &report.checks {
                eprintln!("{} {}: statistic {:.6e} threshold {:.6e}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.statistic, c.threshold);
            }
            if report.all_pass() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
