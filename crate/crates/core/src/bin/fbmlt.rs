use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fbm_localtime::experiment::{run, Command, RunOptions};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    Localtime,
    Verify,
    Scaling,
    Converge,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Localtime => Command::Localtime,
            Cmd::Verify => Command::Verify,
            Cmd::Scaling => Command::Scaling,
            Cmd::Converge => Command::Converge,
        }
    }
}

/// Fractional Brownian motion local-time experiments.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    command: Cmd,
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Write wall_ms = 0 so reports are byte-identical across runs.
    #[arg(long)]
    fixed_timestamp: bool,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let opts = RunOptions {
        workers: args.workers,
        fixed_timestamp: args.fixed_timestamp,
    };
    ExitCode::from(run(args.command.into(), &args.config, &args.out, &opts) as u8)
}
