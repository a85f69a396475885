//! Runs the `verify` experiment through the library and prints its checks.
//!
//! cargo run --example run_experiment -- out/verify

use std::path::PathBuf;

use fbm_localtime::experiment::{execute, Command, Config, RunOptions};

fn main() -> fbm_localtime::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/verify".into()));
    let cfg = Config::default_for(Command::Verify);
    let report = execute(&cfg, &out, &RunOptions::default())?;
    for c in &report.checks {
        println!("{:<32} {} statistic {:.4e}", c.name, if c.pass { "pass" } else { "FAIL" }, c.statistic);
    }
    println!("report written to {}", out.join("report.json").display());
    Ok(())
}
