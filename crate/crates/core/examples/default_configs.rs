//! Writes the default config of every command as `<dir>/<command>.json`.
//!
//! cargo run --example default_configs -- crates/core/configs

use std::path::PathBuf;

use fbm_localtime::artifacts::write_json;
use fbm_localtime::experiment::{Command, Config};

fn main() -> fbm_localtime::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "configs".into()));
    std::fs::create_dir_all(&dir).map_err(|e| fbm_localtime::Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    for cmd in Command::ALL {
        let path = dir.join(format!("{cmd}.json"));
        write_json(&path, &Config::default_for(cmd).to_document()?)?;
        println!("{}", path.display());
    }
    Ok(())
}
