//! On-disk artifacts: number formatting, CSV tables and JSON documents.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Formats a double with 17 significant digits (round-trip exact).
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        // keep "0" readable and sign-stable
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return x.to_string();
    }
    format!("{x:.16e}")
}

/// Writes a CSV file with the given header and rows of numbers.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let emit = || -> std::io::Result<()> {
        writeln!(out, "{}", header.join(","))?;
        for row in rows {
            let cells: Vec<String> = row.into_iter().map(fmt17).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        out.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Writes pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs `f` against a buffered writer on `path`.
pub fn with_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    f(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}
