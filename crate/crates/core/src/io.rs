//! Plain-text persistence: CSV tables with round-trip float formatting and
//! JSON sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // keep the sign of -0.0 out of the output
        return "0.0000000000000000e0".to_string();
    }
    format!("{x:.16e}")
}

/// Accumulates CSV rows in memory; written in one go so output is atomic per file.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    buf: String,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self { buf }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match c {
                Cell::F(x) => self.buf.push_str(&fmt_f64(*x)),
                Cell::I(n) => write!(self.buf, "{n}").unwrap(),
                Cell::U(n) => write!(self.buf, "{n}").unwrap(),
                Cell::S(s) => self.buf.push_str(s),
            }
        }
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, &self.buf)?;
        Ok(())
    }
}

/// One CSV field.
#[derive(Debug, Clone)]
pub enum Cell {
    F(f64),
    I(i64),
    U(u64),
    S(String),
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}
