//! CSV and JSON emission. CSVs open with a `# generated` comment line, the
//! only part of any output that differs between identical runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use wigner_core::checkpoint::write_atomic;

use crate::error::CliError;

pub const TIMESTAMP_PREFIX: &str = "# generated ";

/// Round-trip exact: 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        Self::with_stamp(header, &stamp)
    }

    fn with_stamp(header: &[&str], stamp: &str) -> Self {
        let mut text = format!("{TIMESTAMP_PREFIX}{stamp}\n");
        text.push_str(&header.join(","));
        text.push('\n');
        Self {
            text,
            columns: header.len(),
        }
    }

    /// Appends one row of already formatted cells.
    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        assert_eq!(cells.len(), self.columns, "csv row width");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(c.as_ref());
        }
        self.text.push('\n');
    }

    pub fn numbers(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
        self.row(&cells);
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, self.text.as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write_atomic(path, bytes).map_err(CliError::from)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Drops the timestamp line so two outputs can be compared.
pub fn strip_timestamp(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines().filter(|l| !l.starts_with(TIMESTAMP_PREFIX)) {
        let _ = writeln!(out, "{line}");
    }
    out
}
