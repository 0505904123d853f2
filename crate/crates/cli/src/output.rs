//! Deterministic result-file emission: CSV tables and JSON manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// Format with 12 significant digits in plain decimal notation. Deterministic,
/// so reruns produce byte-identical files.
pub fn format_sig(value: f64, significant: usize) -> String {
    if !value.is_finite() {
        return if value.is_nan() {
            "nan".into()
        } else if value > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if value == 0.0 {
        return "0".into();
    }
    let exponent = value.abs().log10().floor() as i32;
    let decimals = (significant as i32 - 1 - exponent).max(0) as usize;
    format!("{value:.decimals$}")
}

pub fn format_float(value: f64) -> String {
    format_sig(value, 12)
}

/// A CSV table with a fixed header; every row must match the column count.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width {} does not match header width {}",
            row.len(),
            self.header.len()
        );
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: Vec<Vec<String>>) {
        for row in rows {
            self.push(row);
        }
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// CSV fields must not carry separators or newlines; error messages get them
/// replaced.
pub fn sanitize_field(text: &str) -> String {
    text.replace([',', '\n', '\r'], ";")
}

pub fn write_text(dir: &Path, name: &str, content: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}
