//! CSV and JSON writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Format;
use crate::error::CliError;

/// Numeric table written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Everything one run produces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Artifacts {
    /// File stem and pretty-printed JSON document.
    pub json: Option<(String, String)>,
    pub tables: Vec<Table>,
}

impl Artifacts {
    pub fn with_json<T: Serialize>(stem: &str, value: &T) -> Self {
        Self {
            json: Some((stem.to_string(), to_json(value))),
            tables: Vec::new(),
        }
    }
}

/// Pretty JSON with keys in struct declaration order and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    text
}

/// 17 significant digits in scientific notation.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(table: &Table, dir: &Path) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{}.csv", table.name));
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(&table.columns)
        .map_err(|e| csv_error(&path, e))?;
    for row in &table.rows {
        w.write_record(row.iter().map(|&x| format_number(x)))
            .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    CliError::io(path, source)
}

/// Writes the requested formats into `dir`, creating it if needed, and
/// returns the written paths.
pub fn emit(
    artifacts: &Artifacts,
    formats: &[Format],
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    if formats.contains(&Format::Json) {
        if let Some((stem, text)) = &artifacts.json {
            let path = dir.join(format!("{stem}.json"));
            fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
        }
    }
    if formats.contains(&Format::Csv) {
        for table in &artifacts.tables {
            written.push(write_csv(table, dir)?);
        }
    }
    Ok(written)
}
