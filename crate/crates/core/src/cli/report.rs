//! Report assembly and deterministic CSV/JSON emission.
//!
//! CSV cells use fixed 17-significant-digit scientific notation so that
//! identical inputs always produce byte-identical files; flagged
//! (singular-endpoint) cells are emitted as empty fields. Files are
//! written atomically: the content goes to a sibling temporary file which
//! is then renamed over the target.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::fracops::{Grid, GridFunction};

use super::CliError;

/// Output format for report emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(name: &str) -> Result<Format, CliError> {
        match name {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Validation(format!(
                "unknown format `{other}` (expected csv or json)"
            ))),
        }
    }
}

/// One named data series; `None` marks a flagged cell.
#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

/// Tabular report: a `t` column, named series, and JSON metadata.
#[derive(Debug, Clone)]
pub struct Report {
    columns: Vec<Column>,
    metadata: Map<String, Value>,
}

/// Fixed 17-significant-digit decimal formatting.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

impl Report {
    /// Starts a report with the node coordinates as the first column.
    pub fn new(grid: Grid) -> Report {
        let t = Column {
            name: "t".to_string(),
            values: grid.nodes().map(Some).collect(),
        };
        Report {
            columns: vec![t],
            metadata: Map::new(),
        }
    }

    fn rows(&self) -> usize {
        self.columns[0].values.len()
    }

    /// Appends a grid-function series; flagged nodes become empty cells.
    pub fn push_series(&mut self, name: &str, f: &GridFunction) {
        let values = f
            .values()
            .iter()
            .zip(f.flags())
            .map(|(&v, &flagged)| if flagged { None } else { Some(v) })
            .collect();
        self.push_column(name, values);
    }

    /// Appends a raw column; the length must match the `t` column.
    pub fn push_column(&mut self, name: &str, values: Vec<Option<f64>>) {
        assert_eq!(values.len(), self.rows(), "column length mismatch");
        self.columns.push(Column {
            name: name.to_string(),
            values,
        });
    }

    /// Records a metadata entry for the companion JSON document.
    pub fn meta(&mut self, key: &str, value: Value) {
        self.metadata.insert(key.to_string(), value);
    }

    pub fn metadata(&self) -> &Map<String, Value> {
        &self.metadata
    }

    /// Serializes the data table as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for row in 0..self.rows() {
            for (k, col) in self.columns.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                if let Some(v) = col.values[row] {
                    let _ = write!(out, "{}", fmt17(v));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Serializes metadata and columns as one JSON document.
    pub fn to_json(&self) -> String {
        let columns: Vec<Value> = self
            .columns
            .iter()
            .map(|c| {
                json!({
                    "name": c.name,
                    "values": c.values,
                })
            })
            .collect();
        let doc = json!({
            "metadata": Value::Object(self.metadata.clone()),
            "columns": columns,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serialization");
        text.push('\n');
        text
    }

    /// Writes the report. With a path, CSV output also gets a sibling
    /// `<stem>.meta.json` metadata file; without a path the table goes to
    /// standard output and, unless `quiet`, the metadata to standard
    /// error.
    pub fn write(
        &self,
        path: Option<&Path>,
        format: Format,
        quiet: bool,
    ) -> Result<(), CliError> {
        match path {
            Some(path) => {
                match format {
                    Format::Csv => {
                        write_atomic(path, self.to_csv().as_bytes())?;
                        let meta = meta_path(path);
                        let mut text = serde_json::to_string_pretty(&Value::Object(
                            self.metadata.clone(),
                        ))
                        .expect("metadata serialization");
                        text.push('\n');
                        write_atomic(&meta, text.as_bytes())?;
                    }
                    Format::Json => write_atomic(path, self.to_json().as_bytes())?,
                }
                if !quiet {
                    eprintln!("wrote {}", path.display());
                }
            }
            None => {
                let text = match format {
                    Format::Csv => self.to_csv(),
                    Format::Json => self.to_json(),
                };
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(text.as_bytes())
                    .map_err(|e| CliError::Numeric(format!("writing standard output: {e}")))?;
                if format == Format::Csv && !quiet && !self.metadata.is_empty() {
                    let meta = serde_json::to_string_pretty(&Value::Object(
                        self.metadata.clone(),
                    ))
                    .expect("metadata serialization");
                    eprintln!("{meta}");
                }
            }
        }
        Ok(())
    }
}

/// Companion metadata path: `out.csv` -> `out.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let io_err = |stage: &str, e: std::io::Error| {
        CliError::Validation(format!("{stage} {}: {e}", path.display()))
    };
    fs::write(&tmp, bytes).map_err(|e| io_err("writing", e))?;
    fs::rename(&tmp, path).map_err(|e| io_err("renaming temporary file for", e))
}
