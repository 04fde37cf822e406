//! Result tables, CSV bodies and the JSON envelope.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use super::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    /// Floats keep 17 significant digits so they round-trip exactly.
    pub fn render(&self) -> String {
        match self {
            Cell::Float(x) if x.is_nan() => "NaN".into(),
            Cell::Float(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Float(x) => Some(*x),
            Cell::Int(n) => Some(*n as f64),
            Cell::Text(_) => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Float(x) => serde_json::Number::from_f64(*x)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            Cell::Int(n) => json!(n),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// Rows in grid order under a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the header"
        );
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    /// Numeric values of `name`, one per row.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r[i].as_f64().unwrap_or(f64::NAN))
                .collect(),
        )
    }

    pub fn text_column(&self, name: &str) -> Option<Vec<String>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i].render()).collect())
    }

    /// UTF-8, LF line endings, header first.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))
                .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    fn records(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let mut m = Map::new();
                    for (c, v) in self.columns.iter().zip(r) {
                        m.insert((*c).to_string(), v.to_json());
                    }
                    Value::Object(m)
                })
                .collect(),
        )
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// A finished run: the table plus every warning raised while computing it.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub table: Table,
    pub warnings: Vec<String>,
}

/// Envelope with config echo, hash, version, seed and warnings. With
/// `OutputFormat::Json` the rows are embedded; otherwise the envelope names
/// the CSV file that holds them.
pub fn envelope(cfg: &ExperimentConfig, out: &RunOutput, data_file: Option<&str>) -> Value {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut v = json!({
        "tool": "prepbias",
        "version": crate::VERSION,
        "experiment": cfg.experiment.name(),
        "config": cfg,
        "config_sha256": cfg.hash(),
        "master_seed": cfg.master_seed,
        "created_unix": created,
        "warnings": out.warnings,
        "columns": out.table.columns,
    });
    match data_file {
        Some(f) => v["data_file"] = json!(f),
        None => v["rows"] = out.table.records(),
    }
    v
}

/// Writes the CSV (if requested) and the envelope under `dir`; returns the
/// written paths.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = cfg.experiment.file_stem();
    let mut written = Vec::new();
    let data_file = match cfg.format {
        OutputFormat::Csv => {
            let name = format!("{stem}.csv");
            let path = dir.join(&name);
            std::fs::write(&path, out.table.to_csv()?)?;
            written.push(path);
            Some(name)
        }
        OutputFormat::Json => None,
    };
    let env = envelope(cfg, out, data_file.as_deref());
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&env).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&path, text + "\n")?;
    written.push(path);
    Ok(written)
}
