//! Run reports and their file output.
//!
//! Reals in CSV are written in shortest round-trip exponent form (`{:e}`),
//! which is locale-free and bit-stable across runs.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::{Pipeline, ScenarioConfig};
use crate::RunError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) => format!("{x:e}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Real(x) => Some(*x),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

/// One CSV file: fixed header, rows in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Table { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    pub fn to_csv(&self) -> Result<String, RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| RunError::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| RunError::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub version: &'static str,
    pub pipeline: Pipeline,
    pub config: ScenarioConfig,
    /// One JSON object per sample, each tagged with its producing backend.
    pub records: Vec<Value>,
    pub summary: Value,
    pub diagnostics: Value,
    pub wall_time_s: f64,
    /// `Some(false)` when a check built into the run failed.
    pub passed: Option<bool>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl RunReport {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes `<name>.csv` for each table and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        for t in &self.tables {
            fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv()?).map_err(io)?;
        }
        let json = serde_json::to_string_pretty(self).map_err(|e| RunError::Io(e.to_string()))?;
        fs::write(dir.join("report.json"), json + "\n").map_err(io)?;
        Ok(())
    }
}
