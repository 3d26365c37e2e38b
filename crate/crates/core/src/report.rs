//! Run reports: schema-versioned JSON plus a flat CSV whose only
//! run-dependent content is the leading `#` metadata line.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::Result;
use crate::trace_ext::InequalityReport;

pub const SCHEMA_VERSION: u32 = 1;

/// One checked quantity. `lhs` is the measured value and `rhs` the bound or
/// tolerance it is held to; `property` states the relation being checked.
/// Unbounded `rhs` is written as `inf` in CSV and `null` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub check: String,
    pub property: String,
    pub n: usize,
    pub m: usize,
    pub s: Option<f64>,
    pub p: Option<f64>,
    pub beta: Option<f64>,
    pub grid: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub passed: bool,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

impl Row {
    /// `value ≤ bound`.
    pub fn at_most(check: &str, property: &str, n: usize, m: usize, value: f64, bound: f64) -> Self {
        Row {
            check: check.to_string(),
            property: property.to_string(),
            n,
            m,
            s: None,
            p: None,
            beta: None,
            grid: None,
            lhs: value,
            rhs: bound,
            ratio: ratio(value, bound),
            passed: value <= bound,
        }
    }

    /// `value ≥ bound`.
    pub fn at_least(check: &str, property: &str, n: usize, m: usize, value: f64, bound: f64) -> Self {
        Row {
            passed: value >= bound,
            ..Row::at_most(check, property, n, m, value, bound)
        }
    }

    /// Informational value; passes when finite.
    pub fn finite(check: &str, property: &str, n: usize, m: usize, value: f64) -> Self {
        Row {
            rhs: f64::INFINITY,
            ratio: 0.0,
            passed: value.is_finite(),
            ..Row::at_most(check, property, n, m, value, f64::INFINITY)
        }
    }

    /// A ratio row; passes when the ratio is finite.
    pub fn inequality(check: &str, property: &str, r: &InequalityReport) -> Self {
        Row {
            check: check.to_string(),
            property: property.to_string(),
            n: r.n,
            m: r.m,
            s: Some(r.s),
            p: Some(r.p),
            beta: Some(r.beta),
            grid: Some(r.grid),
            lhs: r.lhs,
            rhs: r.rhs,
            ratio: r.ratio,
            passed: r.ratio.is_finite() && r.rhs >= 0.0,
        }
    }

    pub fn with_params(mut self, s: f64, p: f64, beta: Option<f64>) -> Self {
        self.s = Some(s);
        self.p = Some(p);
        self.beta = beta;
        self
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = Some(grid);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub scenario: String,
    pub command: String,
    pub seed: u64,
    pub generated_at: u64,
    pub rows: Vec<Row>,
    /// Module errors that aborted a check, as `check: message`.
    pub errors: Vec<String>,
}

impl Report {
    pub fn new(scenario: &str, command: &str, seed: u64) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: scenario.to_string(),
            command: command.to_string(),
            seed,
            generated_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            rows: Vec::new(),
            errors: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: Report) {
        self.rows.extend(other.rows);
        self.errors.extend(other.errors);
    }

    pub fn record_error(&mut self, check: &str, err: impl std::fmt::Display) {
        self.errors.push(format!("{check}: {err}"));
    }

    pub fn passed(&self) -> bool {
        self.errors.is_empty() && self.rows.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| !r.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV body without the metadata line.
    pub fn csv_body(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| crate::Error::Format(e.to_string()))
    }

    pub fn to_csv(&self) -> Result<String> {
        Ok(format!(
            "# scenario={} command={} seed={} schema_version={} generated_at={}\n{}",
            self.scenario,
            self.command,
            self.seed,
            self.schema_version,
            self.generated_at,
            self.csv_body()?
        ))
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::File::create(dir.join("report.json"))?.write_all(self.to_json()?.as_bytes())?;
        std::fs::File::create(dir.join("report.csv"))?.write_all(self.to_csv()?.as_bytes())?;
        Ok(())
    }
}

/// Strips `#` metadata lines from a CSV report.
pub fn csv_without_metadata(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
