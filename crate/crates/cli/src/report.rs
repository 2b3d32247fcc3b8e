use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// A plot-ready numeric table written as `<name>.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when value <= tolerance.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    /// Passes when |value - target| <= tolerance; `value` records the deviation.
    pub fn near(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        let dev = (value - target).abs();
        Check {
            name: name.into(),
            value: dev,
            tolerance,
            passed: dev <= tolerance,
        }
    }

    pub fn failed(name: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            value: f64::NAN,
            tolerance: f64::NAN,
            passed: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    CheckFailed,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub config_hash: String,
    pub library_version: String,
    pub harness_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub seed: u64,
    pub cutoff: usize,
    pub margin: Option<usize>,
    pub operator: Option<String>,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
    pub files: Vec<String>,
    pub status: Status,
    pub error: Option<String>,
}

pub fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes every table and `report.json` into `dir`.
pub fn write(dir: &Path, report: &mut Report, tables: &[Table]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    report.files.clear();
    for t in tables {
        let file = format!("{}.csv", t.name);
        let body = t.to_csv().map_err(std::io::Error::other)?;
        std::fs::write(dir.join(&file), body)?;
        report.files.push(file);
    }
    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("report.json"), json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_and_roundtrips() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push([num(0.1), "d1^2 + U1, x".to_string()]);
        let s = t.to_csv().unwrap();
        assert_eq!(s, "a,b\n1e-1,\"d1^2 + U1, x\"\n");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn checks() {
        assert!(Check::at_most("e", 1e-11, 1e-10).passed);
        assert!(!Check::at_most("e", f64::NAN, 1e-10).passed);
        let c = Check::near("slope", -0.97, -1.0, 0.05);
        assert!(c.passed && (c.value - 0.03).abs() < 1e-12);
    }
}
