use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::svg::Plot;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "stablab-report-v1";

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Table {
            file: file.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Float formatting used in every table, so reruns are byte-identical.
pub fn num(v: f64) -> String {
    format!("{v:.12e}")
}

/// One named pass/fail criterion of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, target: impl Into<String>, pass: bool) -> Self {
        Check {
            name: name.into(),
            value,
            target: target.into(),
            pass,
        }
    }

    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Check::new(name, value, format!("<= {limit:e}"), value <= limit)
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Check::new(name, value, format!(">= {limit:e}"), value >= limit)
    }

    pub fn within(name: &str, value: f64, band: (f64, f64)) -> Self {
        Check::new(
            name,
            value,
            format!("in [{}, {}]", band.0, band.1),
            value >= band.0 && value <= band.1,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    ConfigError,
    NumericalFailure,
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::ConfigError => 2,
            Status::NumericalFailure => 3,
        }
    }

    pub fn of_error(e: &Error) -> Status {
        match e {
            Error::Config(_) | Error::InvalidGrid(_) | Error::InvalidParams(_) => Status::ConfigError,
            Error::Io(_) => Status::ConfigError,
            _ => Status::NumericalFailure,
        }
    }
}

/// Output of one experiment before it is written to disk.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub checks: Vec<Check>,
    /// Checks that are reported but do not decide the exit status.
    pub exploratory: Vec<Check>,
    pub summary: serde_json::Map<String, Value>,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    /// Extra files written verbatim, as `(file name, contents)`.
    pub raw: Vec<(String, String)>,
    pub notes: Vec<String>,
}

impl Artifacts {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().chain(&self.exploratory).find(|c| c.name == name)
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(
            key.into(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    pub fn status(&self) -> Status {
        if self.pass() {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<String>,
    pub config: Value,
    pub config_sha256: String,
    pub seed: u64,
    pub files: Vec<String>,
    pub wall_seconds: f64,
    pub threads: usize,
}

/// `sha256` of the canonical JSON text of `config`.
pub fn config_hash(config: &Value) -> String {
    let text = serde_json::to_string(config).unwrap_or_default();
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn write(dir: &Path, name: &str, contents: &str, files: &mut Vec<String>) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    files.push(name.to_string());
    Ok(())
}

/// Write tables, `summary.json`, plots and `manifest.json` under `dir`.
/// Returns the manifest path.
pub fn emit_report(
    dir: &Path,
    experiment: &str,
    config: &Value,
    seed: u64,
    outcome: std::result::Result<&Artifacts, &Error>,
    wall_seconds: f64,
    threads: usize,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let (status, error) = match outcome {
        Ok(art) => {
            for t in &art.tables {
                write(dir, &t.file, &t.to_csv(), &mut files)?;
            }
            for p in &art.plots {
                if let Some(svg) = p.render() {
                    write(dir, &p.file, &svg, &mut files)?;
                }
            }
            for (name, text) in &art.raw {
                write(dir, name, text, &mut files)?;
            }
            let summary = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "experiment": experiment,
                "pass": art.pass(),
                "checks": art.checks,
                "exploratory": art.exploratory,
                "notes": art.notes,
                "results": art.summary,
            });
            write(dir, "summary.json", &serde_json::to_string_pretty(&summary)?, &mut files)?;
            (art.status(), None)
        }
        Err(e) => (Status::of_error(e), Some(e.to_string())),
    };
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION.into(),
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: experiment.into(),
        status,
        exit_code: status.exit_code(),
        error,
        config: config.clone(),
        config_sha256: config_hash(config),
        seed,
        files,
        wall_seconds,
        threads,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::svg::{Axis, Series};

    #[test]
    fn header_only_table() {
        let t = Table::new("x.csv", &["a", "b"]);
        assert_eq!(t.to_csv(), "a,b\n");
    }

    #[test]
    fn writes_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut art = Artifacts::default();
        let mut t = Table::new("series.csv", &["t", "y"]);
        t.push(vec![num(0.0), num(1.0)]);
        art.tables.push(t);
        art.plots.push(Plot {
            file: "series.svg".into(),
            title: "y".into(),
            x_label: "t".into(),
            y_label: "y".into(),
            x_axis: Axis::Linear,
            y_axis: Axis::Linear,
            series: vec![Series {
                name: "y".into(),
                points: vec![(0.0, 1.0), (1.0, 2.0)],
            }],
        });
        art.plots.push(Plot {
            file: "empty.svg".into(),
            series: vec![],
            ..art.plots[0].clone()
        });
        art.checks.push(Check::at_most("c", 1.0, 2.0));
        let cfg = serde_json::json!({"a": 1});
        let m = emit_report(dir.path(), "demo", &cfg, 7, Ok(&art), 0.0, 1).unwrap();
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(m).unwrap()).unwrap();
        assert_eq!(manifest.files, vec!["series.csv", "series.svg", "summary.json"]);
        assert_eq!(manifest.exit_code, 0);
        assert!(!dir.path().join("empty.svg").exists());
    }

    #[test]
    fn manifest_written_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let err = Error::NonFinite { t: 1.0 };
        let m = emit_report(dir.path(), "demo", &Value::Null, 0, Err(&err), 0.0, 1).unwrap();
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(m).unwrap()).unwrap();
        assert_eq!(manifest.exit_code, 3);
        assert!(manifest.files.is_empty());
    }
}
