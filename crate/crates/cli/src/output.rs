//! CSV curves, JSON summary and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("refusing to serialize non-finite value in {file}, column '{column}', row {row}")]
    NonFinite {
        file: String,
        column: String,
        row: usize,
    },
    #[error("curve {0}: row width does not match header")]
    Ragged(String),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// One table of plot data. `None` cells are written empty (value undefined).
#[derive(Clone, Debug)]
pub struct Curve {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Curve {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Curve {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row.into_iter().map(Some).collect());
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    /// Comma-separated text with 12 significant digits per number.
    pub fn to_csv(&self) -> Result<String, OutputError> {
        let mut s = self.header.join(",");
        s.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.header.len() {
                return Err(OutputError::Ragged(self.name.clone()));
            }
            for (c, cell) in row.iter().enumerate() {
                if c > 0 {
                    s.push(',');
                }
                match cell {
                    Some(v) if v.is_finite() => write!(s, "{v:.11e}").expect("string write"),
                    Some(_) => {
                        return Err(OutputError::NonFinite {
                            file: self.file_name(),
                            column: self.header[c].clone(),
                            row: r + 1,
                        })
                    }
                    None => {}
                }
            }
            s.push('\n');
        }
        Ok(s)
    }
}

pub fn finite(name: &str, v: f64) -> Result<Value, OutputError> {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .ok_or_else(|| OutputError::NonFinite {
            file: "summary.json".into(),
            column: name.into(),
            row: 0,
        })
}

#[derive(Clone, Debug, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: String,
    pub requirement: String,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub scenario: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub config: RunConfig,
    pub timings_s: BTreeMap<String, f64>,
    pub convergence: BTreeMap<String, Value>,
    pub checks: Vec<CheckRecord>,
    pub files: Vec<FileRecord>,
    pub notes: Vec<String>,
}

pub fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<FileRecord, OutputError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| OutputError::Io { path, source })?;
    Ok(FileRecord {
        name: name.to_string(),
        bytes: contents.len(),
        sha256: hex::encode(Sha256::digest(contents)),
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_twelve_significant_digits() {
        let mut c = Curve::new("t", &["x", "y"]);
        c.push(vec![1.0, -1.0 / 3.0]);
        c.rows.push(vec![Some(2.0), None]);
        assert_eq!(
            c.to_csv().unwrap(),
            "x,y\n1.00000000000e0,-3.33333333333e-1\n2.00000000000e0,\n"
        );
    }

    #[test]
    fn nan_is_never_serialized() {
        let mut c = Curve::new("t", &["x", "y"]);
        c.push(vec![1.0, f64::NAN]);
        let err = c.to_csv().unwrap_err();
        assert!(
            matches!(err, OutputError::NonFinite { row: 1, .. }),
            "{err}"
        );
        assert!(finite("x", f64::INFINITY).is_err());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let mut c = Curve::new("t", &["x", "y"]);
        c.push(vec![1.0]);
        assert!(matches!(c.to_csv(), Err(OutputError::Ragged(_))));
    }
}
