//! Scenario runner for the slab transport solvers: configuration loading,
//! scenario execution and reproducible output.

pub mod config;
pub mod output;
pub mod scenarios;

use std::collections::BTreeMap;
use std::time::Instant;

use serde_json::Value;

use config::RunConfig;
use output::{to_json, write_file, FileRecord, Manifest};

/// How a completed run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Finished, but at least one acceptance check failed (only fatal with `--check`).
    ChecksFailed(Vec<String>),
    Failed(String),
}

impl Status {
    pub fn exit_code(&self, enforce_checks: bool) -> u8 {
        match self {
            Status::Success => 0,
            Status::ChecksFailed(_) if !enforce_checks => 0,
            Status::ChecksFailed(_) => 2,
            Status::Failed(_) => 1,
        }
    }
}

/// Run the configured scenario and write its files, the summary and the
/// manifest into `cfg.output_dir`. Errors only if the output directory
/// itself cannot be used; solver failures end up in the manifest.
pub fn execute(cfg: &RunConfig) -> std::io::Result<Status> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let started = Instant::now();
    let mut files: Vec<FileRecord> = Vec::new();
    let mut notes = Vec::new();

    let result = scenarios::run(cfg)
        .map_err(|e| e.to_string())
        .and_then(|out| {
            for curve in &out.curves {
                let csv = curve.to_csv().map_err(|e| e.to_string())?;
                files.push(
                    write_file(&cfg.output_dir, &curve.file_name(), csv.as_bytes())
                        .map_err(|e| e.to_string())?,
                );
            }
            if out.curves.is_empty() {
                notes.push("scenario produces no curves; no CSV files written".to_string());
            }
            let mut summary: BTreeMap<String, Value> = out.scalars.clone();
            summary.insert("scenario".into(), cfg.scenario.name().into());
            summary.insert(
                "convergence".into(),
                Value::Object(out.convergence.clone().into_iter().collect()),
            );
            files.push(
                write_file(&cfg.output_dir, "summary.json", &to_json(&summary))
                    .map_err(|e| e.to_string())?,
            );
            Ok(out)
        });

    let (status, out) = match result {
        Ok(out) => {
            let failed: Vec<String> = out
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| c.name.clone())
                .collect();
            let status = if failed.is_empty() {
                Status::Success
            } else {
                Status::ChecksFailed(failed)
            };
            (status, Some(out))
        }
        Err(reason) => {
            if !files.is_empty() {
                notes.push("run failed after writing some files; they are partial".to_string());
            }
            (Status::Failed(reason), None)
        }
    };

    let (label, reason) = match &status {
        Status::Success => ("success", None),
        Status::ChecksFailed(names) => (
            "checks-failed",
            Some(format!("failed checks: {}", names.join("; "))),
        ),
        Status::Failed(r) => ("failed", Some(r.clone())),
    };
    let (mut timings, convergence, checks) = match out {
        Some(o) => (o.timings, o.convergence, o.checks),
        None => Default::default(),
    };
    timings.insert("total".into(), started.elapsed().as_secs_f64());
    let manifest = Manifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        scenario: cfg.scenario.name().into(),
        status: label.into(),
        reason,
        config: cfg.clone(),
        timings_s: timings,
        convergence,
        checks,
        files,
        notes,
    };
    std::fs::write(cfg.output_dir.join("manifest.json"), to_json(&manifest))?;
    Ok(status)
}
