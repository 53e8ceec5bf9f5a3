//! Output artifacts: JSON/CSV serialization, schema guarding for report
//! merging, and atomic file writes.

use std::io::Write;
use std::path::Path;

use postpi::{CoefficientSummary, Method, MetricsRow, ReplicateRecord};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or malformed/mismatched input files (exit 2).
    Config(String),
    /// Failures inside estimation or I/O (exit 3).
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn config(err: impl std::fmt::Display) -> Self {
        CliError::Config(err.to_string())
    }

    pub fn runtime(err: impl std::fmt::Display) -> Self {
        CliError::Runtime(err.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulateReport {
    pub schema_version: u32,
    pub alpha: f64,
    pub t_approx: bool,
    pub seed: u64,
    pub reps: usize,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportCoefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub method: Method,
    pub alpha: f64,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub coefficients: Vec<ReportCoefficient>,
}

/// Read and schema-check one simulate metrics file.
pub fn read_metrics(path: &Path) -> CliResult<SimulateReport> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let report: SimulateReport = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!(
            "{}: parse error at line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "{}: schema version {} does not match expected {}",
            path.display(),
            report.schema_version,
            SCHEMA_VERSION
        )));
    }
    Ok(report)
}

pub fn metrics_csv(rows: &[MetricsRow]) -> CliResult<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(CliError::runtime)?;
    }
    writer
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

#[derive(Serialize)]
struct ReplicateCsvRow<'a> {
    rep_index: usize,
    method: Method,
    estimate: Option<f64>,
    se: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    p_value: Option<f64>,
    error: Option<&'a str>,
}

pub fn replicates_csv(records: &[ReplicateRecord]) -> CliResult<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for rec in records {
        for (method, outcome) in &rec.results {
            let row = match outcome {
                Ok(CoefficientSummary {
                    estimate,
                    se,
                    ci_low,
                    ci_high,
                    p_value,
                }) => ReplicateCsvRow {
                    rep_index: rec.rep_index,
                    method: *method,
                    estimate: Some(*estimate),
                    se: Some(*se),
                    ci_low: Some(*ci_low),
                    ci_high: Some(*ci_high),
                    p_value: Some(*p_value),
                    error: None,
                },
                Err(msg) => ReplicateCsvRow {
                    rep_index: rec.rep_index,
                    method: *method,
                    estimate: None,
                    se: None,
                    ci_low: None,
                    ci_high: None,
                    p_value: None,
                    error: Some(msg),
                },
            };
            writer.serialize(row).map_err(CliError::runtime)?;
        }
    }
    writer
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Write via a temp file in the destination directory plus rename, so a
/// failed run never leaves a partial artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create temp file in {}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::Runtime(format!("cannot finalize {}: {e}", path.display())))?;
    Ok(())
}
