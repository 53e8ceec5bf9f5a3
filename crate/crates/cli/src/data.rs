//! CSV input: header-addressed numeric columns for the labeled and
//! unlabeled files. Schema problems (missing columns, non-numeric or
//! empty cells) are config errors that name the offending location.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use postpi::{design_with_intercept, Dataset};

use crate::report::{CliError, CliResult};

pub struct EstimateInput {
    pub labeled: PathBuf,
    pub unlabeled: PathBuf,
    pub outcome_col: String,
    pub prediction_col: String,
    pub covariates: Option<Vec<String>>,
}

struct Table {
    headers: Vec<String>,
    /// Row-major cells, all parsed as f64.
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn column_index(&self, name: &str, path: &Path) -> CliResult<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Config(format!(
                "{}: missing column '{name}' (header has: {})",
                path.display(),
                self.headers.join(", ")
            ))
        })
    }

    fn column(&self, idx: usize) -> DVector<f64> {
        DVector::from_fn(self.rows.len(), |i, _| self.rows[i][idx])
    }

    fn matrix(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), indices.len(), |i, j| {
            self.rows[i][indices[j]]
        })
    }
}

fn read_table(path: &Path) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(CliError::Config(format!(
            "{}: empty header row",
            path.display()
        )));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let line = record
            .position()
            .map(|p| p.line().to_string())
            .unwrap_or_else(|| "?".into());
        if record.len() != headers.len() {
            return Err(CliError::Config(format!(
                "{}: line {line}: expected {} fields, found {}",
                path.display(),
                headers.len(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(headers.len());
        for (field, header) in record.iter().zip(&headers) {
            let trimmed = field.trim();
            if trimmed.is_empty() {
                return Err(CliError::Config(format!(
                    "{}: line {line}: missing value in column '{header}'",
                    path.display()
                )));
            }
            let value: f64 = trimmed.parse().map_err(|_| {
                CliError::Config(format!(
                    "{}: line {line}: column '{header}': cannot parse '{trimmed}' as a number",
                    path.display()
                ))
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(Table { headers, rows })
}

/// Assemble a Dataset from the two files; returns the covariate names in
/// design order (after the implicit intercept).
pub fn load_dataset(input: &EstimateInput) -> CliResult<(Dataset, Vec<String>)> {
    let labeled = read_table(&input.labeled)?;
    let unlabeled = read_table(&input.unlabeled)?;

    let y_idx = labeled.column_index(&input.outcome_col, &input.labeled)?;
    let f_idx_l = labeled.column_index(&input.prediction_col, &input.labeled)?;
    let f_idx_u = unlabeled.column_index(&input.prediction_col, &input.unlabeled)?;

    let covariate_names: Vec<String> = match &input.covariates {
        Some(names) => names.iter().map(|n| n.trim().to_string()).collect(),
        None => labeled
            .headers
            .iter()
            .filter(|h| **h != input.outcome_col && **h != input.prediction_col)
            .cloned()
            .collect(),
    };
    if covariate_names.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no covariate columns besides '{}' and '{}'",
            input.labeled.display(),
            input.outcome_col,
            input.prediction_col
        )));
    }
    let cov_idx_l: Vec<usize> = covariate_names
        .iter()
        .map(|name| labeled.column_index(name, &input.labeled))
        .collect::<CliResult<_>>()?;
    let cov_idx_u: Vec<usize> = covariate_names
        .iter()
        .map(|name| unlabeled.column_index(name, &input.unlabeled))
        .collect::<CliResult<_>>()?;

    // the oracle benchmark needs true unlabeled outcomes; accept them when
    // the unlabeled file happens to carry the outcome column
    let y_unlabeled = unlabeled
        .headers
        .iter()
        .position(|h| *h == input.outcome_col)
        .map(|idx| unlabeled.column(idx));

    let dataset = Dataset::new(
        design_with_intercept(&labeled.matrix(&cov_idx_l)),
        labeled.column(y_idx),
        labeled.column(f_idx_l),
        design_with_intercept(&unlabeled.matrix(&cov_idx_u)),
        unlabeled.column(f_idx_u),
        y_unlabeled,
    )
    .map_err(CliError::config)?;
    Ok((dataset, covariate_names))
}
