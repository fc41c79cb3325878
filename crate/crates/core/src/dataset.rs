//! Observation container and CSV ingestion.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An estimation sample: one outcome per row plus a covariate matrix.
///
/// `category_count` is the number of outcome categories for the discrete
/// bounded families and 1 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    outcomes: DVector<f64>,
    covariates: DMatrix<f64>,
    category_count: usize,
}

impl Dataset {
    fn validated(
        outcomes: DVector<f64>,
        covariates: DMatrix<f64>,
        category_count: usize,
    ) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::data("dataset has no observations"));
        }
        if covariates.nrows() != outcomes.len() {
            return Err(Error::data(format!(
                "covariate matrix has {} rows but there are {} outcomes",
                covariates.nrows(),
                outcomes.len()
            )));
        }
        if let Some(bad) = outcomes.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite outcome at row {}",
                bad + 1
            )));
        }
        for j in 0..covariates.ncols() {
            for i in 0..covariates.nrows() {
                if !covariates[(i, j)].is_finite() {
                    return Err(Error::data(format!(
                        "non-finite covariate at row {}, column {}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Dataset {
            outcomes,
            covariates,
            category_count,
        })
    }

    /// Builds a sample for a continuous-outcome family.
    pub fn continuous(outcomes: DVector<f64>, covariates: DMatrix<f64>) -> Result<Self> {
        Self::validated(outcomes, covariates, 1)
    }

    /// Builds a sample whose outcomes are categories in 1..=`categories`.
    pub fn categorical(
        outcomes: DVector<f64>,
        covariates: DMatrix<f64>,
        categories: usize,
    ) -> Result<Self> {
        if categories < 2 {
            return Err(Error::data(
                "categorical datasets need at least 2 categories",
            ));
        }
        let ds = Self::validated(outcomes, covariates, categories)?;
        for (i, y) in ds.outcomes.iter().enumerate() {
            let ok = y.fract() == 0.0 && *y >= 1.0 && *y <= categories as f64;
            if !ok {
                return Err(Error::data(format!(
                    "outcome {} at row {} is not a category in 1..={}",
                    y,
                    i + 1,
                    categories
                )));
            }
        }
        Ok(ds)
    }

    /// Categorical sample with the category count taken from the largest
    /// observed outcome.
    pub fn categorical_auto(outcomes: DVector<f64>, covariates: DMatrix<f64>) -> Result<Self> {
        let max = outcomes.iter().fold(0.0f64, |a, &v| a.max(v));
        Self::categorical(outcomes, covariates, max as usize)
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn covariate_count(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn category_count(&self) -> usize {
        self.category_count
    }

    pub fn outcomes(&self) -> &DVector<f64> {
        &self.outcomes
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn outcome(&self, i: usize) -> f64 {
        self.outcomes[i]
    }

    /// Outcome as a category index in 1..=J.
    pub fn category(&self, i: usize) -> usize {
        self.outcomes[i] as usize
    }

    pub fn covariate(&self, i: usize, j: usize) -> f64 {
        self.covariates[(i, j)]
    }

    /// Copies observation `i`'s covariates into an owned vector.
    pub fn covariate_row(&self, i: usize) -> DVector<f64> {
        self.covariates.row(i).transpose()
    }

    /// Restricts the sample to the given row indices, keeping their order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::data("subset selects no rows"));
        }
        let outcomes = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.outcomes[r]));
        let covariates = DMatrix::from_fn(rows.len(), self.covariates.ncols(), |i, j| {
            self.covariates[(rows[i], j)]
        });
        Ok(Dataset {
            outcomes,
            covariates,
            category_count: self.category_count,
        })
    }
}

/// Columns read from a CSV file: the `y` column plus every other column as a
/// covariate, in file order.
#[derive(Debug)]
pub struct CsvColumns {
    pub outcomes: DVector<f64>,
    pub covariates: DMatrix<f64>,
    pub covariate_names: Vec<String>,
}

/// Reads a UTF-8 CSV file with a header row. Exactly one column must be
/// named `y`; all values must parse as numbers. Errors identify the
/// offending row and column.
pub fn read_csv_columns(path: impl AsRef<Path>) -> Result<CsvColumns> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("cannot read header row: {e}")))?
        .clone();
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::data("no column named 'y' in header row"))?;
    let covariate_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y_col)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut y = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 2; // 1-based, counting the header as row 1
        let record = record.map_err(|e| Error::data(format!("row {row_no}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::data(format!(
                "row {row_no} has {} fields, expected {}",
                record.len(),
                headers.len()
            )));
        }
        let mut xs = Vec::with_capacity(headers.len() - 1);
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::data(format!(
                    "row {row_no}, column '{}': cannot parse '{}' as a number",
                    &headers[j], field
                ))
            })?;
            if j == y_col {
                y.push(value);
            } else {
                xs.push(value);
            }
        }
        x_rows.push(xs);
    }
    if y.is_empty() {
        return Err(Error::data("CSV file has a header but no data rows"));
    }

    let k = headers.len() - 1;
    let covariates = DMatrix::from_fn(x_rows.len(), k, |i, j| x_rows[i][j]);
    Ok(CsvColumns {
        outcomes: DVector::from_vec(y),
        covariates,
        covariate_names,
    })
}
