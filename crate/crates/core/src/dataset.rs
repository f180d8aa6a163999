//! Tabular data: named feature columns (NaN = missing) plus an optional target.
//!
//! CSV dialect: comma separated, mandatory header, UTF-8, `.` decimal
//! separator. An empty cell or the literal `NaN` marks a missing feature value;
//! the target column may not contain missing values.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("target column `{0}` not found")]
    MissingTarget(String),
    #[error("target column `{column}` has a missing value at row {row}")]
    MissingTargetValue { column: String, row: usize },
    #[error("feature column `{0}` not found in dataset")]
    MissingFeature(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("dataset has no target column")]
    NoTarget,
    #[error("column `{column}` has {got} values, expected {expected}")]
    Length {
        column: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    target_name: Option<String>,
    target: Option<Vec<f64>>,
    n_rows: usize,
}

impl Dataset {
    /// Assembles a dataset from feature columns and an optional named target.
    pub fn new(
        feature_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        target: Option<(String, Vec<f64>)>,
    ) -> Result<Self, DatasetError> {
        assert_eq!(feature_names.len(), columns.len(), "one name per column");
        let n_rows = columns
            .first()
            .map(Vec::len)
            .or_else(|| target.as_ref().map(|(_, t)| t.len()))
            .unwrap_or(0);
        let mut seen = HashSet::new();
        for (name, col) in feature_names.iter().zip(&columns) {
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::DuplicateColumn(name.clone()));
            }
            if col.len() != n_rows {
                return Err(DatasetError::Length {
                    column: name.clone(),
                    expected: n_rows,
                    got: col.len(),
                });
            }
        }
        let (target_name, target) = match target {
            Some((name, values)) => {
                if seen.contains(name.as_str()) {
                    return Err(DatasetError::DuplicateColumn(name));
                }
                if values.len() != n_rows {
                    return Err(DatasetError::Length {
                        column: name,
                        expected: n_rows,
                        got: values.len(),
                    });
                }
                if let Some(row) = values.iter().position(|v| v.is_nan()) {
                    return Err(DatasetError::MissingTargetValue { column: name, row });
                }
                (Some(name), Some(values))
            }
            None => (None, None),
        };
        Ok(Dataset {
            feature_names,
            columns,
            target_name,
            target,
            n_rows,
        })
    }

    /// Reads CSV. Every column other than `target` becomes a feature.
    pub fn from_csv_reader<R: Read>(reader: R, target: Option<&str>) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let target_pos = match target {
            Some(name) => Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| DatasetError::MissingTarget(name.to_string()))?,
            ),
            None => None,
        };
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            for (c, cell) in record.iter().enumerate() {
                let cell = cell.trim();
                let value = if cell.is_empty() || cell == "NaN" {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| DatasetError::Parse {
                        row,
                        column: headers[c].clone(),
                        value: cell.to_string(),
                    })?
                };
                columns[c].push(value);
            }
        }
        let target = target_pos.map(|pos| (headers[pos].clone(), columns[pos].clone()));
        let (names, cols): (Vec<String>, Vec<Vec<f64>>) = headers
            .into_iter()
            .zip(columns)
            .enumerate()
            .filter(|(i, _)| Some(*i) != target_pos)
            .map(|(_, pair)| pair)
            .unzip();
        Dataset::new(names, cols, target)
    }

    pub fn from_csv_path(
        path: impl AsRef<Path>,
        target: Option<&str>,
    ) -> Result<Self, DatasetError> {
        Dataset::from_csv_reader(File::open(path)?, target)
    }

    /// Writes CSV with features first and the target (if any) last.
    /// Missing values are written as empty cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        if let Some(name) = &self.target_name {
            header.push(name);
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for r in 0..self.n_rows {
            record.clear();
            for col in &self.columns {
                let v = col[r];
                record.push(if v.is_nan() {
                    String::new()
                } else {
                    format!("{v:?}")
                });
            }
            if let Some(t) = &self.target {
                record.push(format!("{:?}", t[r]));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn target_name(&self) -> Option<&str> {
        self.target_name.as_deref()
    }

    pub fn target(&self) -> Result<&[f64], DatasetError> {
        self.target.as_deref().ok_or(DatasetError::NoTarget)
    }

    /// Row-major matrix (`n_rows × names.len()`) of the named columns.
    pub fn row_major(&self, names: &[String]) -> Result<Vec<f64>, DatasetError> {
        let cols = names
            .iter()
            .map(|n| {
                self.column(n)
                    .ok_or_else(|| DatasetError::MissingFeature(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let p = cols.len();
        let mut out = vec![0.0; self.n_rows * p];
        for (j, col) in cols.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                out[r * p + j] = v;
            }
        }
        Ok(out)
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            target_name: self.target_name.clone(),
            target: self
                .target
                .as_ref()
                .map(|t| rows.iter().map(|&r| t[r]).collect()),
            n_rows: rows.len(),
        }
    }

    /// Subset of feature columns (in the given order), keeping the target.
    pub fn select_features(&self, names: &[String]) -> Result<Dataset, DatasetError> {
        let columns = names
            .iter()
            .map(|n| {
                self.column(n)
                    .map(<[f64]>::to_vec)
                    .ok_or_else(|| DatasetError::MissingFeature(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset {
            feature_names: names.to_vec(),
            columns,
            target_name: self.target_name.clone(),
            target: self.target.clone(),
            n_rows: self.n_rows,
        })
    }
}
