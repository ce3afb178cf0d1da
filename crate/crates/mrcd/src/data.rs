//! Observation matrices and CSV ingestion.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An n x p matrix of observations with named columns. Rows are observations.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    names: Vec<String>,
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.ncols(),
                actual: names.len(),
            });
        }
        Ok(Self { names, values })
    }

    /// Builds a matrix with generated column names `v1..vp`.
    pub fn from_values(values: DMatrix<f64>) -> Self {
        let names = (1..=values.ncols()).map(|j| format!("v{j}")).collect();
        Self { names, values }
    }

    /// Reads a CSV file with a header row; every cell must be numeric.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        let names: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let p = names.len();
        let mut rows: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Csv(e.to_string()))?;
            if record.len() != p {
                return Err(Error::Csv(format!(
                    "row {} has {} fields, expected {}",
                    i + 2,
                    record.len(),
                    p
                )));
            }
            for (j, cell) in record.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                    row: i + 2,
                    column: names[j].clone(),
                })?;
                rows.push(v);
            }
            n += 1;
        }
        let values = DMatrix::from_row_slice(n, p, &rows);
        Ok(Self { names, values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.values.column(j).into_owned()
    }

    /// Position of a named column, if present.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|c| c == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn csv_roundtrip() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a,b\n1.5,2\n3,4.25").unwrap();
        let m = DataMatrix::from_csv(f.path()).unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.p(), 2);
        assert_eq!(m.names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(m.values()[(1, 1)], 4.25);
    }

    #[test]
    fn csv_rejects_non_numeric() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a,b\n1,x").unwrap();
        let err = DataMatrix::from_csv(f.path()).unwrap_err();
        assert!(matches!(err, Error::NonNumericCell { .. }));
    }
}
