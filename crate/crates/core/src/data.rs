//! Response/design container with centering and scaling transforms, plus CSV
//! ingestion for real datasets.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::groups::GroupMap;

/// How to standardize a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StandardizeMode {
    Center,
    CenterAndScale,
}

/// A regression dataset. Transforms keep the original column means and scales
/// so predictions can be mapped back to the raw scale.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub groups: Option<GroupMap>,
    pub centered: bool,
    pub standardized: bool,
    /// Mean of the raw response (0 until centered).
    pub y_mean: f64,
    /// Column means of the raw design (0 until centered).
    pub x_means: DVector<f64>,
    /// Column scale divisors (1 until scaled).
    pub x_scales: DVector<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::Dimension(format!(
                "response has {} rows, design has {}",
                y.len(),
                x.nrows()
            )));
        }
        let p = x.ncols();
        Ok(Dataset {
            y,
            x,
            groups: None,
            centered: false,
            standardized: false,
            y_mean: 0.0,
            x_means: DVector::zeros(p),
            x_scales: DVector::from_element(p, 1.0),
        })
    }

    pub fn with_groups(mut self, groups: GroupMap) -> Result<Self> {
        if groups.p() != self.p() {
            return Err(Error::Dimension(format!(
                "groups cover {} columns, design has {}",
                groups.p(),
                self.p()
            )));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Centered (and optionally scaled) copy. Centering twice is a no-op.
    ///
    /// Scaling divides each column by its sample standard deviation; a
    /// zero-variance column is an error under `CenterAndScale`.
    pub fn standardize(&self, mode: StandardizeMode) -> Result<Dataset> {
        if self.n() < 2 {
            return Err(Error::Dimension(
                "need at least 2 rows to standardize".to_string(),
            ));
        }
        let mut out = self.clone();
        let n = out.n() as f64;

        let ym = out.y.iter().sum::<f64>() / n;
        out.y.add_scalar_mut(-ym);
        // second pass removes the leftover rounding so the centering
        // invariant |mean| < 1e-10 holds even for large n
        let resid = out.y.iter().sum::<f64>() / n;
        out.y.add_scalar_mut(-resid);
        out.y_mean += ym + resid;

        for j in 0..out.p() {
            let mut col = out.x.column_mut(j);
            let m = col.iter().sum::<f64>() / n;
            col.add_scalar_mut(-m);
            let r = col.iter().sum::<f64>() / n;
            col.add_scalar_mut(-r);
            out.x_means[j] += (m + r) * out.x_scales[j];
        }
        out.centered = true;

        if mode == StandardizeMode::CenterAndScale {
            for j in 0..out.p() {
                let mut col = out.x.column_mut(j);
                let sd = (col.iter().map(|v| v * v).sum::<f64>() / (n - 1.0)).sqrt();
                if sd <= 0.0 || !sd.is_finite() {
                    return Err(Error::ZeroVariance { column: j + 1 });
                }
                col /= sd;
                out.x_scales[j] *= sd;
            }
            out.standardized = true;
        }
        Ok(out)
    }

    /// Map raw predictor rows into this dataset's centered/scaled coordinates.
    pub fn transform_new_x(&self, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_new.ncols() != self.p() {
            return Err(Error::Dimension(format!(
                "new design has {} columns, expected {}",
                x_new.ncols(),
                self.p()
            )));
        }
        let mut out = x_new.clone();
        for j in 0..self.p() {
            let mut col = out.column_mut(j);
            col.add_scalar_mut(-self.x_means[j]);
            col /= self.x_scales[j];
        }
        Ok(out)
    }

    /// Predictions in raw-response units for raw predictor rows.
    pub fn predict_raw(&self, x_new: &DMatrix<f64>, beta: &DVector<f64>) -> Result<DVector<f64>> {
        let xt = self.transform_new_x(x_new)?;
        Ok((xt * beta).add_scalar(self.y_mean))
    }

    /// SHA-256 fingerprint over dimensions and exact float bytes.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.p() as u64).to_le_bytes());
        for v in self.y.iter() {
            h.update(v.to_le_bytes());
        }
        for v in self.x.iter() {
            h.update(v.to_le_bytes());
        }
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Largest absolute column/response mean; the centering invariant wants
    /// this below 1e-10.
    pub fn worst_mean(&self) -> f64 {
        let n = self.n() as f64;
        let mut worst = (self.y.iter().sum::<f64>() / n).abs();
        for j in 0..self.p() {
            worst = worst.max((self.x.column(j).iter().sum::<f64>() / n).abs());
        }
        worst
    }
}

/// Column selection for [`load_csv`]. Row indices in `drop_rows` are 1-based
/// observation numbers applied after parsing.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub response: String,
    /// Predictor column names; empty means every non-response column.
    pub predictors: Vec<String>,
    pub drop_rows: Vec<usize>,
}

impl CsvSchema {
    pub fn new(response: impl Into<String>) -> Self {
        CsvSchema {
            response: response.into(),
            predictors: Vec::new(),
            drop_rows: Vec::new(),
        }
    }
}

/// Read a headed CSV into a dataset. Non-numeric or missing cells are
/// rejected with their 1-based data row and file column.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();

    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Manifest(format!("column '{name}' not found in {path:?}")))
    };
    let y_col = find(&schema.response)?;
    let x_cols: Vec<usize> = if schema.predictors.is_empty() {
        (0..headers.len()).filter(|&c| c != y_col).collect()
    } else {
        schema
            .predictors
            .iter()
            .map(|n| find(n))
            .collect::<Result<Vec<_>>>()?
    };

    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            col: 0,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                col: record.len().min(headers.len()),
                message: format!(
                    "row has {} fields, header has {}",
                    record.len(),
                    headers.len()
                ),
            });
        }
        let parse_cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    col: c + 1,
                    message: "missing value".to_string(),
                });
            }
            raw.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row,
                col: c + 1,
                message: format!("'{raw}' is not numeric"),
            })
        };
        y.push(parse_cell(y_col)?);
        rows.push(
            x_cols
                .iter()
                .map(|&c| parse_cell(c))
                .collect::<Result<Vec<f64>>>()?,
        );
    }

    let keep: Vec<usize> = (0..y.len())
        .filter(|i| !schema.drop_rows.contains(&(i + 1)))
        .collect();
    let n = keep.len();
    if n == 0 {
        return Err(Error::Dimension(format!("{path:?} has no usable rows")));
    }
    let p = x_cols.len();
    let yv = DVector::from_fn(n, |i, _| y[keep[i]]);
    let xm = DMatrix::from_fn(n, p, |i, j| rows[keep[i]][j]);
    Dataset::new(yv, xm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn load_csv_exact_matrix() {
        let f = write_temp("y,a,b\n1.5,2,3\n-0.5,4,5\n2.25,6,7\n");
        let ds = load_csv(f.path(), &CsvSchema::new("y")).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.y.as_slice(), &[1.5, -0.5, 2.25]);
        assert_eq!(ds.x[(0, 0)], 2.0);
        assert_eq!(ds.x[(2, 1)], 7.0);
    }

    #[test]
    fn load_csv_reports_row_and_column() {
        let f = write_temp("y,a,b\n1,2,3\n4,5,oops\n");
        let err = load_csv(f.path(), &CsvSchema::new("y")).unwrap_err();
        match err {
            Error::Parse { row, col, .. } => {
                assert_eq!(row, 2);
                assert_eq!(col, 3);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_rejects_missing_cells() {
        let f = write_temp("y,a,b\n1,2,3\n4,,6\n");
        let err = load_csv(f.path(), &CsvSchema::new("y")).unwrap_err();
        match err {
            Error::Parse {
                row, col, message, ..
            } => {
                assert_eq!(row, 2);
                assert_eq!(col, 2);
                assert!(message.contains("missing"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_drop_rows() {
        let f = write_temp("y,a\n1,10\n2,20\n3,30\n");
        let mut schema = CsvSchema::new("y");
        schema.drop_rows = vec![2];
        let ds = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.y.as_slice(), &[1.0, 3.0]);
    }

    #[test]
    fn center_and_scale_gives_unit_sd() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 10.0]);
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 5.0, 2.0, 9.0, 3.0, 1.0, 4.0, 7.0]);
        let ds = Dataset::new(y, x).unwrap();
        let s = ds.standardize(StandardizeMode::CenterAndScale).unwrap();
        let n = s.n() as f64;
        for j in 0..2 {
            let sd = (s.x.column(j).iter().map(|v| v * v).sum::<f64>() / (n - 1.0)).sqrt();
            assert!((sd - 1.0).abs() < 1e-12, "column {j} sd = {sd}");
        }
        assert!(s.worst_mean() < 1e-10);
    }

    #[test]
    fn centering_is_idempotent() {
        let y = DVector::from_vec(vec![4.0, 8.0, 6.0]);
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 6.0]);
        let ds = Dataset::new(y, x).unwrap();
        let once = ds.standardize(StandardizeMode::Center).unwrap();
        let twice = once.standardize(StandardizeMode::Center).unwrap();
        assert!((&once.y - &twice.y).amax() < 1e-14);
        assert!((&once.x - &twice.x).amax() < 1e-14);
        assert!((once.y_mean - twice.y_mean).abs() < 1e-14);
    }

    #[test]
    fn constant_column_errors_under_scale() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 7.0, 2.0, 7.0, 3.0, 7.0]);
        let ds = Dataset::new(y, x).unwrap();
        match ds.standardize(StandardizeMode::CenterAndScale) {
            Err(Error::ZeroVariance { column }) => assert_eq!(column, 2),
            other => panic!("expected zero-variance error, got {other:?}"),
        }
    }

    #[test]
    fn prediction_back_transform_round_trips() {
        let y = DVector::from_vec(vec![10.0, 12.0, 14.0, 16.0]);
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let ds = Dataset::new(y.clone(), x.clone())
            .unwrap()
            .standardize(StandardizeMode::Center)
            .unwrap();
        // exact linear data: centered fit is beta = 2, predictions recover y
        let beta = DVector::from_vec(vec![2.0]);
        let pred = ds.predict_raw(&x, &beta).unwrap();
        assert!((pred - y).amax() < 1e-12);
    }

    #[test]
    fn fingerprint_changes_with_data() {
        let a = Dataset::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_row_slice(2, 1, &[3.0, 4.0]),
        )
        .unwrap();
        let mut b = a.clone();
        b.y[0] = 1.0000000001;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }
}
