//! CSV ingestion into response / conditioning / covariate blocks, and the
//! median-absolute-deviation outlier rule.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::empirical::median;
use crate::error::{Error, Result};

/// Tokens read as missing values.
const MISSING: [&str; 5] = ["", "NA", "na", "NaN", "nan"];

/// Cutoff on the robust z-score.
pub const IH_CUTOFF: f64 = 3.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub response_name: String,
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub x_names: Vec<String>,
    pub w: Option<DMatrix<f64>>,
    pub w_names: Vec<String>,
    /// Rows removed because at least one cell was missing.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn r(&self) -> usize {
        self.w.as_ref().map_or(0, DMatrix::ncols)
    }

    /// Build from in-memory parts, checking shapes and finiteness.
    pub fn from_parts(
        response_name: &str,
        y: Vec<f64>,
        x: DMatrix<f64>,
        x_names: Vec<String>,
        w: Option<(DMatrix<f64>, Vec<String>)>,
    ) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n {
            return Err(Error::LengthMismatch { expected: n, got: x.nrows() });
        }
        if x_names.len() != x.ncols() {
            return Err(Error::Schema("covariate names do not match column count".into()));
        }
        let (w, w_names) = match w {
            Some((w, names)) => {
                if w.nrows() != n {
                    return Err(Error::LengthMismatch { expected: n, got: w.nrows() });
                }
                if names.len() != w.ncols() {
                    return Err(Error::Schema("conditioning names do not match column count".into()));
                }
                (Some(w), names)
            }
            None => (None, Vec::new()),
        };
        if y.iter().chain(x.iter()).chain(w.iter().flat_map(|m| m.iter())).any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains non-finite values".into()));
        }
        let mut seen = HashSet::new();
        for name in std::iter::once(response_name).chain(x_names.iter().map(String::as_str)).chain(w_names.iter().map(String::as_str)) {
            if !seen.insert(name) {
                return Err(Error::Schema(format!("duplicate column name '{name}'")));
            }
        }
        Ok(Self { response_name: response_name.to_string(), y, x, x_names, w, w_names, dropped_rows: 0 })
    }

    /// Write response, conditioning and covariate columns, in that order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        let mut header = vec![self.response_name.clone()];
        header.extend(self.w_names.iter().cloned());
        header.extend(self.x_names.iter().cloned());
        wtr.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        for i in 0..self.n() {
            let mut row = vec![self.y[i].to_string()];
            if let Some(w) = &self.w {
                row.extend(w.row(i).iter().map(f64::to_string));
            }
            row.extend(self.x.row(i).iter().map(f64::to_string));
            wtr.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
        }
        wtr.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Numeric table with its header, after dropping incomplete rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
    pub dropped_rows: usize,
}

/// Read a headed numeric CSV, dropping and counting rows with any missing
/// cell.
pub fn load_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let names: Vec<String> = rdr.headers().map_err(|e| Error::Io(e.to_string()))?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for h in &names {
        if !seen.insert(h.as_str()) {
            return Err(Error::Schema(format!("duplicate column name '{h}'")));
        }
    }

    let mut flat: Vec<f64> = Vec::new();
    let mut dropped_rows = 0;
    let mut row_values = Vec::with_capacity(names.len());
    for (r, record) in rdr.records().enumerate() {
        // 1-based data row, header excluded.
        let row_no = r + 1;
        let record = record.map_err(|e| Error::Parse { row: row_no, column: String::new(), message: e.to_string() })?;
        row_values.clear();
        let mut missing = false;
        for (c, cell) in record.iter().enumerate() {
            if MISSING.contains(&cell) {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                column: names[c].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row: row_no, column: names[c].clone(), message: format!("'{cell}' is not finite") });
            }
            row_values.push(v);
        }
        if missing {
            dropped_rows += 1;
        } else {
            flat.extend_from_slice(&row_values);
        }
    }
    let n = flat.len() / names.len().max(1);
    Ok(Table { values: DMatrix::from_row_slice(n, names.len(), &flat), names, dropped_rows })
}

/// Read a headed numeric CSV. `response` names the outcome column and
/// `conditioning` the external conditioning columns; every other column is a
/// covariate. Rows with any missing cell are dropped and counted.
pub fn load_csv(path: &Path, response: &str, conditioning: &[String]) -> Result<Dataset> {
    let table = load_table(path)?;
    let find = |name: &str| {
        table.names.iter().position(|h| h == name).ok_or_else(|| Error::Schema(format!("column '{name}' not found")))
    };
    let y_col = find(response)?;
    let w_cols = conditioning.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    if w_cols.contains(&y_col) {
        return Err(Error::Schema(format!("response '{response}' is also a conditioning column")));
    }
    let x_cols: Vec<usize> = (0..table.names.len()).filter(|c| *c != y_col && !w_cols.contains(c)).collect();

    let v = &table.values;
    let block = |cols: &[usize]| DMatrix::from_fn(v.nrows(), cols.len(), |i, k| v[(i, cols[k])]);
    let names = |cols: &[usize]| cols.iter().map(|&c| table.names[c].clone()).collect::<Vec<_>>();
    let w = (!w_cols.is_empty()).then(|| (block(&w_cols), names(&w_cols)));
    let mut ds = Dataset::from_parts(response, v.column(y_col).iter().copied().collect(), block(&x_cols), names(&x_cols), w)?;
    ds.dropped_rows = table.dropped_rows;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierReport {
    pub median: f64,
    pub mad: f64,
    /// `0.6745 (x_i - median) / MAD`; empty when the MAD is zero.
    pub z_scores: Vec<f64>,
    pub outliers: Vec<usize>,
    /// Set when the MAD is zero and no scores can be formed.
    pub degenerate: bool,
}

/// Robust z-score outlier rule. Flags `|z| > 3.5` when `two_sided`, else
/// only `z > 3.5`.
pub fn ih_outlier_report(column: &[f64], two_sided: bool) -> Result<OutlierReport> {
    if column.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: column.len() });
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in column".into()));
    }
    let med = median(column);
    let deviations: Vec<f64> = column.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&deviations);
    if mad == 0.0 {
        return Ok(OutlierReport { median: med, mad, z_scores: Vec::new(), outliers: Vec::new(), degenerate: true });
    }
    let z_scores: Vec<f64> = column.iter().map(|v| 0.6745 * (v - med) / mad).collect();
    let outliers = (0..column.len())
        .filter(|&i| if two_sided { z_scores[i].abs() > IH_CUTOFF } else { z_scores[i] > IH_CUTOFF })
        .collect();
    Ok(OutlierReport { median: med, mad, z_scores, outliers, degenerate: false })
}
