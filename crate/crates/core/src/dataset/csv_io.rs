use super::TabularData;
use crate::error::{LocusError, Result};
use ndarray::{Array1, Array2};
use std::path::Path;

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| LocusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let trimmed = raw.trim();
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(LocusError::Cell {
            row,
            column: column.to_string(),
            message: format!("non-finite value '{trimmed}'"),
        }),
        Err(_) if trimmed.is_empty() => Err(LocusError::Cell {
            row,
            column: column.to_string(),
            message: "missing value".into(),
        }),
        Err(_) => Err(LocusError::Cell {
            row,
            column: column.to_string(),
            message: format!("cannot parse '{trimmed}' as a number"),
        }),
    }
}

/// Reads every column of a headed CSV as reals. Returns header and row-major
/// values. Row numbers in errors are 1-based data rows (header excluded).
fn read_numeric(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = open(path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| LocusError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(LocusError::Csv("missing header row".into()));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| LocusError::Csv(e.to_string()))?;
        if record.len() != header.len() {
            return Err(LocusError::Cell {
                row: i + 1,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let values = record
            .iter()
            .zip(&header)
            .map(|(cell, name)| parse_cell(cell, i + 1, name))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok((header, rows))
}

/// Loads a labeled table; the target column is removed from the features and
/// the remaining columns keep header order.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<TabularData> {
    let (header, rows) = read_numeric(path.as_ref())?;
    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| LocusError::UnknownColumn(target_column.to_string()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let n = rows.len();
    let p = feature_names.len();
    let mut features = Array2::zeros((n, p));
    let mut target = Array1::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        let mut c = 0;
        for (j, &v) in row.iter().enumerate() {
            if j == target_idx {
                target[i] = v;
            } else {
                features[[i, c]] = v;
                c += 1;
            }
        }
    }
    TabularData::new(features, target, feature_names, target_column)
}

/// Loads an unlabeled feature table whose header must equal
/// `expected_columns` exactly (names and order). Zero data rows is allowed.
pub fn load_features_csv(path: impl AsRef<Path>, expected_columns: &[String]) -> Result<Array2<f64>> {
    let (header, rows) = read_numeric(path.as_ref())?;
    for name in &header {
        if !expected_columns.contains(name) {
            return Err(LocusError::ColumnMismatch(format!("unexpected column '{name}'")));
        }
    }
    for name in expected_columns {
        if !header.contains(name) {
            return Err(LocusError::ColumnMismatch(format!("missing column '{name}'")));
        }
    }
    if header != expected_columns {
        return Err(LocusError::ColumnMismatch(format!(
            "column order {:?} differs from expected {:?}",
            header, expected_columns
        )));
    }
    let mut out = Array2::zeros((rows.len(), header.len()));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

/// Writes features followed by the target column. Reals use shortest
/// round-trip formatting.
pub fn write_csv(data: &TabularData, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| LocusError::Csv(e.to_string()))?;
    let mut header = data.feature_names.clone();
    header.push(data.target_name.clone());
    writer
        .write_record(&header)
        .map_err(|e| LocusError::Csv(e.to_string()))?;
    for (row, y) in data.features.outer_iter().zip(data.target.iter()) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        writer
            .write_record(&rec)
            .map_err(|e| LocusError::Csv(e.to_string()))?;
    }
    writer.flush().map_err(|source| LocusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}
