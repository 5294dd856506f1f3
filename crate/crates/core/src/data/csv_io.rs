//! CSV ingestion and emission.
//!
//! Format: UTF-8, header row, decimal floats, label column named `label`
//! with values 0/1. Columns may appear in any order; they are mapped back to
//! schema order by name.

use std::fs;
use std::path::Path;

use super::{ColumnSchema, Dataset};
use crate::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NanPolicy {
    /// Any unparseable or non-finite value fails ingestion (default).
    HardError,
    /// Rows containing NaN are dropped; anything else still fails.
    SkipRow,
}

pub fn ingest_csv(path: &Path, schema: &ColumnSchema, institution_id: &str) -> Result<Dataset> {
    ingest_csv_with(path, schema, institution_id, NanPolicy::HardError)
}

pub fn ingest_csv_with(
    path: &Path,
    schema: &ColumnSchema,
    institution_id: &str,
    nan_policy: NanPolicy,
) -> Result<Dataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Schema(format!("{}: empty file", path.display())))?;
    let header_names: Vec<&str> = header.split(',').map(str::trim).collect();

    // Map each schema column (and the label) to its header position.
    let mut feature_pos = Vec::with_capacity(schema.len());
    for col in schema.columns() {
        let pos = header_names
            .iter()
            .position(|h| *h == col.name)
            .ok_or_else(|| {
                Error::Schema(format!("{}: missing column '{}'", path.display(), col.name))
            })?;
        feature_pos.push(pos);
    }
    let label_pos = header_names
        .iter()
        .position(|h| *h == "label")
        .ok_or_else(|| Error::Schema(format!("{}: missing column 'label'", path.display())))?;
    if header_names.len() != schema.len() + 1 {
        return Err(Error::Schema(format!(
            "{}: header has {} columns, expected {} features plus label",
            path.display(),
            header_names.len(),
            schema.len()
        )));
    }

    let binary = schema.binary_indices();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row_no = line_no + 1; // 1-based data row
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header_names.len() {
            return Err(Error::Schema(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                row_no,
                fields.len(),
                header_names.len()
            )));
        }
        let mut row = Vec::with_capacity(schema.len());
        let mut has_nan = false;
        for (schema_idx, &pos) in feature_pos.iter().enumerate() {
            let raw = fields[pos];
            let value: f64 = raw.parse().map_err(|_| {
                Error::Schema(format!(
                    "{}: row {}, column '{}': unparseable value '{}'",
                    path.display(),
                    row_no,
                    schema.columns()[schema_idx].name,
                    raw
                ))
            })?;
            if value.is_nan() {
                has_nan = true;
            } else if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "{}: row {}, column '{}': non-finite value",
                    path.display(),
                    row_no,
                    schema.columns()[schema_idx].name
                )));
            }
            row.push(value);
        }
        if has_nan {
            match nan_policy {
                NanPolicy::SkipRow => continue,
                NanPolicy::HardError => {
                    return Err(Error::Numeric(format!(
                        "{}: row {} contains NaN",
                        path.display(),
                        row_no
                    )))
                }
            }
        }
        for &b in &binary {
            let v = row[b];
            if v != 0.0 && v != 1.0 {
                return Err(Error::Schema(format!(
                    "{}: row {}, column '{}': binary column holds {}",
                    path.display(),
                    row_no,
                    schema.columns()[b].name,
                    v
                )));
            }
        }
        let label_raw = fields[label_pos];
        let label: f64 = label_raw.parse().map_err(|_| {
            Error::Schema(format!(
                "{}: row {}, column 'label': unparseable value '{}'",
                path.display(),
                row_no,
                label_raw
            ))
        })?;
        if label != 0.0 && label != 1.0 {
            return Err(Error::Schema(format!(
                "{}: row {}: label must be 0 or 1, got {}",
                path.display(),
                row_no,
                label
            )));
        }
        labels.push(label as u8);
        rows.push(row);
    }
    let features = if rows.is_empty() {
        Matrix::zeros(0, schema.len())
    } else {
        Matrix::from_rows(&rows)?
    };
    Dataset::new(schema.clone(), features, labels, institution_id)
}

/// Write a dataset in the ingestion format: schema columns in order, then
/// `label`. Floats use the shortest representation that round-trips.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for col in ds.schema().columns() {
        out.push_str(&col.name);
        out.push(',');
    }
    out.push_str("label\n");
    for (r, row) in ds.features().iter_rows().enumerate() {
        for v in row {
            // ryu-style shortest float via Display on f64 keeps exact
            // round-trip for finite values
            out.push_str(&format!("{v}"));
            out.push(',');
        }
        out.push_str(&format!("{}\n", ds.labels()[r]));
    }
    fs::write(path, out)?;
    Ok(())
}
