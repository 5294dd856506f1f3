//! Dataset representation, ingestion, stratified splitting, and
//! privacy-preserving standardization.

mod csv_io;
mod split;
mod stats;
mod synthetic;

pub use csv_io::{ingest_csv, ingest_csv_with, write_csv, NanPolicy};
pub use split::{split, SplitRatios};
pub use stats::{
    local_stats, merge_stats, standardize, ColumnStat, ColumnStats, StatsExchangeFile,
    STATS_FILE_VERSION,
};
pub use synthetic::{gen_synthetic, InstitutionSpec, SyntheticSpec};

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ColumnKind,
}

/// Ordered column descriptors; names are unique and there is at least one
/// column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    columns: Vec<ColumnDef>,
}

impl ColumnSchema {
    pub fn new(columns: Vec<ColumnDef>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("schema needs at least one column".to_owned()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name '{}'", c.name)));
            }
            if c.name == "label" {
                return Err(Error::Schema(
                    "'label' is reserved for the label column".to_owned(),
                ));
            }
        }
        Ok(Self { columns })
    }

    /// Convenience constructor: `b0..b{n}` binary columns followed by
    /// `c0..c{n}` continuous columns.
    pub fn generated(n_binary: usize, n_continuous: usize) -> Result<Self> {
        let mut columns = Vec::new();
        for i in 0..n_binary {
            columns.push(ColumnDef {
                name: format!("b{i}"),
                kind: ColumnKind::Binary,
            });
        }
        for i in 0..n_continuous {
            columns.push(ColumnDef {
                name: format!("c{i}"),
                kind: ColumnKind::Continuous,
            });
        }
        Self::new(columns)
    }

    pub fn columns(&self) -> &[ColumnDef] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Continuous)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn binary_indices(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Binary)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Feature matrix with labels and an institution tag.
///
/// Invariants checked at construction: row counts agree, all values finite,
/// and unstandardized binary columns hold only 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: ColumnSchema,
    features: Matrix,
    labels: Vec<u8>,
    institution_id: String,
    standardized: bool,
}

impl Dataset {
    pub fn new(
        schema: ColumnSchema,
        features: Matrix,
        labels: Vec<u8>,
        institution_id: impl Into<String>,
    ) -> Result<Self> {
        Self::with_standardized(schema, features, labels, institution_id, false)
    }

    pub(crate) fn with_standardized(
        schema: ColumnSchema,
        features: Matrix,
        labels: Vec<u8>,
        institution_id: impl Into<String>,
        standardized: bool,
    ) -> Result<Self> {
        if features.cols() != schema.len() {
            return Err(Error::Schema(format!(
                "{} feature columns vs {} schema columns",
                features.cols(),
                schema.len()
            )));
        }
        if features.rows() != labels.len() {
            return Err(Error::Schema(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::Data("labels must be 0 or 1".to_owned()));
        }
        if !features.is_finite() {
            return Err(Error::Numeric("non-finite feature value".to_owned()));
        }
        for &c in &schema.binary_indices() {
            for r in 0..features.rows() {
                let v = features.get(r, c);
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Schema(format!(
                        "binary column '{}' holds {} at row {}",
                        schema.columns()[c].name,
                        v,
                        r
                    )));
                }
            }
        }
        Ok(Self {
            schema,
            features,
            labels,
            institution_id: institution_id.into(),
            standardized,
        })
    }

    pub fn schema(&self) -> &ColumnSchema {
        &self.schema
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn institution_id(&self) -> &str {
        &self.institution_id
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn case_count(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn case_ratio(&self) -> f64 {
        if self.labels.is_empty() {
            0.0
        } else {
            self.case_count() as f64 / self.n() as f64
        }
    }

    /// New dataset holding the given rows, preserving all flags.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let features = self.features.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::with_standardized(
            self.schema.clone(),
            features,
            labels,
            self.institution_id.clone(),
            self.standardized,
        )
    }

    /// Pool several datasets; schemas and standardization flags must agree.
    pub fn concat(parts: &[&Dataset], institution_id: impl Into<String>) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Data("concat of zero datasets".to_owned()))?;
        if parts
            .iter()
            .any(|d| d.schema != first.schema || d.standardized != first.standardized)
        {
            return Err(Error::Schema(
                "concat needs identical schemas and standardization state".to_owned(),
            ));
        }
        let mats: Vec<&Matrix> = parts.iter().map(|d| &d.features).collect();
        let features = Matrix::vstack(&mats)?;
        let labels = parts
            .iter()
            .flat_map(|d| d.labels.iter().copied())
            .collect();
        Dataset::with_standardized(
            first.schema.clone(),
            features,
            labels,
            institution_id,
            first.standardized,
        )
    }

    /// Rename the institution tag (used when assignments regroup rows).
    pub fn with_institution(mut self, id: impl Into<String>) -> Dataset {
        self.institution_id = id.into();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_bc() -> ColumnSchema {
        ColumnSchema::new(vec![
            ColumnDef {
                name: "flag".into(),
                kind: ColumnKind::Binary,
            },
            ColumnDef {
                name: "value".into(),
                kind: ColumnKind::Continuous,
            },
        ])
        .unwrap()
    }

    #[test]
    fn schema_rejects_duplicates_and_empty() {
        assert!(ColumnSchema::new(vec![]).is_err());
        assert!(ColumnSchema::new(vec![
            ColumnDef {
                name: "x".into(),
                kind: ColumnKind::Binary
            },
            ColumnDef {
                name: "x".into(),
                kind: ColumnKind::Continuous
            },
        ])
        .is_err());
    }

    #[test]
    fn dataset_rejects_nonbinary_values() {
        let features = Matrix::from_rows(&[vec![0.5, 1.0]]).unwrap();
        let err = Dataset::new(schema_bc(), features, vec![0], "a").unwrap_err();
        assert!(err.to_string().contains("flag"));
    }

    #[test]
    fn dataset_rejects_nan() {
        let features = Matrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap();
        assert!(Dataset::new(schema_bc(), features, vec![0], "a").is_err());
    }

    #[test]
    fn concat_checks_flags() {
        let a = Dataset::new(
            schema_bc(),
            Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap(),
            vec![0],
            "a",
        )
        .unwrap();
        let pooled = Dataset::concat(&[&a, &a], "pool").unwrap();
        assert_eq!(pooled.n(), 2);
        assert_eq!(pooled.institution_id(), "pool");
    }
}
