//! Local statistics, their privacy-preserving merge, and standardization.
//!
//! The merge combines per-institution counts, means, and population
//! variances into the pooled statistics without touching any rows:
//!
//! ```text
//! N    = sum(N_i)
//! mean = sum(N_i * mean_i) / N
//! var  = sum(N_i * (mean_i^2 + var_i)) / N - mean^2
//! ```
//!
//! Under the population (divide-by-N) convention this equals the variance of
//! the concatenated data exactly, via E(X^2) - E(X)^2.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::{Error, Result};

/// Per-column statistics for one continuous column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStat {
    pub name: String,
    pub count: u64,
    pub mean: f64,
    /// Population variance (divide by N).
    pub variance: f64,
}

/// Statistics over the continuous columns of one training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub total_rows: u64,
    pub columns: Vec<ColumnStat>,
}

/// Population mean/variance per continuous column of an unstandardized
/// training split.
pub fn local_stats(ds: &Dataset) -> Result<ColumnStats> {
    if ds.is_standardized() {
        return Err(Error::Data(
            "statistics must be computed on unstandardized data".to_owned(),
        ));
    }
    let n = ds.n();
    if n == 0 {
        return Err(Error::Data("statistics of an empty dataset".to_owned()));
    }
    let mut columns = Vec::new();
    for &c in &ds.schema().continuous_indices() {
        let mut sum = 0.0;
        for r in 0..n {
            sum += ds.features().get(r, c);
        }
        let mean = sum / n as f64;
        let mut sq = 0.0;
        for r in 0..n {
            let d = ds.features().get(r, c) - mean;
            sq += d * d;
        }
        columns.push(ColumnStat {
            name: ds.schema().columns()[c].name.clone(),
            count: n as u64,
            mean,
            variance: sq / n as f64,
        });
    }
    Ok(ColumnStats {
        total_rows: n as u64,
        columns,
    })
}

/// Merge local statistics into global ones. Exactly equals pooled-data
/// statistics under the population convention.
pub fn merge_stats(parts: &[ColumnStats]) -> Result<ColumnStats> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Data("merge of zero statistics".to_owned()))?;
    for p in parts {
        if p.columns.len() != first.columns.len()
            || p.columns
                .iter()
                .zip(&first.columns)
                .any(|(a, b)| a.name != b.name)
        {
            return Err(Error::Schema("mismatched columns in merge".to_owned()));
        }
        if p.total_rows == 0 || p.columns.iter().any(|c| c.count == 0) {
            return Err(Error::Data("merge needs positive counts".to_owned()));
        }
    }
    let total_rows = parts.iter().map(|p| p.total_rows).sum();
    let mut columns = Vec::with_capacity(first.columns.len());
    for col_idx in 0..first.columns.len() {
        let n: u64 = parts.iter().map(|p| p.columns[col_idx].count).sum();
        let nf = n as f64;
        let mean = parts
            .iter()
            .map(|p| {
                let c = &p.columns[col_idx];
                c.count as f64 * c.mean
            })
            .sum::<f64>()
            / nf;
        let second_moment = parts
            .iter()
            .map(|p| {
                let c = &p.columns[col_idx];
                c.count as f64 * (c.mean * c.mean + c.variance)
            })
            .sum::<f64>()
            / nf;
        let variance = (second_moment - mean * mean).max(0.0);
        columns.push(ColumnStat {
            name: first.columns[col_idx].name.clone(),
            count: n,
            mean,
            variance,
        });
    }
    Ok(ColumnStats {
        total_rows,
        columns,
    })
}

/// Standardize continuous columns as `(x - mean) / sqrt(variance)`; binary
/// columns pass through untouched.
///
/// Zero-variance columns are centered only; each such column is reported in
/// the returned warning list.
pub fn standardize(ds: &Dataset, stats: &ColumnStats) -> Result<(Dataset, Vec<String>)> {
    if ds.is_standardized() {
        return Err(Error::Data("dataset is already standardized".to_owned()));
    }
    let continuous = ds.schema().continuous_indices();
    if continuous.len() != stats.columns.len()
        || continuous
            .iter()
            .zip(&stats.columns)
            .any(|(&c, s)| ds.schema().columns()[c].name != s.name)
    {
        return Err(Error::Schema(
            "statistics do not match the dataset's continuous columns".to_owned(),
        ));
    }
    let mut features = ds.features().clone();
    let mut warnings = Vec::new();
    for (&c, stat) in continuous.iter().zip(&stats.columns) {
        let sigma = stat.variance.sqrt();
        if sigma == 0.0 {
            warnings.push(format!(
                "column '{}' has zero variance; centered without scaling",
                stat.name
            ));
            for r in 0..features.rows() {
                let v = features.get(r, c);
                features.set(r, c, v - stat.mean);
            }
        } else {
            for r in 0..features.rows() {
                let v = features.get(r, c);
                features.set(r, c, (v - stat.mean) / sigma);
            }
        }
    }
    let out = Dataset::with_standardized(
        ds.schema().clone(),
        features,
        ds.labels().to_vec(),
        ds.institution_id().to_owned(),
        true,
    )?;
    Ok((out, warnings))
}

pub const STATS_FILE_VERSION: u32 = 1;

/// The statistics exchange file: the only artifact that crosses institution
/// boundaries at preparation time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsExchangeFile {
    pub version: u32,
    /// `(institution id, its local training-split statistics)`, in
    /// descending training-split size.
    pub institutions: Vec<(String, ColumnStats)>,
    pub global: ColumnStats,
}

impl StatsExchangeFile {
    pub fn build(institutions: Vec<(String, ColumnStats)>) -> Result<Self> {
        let parts: Vec<ColumnStats> = institutions.iter().map(|(_, s)| s.clone()).collect();
        let global = merge_stats(&parts)?;
        Ok(Self {
            version: STATS_FILE_VERSION,
            institutions,
            global,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if file.version != STATS_FILE_VERSION {
            return Err(Error::Config(format!(
                "unsupported stats file version {}",
                file.version
            )));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnDef, ColumnKind, ColumnSchema};
    use crate::matrix::Matrix;

    fn continuous_ds(values: &[f64]) -> Dataset {
        let schema = ColumnSchema::new(vec![ColumnDef {
            name: "c0".into(),
            kind: ColumnKind::Continuous,
        }])
        .unwrap();
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let labels = vec![0; values.len()];
        Dataset::new(schema, Matrix::from_rows(&rows).unwrap(), labels, "x").unwrap()
    }

    #[test]
    fn local_stats_hand_values() {
        let s = local_stats(&continuous_ds(&[0.0, 2.0])).unwrap();
        assert_eq!(s.columns[0].mean, 1.0);
        assert_eq!(s.columns[0].variance, 1.0);

        let constant = local_stats(&continuous_ds(&[3.0, 3.0, 3.0])).unwrap();
        assert_eq!(constant.columns[0].variance, 0.0);

        let single = local_stats(&continuous_ds(&[7.5])).unwrap();
        assert_eq!(single.columns[0].mean, 7.5);
        assert_eq!(single.columns[0].variance, 0.0);
    }

    #[test]
    fn merge_hand_value() {
        let a = local_stats(&continuous_ds(&[0.0, 2.0])).unwrap();
        let b = local_stats(&continuous_ds(&[4.0, 6.0])).unwrap();
        let merged = merge_stats(&[a, b]).unwrap();
        assert_eq!(merged.total_rows, 4);
        assert_eq!(merged.columns[0].count, 4);
        assert!((merged.columns[0].mean - 3.0).abs() < 1e-12);
        assert!((merged.columns[0].variance - 5.0).abs() < 1e-12);
    }

    #[test]
    fn merge_single_is_identity() {
        let a = local_stats(&continuous_ds(&[1.0, 2.0, 4.0])).unwrap();
        let merged = merge_stats(std::slice::from_ref(&a)).unwrap();
        assert_eq!(merged, a);
    }

    #[test]
    fn merge_of_copies_scales_count_only() {
        let a = local_stats(&continuous_ds(&[1.0, 2.0, 4.0])).unwrap();
        let merged = merge_stats(&[a.clone(), a.clone(), a.clone()]).unwrap();
        assert_eq!(merged.columns[0].count, 3 * a.columns[0].count);
        assert!((merged.columns[0].mean - a.columns[0].mean).abs() < 1e-12);
        assert!((merged.columns[0].variance - a.columns[0].variance).abs() < 1e-12);
    }

    #[test]
    fn merge_rejects_mismatched_columns() {
        let a = local_stats(&continuous_ds(&[1.0, 2.0])).unwrap();
        let mut b = a.clone();
        b.columns[0].name = "other".into();
        assert!(merge_stats(&[a, b]).is_err());
    }

    #[test]
    fn standardize_hand_value() {
        let ds = continuous_ds(&[0.0, 2.0]);
        let stats = local_stats(&ds).unwrap();
        let (out, warnings) = standardize(&ds, &stats).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(out.features().get(0, 0), -1.0);
        assert_eq!(out.features().get(1, 0), 1.0);
        assert!(out.is_standardized());
        // Idempotence guard: a second pass is rejected.
        assert!(standardize(&out, &stats).is_err());
    }

    #[test]
    fn standardize_zero_variance_centers_and_warns() {
        let ds = continuous_ds(&[5.0, 5.0, 5.0]);
        let stats = local_stats(&ds).unwrap();
        let (out, warnings) = standardize(&ds, &stats).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("c0"));
        assert!(out.features().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardize_leaves_binary_untouched() {
        let schema = ColumnSchema::new(vec![
            ColumnDef {
                name: "b0".into(),
                kind: ColumnKind::Binary,
            },
            ColumnDef {
                name: "c0".into(),
                kind: ColumnKind::Continuous,
            },
        ])
        .unwrap();
        let features = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let ds = Dataset::new(schema, features, vec![0, 1], "x").unwrap();
        let stats = local_stats(&ds).unwrap();
        let (out, _) = standardize(&ds, &stats).unwrap();
        assert_eq!(out.features().get(0, 0).to_bits(), 1.0f64.to_bits());
        assert_eq!(out.features().get(1, 0).to_bits(), 0.0f64.to_bits());
    }
}
