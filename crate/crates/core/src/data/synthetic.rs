//! Synthetic multi-institution generator.
//!
//! Each institution draws class-conditional Gaussians whose separating
//! direction lies in the plane of the first two continuous columns, rotated
//! by a per-institution angle. Requesting different angles yields
//! institutions whose optimal separating hyperplanes differ by those angles,
//! which is how feature heterogeneity is dialed in.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ColumnSchema, Dataset};
use crate::matrix::Matrix;
use crate::rng::{stream_rng, tags};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstitutionSpec {
    /// Display name; autogenerated as "local k" in descending size when
    /// omitted.
    #[serde(default)]
    pub name: Option<String>,
    pub rows: usize,
    /// Angle of this institution's separating direction, in degrees within
    /// [0, 180].
    pub angle_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_binary: usize,
    pub n_continuous: usize,
    pub institutions: Vec<InstitutionSpec>,
    /// Probability that a row is a case; rows are labeled independently.
    #[serde(default = "default_case_ratio")]
    pub case_ratio: f64,
    /// Distance from the origin to each class mean along the institution's
    /// direction.
    #[serde(default = "default_separation")]
    pub class_separation: f64,
    /// Isotropic noise on the continuous columns.
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    /// Bernoulli rates for binary columns, per class.
    #[serde(default = "default_p_control")]
    pub binary_p_control: f64,
    #[serde(default = "default_p_case")]
    pub binary_p_case: f64,
}

fn default_case_ratio() -> f64 {
    0.08
}
fn default_separation() -> f64 {
    2.5
}
fn default_noise_sd() -> f64 {
    1.0
}
fn default_p_control() -> f64 {
    0.3
}
fn default_p_case() -> f64 {
    0.5
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n_continuous < 2 {
            return Err(Error::Config(
                "synthetic generator needs at least 2 continuous columns".to_owned(),
            ));
        }
        if self.institutions.is_empty() {
            return Err(Error::Config("no institutions specified".to_owned()));
        }
        if self.institutions.iter().any(|i| i.rows < 10) {
            return Err(Error::Config(
                "institutions need at least 10 rows".to_owned(),
            ));
        }
        if self
            .institutions
            .iter()
            .any(|i| !(0.0..=180.0).contains(&i.angle_deg))
        {
            return Err(Error::Config("angles must lie in [0, 180]".to_owned()));
        }
        if !(0.0 < self.case_ratio && self.case_ratio < 1.0) {
            return Err(Error::Config("case ratio must lie in (0, 1)".to_owned()));
        }
        if self.noise_sd <= 0.0 {
            return Err(Error::Config(
                "degenerate covariance: noise_sd must be positive".to_owned(),
            ));
        }
        for p in [self.binary_p_control, self.binary_p_case] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config("binary rates must lie in [0, 1]".to_owned()));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<ColumnSchema> {
        ColumnSchema::generated(self.n_binary, self.n_continuous)
    }
}

/// Generate one dataset per institution. Output is ordered by descending row
/// count and named "local 1".. unless names were given.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Vec<Dataset>> {
    spec.validate()?;
    let schema = spec.schema()?;
    // Descending size, stable on the original order.
    let mut order: Vec<usize> = (0..spec.institutions.len()).collect();
    order.sort_by(|&a, &b| {
        spec.institutions[b]
            .rows
            .cmp(&spec.institutions[a].rows)
            .then(a.cmp(&b))
    });

    let mut out = Vec::with_capacity(spec.institutions.len());
    for (rank, &inst_idx) in order.iter().enumerate() {
        let inst = &spec.institutions[inst_idx];
        let name = inst
            .name
            .clone()
            .unwrap_or_else(|| format!("local {}", rank + 1));
        // Streams keyed by the institution's position in the spec, so adding
        // or renaming institutions elsewhere does not disturb the draw.
        let mut rng = stream_rng(seed, &[tags::SYNTH, inst_idx as u64]);
        let angle = inst.angle_deg.to_radians();
        let direction = (angle.cos(), angle.sin());

        let n_cols = spec.n_binary + spec.n_continuous;
        let mut features = Matrix::zeros(inst.rows, n_cols);
        let mut labels = Vec::with_capacity(inst.rows);
        for r in 0..inst.rows {
            let is_case = rng.gen::<f64>() < spec.case_ratio;
            labels.push(u8::from(is_case));
            let p_bit = if is_case {
                spec.binary_p_case
            } else {
                spec.binary_p_control
            };
            for c in 0..spec.n_binary {
                features.set(r, c, f64::from(rng.gen::<f64>() < p_bit));
            }
            let sign = if is_case { 1.0 } else { -1.0 };
            for k in 0..spec.n_continuous {
                let center = match k {
                    0 => sign * spec.class_separation * direction.0,
                    1 => sign * spec.class_separation * direction.1,
                    _ => 0.0,
                };
                let noise: f64 = StandardNormal.sample(&mut rng);
                features.set(r, spec.n_binary + k, center + spec.noise_sd * noise);
            }
        }
        out.push(Dataset::new(schema.clone(), features, labels, name)?);
    }
    Ok(out)
}
