//! Heterogeneous institution construction.
//!
//! One dataset is carved into `n` hypothetical institutions: a GMM with `n`
//! components is fitted per class group (2n Gaussians total) on the
//! continuous columns, rows are sampled into components by posterior
//! density, and every bijective pairing of control components with outcome
//! components is scored by the mean pairwise angle between per-institution
//! logistic-regression weight vectors. The pairing with the maximum mean
//! angle wins, maximizing feature heterogeneity.

mod gmm;
mod logreg;

pub use gmm::{assign_by_density, fit_gmm, GmmComponent, GmmModel, VARIANCE_FLOOR};
pub use logreg::{fit_logreg, mean_pairwise_angle, LogRegModel};

use serde::{Deserialize, Serialize};

use crate::data::{local_stats, standardize, Dataset};
use crate::exec;
use crate::matrix::Matrix;
use crate::rng::{stream_rng, tags};
use crate::{Error, Result};

/// EM / logistic-regression settings for the pairing search. The defaults
/// are what [`build_heterogeneous_institutions`] uses.
const GMM_MAX_ITER: usize = 200;
const GMM_TOL: f64 = 1e-7;
const LOGREG_LR: f64 = 0.5;
const LOGREG_MAX_ITER: usize = 300;
const LOGREG_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeteroDiagnostics {
    /// EM log-likelihood traces for the control- and outcome-group GMMs.
    pub control_ll_trace: Vec<f64>,
    pub outcome_ll_trace: Vec<f64>,
    /// Mean angle per candidate pairing, indexed by lexicographic
    /// permutation rank; `None` marks skipped candidates.
    pub candidate_angles: Vec<Option<f64>>,
}

/// Result of the pairing search: a partition of all rows into named
/// institutions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstitutionAssignment {
    /// Row index -> institution index (into `names`).
    pub institution_of_row: Vec<usize>,
    /// "local 1".. in descending institution size.
    pub names: Vec<String>,
    pub sizes: Vec<usize>,
    /// Winning pairing: outcome component paired with control component `j`
    /// is `chosen_pairing[j]` (component indices from the per-class GMMs).
    pub chosen_pairing: Vec<usize>,
    /// Achieved mean pairwise hyperplane angle in radians; `None` for a
    /// single institution.
    pub mean_angle: Option<f64>,
    pub candidates_evaluated: usize,
    pub diagnostics: Option<HeteroDiagnostics>,
}

impl InstitutionAssignment {
    /// Split the original dataset into per-institution datasets, ordered as
    /// `names`.
    pub fn apply(&self, ds: &Dataset) -> Result<Vec<Dataset>> {
        if ds.n() != self.institution_of_row.len() {
            return Err(Error::Shape(format!(
                "assignment covers {} rows, dataset has {}",
                self.institution_of_row.len(),
                ds.n()
            )));
        }
        let mut out = Vec::with_capacity(self.names.len());
        for (inst, name) in self.names.iter().enumerate() {
            let idx: Vec<usize> = self
                .institution_of_row
                .iter()
                .enumerate()
                .filter(|(_, &a)| a == inst)
                .map(|(i, _)| i)
                .collect();
            out.push(ds.select(&idx)?.with_institution(name.clone()));
        }
        Ok(out)
    }
}

/// Lexicographic permutations of `0..n`.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            rec(prefix, rest, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

pub fn build_heterogeneous_institutions(
    ds: &Dataset,
    n_institutions: usize,
    seed: u64,
) -> Result<InstitutionAssignment> {
    if n_institutions == 0 {
        return Err(Error::Config("need at least one institution".to_owned()));
    }
    if ds.schema().continuous_indices().is_empty() {
        return Err(Error::Data(
            "heterogeneous split needs continuous columns".to_owned(),
        ));
    }
    let n = ds.n();
    if n_institutions == 1 {
        return Ok(InstitutionAssignment {
            institution_of_row: vec![0; n],
            names: vec!["local 1".to_owned()],
            sizes: vec![n],
            chosen_pairing: vec![0],
            mean_angle: None,
            candidates_evaluated: 0,
            diagnostics: None,
        });
    }

    let control_rows: Vec<usize> = (0..n).filter(|&i| ds.labels()[i] == 0).collect();
    let outcome_rows: Vec<usize> = (0..n).filter(|&i| ds.labels()[i] == 1).collect();
    if control_rows.is_empty() || outcome_rows.is_empty() {
        return Err(Error::Data("both classes must be present".to_owned()));
    }

    // Angle measurement must not be dominated by column scale: work on
    // standardized features throughout.
    let std_ds = if ds.is_standardized() {
        ds.clone()
    } else {
        let stats = local_stats(ds)?;
        standardize(ds, &stats)?.0
    };
    let continuous = std_ds.schema().continuous_indices();
    let continuous_submatrix = |rows: &[usize]| -> Matrix {
        let mut m = Matrix::zeros(rows.len(), continuous.len());
        for (ri, &r) in rows.iter().enumerate() {
            for (ci, &c) in continuous.iter().enumerate() {
                m.set(ri, ci, std_ds.features().get(r, c));
            }
        }
        m
    };

    let control_x = continuous_submatrix(&control_rows);
    let outcome_x = continuous_submatrix(&outcome_rows);
    let control_gmm = fit_gmm(
        &control_x,
        n_institutions,
        crate::rng::derive_seed(seed, &[tags::GMM, 0]),
        GMM_MAX_ITER,
        GMM_TOL,
    )?;
    let outcome_gmm = fit_gmm(
        &outcome_x,
        n_institutions,
        crate::rng::derive_seed(seed, &[tags::GMM, 1]),
        GMM_MAX_ITER,
        GMM_TOL,
    )?;

    let mut control_rng = stream_rng(seed, &[tags::ASSIGN, 0]);
    let mut outcome_rng = stream_rng(seed, &[tags::ASSIGN, 1]);
    let control_comp = assign_by_density(&control_x, &control_gmm, &mut control_rng)?;
    let outcome_comp = assign_by_density(&outcome_x, &outcome_gmm, &mut outcome_rng)?;

    // Candidate pairing p maps control component j to outcome component
    // p[j]; evaluations are independent and reduced in index order.
    let candidates = permutations(n_institutions);
    let features = std_ds.features();
    let labels = std_ds.labels();
    let evaluate = |pairing: &Vec<usize>| -> Option<f64> {
        let mut models = Vec::with_capacity(n_institutions);
        for j in 0..n_institutions {
            let mut rows: Vec<usize> = control_rows
                .iter()
                .enumerate()
                .filter(|(ci, _)| control_comp[*ci] == j)
                .map(|(_, &r)| r)
                .collect();
            rows.extend(
                outcome_rows
                    .iter()
                    .enumerate()
                    .filter(|(oi, _)| outcome_comp[*oi] == pairing[j])
                    .map(|(_, &r)| r),
            );
            if rows.is_empty() {
                return None;
            }
            let x = features.select_rows(&rows);
            let y: Vec<u8> = rows.iter().map(|&r| labels[r]).collect();
            match fit_logreg(&x, &y, LOGREG_LR, LOGREG_MAX_ITER, LOGREG_TOL) {
                Ok(m) => models.push(m),
                Err(_) => return None, // empty or single-class institution
            }
        }
        mean_pairwise_angle(&models).ok()
    };
    let candidate_angles: Vec<Option<f64>> =
        exec::map_indexed(candidates.len(), |i| evaluate(&candidates[i]));

    let mut best: Option<(usize, f64)> = None;
    for (i, angle) in candidate_angles.iter().enumerate() {
        if let Some(a) = angle {
            // Strict comparison: ties go to the lowest lexicographic index.
            if best.is_none_or(|(_, b)| *a > b) {
                best = Some((i, *a));
            }
        }
    }
    let (best_idx, best_angle) = best.ok_or_else(|| {
        Error::Data(
            "every candidate pairing produced an empty or single-class institution".to_owned(),
        )
    })?;
    let pairing = candidates[best_idx].clone();

    // Materialize the winning assignment, then rename by descending size.
    let mut raw_assignment = vec![0usize; n];
    for (ci, &r) in control_rows.iter().enumerate() {
        raw_assignment[r] = control_comp[ci];
    }
    let outcome_inst_of_comp: Vec<usize> = (0..n_institutions)
        .map(|comp| pairing.iter().position(|&p| p == comp).unwrap())
        .collect();
    for (oi, &r) in outcome_rows.iter().enumerate() {
        raw_assignment[r] = outcome_inst_of_comp[outcome_comp[oi]];
    }
    let mut raw_sizes = vec![0usize; n_institutions];
    for &a in &raw_assignment {
        raw_sizes[a] += 1;
    }
    let mut rank_order: Vec<usize> = (0..n_institutions).collect();
    rank_order.sort_by(|&a, &b| raw_sizes[b].cmp(&raw_sizes[a]).then(a.cmp(&b)));
    let mut new_index = vec![0usize; n_institutions];
    for (new, &old) in rank_order.iter().enumerate() {
        new_index[old] = new;
    }
    let institution_of_row: Vec<usize> = raw_assignment.iter().map(|&a| new_index[a]).collect();
    let sizes: Vec<usize> = rank_order.iter().map(|&old| raw_sizes[old]).collect();
    let names: Vec<String> = (1..=n_institutions).map(|k| format!("local {k}")).collect();

    Ok(InstitutionAssignment {
        institution_of_row,
        names,
        sizes,
        chosen_pairing: pairing,
        mean_angle: Some(best_angle),
        candidates_evaluated: candidates.len(),
        diagnostics: Some(HeteroDiagnostics {
            control_ll_trace: control_gmm.log_likelihood_trace,
            outcome_ll_trace: outcome_gmm.log_likelihood_trace,
            candidate_angles,
        }),
    })
}
