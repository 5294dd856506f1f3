//! Diagonal-covariance Gaussian mixtures fitted with EM.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{Error, Result};

/// Variance floor; full covariances are ill-conditioned at these
/// dimensionalities, so variances are diagonal and floored.
pub const VARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837877066409345;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Diagonal covariance entries, elementwise >= [`VARIANCE_FLOOR`].
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmModel {
    pub components: Vec<GmmComponent>,
    /// Log-likelihood after each EM iteration; non-decreasing.
    pub log_likelihood_trace: Vec<f64>,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    fn log_component_density(&self, comp: &GmmComponent, x: &[f64]) -> f64 {
        let mut ll = 0.0;
        for ((&v, &m), &xi) in comp.variance.iter().zip(&comp.mean).zip(x) {
            let d = xi - m;
            ll -= 0.5 * (LN_2PI + v.ln() + d * d / v);
        }
        ll
    }

    /// Log joint `ln(weight_k) + ln N(x | comp_k)` per component.
    fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.weight.ln() + self.log_component_density(c, x))
            .collect()
    }

    /// Posterior responsibilities for one row.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let logs = self.log_joint(x);
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        probs
    }

    fn log_likelihood_row(&self, x: &[f64]) -> f64 {
        let logs = self.log_joint(x);
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }
}

fn global_variance(x: &Matrix) -> Vec<f64> {
    let n = x.rows() as f64;
    let dim = x.cols();
    let mut mean = vec![0.0; dim];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for row in x.iter_rows() {
        for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(row) {
            let d = v - m;
            *s += d * d;
        }
    }
    for s in &mut var {
        *s = (*s / n).max(VARIANCE_FLOOR);
    }
    var
}

/// Fit a K-component diagonal GMM with EM. Collapsed components are
/// reinitialized from random data rows a bounded number of times before the
/// fit fails.
pub fn fit_gmm(x: &Matrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<GmmModel> {
    if k == 0 {
        return Err(Error::Config("GMM needs at least one component".to_owned()));
    }
    if x.rows() < k {
        return Err(Error::Data(format!(
            "{} rows cannot support {} components",
            x.rows(),
            k
        )));
    }
    if x.cols() == 0 {
        return Err(Error::Data("GMM input has no columns".to_owned()));
    }
    let mut rng = crate::rng::stream_rng(seed, &[crate::rng::tags::GMM]);
    let n = x.rows();
    let dim = x.cols();
    let base_var = global_variance(x);

    // Means seeded k-means++ style: first from a random row, then rows drawn
    // proportional to squared distance from the chosen set. Spread-out inits
    // keep EM away from the one-component-covers-everything optimum.
    let mut centers: Vec<usize> = vec![rng.gen_range(0..n)];
    let mut sq_dist: Vec<f64> = (0..n)
        .map(|r| {
            x.row(r)
                .iter()
                .zip(x.row(centers[0]))
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect();
    while centers.len() < k {
        let total: f64 = sq_dist.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (r, &d) in sq_dist.iter().enumerate() {
                u -= d;
                if u <= 0.0 {
                    pick = r;
                    break;
                }
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centers.push(next);
        for r in 0..n {
            let d: f64 = x
                .row(r)
                .iter()
                .zip(x.row(next))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < sq_dist[r] {
                sq_dist[r] = d;
            }
        }
    }
    let mut model = GmmModel {
        components: centers
            .into_iter()
            .map(|row| GmmComponent {
                weight: 1.0 / k as f64,
                mean: x.row(row).to_vec(),
                variance: base_var.clone(),
            })
            .collect(),
        log_likelihood_trace: Vec::new(),
    };

    let mut reinits_left = 3 * k;
    let mut resp = Matrix::zeros(n, k);
    let mut iter = 0;
    while iter < max_iter {
        // E-step + log-likelihood.
        let mut ll = 0.0;
        for r in 0..n {
            let probs = model.responsibilities(x.row(r));
            ll += model.log_likelihood_row(x.row(r));
            resp.row_mut(r).copy_from_slice(&probs);
        }

        // Detect collapsed components before the M-step.
        let mut collapsed = None;
        for c in 0..k {
            let mass: f64 = (0..n).map(|r| resp.get(r, c)).sum();
            if !mass.is_finite() || mass < 1e-10 {
                collapsed = Some(c);
                break;
            }
        }
        if let Some(c) = collapsed {
            if reinits_left == 0 {
                return Err(Error::Numeric(format!(
                    "GMM component {c} collapsed beyond retry budget"
                )));
            }
            reinits_left -= 1;
            let row = rng.gen_range(0..n);
            model.components[c].mean = x.row(row).to_vec();
            model.components[c].variance = base_var.clone();
            let w = 1.0 / k as f64;
            for comp in &mut model.components {
                comp.weight *= 1.0 - w;
            }
            model.components[c].weight += w;
            // Restart the trace: monotonicity is only meaningful per
            // initialization.
            model.log_likelihood_trace.clear();
            iter = 0;
            continue;
        }

        let converged = model
            .log_likelihood_trace
            .last()
            .is_some_and(|&prev| (ll - prev).abs() < tol);
        model.log_likelihood_trace.push(ll);
        if converged {
            break;
        }

        // M-step.
        for c in 0..k {
            let mass: f64 = (0..n).map(|r| resp.get(r, c)).sum();
            let mut mean = vec![0.0; dim];
            for r in 0..n {
                let w = resp.get(r, c);
                for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                    *m += w * v;
                }
            }
            for m in &mut mean {
                *m /= mass;
            }
            let mut var = vec![0.0; dim];
            for r in 0..n {
                let w = resp.get(r, c);
                for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(x.row(r)) {
                    let d = v - m;
                    *s += w * d * d;
                }
            }
            for s in &mut var {
                *s = (*s / mass).max(VARIANCE_FLOOR);
            }
            model.components[c] = GmmComponent {
                weight: mass / n as f64,
                mean,
                variance: var,
            };
        }
        iter += 1;
    }
    Ok(model)
}

/// Sample a component per row from its posterior responsibilities.
pub fn assign_by_density(x: &Matrix, gmm: &GmmModel, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if x.cols() != gmm.dim() {
        return Err(Error::Shape(format!(
            "rows have {} columns, model expects {}",
            x.cols(),
            gmm.dim()
        )));
    }
    let mut out = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let probs = gmm.responsibilities(x.row(r));
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = gmm.k() - 1;
        for (c, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = c;
                break;
            }
        }
        out.push(chosen);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cluster_data(centers: &[(f64, f64)], per: usize, sd: f64, seed: u64) -> Matrix {
        let mut rng = stream_rng(seed, &[100]);
        let mut rows = Vec::new();
        for &(cx, cy) in centers {
            for _ in 0..per {
                let nx: f64 = StandardNormal.sample(&mut rng);
                let ny: f64 = StandardNormal.sample(&mut rng);
                rows.push(vec![cx + sd * nx, cy + sd * ny]);
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn single_component_recovers_moments() {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 8.0]]).unwrap();
        let gmm = fit_gmm(&x, 1, 0, 50, 1e-9).unwrap();
        let c = &gmm.components[0];
        assert!((c.mean[0] - 2.0).abs() < 1e-9);
        assert!((c.mean[1] - 4.0).abs() < 1e-9);
        // Population variances of {0,2,4} and {1,3,8}.
        assert!((c.variance[0] - 8.0 / 3.0).abs() < 1e-9);
        assert!((c.variance[1] - 26.0 / 3.0).abs() < 1e-6);
        assert!((c.weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_separated_clusters_are_recovered() {
        let x = cluster_data(&[(-5.0, 0.0), (5.0, 0.0)], 400, 1.0, 3);
        let gmm = fit_gmm(&x, 2, 1, 200, 1e-8).unwrap();
        let mut means: Vec<f64> = gmm.components.iter().map(|c| c.mean[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 5.0).abs() < 0.2, "mean {}", means[0]);
        assert!((means[1] - 5.0).abs() < 0.2, "mean {}", means[1]);
    }

    #[test]
    fn log_likelihood_is_monotone() {
        let x = cluster_data(&[(-2.0, 1.0), (3.0, -1.0), (0.0, 4.0)], 150, 1.2, 9);
        let gmm = fit_gmm(&x, 3, 5, 100, 1e-10).unwrap();
        for pair in gmm.log_likelihood_trace.windows(2) {
            assert!(
                pair[1] - pair[0] >= -1e-9,
                "log-likelihood decreased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn density_assignment_prefers_the_right_component() {
        let x = cluster_data(&[(-5.0, 0.0), (5.0, 0.0)], 300, 1.0, 13);
        let gmm = fit_gmm(&x, 2, 2, 200, 1e-8).unwrap();
        // A row at a component mean should be assigned to that component
        // nearly always.
        let target = gmm.components[0].mean.clone();
        let probe = Matrix::from_rows(&[target]).unwrap();
        let mut rng = stream_rng(17, &[1]);
        let mut hits = 0;
        for _ in 0..1000 {
            if assign_by_density(&probe, &gmm, &mut rng).unwrap()[0] == 0 {
                hits += 1;
            }
        }
        assert!(hits >= 990, "hits {hits}");
    }

    #[test]
    fn aggregate_assignment_counts_follow_weights() {
        let x = cluster_data(&[(-5.0, 0.0), (5.0, 0.0)], 500, 1.0, 23);
        let gmm = fit_gmm(&x, 2, 3, 200, 1e-8).unwrap();
        let mut rng = stream_rng(29, &[2]);
        let assign = assign_by_density(&x, &gmm, &mut rng).unwrap();
        let n = x.rows() as f64;
        for (c, comp) in gmm.components.iter().enumerate() {
            let count = assign.iter().filter(|&&a| a == c).count() as f64;
            let sigma = (n * comp.weight * (1.0 - comp.weight)).sqrt();
            assert!(
                (count - n * comp.weight).abs() <= 3.0 * sigma + 1.0,
                "component {c}: count {count}, expected {}",
                n * comp.weight
            );
        }
    }

    #[test]
    fn k_one_assigns_everything_to_component_zero() {
        let x = cluster_data(&[(0.0, 0.0)], 50, 1.0, 31);
        let gmm = fit_gmm(&x, 1, 0, 20, 1e-8).unwrap();
        let mut rng = stream_rng(37, &[3]);
        let assign = assign_by_density(&x, &gmm, &mut rng).unwrap();
        assert!(assign.iter().all(|&a| a == 0));
    }
}
