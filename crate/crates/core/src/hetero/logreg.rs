//! Full-batch logistic regression and hyperplane angle measurement.
//!
//! The fit is deterministic: zero init, constant-rate gradient descent,
//! stopping on gradient infinity-norm. The weight vector is the normal of
//! the decision hyperplane; angles between institutions' normals measure
//! feature heterogeneity.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::nn::sigmoid;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub final_loss: f64,
    pub final_grad_norm: f64,
}

pub fn fit_logreg(
    x: &Matrix,
    y: &[u8],
    learning_rate: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LogRegModel> {
    if x.rows() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows vs {} labels",
            x.rows(),
            y.len()
        )));
    }
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(Error::Data(
            "logistic regression needs both classes".to_owned(),
        ));
    }
    let n = x.rows() as f64;
    let dim = x.cols();
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut iterations = 0;
    let mut final_loss = f64::INFINITY;
    let mut final_grad_norm = f64::INFINITY;
    for _ in 0..max_iter {
        let mut grad_w = vec![0.0; dim];
        let mut grad_b = 0.0;
        let mut loss = 0.0;
        for (r, &label) in y.iter().enumerate() {
            let row = x.row(r);
            let z: f64 = bias + weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
            let p = sigmoid(z);
            let err = p - label as f64;
            // stable BCE
            loss += z.max(0.0) - z * label as f64 + (-z.abs()).exp().ln_1p();
            for (g, &v) in grad_w.iter_mut().zip(row) {
                *g += err * v;
            }
            grad_b += err;
        }
        loss /= n;
        for g in &mut grad_w {
            *g /= n;
        }
        grad_b /= n;
        let grad_norm = grad_w
            .iter()
            .chain(std::iter::once(&grad_b))
            .fold(0.0f64, |m, g| m.max(g.abs()));
        final_loss = loss;
        final_grad_norm = grad_norm;
        if grad_norm <= tol {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= learning_rate * g;
        }
        bias -= learning_rate * grad_b;
        iterations += 1;
    }
    if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
        return Err(Error::Numeric("logistic regression diverged".to_owned()));
    }
    Ok(LogRegModel {
        weights,
        bias,
        iterations,
        final_loss,
        final_grad_norm,
    })
}

/// Mean over all unordered pairs of the plain arccos of cosine similarity
/// between weight vectors, in radians within [0, pi]. Bias terms are
/// excluded (normal-vector semantics): opposite-facing separators count as
/// maximally heterogeneous.
pub fn mean_pairwise_angle(models: &[LogRegModel]) -> Result<f64> {
    if models.len() < 2 {
        return Err(Error::Data(
            "angle measurement needs at least two models".to_owned(),
        ));
    }
    let norms: Vec<f64> = models
        .iter()
        .map(|m| m.weights.iter().map(|w| w * w).sum::<f64>().sqrt())
        .collect();
    if norms.contains(&0.0) {
        return Err(Error::Numeric("zero-norm weight vector".to_owned()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..models.len() {
        for j in (i + 1)..models.len() {
            let dot: f64 = models[i]
                .weights
                .iter()
                .zip(&models[j].weights)
                .map(|(a, b)| a * b)
                .sum();
            let cos = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            total += cos.acos();
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}
