//! Training losses: class-weighted binary cross-entropy and the
//! temperature-scaled distillation loss for a single-logit model.
//!
//! Both are computed from logits in log-sum-exp form so large logits never
//! overflow, and both return means so loss mixing is scale-free across batch
//! sizes.

use crate::{Error, Result};

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Class weights `w_c = N / (2 * N_c)`: inverse-proportional to class
/// counts, unit mean when balanced.
pub fn class_weights(labels: &[u8]) -> Result<[f64; 2]> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data(
            "class weights need both classes present".to_owned(),
        ));
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * n_neg as f64), n / (2.0 * n_pos as f64)])
}

/// Weighted-mean binary cross-entropy from logits.
///
/// Returns the loss and its gradient with respect to each logit:
/// `w_i * (sigmoid(z_i) - y_i) / sum(w)`.
pub fn weighted_bce_loss(
    logits: &[f64],
    labels: &[u8],
    class_weights: [f64; 2],
) -> Result<(f64, Vec<f64>)> {
    if logits.is_empty() {
        return Err(Error::Data("empty batch in BCE loss".to_owned()));
    }
    if logits.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logits vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if class_weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::Config("class weights must be positive".to_owned()));
    }
    let mut loss = 0.0;
    let mut weight_sum = 0.0;
    for (&z, &y) in logits.iter().zip(labels) {
        if y > 1 {
            return Err(Error::Data(format!("label {y} is not binary")));
        }
        let w = class_weights[y as usize];
        // -[y ln s(z) + (1-y) ln(1-s(z))] in stable form
        let per = if y == 1 { softplus(-z) } else { softplus(z) };
        loss += w * per;
        weight_sum += w;
    }
    loss /= weight_sum;
    let grads = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| class_weights[y as usize] * (sigmoid(z) - y as f64) / weight_sum)
        .collect();
    Ok((loss, grads))
}

/// Per-sample distillation term for a single-logit model, realized as a
/// two-class softmax over the logits `[0, z]` at temperature `T`:
/// soft target `p* = sigmoid(z*/T)`, soft prediction `p = sigmoid(z/T)`,
/// loss `-T^2 [p* ln p + (1-p*) ln(1-p)]`, gradient `T (p - p*)`.
///
/// The gradient vanishes exactly when `z = z*`.
pub fn distillation_loss(
    current_logit: f64,
    target_logit: f64,
    temperature: f64,
) -> Result<(f64, f64)> {
    if temperature <= 0.0 {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let t = temperature;
    let p_target = sigmoid(target_logit / t);
    let zt = current_logit / t;
    let loss = t * t * (p_target * softplus(-zt) + (1.0 - p_target) * softplus(zt));
    let grad = t * (sigmoid(zt) - p_target);
    Ok((loss, grad))
}
