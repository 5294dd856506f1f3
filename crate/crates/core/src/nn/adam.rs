//! Adam with bias correction and decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::{Gradients, LayerTensors, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled: applied directly to parameters, never through the moments.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.epsilon <= 0.0
            || self.weight_decay < 0.0
        {
            return Err(Error::Config("invalid Adam configuration".to_owned()));
        }
        Ok(())
    }
}

/// Adam over a flat `f64` slice. The model optimizer and the per-sample
/// latent optimizer in knowledge extraction both build on this.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VecAdam {
    first: Vec<f64>,
    second: Vec<f64>,
    step_count: u64,
    config: AdamConfig,
}

impl VecAdam {
    pub fn new(len: usize, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
            step_count: 0,
            config,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update. Fails fast on non-finite gradients; nothing is clamped
    /// silently.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Shape("Adam state shape mismatch".to_owned()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(
                "non-finite gradient in Adam step".to_owned(),
            ));
        }
        self.step_count += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step_count as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.first[i] = c.beta1 * self.first[i] + (1.0 - c.beta1) * g;
            self.second[i] = c.beta2 * self.second[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.first[i] / bc1;
            let v_hat = self.second[i] / bc2;
            let decay = c.learning_rate * c.weight_decay * params[i];
            params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon) + decay;
        }
        Ok(())
    }
}

/// Adam moments mirroring a model's layer tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    weights: Vec<VecAdam>,
    biases: Vec<VecAdam>,
    step_count: u64,
    config: AdamConfig,
}

impl AdamState {
    pub fn new(model: &Mlp, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in model.layers() {
            weights.push(VecAdam::new(l.weights.len(), config)?);
            biases.push(VecAdam::new(l.biases.len(), config)?);
        }
        Ok(Self {
            weights,
            biases,
            step_count: 0,
            config,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Apply one optimizer step to the model in place.
    pub fn step(&mut self, model: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.weights.len() {
            return Err(Error::Shape("gradient layer count mismatch".to_owned()));
        }
        // Validate everything before touching any parameter.
        if !grads.is_finite() {
            return Err(Error::Numeric(
                "non-finite gradient in Adam step".to_owned(),
            ));
        }
        self.step_count += 1;
        for (l, gt) in grads.layers.iter().enumerate() {
            let LayerTensors { weights, biases } = gt;
            let layer = &mut model.layers[l];
            self.weights[l].step(&mut layer.weights, weights)?;
            self.biases[l].step(&mut layer.biases, biases)?;
        }
        Ok(())
    }
}
