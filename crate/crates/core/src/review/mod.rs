//! Review learning: generative replay without a separate generator.
//!
//! Knowledge is carried between institutions as per-class target logits plus
//! a sample count. Before training on a new dataset, samples are extracted
//! from the frozen snapshot by optimizing inputs (from Gaussian noise) until
//! the snapshot's logit matches the stored class target; training then mixes
//! the real loss with a distillation loss on those generated samples,
//! weighted by the fraction of previously seen data.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, ColumnSchema, Dataset};
use crate::exec;
use crate::matrix::Matrix;
use crate::nn::{distillation_loss, AdamConfig, Gradients, Mlp, VecAdam};
use crate::rng::stream_rng;
use crate::train::{HyperParams, TrainOutcome};
use crate::{Error, Result};

/// Whether extraction runs once per institution or again at every epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionSchedule {
    Once,
    PerEpoch,
}

/// Extraction and distillation settings carried inside [`ReviewState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewConfig {
    pub temperature: f64,
    pub n_generated: usize,
    pub fv_learning_rate: f64,
    pub schedule: ExtractionSchedule,
}

impl ReviewConfig {
    pub fn from_hyper(hyper: &HyperParams) -> Self {
        Self {
            temperature: hyper.temperature,
            n_generated: hyper.n_generated,
            fv_learning_rate: hyper.fv_learning_rate,
            schedule: hyper.extraction_schedule,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(Error::Config("temperature must be positive".to_owned()));
        }
        if self.n_generated < 2 {
            return Err(Error::Config(
                "need at least one generated sample per class".to_owned(),
            ));
        }
        if self.fv_learning_rate <= 0.0 {
            return Err(Error::Config(
                "extraction learning rate must be positive".to_owned(),
            ));
        }
        Ok(())
    }
}

/// The memory that travels between institutions: a frozen model snapshot for
/// extraction, per-class target logits, and the cumulative count of samples
/// the model has been trained on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewState {
    snapshot: Option<Mlp>,
    target_logits: Option<[f64; 2]>,
    n_review: u64,
    config: ReviewConfig,
}

impl ReviewState {
    pub fn new(config: ReviewConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            snapshot: None,
            target_logits: None,
            n_review: 0,
            config,
        })
    }

    /// Restore carried-forward memory (when resuming a run mid-sequence).
    pub fn restore(
        config: ReviewConfig,
        snapshot: Option<Mlp>,
        target_logits: Option<[f64; 2]>,
        n_review: u64,
    ) -> Result<Self> {
        config.validate()?;
        if n_review > 0 && (snapshot.is_none() || target_logits.is_none()) {
            return Err(Error::Config(
                "review state with history needs a snapshot and target logits".to_owned(),
            ));
        }
        Ok(Self {
            snapshot,
            target_logits,
            n_review,
            config,
        })
    }

    pub fn n_review(&self) -> u64 {
        self.n_review
    }

    pub fn target_logits(&self) -> Option<[f64; 2]> {
        self.target_logits
    }

    pub fn snapshot(&self) -> Option<&Mlp> {
        self.snapshot.as_ref()
    }

    pub fn config(&self) -> &ReviewConfig {
        &self.config
    }
}

/// Per-sample extraction diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleDiagnostics {
    pub steps: usize,
    pub final_error: f64,
    pub converged: bool,
}

/// Samples extracted from the snapshot's weights plus their soft targets.
#[derive(Debug, Clone)]
pub struct GeneratedBatch {
    pub samples: Matrix,
    pub target_class: Vec<u8>,
    /// Snapshot logit on each final sample; the distillation target.
    pub soft_target_logits: Vec<f64>,
    pub diagnostics: Vec<SampleDiagnostics>,
}

impl GeneratedBatch {
    pub fn len(&self) -> usize {
        self.target_class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_class.is_empty()
    }

    pub fn converged_fraction(&self) -> f64 {
        if self.diagnostics.is_empty() {
            return 0.0;
        }
        self.diagnostics.iter().filter(|d| d.converged).count() as f64
            / self.diagnostics.len() as f64
    }
}

/// Mean output logit per class over the union of current-data rows (grouped
/// by true label) and generated rows (grouped by target class). Each row
/// counts once.
pub fn measure_class_logits(
    model: &Mlp,
    current: &Dataset,
    generated: Option<&GeneratedBatch>,
) -> Result<[f64; 2]> {
    let mut sums = [0.0f64; 2];
    let mut counts = [0u64; 2];
    let (logits, _) = model.forward_eval(current.features())?;
    for (&y, z) in current.labels().iter().zip(&logits) {
        sums[y as usize] += z;
        counts[y as usize] += 1;
    }
    if let Some(batch) = generated {
        let (logits, _) = model.forward_eval(&batch.samples)?;
        for (&c, z) in batch.target_class.iter().zip(&logits) {
            sums[c as usize] += z;
            counts[c as usize] += 1;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::Data(format!(
                "class {c} absent from the measurement union"
            )));
        }
    }
    Ok([sums[0] / counts[0] as f64, sums[1] / counts[1] as f64])
}

/// `lambda = n_review / (n_real + n_review)`: the fraction of previously
/// seen samples.
pub fn review_mix_weight(n_review: u64, n_real: u64) -> Result<f64> {
    if n_real == 0 {
        return Err(Error::Data("current dataset is empty".to_owned()));
    }
    Ok(n_review as f64 / (n_real + n_review) as f64)
}

/// Map a latent vector into model input space: identity on continuous
/// columns, sigmoid on binary columns (the regularization keeping binary
/// outputs inside (0, 1)).
fn latent_to_input(latent: &[f64], kinds: &[ColumnKind]) -> Vec<f64> {
    latent
        .iter()
        .zip(kinds)
        .map(|(&z, kind)| match kind {
            ColumnKind::Continuous => z,
            // Clamp away from the exact endpoints so the open-interval
            // invariant survives rounding at extreme logits.
            ColumnKind::Binary => crate::nn::sigmoid(z).clamp(1e-12, 1.0 - 1e-12),
        })
        .collect()
}

fn extract_sample(
    snapshot: &Mlp,
    target: f64,
    kinds: &[ColumnKind],
    sample_seed: u64,
    sample_index: u64,
    learning_rate: f64,
    max_steps: usize,
    logit_tol: f64,
) -> Result<(Vec<f64>, SampleDiagnostics)> {
    let dim = kinds.len();
    let mut rng = stream_rng(sample_seed, &[sample_index]);
    let mut latent: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut adam = VecAdam::new(
        dim,
        AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        },
    )?;
    let mut steps = 0usize;
    loop {
        let input = latent_to_input(&latent, kinds);
        let batch = Matrix::from_vec(1, dim, input)?;
        let (logits, _) = snapshot.forward_eval(&batch)?;
        let err = logits[0] - target;
        if err.abs() <= logit_tol || steps >= max_steps {
            let input = batch.row(0).to_vec();
            return Ok((
                input,
                SampleDiagnostics {
                    steps,
                    final_error: err.abs(),
                    converged: err.abs() <= logit_tol,
                },
            ));
        }
        // d/dx of (logit - target)^2, chained through the latent map.
        let dx = snapshot.backward_inputs(&batch, &[2.0 * err])?;
        let grad: Vec<f64> = latent
            .iter()
            .zip(kinds)
            .zip(dx.row(0))
            .map(|((&z, kind), &g)| match kind {
                ColumnKind::Continuous => g,
                ColumnKind::Binary => {
                    let s = crate::nn::sigmoid(z);
                    g * s * (1.0 - s)
                }
            })
            .collect();
        adam.step(&mut latent, &grad)?;
        if latent.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("extraction latent diverged".to_owned()));
        }
        steps += 1;
    }
}

fn extraction_impl(
    state: &ReviewState,
    schema: &ColumnSchema,
    seed: u64,
    max_steps: usize,
    logit_tol: f64,
    parallel: bool,
) -> Result<GeneratedBatch> {
    if state.n_review == 0 {
        return Err(Error::Config(
            "no extraction at the first institution (nothing to review)".to_owned(),
        ));
    }
    let snapshot = state
        .snapshot
        .as_ref()
        .ok_or_else(|| Error::Config("review state has no snapshot".to_owned()))?;
    let targets = state
        .target_logits
        .ok_or_else(|| Error::Config("review state has no target logits".to_owned()))?;
    if schema.len() != snapshot.input_dim() {
        return Err(Error::Schema(format!(
            "schema has {} columns, snapshot expects {}",
            schema.len(),
            snapshot.input_dim()
        )));
    }
    let n = state.config.n_generated;
    let n_class0 = n / 2 + n % 2; // remainder to class 0
    let kinds: Vec<ColumnKind> = schema.columns().iter().map(|c| c.kind).collect();
    let lr = state.config.fv_learning_rate;

    let per_sample = |i: usize| -> Result<(Vec<f64>, SampleDiagnostics, u8)> {
        let class = u8::from(i >= n_class0);
        let target = targets[class as usize];
        let (input, diag) = extract_sample(
            snapshot, target, &kinds, seed, i as u64, lr, max_steps, logit_tol,
        )?;
        Ok((input, diag, class))
    };
    let results = if parallel {
        exec::map_indexed(n, per_sample)
    } else {
        exec::map_indexed_seq(n, per_sample)
    };

    let mut rows = Vec::with_capacity(n);
    let mut target_class = Vec::with_capacity(n);
    let mut diagnostics = Vec::with_capacity(n);
    for r in results {
        let (input, diag, class) = r?;
        rows.push(input);
        target_class.push(class);
        diagnostics.push(diag);
    }
    let samples = Matrix::from_rows(&rows)?;
    if !samples.is_finite() {
        return Err(Error::Numeric("non-finite generated sample".to_owned()));
    }
    // Soft targets: snapshot logits on the final samples.
    let (soft_target_logits, _) = snapshot.forward_eval(&samples)?;
    Ok(GeneratedBatch {
        samples,
        target_class,
        soft_target_logits,
        diagnostics,
    })
}

/// Extract `n_generated` samples (split equally between classes, remainder
/// to class 0) from the snapshot by optimizing latents with Adam until each
/// sample's logit reaches its class target within `logit_tol`, or
/// `max_steps` is exhausted (such samples are kept but flagged).
///
/// Per-sample RNG streams derive from `(seed, sample index)`, so the
/// parallel and sequential paths agree bitwise.
pub fn knowledge_extraction(
    state: &ReviewState,
    schema: &ColumnSchema,
    seed: u64,
    max_steps: usize,
    logit_tol: f64,
) -> Result<GeneratedBatch> {
    extraction_impl(state, schema, seed, max_steps, logit_tol, true)
}

/// Sequential variant of [`knowledge_extraction`]; the benchmark baseline.
pub fn knowledge_extraction_seq(
    state: &ReviewState,
    schema: &ColumnSchema,
    seed: u64,
    max_steps: usize,
    logit_tol: f64,
) -> Result<GeneratedBatch> {
    extraction_impl(state, schema, seed, max_steps, logit_tol, false)
}

/// Mix the real-batch loss with the distillation loss on the generated
/// batch: `L = (1 - lambda) * L_real + lambda * L_review`, gradients
/// combined linearly.
///
/// With `lambda = 0` the generated data is ignored entirely (no forward
/// pass, no RNG use).
pub fn mixed_loss(
    model: &Mlp,
    real_loss: f64,
    real_grads: &Gradients,
    generated: Option<&GeneratedBatch>,
    temperature: f64,
    lambda: f64,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<(f64, Gradients)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda {lambda} outside [0, 1]")));
    }
    if lambda == 0.0 {
        return Ok((real_loss, real_grads.clone()));
    }
    let batch = match generated {
        Some(b) if !b.is_empty() => b,
        _ => {
            return Err(Error::Data(
                "review mixing with lambda > 0 needs a generated batch".to_owned(),
            ))
        }
    };
    let (logits, trace) = model.forward_train(&batch.samples, dropout_rng)?;
    let n = logits.len() as f64;
    let mut review_loss = 0.0;
    let mut dlogits = Vec::with_capacity(logits.len());
    for (&z, &z_star) in logits.iter().zip(&batch.soft_target_logits) {
        let (l, g) = distillation_loss(z, z_star, temperature)?;
        review_loss += l / n;
        dlogits.push(g / n);
    }
    let review_grads = model.backward_params(&trace, &dlogits)?;
    let mut combined = real_grads.clone();
    combined.scale(1.0 - lambda);
    combined.axpy(lambda, &review_grads)?;
    Ok(((1.0 - lambda) * real_loss + lambda * review_loss, combined))
}

/// One institution visit of the review-learning sequence.
///
/// The incoming model is snapshotted for extraction before the epoch loop;
/// training interleaves real batches with generated-batch distillation at
/// the institution's fixed mix weight; on completion the per-class target
/// logits are re-measured with the trained model, the cumulative count grows
/// by the train-split size, and the snapshot for the next institution is the
/// trained model.
pub fn rl_train_on_institution(
    model: Mlp,
    state: &mut ReviewState,
    train: &Dataset,
    val: &Dataset,
    hyper: &HyperParams,
    visit_seed: u64,
) -> Result<TrainOutcome> {
    if state.n_review > 0 && state.target_logits.is_none() {
        return Err(Error::Config(
            "review state has history but no target logits".to_owned(),
        ));
    }
    state.snapshot = Some(model.clone());
    let n_real = train.n() as u64;
    let lambda = review_mix_weight(state.n_review, n_real)?;
    let plan = (state.n_review > 0).then_some(crate::train::ReviewPlan {
        state: &*state,
        lambda,
    });
    let outcome = crate::train::fit_loop(model, train, val, hyper, visit_seed, plan)?;
    let measured = measure_class_logits(&outcome.model, train, outcome.last_generated.as_ref())?;
    state.target_logits = Some(measured);
    state.n_review += n_real;
    state.snapshot = Some(outcome.model.clone());
    Ok(outcome)
}

pub const BUNDLE_VERSION: u32 = 1;

/// Everything that travels between institutions: the model, the review
/// memory, and the hyperparameters. No real data rows, ever.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferBundle {
    pub version: u32,
    pub model: Mlp,
    pub target_logits: Option<[f64; 2]>,
    pub n_review: u64,
    pub hyper: HyperParams,
}

impl TransferBundle {
    pub fn new(model: Mlp, state: &ReviewState, hyper: HyperParams) -> Self {
        Self {
            version: BUNDLE_VERSION,
            model,
            target_logits: state.target_logits,
            n_review: state.n_review,
            hyper,
        }
    }

    pub fn into_state(self) -> Result<(Mlp, ReviewState)> {
        let config = ReviewConfig::from_hyper(&self.hyper);
        let state = ReviewState::restore(
            config,
            Some(self.model.clone()),
            self.target_logits,
            self.n_review,
        )?;
        Ok((self.model, state))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bundle: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if bundle.version != BUNDLE_VERSION {
            return Err(Error::Config(format!(
                "unsupported bundle version {}",
                bundle.version
            )));
        }
        Ok(bundle)
    }
}
