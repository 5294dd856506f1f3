//! The four training regimes — local (LL), transfer (TL), pooled (CDS), and
//! review (RL) — with early stopping on validation AUROC.
//!
//! A visit trains on one institution's standardized splits: shuffled
//! mini-batch epochs of class-weighted BCE (plus the review mixture for RL),
//! validation every `eval_interval_updates` updates, stopping after
//! `patience` evaluations without improvement, returning the best-validation
//! checkpoint. Every random stream derives from `(seed, visit, epoch)`, so a
//! run is fully determined by `(algorithm, order, seed)`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{
    local_stats, merge_stats, split, standardize, ColumnStats, Dataset, SplitRatios,
};
use crate::metrics::{auroc, PredictionSet};
use crate::nn::{class_weights, weighted_bce_loss, AdamConfig, AdamState, Mlp};
use crate::review::{
    knowledge_extraction, mixed_loss, rl_train_on_institution, ExtractionSchedule, GeneratedBatch,
    ReviewConfig, ReviewState,
};
use crate::rng::{derive_seed, stream_rng, tags};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ll,
    Tl,
    Cds,
    Rl,
}

impl Algorithm {
    pub fn is_sequential(self) -> bool {
        matches!(self, Algorithm::Tl | Algorithm::Rl)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Algorithm::Ll => "ll",
            Algorithm::Tl => "tl",
            Algorithm::Cds => "cds",
            Algorithm::Rl => "rl",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ll" => Ok(Algorithm::Ll),
            "tl" => Ok(Algorithm::Tl),
            "cds" => Ok(Algorithm::Cds),
            "rl" => Ok(Algorithm::Rl),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Visit order by data size: descending visits "local 1" first, ascending
/// visits "local n" first (the exact reverse).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisitOrder {
    Asc,
    Desc,
}

impl std::fmt::Display for VisitOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VisitOrder::Asc => "asc",
            VisitOrder::Desc => "desc",
        })
    }
}

impl std::str::FromStr for VisitOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asc" => Ok(VisitOrder::Asc),
            "desc" => Ok(VisitOrder::Desc),
            other => Err(Error::Config(format!("unknown visit order '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub hidden_layers: Vec<usize>,
    pub dropout_prob: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub eval_interval_updates: usize,
    /// Validation evaluations (not epochs) without improvement before a
    /// visit stops.
    pub patience: usize,
    pub temperature: f64,
    pub n_generated: usize,
    pub fv_learning_rate: f64,
    pub logit_tol: f64,
    pub max_extraction_steps: usize,
    pub extraction_schedule: ExtractionSchedule,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            hidden_layers: vec![32],
            dropout_prob: 0.5,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            batch_size: 64,
            max_epochs: 100,
            eval_interval_updates: 10,
            patience: 20,
            temperature: 5.0,
            n_generated: 512,
            fv_learning_rate: 1e-2,
            logit_tol: 0.05,
            max_extraction_steps: 500,
            extraction_schedule: ExtractionSchedule::PerEpoch,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(Error::Config("hidden layers must be nonempty".to_owned()));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::Config("dropout_prob outside [0, 1]".to_owned()));
        }
        if self.learning_rate <= 0.0
            || self.weight_decay < 0.0
            || self.batch_size == 0
            || self.max_epochs == 0
            || self.eval_interval_updates == 0
            || self.patience == 0
            || self.temperature <= 0.0
            || self.n_generated < 2
            || self.fv_learning_rate <= 0.0
            || self.logit_tol <= 0.0
            || self.max_extraction_steps == 0
        {
            return Err(Error::Config("hyperparameters must be positive".to_owned()));
        }
        Ok(())
    }

    /// With a different seed (runs sweep seeds, everything else fixed).
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Raw (unstandardized) splits for one institution.
#[derive(Debug, Clone)]
pub struct InstitutionData {
    pub name: String,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl InstitutionData {
    pub fn from_split(ds: &Dataset, ratios: SplitRatios, seed: u64) -> Result<Self> {
        let (train, val, test) = split(ds, ratios, seed)?;
        Ok(Self {
            name: ds.institution_id().to_owned(),
            train,
            val,
            test,
        })
    }

    pub fn size(&self) -> usize {
        self.train.n() + self.val.n() + self.test.n()
    }
}

/// One institution's standardized train/val plus the statistics that were
/// used, recorded so evaluation can reproduce the model's input space.
#[derive(Debug, Clone)]
pub struct PreparedVisit {
    pub name: String,
    pub train: Dataset,
    pub val: Dataset,
    pub stats: ColumnStats,
}

/// Institutions in descending data size (stable on name ties).
fn descending_by_size(institutions: &[InstitutionData]) -> Vec<&InstitutionData> {
    let mut refs: Vec<&InstitutionData> = institutions.iter().collect();
    refs.sort_by(|a, b| b.size().cmp(&a.size()).then(a.name.cmp(&b.name)));
    refs
}

pub fn order_institutions(
    institutions: &[InstitutionData],
    order: VisitOrder,
) -> Vec<&InstitutionData> {
    let mut refs = descending_by_size(institutions);
    if order == VisitOrder::Asc {
        refs.reverse();
    }
    refs
}

/// LL preprocessing: each institution standardized with its own local
/// training statistics.
pub fn prepare_ll_visits(institutions: &[InstitutionData]) -> Result<Vec<PreparedVisit>> {
    descending_by_size(institutions)
        .into_iter()
        .map(|inst| {
            let stats = local_stats(&inst.train)?;
            let (train, _) = standardize(&inst.train, &stats)?;
            let (val, _) = standardize(&inst.val, &stats)?;
            Ok(PreparedVisit {
                name: inst.name.clone(),
                train,
                val,
                stats,
            })
        })
        .collect()
}

/// PPDL preprocessing: global statistics merged from the institutions' local
/// training statistics (rows never pooled), applied everywhere.
pub fn prepare_ppdl_visits(
    institutions: &[InstitutionData],
    order: VisitOrder,
) -> Result<Vec<PreparedVisit>> {
    let locals: Vec<ColumnStats> = institutions
        .iter()
        .map(|inst| local_stats(&inst.train))
        .collect::<Result<_>>()?;
    let global = merge_stats(&locals)?;
    order_institutions(institutions, order)
        .into_iter()
        .map(|inst| {
            let (train, _) = standardize(&inst.train, &global)?;
            let (val, _) = standardize(&inst.val, &global)?;
            Ok(PreparedVisit {
                name: inst.name.clone(),
                train,
                val,
                stats: global.clone(),
            })
        })
        .collect()
}

/// CDS preprocessing: pooled train/val standardized with the same merged
/// global statistics (identical to pooled statistics by construction).
pub fn prepare_cds_pool(institutions: &[InstitutionData]) -> Result<PreparedVisit> {
    let locals: Vec<ColumnStats> = institutions
        .iter()
        .map(|inst| local_stats(&inst.train))
        .collect::<Result<_>>()?;
    let global = merge_stats(&locals)?;
    let ordered = descending_by_size(institutions);
    let trains: Vec<&Dataset> = ordered.iter().map(|i| &i.train).collect();
    let vals: Vec<&Dataset> = ordered.iter().map(|i| &i.val).collect();
    let train = Dataset::concat(&trains, "pooled")?;
    let val = Dataset::concat(&vals, "pooled")?;
    let (train, _) = standardize(&train, &global)?;
    let (val, _) = standardize(&val, &global)?;
    Ok(PreparedVisit {
        name: "pooled".to_owned(),
        train,
        val,
        stats: global,
    })
}

/// The shared initial model: all algorithms start from the same weights for
/// a given seed (preprocessing, not initialization, is what differs).
pub fn initial_model(input_dim: usize, hyper: &HyperParams) -> Result<Mlp> {
    let mut rng = stream_rng(hyper.seed, &[tags::INIT]);
    Mlp::new(
        input_dim,
        &hyper.hidden_layers,
        hyper.dropout_prob,
        &mut rng,
    )
}

pub fn visit_seed(seed: u64, visit: usize) -> u64 {
    derive_seed(seed, &[tags::VISIT, visit as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Early stopping on validation AUROC with best-checkpoint restoration.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    best_val_auroc: f64,
    best_checkpoint: Option<Mlp>,
    evals_since_best: usize,
    patience: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Config("patience must be at least 1".to_owned()));
        }
        Ok(Self {
            best_val_auroc: f64::NEG_INFINITY,
            best_checkpoint: None,
            evals_since_best: 0,
            patience,
        })
    }

    pub fn best_val_auroc(&self) -> f64 {
        self.best_val_auroc
    }

    /// Record one evaluation; strict improvement resets the counter.
    pub fn observe(&mut self, val_auroc: f64, model: &Mlp) -> StopDecision {
        if val_auroc > self.best_val_auroc {
            self.best_val_auroc = val_auroc;
            self.best_checkpoint = Some(model.clone());
            self.evals_since_best = 0;
            StopDecision::Continue
        } else {
            self.evals_since_best += 1;
            if self.evals_since_best >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn into_best(self) -> Option<Mlp> {
        self.best_checkpoint
    }
}

/// Review context for one visit: borrowed state plus the institution's fixed
/// mix weight.
pub(crate) struct ReviewPlan<'a> {
    pub state: &'a ReviewState,
    pub lambda: f64,
}

/// A trained visit: the best-validation model, the validation AUROC trail,
/// and (for review training) the last generated batch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Mlp,
    pub trail: Vec<f64>,
    pub last_generated: Option<GeneratedBatch>,
}

fn validation_auroc(model: &Mlp, val: &Dataset) -> Result<f64> {
    let probs = model.predict_proba(val.features())?;
    let preds = PredictionSet::new(val.labels().to_vec(), probs, val.institution_id())?;
    auroc(&preds)
}

/// The shared inner loop: mini-batch epochs with per-epoch derived shuffle
/// and dropout streams, optional review mixing, periodic validation, early
/// stopping, best-checkpoint restoration.
pub(crate) fn fit_loop(
    model: Mlp,
    train: &Dataset,
    val: &Dataset,
    hyper: &HyperParams,
    visit_seed: u64,
    review: Option<ReviewPlan>,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    if !train.is_standardized() || !val.is_standardized() {
        return Err(Error::Data(
            "training requires standardized splits".to_owned(),
        ));
    }
    let weights = class_weights(train.labels())?;
    if val.case_count() == 0 || val.case_count() == val.n() {
        return Err(Error::Data("single-class validation set".to_owned()));
    }
    let adam_cfg = AdamConfig {
        learning_rate: hyper.learning_rate,
        weight_decay: hyper.weight_decay,
        ..AdamConfig::default()
    };
    let mut model = model;
    let mut adam = AdamState::new(&model, adam_cfg)?;
    let mut stopper = EarlyStopper::new(hyper.patience)?;
    let mut trail = Vec::new();
    let mut generated: Option<GeneratedBatch> = None;
    let mut updates = 0usize;

    'training: for epoch in 0..hyper.max_epochs {
        if let Some(plan) = &review {
            let extract = match plan.state.config().schedule {
                ExtractionSchedule::PerEpoch => true,
                ExtractionSchedule::Once => generated.is_none(),
            };
            if extract {
                generated = Some(knowledge_extraction(
                    plan.state,
                    train.schema(),
                    derive_seed(visit_seed, &[tags::EXTRACT, epoch as u64]),
                    hyper.max_extraction_steps,
                    hyper.logit_tol,
                )?);
            }
        }
        let mut order: Vec<usize> = (0..train.n()).collect();
        order.shuffle(&mut stream_rng(visit_seed, &[tags::SHUFFLE, epoch as u64]));
        let mut dropout_rng = stream_rng(visit_seed, &[tags::DROPOUT, epoch as u64]);
        for chunk in order.chunks(hyper.batch_size) {
            let batch = train.features().select_rows(chunk);
            let labels: Vec<u8> = chunk.iter().map(|&i| train.labels()[i]).collect();
            let (logits, trace) = model.forward_train(&batch, &mut dropout_rng)?;
            let (real_loss, dlogits) = weighted_bce_loss(&logits, &labels, weights)?;
            let real_grads = model.backward_params(&trace, &dlogits)?;
            let grads = match &review {
                Some(plan) => {
                    let (_, grads) = mixed_loss(
                        &model,
                        real_loss,
                        &real_grads,
                        generated.as_ref(),
                        hyper.temperature,
                        plan.lambda,
                        &mut dropout_rng,
                    )?;
                    grads
                }
                None => real_grads,
            };
            adam.step(&mut model, &grads)?;
            updates += 1;
            if updates.is_multiple_of(hyper.eval_interval_updates) {
                let score = validation_auroc(&model, val)?;
                trail.push(score);
                if stopper.observe(score, &model) == StopDecision::Stop {
                    break 'training;
                }
            }
        }
    }
    if trail.is_empty() {
        // Too few updates to hit an evaluation point; score once so the
        // best-checkpoint contract still holds.
        let score = validation_auroc(&model, val)?;
        trail.push(score);
        stopper.observe(score, &model);
    }
    let model = stopper
        .into_best()
        .expect("at least one evaluation happened");
    Ok(TrainOutcome {
        model,
        trail,
        last_generated: generated,
    })
}

/// Train on one standardized institution (the LL unit, and the inner loop
/// of TL and CDS).
pub fn train_single(
    model: Mlp,
    train: &Dataset,
    val: &Dataset,
    hyper: &HyperParams,
    visit_seed: u64,
) -> Result<TrainOutcome> {
    fit_loop(model, train, val, hyper, visit_seed, None)
}

/// One visit of a persisted run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisitRecord {
    pub institution: String,
    pub model: Mlp,
    /// Validation AUROC at every evaluation, in order.
    pub trail: Vec<f64>,
    /// The statistics the model's inputs were standardized with.
    pub stats: ColumnStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub order: Option<VisitOrder>,
    pub seed: u64,
    pub visits: Vec<VisitRecord>,
}

/// Local learning: one isolated model per institution, local statistics,
/// no state crossing institutions.
pub fn train_ll(institutions: &[InstitutionData], hyper: &HyperParams) -> Result<RunRecord> {
    let visits = prepare_ll_visits(institutions)?;
    let mut records = Vec::with_capacity(visits.len());
    for (v, visit) in visits.iter().enumerate() {
        let model = initial_model(visit.train.schema().len(), hyper)?;
        let outcome = train_single(
            model,
            &visit.train,
            &visit.val,
            hyper,
            visit_seed(hyper.seed, v),
        )?;
        records.push(VisitRecord {
            institution: visit.name.clone(),
            model: outcome.model,
            trail: outcome.trail,
            stats: visit.stats.clone(),
        });
    }
    Ok(RunRecord {
        algorithm: Algorithm::Ll,
        order: None,
        seed: hyper.seed,
        visits: records,
    })
}

/// Transfer learning: the model from visit `i` initializes visit `i + 1`.
pub fn train_tl(
    institutions: &[InstitutionData],
    hyper: &HyperParams,
    order: VisitOrder,
) -> Result<RunRecord> {
    let visits = prepare_ppdl_visits(institutions, order)?;
    let mut model = initial_model(visits[0].train.schema().len(), hyper)?;
    let mut records = Vec::with_capacity(visits.len());
    for (v, visit) in visits.iter().enumerate() {
        let outcome = train_single(
            model,
            &visit.train,
            &visit.val,
            hyper,
            visit_seed(hyper.seed, v),
        )?;
        model = outcome.model.clone();
        records.push(VisitRecord {
            institution: visit.name.clone(),
            model: outcome.model,
            trail: outcome.trail,
            stats: visit.stats.clone(),
        });
    }
    Ok(RunRecord {
        algorithm: Algorithm::Tl,
        order: Some(order),
        seed: hyper.seed,
        visits: records,
    })
}

/// Collaborative data sharing: the pooled upper baseline. Refuses to run
/// when the configuration marks the data privacy-restricted.
pub fn train_cds(
    institutions: &[InstitutionData],
    hyper: &HyperParams,
    privacy_restricted: bool,
) -> Result<RunRecord> {
    if privacy_restricted {
        return Err(Error::Config(
            "CDS pools raw rows and cannot run under the privacy flag".to_owned(),
        ));
    }
    let pool = prepare_cds_pool(institutions)?;
    let model = initial_model(pool.train.schema().len(), hyper)?;
    let outcome = train_single(
        model,
        &pool.train,
        &pool.val,
        hyper,
        visit_seed(hyper.seed, 0),
    )?;
    Ok(RunRecord {
        algorithm: Algorithm::Cds,
        order: None,
        seed: hyper.seed,
        visits: vec![VisitRecord {
            institution: pool.name,
            model: outcome.model,
            trail: outcome.trail,
            stats: pool.stats,
        }],
    })
}

/// Review learning: sequential visits threading `(model, ReviewState)`.
pub fn train_rl(
    institutions: &[InstitutionData],
    hyper: &HyperParams,
    order: VisitOrder,
) -> Result<(RunRecord, ReviewState)> {
    let visits = prepare_ppdl_visits(institutions, order)?;
    let mut state = ReviewState::new(ReviewConfig::from_hyper(hyper))?;
    let mut model = initial_model(visits[0].train.schema().len(), hyper)?;
    let mut records = Vec::with_capacity(visits.len());
    for (v, visit) in visits.iter().enumerate() {
        let outcome = rl_train_on_institution(
            model,
            &mut state,
            &visit.train,
            &visit.val,
            hyper,
            visit_seed(hyper.seed, v),
        )?;
        model = outcome.model.clone();
        records.push(VisitRecord {
            institution: visit.name.clone(),
            model: outcome.model,
            trail: outcome.trail,
            stats: visit.stats.clone(),
        });
    }
    Ok((
        RunRecord {
            algorithm: Algorithm::Rl,
            order: Some(order),
            seed: hyper.seed,
            visits: records,
        },
        state,
    ))
}

/// Evaluate a model on a raw test split: standardize with the recorded
/// statistics, predict, and package `(y, y-hat)` — the only values that
/// leave the institution.
pub fn predict_on_institution(
    model: &Mlp,
    stats: &ColumnStats,
    test: &Dataset,
) -> Result<PredictionSet> {
    let (std_test, _) = standardize(test, stats)?;
    let probs = model.predict_proba(std_test.features())?;
    PredictionSet::new(std_test.labels().to_vec(), probs, std_test.institution_id())
}

#[cfg(test)]
mod tests;
