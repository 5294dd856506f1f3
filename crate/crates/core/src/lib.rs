//! Desk-scale simulator for privacy-preserving sequential training across
//! institutions that never share raw rows.
//!
//! The library provides:
//!
//! - a small dense-network engine with Adam, class-weighted BCE, and a
//!   temperature-scaled distillation loss ([`nn`]);
//! - dataset ingestion, stratified splitting, and privacy-preserving
//!   standardization where only per-column statistics cross institution
//!   boundaries ([`data`]);
//! - a heterogeneous institution splitter that carves one dataset into
//!   hypothetical institutions with maximally divergent decision boundaries
//!   ([`hetero`]);
//! - review learning: generative replay without a separate generator —
//!   samples are optimized out of the classifier's own weights and replayed
//!   through a distillation term ([`review`]);
//! - the four training regimes (local, transfer, pooled, review) with
//!   early stopping on validation AUROC ([`train`]);
//! - AUROC / MCC scoring with specificity-constrained thresholding and
//!   global/local aggregation ([`metrics`]).
//!
//! Data-parallel inner loops (per-sample extraction, candidate pairing
//! evaluation, run sweeps) go through [`exec`], which uses rayon when the
//! default `parallel` feature is enabled and falls back to sequential
//! iteration otherwise; both paths are bit-identical.

pub mod data;
pub mod error;
pub mod exec;
pub mod hetero;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod review;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
