//! Stratified train/val/test splitting.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng::{stream_rng, tags};
use crate::{Error, Result};

/// Train/val/test fractions; all positive, summing to 1 within 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        if train <= 0.0 || val <= 0.0 || test <= 0.0 {
            return Err(Error::Config(
                "split ratios must all be positive (val/test must be nonempty)".to_owned(),
            ));
        }
        if (train + val + test - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "split ratios sum to {}, expected 1",
                train + val + test
            )));
        }
        Ok(Self { train, val, test })
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    }
}

/// Largest-remainder allocation of `n` rows to the three splits. Ties on the
/// fractional part go to the earlier split (train, val, test). A stratum
/// with at least as many rows as splits always feeds every split: empty
/// allocations are topped up from the most over-allocated split.
fn allocate(n: usize, ratios: SplitRatios) -> [usize; 3] {
    let targets = [
        n as f64 * ratios.train,
        n as f64 * ratios.val,
        n as f64 * ratios.test,
    ];
    let mut counts = [0usize; 3];
    let mut fracs = [0.0f64; 3];
    for i in 0..3 {
        counts[i] = targets[i].floor() as usize;
        fracs[i] = targets[i] - targets[i].floor();
    }
    let mut remaining = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| fracs[b].partial_cmp(&fracs[a]).unwrap().then(a.cmp(&b)));
    for &i in &order {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    while n >= 3 {
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let donor = (0..3)
            .filter(|&i| counts[i] >= 2)
            .max_by(|&a, &b| {
                (counts[a] as f64 - targets[a]).total_cmp(&(counts[b] as f64 - targets[b]))
            })
            .expect("n >= 3 leaves a donor with at least 2 rows");
        counts[donor] -= 1;
        counts[empty] += 1;
    }
    counts
}

/// Stratified split: each label stratum is shuffled with its own derived RNG
/// and allocated by largest remainder, so the partition is disjoint,
/// exhaustive, and deterministic given the seed.
pub fn split(ds: &Dataset, ratios: SplitRatios, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if ds.n() < 3 {
        return Err(Error::Data(format!(
            "dataset has {} rows, need at least 3 to split",
            ds.n()
        )));
    }
    let mut split_indices: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for stratum_label in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..ds.n())
            .filter(|&i| ds.labels()[i] == stratum_label)
            .collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 3 {
            return Err(Error::Data(format!(
                "label-{} stratum has {} rows, fewer than the 3 splits",
                stratum_label,
                idx.len()
            )));
        }
        let mut rng = stream_rng(seed, &[tags::SPLIT, stratum_label as u64]);
        idx.shuffle(&mut rng);
        let counts = allocate(idx.len(), ratios);
        let mut cursor = 0;
        for (s, &count) in counts.iter().enumerate() {
            split_indices[s].extend_from_slice(&idx[cursor..cursor + count]);
            cursor += count;
        }
    }
    for (name, idx) in ["train", "val", "test"].iter().zip(&split_indices) {
        if idx.is_empty() {
            return Err(Error::Data(format!("{name} split would be empty")));
        }
    }
    let mut out = Vec::with_capacity(3);
    for idx in &mut split_indices {
        idx.sort_unstable(); // keep original row order within each split
        out.push(ds.select(idx)?);
    }
    let test = out.pop().unwrap();
    let val = out.pop().unwrap();
    let train = out.pop().unwrap();
    Ok((train, val, test))
}
