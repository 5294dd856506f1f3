//! AUROC, specificity-constrained thresholding, MCC, and global/local score
//! aggregation.
//!
//! AUROC is computed from the rank statistic with explicit tie handling:
//! `(#concordant pairs + 0.5 * #tied pairs) / (#pos * #neg)`. Global scores
//! are always computed on concatenated predictions, never by averaging local
//! scores.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Labels and predicted probabilities for one evaluation set. Only these two
/// vectors ever cross an institution boundary at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    labels: Vec<u8>,
    probabilities: Vec<f64>,
    institution: String,
}

impl PredictionSet {
    pub fn new(
        labels: Vec<u8>,
        probabilities: Vec<f64>,
        institution: impl Into<String>,
    ) -> Result<Self> {
        if labels.len() != probabilities.len() {
            return Err(Error::Shape(format!(
                "{} labels vs {} probabilities",
                labels.len(),
                probabilities.len()
            )));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::Data("labels must be 0 or 1".to_owned()));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Data("probabilities must lie in [0, 1]".to_owned()));
        }
        Ok(Self {
            labels,
            probabilities,
            institution: institution.into(),
        })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn institution(&self) -> &str {
        &self.institution
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Concatenate several sets into one (the global evaluation set).
    pub fn concat(parts: &[&PredictionSet], institution: impl Into<String>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Data("concat of zero prediction sets".to_owned()));
        }
        let labels = parts
            .iter()
            .flat_map(|p| p.labels.iter().copied())
            .collect();
        let probabilities = parts
            .iter()
            .flat_map(|p| p.probabilities.iter().copied())
            .collect();
        PredictionSet::new(labels, probabilities, institution)
    }
}

/// Mann-Whitney AUROC with average ranks over ties.
pub fn auroc(preds: &PredictionSet) -> Result<f64> {
    let n = preds.len();
    let n_pos = preds.labels.iter().filter(|&&y| y == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data(
            "AUROC needs both classes in the evaluation set".to_owned(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| preds.probabilities[a].total_cmp(&preds.probabilities[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && preds.probabilities[order[j + 1]] == preds.probabilities[order[i]] {
            j += 1;
        }
        // Average rank for the tie block [i, j] (1-based ranks).
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if preds.labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Smallest candidate threshold whose specificity is strictly greater than
/// `min_specificity`; candidates are midpoints of consecutive sorted unique
/// probabilities plus +inf. Maximizes sensitivity subject to the constraint;
/// +inf (predict all negative) when no finite candidate attains it.
pub fn threshold_at_specificity(preds: &PredictionSet, min_specificity: f64) -> Result<f64> {
    let negatives: Vec<f64> = preds
        .labels
        .iter()
        .zip(&preds.probabilities)
        .filter(|(&y, _)| y == 0)
        .map(|(_, &p)| p)
        .collect();
    if negatives.is_empty() {
        return Err(Error::Data(
            "threshold selection needs negative examples".to_owned(),
        ));
    }
    let mut unique = preds.probabilities.clone();
    unique.sort_by(f64::total_cmp);
    unique.dedup();
    let candidates: Vec<f64> = unique
        .windows(2)
        .map(|w| (w[0] + w[1]) / 2.0)
        .chain(std::iter::once(f64::INFINITY))
        .collect();
    let n_neg = negatives.len() as f64;
    for &t in &candidates {
        let tn = negatives.iter().filter(|&&p| p < t).count() as f64;
        if tn / n_neg > min_specificity {
            return Ok(t);
        }
    }
    unreachable!("specificity at +inf is 1");
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: u64,
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

/// Binarize at `threshold` (predict positive iff probability >= threshold).
pub fn confusion(preds: &PredictionSet, threshold: f64) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix {
        true_pos: 0,
        true_neg: 0,
        false_pos: 0,
        false_neg: 0,
    };
    for (&y, &p) in preds.labels.iter().zip(&preds.probabilities) {
        let pred = p >= threshold;
        match (y == 1, pred) {
            (true, true) => cm.true_pos += 1,
            (true, false) => cm.false_neg += 1,
            (false, true) => cm.false_pos += 1,
            (false, false) => cm.true_neg += 1,
        }
    }
    cm
}

/// Matthews correlation coefficient; 0 when any denominator factor vanishes
/// (the standard convention for the undefined case).
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let tp = cm.true_pos as f64;
    let tn = cm.true_neg as f64;
    let fp = cm.false_pos as f64;
    let fn_ = cm.false_neg as f64;
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

/// AUROC, threshold, and MCC for one evaluation set. The MCC threshold is
/// chosen on this set's own predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub auroc: f64,
    pub mcc: f64,
    pub threshold: f64,
}

pub fn score_set(preds: &PredictionSet, min_specificity: f64) -> Result<ScoreCell> {
    let auroc = auroc(preds)?;
    let threshold = threshold_at_specificity(preds, min_specificity)?;
    let mcc = mcc(&confusion(preds, threshold));
    Ok(ScoreCell {
        auroc,
        mcc,
        threshold,
    })
}

/// Mean and standard error over seed replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl SummaryStat {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n < 2 {
            0.0
        } else {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self { mean, std_error, n }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstitutionSummary {
    pub institution: String,
    pub auroc: SummaryStat,
    pub mcc: SummaryStat,
}

/// Global and per-institution scores with seed-level replicates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub global_auroc: SummaryStat,
    pub global_mcc: SummaryStat,
    pub per_institution: Vec<InstitutionSummary>,
    /// Global (auroc, mcc) per seed replicate, in input order.
    pub global_replicates: Vec<(f64, f64)>,
}

/// Aggregate one model's predictions over institutions and seed replicates.
/// `replicates[s]` holds the per-institution prediction sets for seed `s`;
/// institutions must appear in the same order in every replicate.
pub fn aggregate_scores(
    replicates: &[Vec<PredictionSet>],
    min_specificity: f64,
) -> Result<MetricReport> {
    let first = replicates
        .first()
        .ok_or_else(|| Error::Data("no replicates to aggregate".to_owned()))?;
    if first.is_empty() {
        return Err(Error::Data("no institutions to aggregate".to_owned()));
    }
    let names: Vec<String> = first.iter().map(|p| p.institution.clone()).collect();
    for rep in replicates {
        let rep_names: Vec<&str> = rep.iter().map(|p| p.institution.as_str()).collect();
        if rep_names != names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Data(
                "replicates disagree on institution order".to_owned(),
            ));
        }
    }
    let mut global_auroc = Vec::new();
    let mut global_mcc = Vec::new();
    let mut per_inst: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); names.len()];
    for rep in replicates {
        let parts: Vec<&PredictionSet> = rep.iter().collect();
        let pooled = PredictionSet::concat(&parts, "global")?;
        let g = score_set(&pooled, min_specificity)?;
        global_auroc.push(g.auroc);
        global_mcc.push(g.mcc);
        for (i, preds) in rep.iter().enumerate() {
            let s = score_set(preds, min_specificity)?;
            per_inst[i].0.push(s.auroc);
            per_inst[i].1.push(s.mcc);
        }
    }
    Ok(MetricReport {
        global_auroc: SummaryStat::from_samples(&global_auroc),
        global_mcc: SummaryStat::from_samples(&global_mcc),
        per_institution: names
            .into_iter()
            .zip(per_inst)
            .map(|(institution, (a, m))| InstitutionSummary {
                institution,
                auroc: SummaryStat::from_samples(&a),
                mcc: SummaryStat::from_samples(&m),
            })
            .collect(),
        global_replicates: global_auroc.into_iter().zip(global_mcc).collect(),
    })
}
