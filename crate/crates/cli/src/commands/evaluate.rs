//! `evaluate`: every checkpoint against every institution's test set.
//!
//! Per (run, visit, institution) the checkpoint predicts the institution's
//! test split standardized with the checkpoint's recorded statistics; only
//! the labels and predicted probabilities leave the institution. The global
//! row scores the concatenation of all institutions' predictions.
//!
//! Flat table header (one row per algorithm x order x seed x visit x
//! evaluation set):
//! `algorithm,order,seed,visit,visit_institution,eval_institution,auroc,mcc,threshold`

use std::fs;

use ppdl_core::metrics::{score_set, PredictionSet, ScoreCell};
use ppdl_core::train::{predict_on_institution, VisitRecord};
use ppdl_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::layout::Layout;

pub const FLAT_HEADER: &str =
    "algorithm,order,seed,visit,visit_institution,eval_institution,auroc,mcc,threshold";

#[derive(Debug, Clone, PartialEq)]
pub struct FlatRow {
    pub algorithm: String,
    pub order: String,
    pub seed: u64,
    pub visit: usize,
    pub visit_institution: String,
    pub eval_institution: String,
    pub auroc: f64,
    pub mcc: f64,
    pub threshold: f64,
}

impl FlatRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.algorithm,
            self.order,
            self.seed,
            self.visit,
            self.visit_institution,
            self.eval_institution,
            self.auroc,
            self.mcc,
            self.threshold
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Data(format!("bad metrics row: {line}")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Data(format!("bad number '{s}' in metrics row")))
        };
        Ok(Self {
            algorithm: f[0].to_owned(),
            order: f[1].to_owned(),
            seed: f[2]
                .parse()
                .map_err(|_| Error::Data(format!("bad seed '{}'", f[2])))?,
            visit: f[3]
                .parse()
                .map_err(|_| Error::Data(format!("bad visit '{}'", f[3])))?,
            visit_institution: f[4].to_owned(),
            eval_institution: f[5].to_owned(),
            auroc: num(f[6])?,
            mcc: num(f[7])?,
            threshold: num(f[8])?,
        })
    }
}

pub fn load_flat_table(layout: &Layout) -> Result<Vec<FlatRow>> {
    let path = layout.flat_metrics_file();
    if !path.exists() {
        return Err(Error::Config(format!(
            "missing evaluation output ({}); run `ppdl evaluate` first",
            path.display()
        )));
    }
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == FLAT_HEADER => {}
        _ => return Err(Error::Data("unexpected metrics header".to_owned())),
    }
    lines.map(FlatRow::parse).collect()
}

fn score_or_skip(preds: &PredictionSet, min_specificity: f64, what: &str) -> Option<ScoreCell> {
    match score_set(preds, min_specificity) {
        Ok(cell) => Some(cell),
        Err(e) => {
            eprintln!("warning: skipping {what}: {e}");
            None
        }
    }
}

pub fn cmd_evaluate(config: &ExperimentConfig, layout: &Layout) -> Result<()> {
    config.validate()?;
    let institutions = super::prepare::load_prepared_institutions(config, layout)?;
    let mut rows: Vec<FlatRow> = Vec::new();
    for spec in config.runs() {
        let run_dir = layout.run_dir(&spec);
        let manifest_path = Layout::manifest_file(&run_dir);
        if !manifest_path.exists() {
            return Err(Error::Config(format!(
                "missing run {} ({}); run `ppdl train` first",
                spec.name(),
                manifest_path.display()
            )));
        }
        let manifest = super::train::RunManifest::load(&manifest_path)?;
        let order_label = spec.order.map_or_else(|| "-".to_owned(), |o| o.to_string());
        for (visit_idx, visit) in manifest.visits.iter().enumerate() {
            let record: VisitRecord =
                serde_json::from_str(&fs::read_to_string(run_dir.join(&visit.checkpoint))?)?;
            let mut per_institution: Vec<PredictionSet> = Vec::new();
            for inst in &institutions {
                per_institution.push(predict_on_institution(
                    &record.model,
                    &record.stats,
                    &inst.test,
                )?);
            }
            let mut push_row = |eval_institution: &str, cell: ScoreCell| {
                rows.push(FlatRow {
                    algorithm: spec.algorithm.to_string(),
                    order: order_label.clone(),
                    seed: spec.seed,
                    visit: visit_idx,
                    visit_institution: visit.institution.clone(),
                    eval_institution: eval_institution.to_owned(),
                    auroc: cell.auroc,
                    mcc: cell.mcc,
                    threshold: cell.threshold,
                });
            };
            for (inst, preds) in institutions.iter().zip(&per_institution) {
                let what = format!("{} visit {} on {}", spec.name(), visit_idx, inst.name);
                if let Some(cell) = score_or_skip(preds, config.min_specificity, &what) {
                    push_row(&inst.name, cell);
                }
            }
            let refs: Vec<&PredictionSet> = per_institution.iter().collect();
            let pooled = PredictionSet::concat(&refs, "global")?;
            let what = format!("{} visit {} global", spec.name(), visit_idx);
            if let Some(cell) = score_or_skip(&pooled, config.min_specificity, &what) {
                push_row("global", cell);
            }
        }
    }

    let eval_rank = |row: &FlatRow| -> usize {
        if row.eval_institution == "global" {
            institutions.len()
        } else {
            institutions
                .iter()
                .position(|i| i.name == row.eval_institution)
                .unwrap_or(usize::MAX)
        }
    };
    rows.sort_by(|a, b| {
        (&a.algorithm, &a.order, a.seed, a.visit, eval_rank(a)).cmp(&(
            &b.algorithm,
            &b.order,
            b.seed,
            b.visit,
            eval_rank(b),
        ))
    });

    fs::create_dir_all(layout.eval_dir())?;
    let mut flat = String::from(FLAT_HEADER);
    flat.push('\n');
    for row in &rows {
        flat.push_str(&row.to_csv());
        flat.push('\n');
    }
    fs::write(layout.flat_metrics_file(), flat)?;

    write_summary(&rows, layout)?;
    write_global_minmax(&rows, layout)?;
    Ok(())
}

pub const SUMMARY_HEADER: &str = "algorithm,order,visit,visit_institution,eval_institution,auroc_mean,auroc_se,mcc_mean,mcc_se,n_seeds";

pub(crate) fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Flat rows grouped over seeds for one
/// (algorithm, order, visit, visit institution, eval institution) key.
#[derive(Debug, Clone)]
pub(crate) struct SummaryGroup {
    pub algorithm: String,
    pub order: String,
    pub visit: usize,
    pub visit_institution: String,
    pub eval_institution: String,
    pub aurocs: Vec<f64>,
    pub mccs: Vec<f64>,
}

/// Group flat rows over seeds, preserving the flat table's key order.
pub(crate) fn summarize(rows: &[FlatRow]) -> Vec<SummaryGroup> {
    let mut groups: Vec<SummaryGroup> = Vec::new();
    for row in rows {
        let found = groups.iter_mut().find(|g| {
            g.algorithm == row.algorithm
                && g.order == row.order
                && g.visit == row.visit
                && g.visit_institution == row.visit_institution
                && g.eval_institution == row.eval_institution
        });
        match found {
            Some(g) => {
                g.aurocs.push(row.auroc);
                g.mccs.push(row.mcc);
            }
            None => groups.push(SummaryGroup {
                algorithm: row.algorithm.clone(),
                order: row.order.clone(),
                visit: row.visit,
                visit_institution: row.visit_institution.clone(),
                eval_institution: row.eval_institution.clone(),
                aurocs: vec![row.auroc],
                mccs: vec![row.mcc],
            }),
        }
    }
    groups
}

fn write_summary(rows: &[FlatRow], layout: &Layout) -> Result<()> {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for g in summarize(rows) {
        let (a_mean, a_se) = mean_and_se(&g.aurocs);
        let (m_mean, m_se) = mean_and_se(&g.mccs);
        out.push_str(&format!(
            "{},{},{},{},{},{a_mean},{a_se},{m_mean},{m_se},{}\n",
            g.algorithm,
            g.order,
            g.visit,
            g.visit_institution,
            g.eval_institution,
            g.aurocs.len()
        ));
    }
    fs::write(layout.summary_file(), out)?;
    Ok(())
}

pub const MINMAX_HEADER: &str = "algorithm,order,min_global_auroc,max_global_auroc";

fn write_global_minmax(rows: &[FlatRow], layout: &Layout) -> Result<()> {
    let mut out = String::from(MINMAX_HEADER);
    out.push('\n');
    let mut emitted: Vec<(String, String)> = Vec::new();
    for row in rows {
        let key = (row.algorithm.clone(), row.order.clone());
        if emitted.contains(&key) {
            continue;
        }
        let per_visit: Vec<f64> = summarize(rows)
            .into_iter()
            .filter(|g| g.algorithm == key.0 && g.order == key.1 && g.eval_institution == "global")
            .map(|g| mean_and_se(&g.aurocs).0)
            .collect();
        if per_visit.is_empty() {
            continue;
        }
        let min = per_visit.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = per_visit.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.push_str(&format!("{},{},{min},{max}\n", key.0, key.1));
        emitted.push(key);
    }
    fs::write(layout.global_minmax_file(), out)?;
    Ok(())
}
