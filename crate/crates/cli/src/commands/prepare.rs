//! `prepare`: build per-institution splits and the statistics exchange file.
//!
//! Raw rows are written only inside each institution's directory. The only
//! cross-institution artifact is `stats_exchange.json` (counts, means,
//! variances per continuous column), from which the global statistics are
//! merged without pooling any rows.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use ppdl_core::data::{
    gen_synthetic, ingest_csv, local_stats, standardize, write_csv, Dataset, SplitRatios,
    StatsExchangeFile,
};
use ppdl_core::hetero::{
    build_heterogeneous_institutions, fit_logreg, mean_pairwise_angle, InstitutionAssignment,
};
use ppdl_core::rng::derive_seed;
use ppdl_core::train::InstitutionData;
use ppdl_core::{Error, Result};

use crate::config::{
    resolve_path, CsvDataConfig, DataConfig, ExperimentConfig, SyntheticDataConfig, SyntheticMode,
};
use crate::layout::Layout;

/// Stream tag for per-institution split seeds, distinct from everything in
/// the core derivation table.
const SPLIT_STREAM: u64 = 0x70;

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum AssignmentSummary {
    Direct {
        institutions: Vec<DirectInstitution>,
        measured_mean_angle_deg: f64,
    },
    HeteroSplit {
        assignment: InstitutionAssignment,
    },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DirectInstitution {
    pub name: String,
    pub rows: usize,
    pub case_ratio: f64,
}

fn build_synthetic(config: &SyntheticDataConfig) -> Result<(Vec<Dataset>, AssignmentSummary)> {
    let generated = gen_synthetic(&config.spec, config.data_seed)?;
    match config.mode {
        SyntheticMode::Direct => {
            // Measure the realized heterogeneity the same way the pairing
            // search would: local logistic fits on standardized features.
            let models = generated
                .iter()
                .map(|ds| {
                    let stats = local_stats(ds)?;
                    let (std_ds, _) = standardize(ds, &stats)?;
                    fit_logreg(std_ds.features(), std_ds.labels(), 0.5, 300, 1e-6)
                })
                .collect::<Result<Vec<_>>>()?;
            let measured = if models.len() >= 2 {
                mean_pairwise_angle(&models)?.to_degrees()
            } else {
                0.0
            };
            let summary = AssignmentSummary::Direct {
                institutions: generated
                    .iter()
                    .map(|ds| DirectInstitution {
                        name: ds.institution_id().to_owned(),
                        rows: ds.n(),
                        case_ratio: ds.case_ratio(),
                    })
                    .collect(),
                measured_mean_angle_deg: measured,
            };
            Ok((generated, summary))
        }
        SyntheticMode::HeteroSplit => {
            let pool = Dataset::concat(&generated.iter().collect::<Vec<_>>(), "pool")?;
            let n = config
                .n_institutions
                .unwrap_or(config.spec.institutions.len());
            let assignment = build_heterogeneous_institutions(&pool, n, config.data_seed)?;
            let institutions = assignment.apply(&pool)?;
            Ok((institutions, AssignmentSummary::HeteroSplit { assignment }))
        }
    }
}

fn load_csv_institutions(config: &CsvDataConfig, data_root: &Path) -> Result<Vec<Dataset>> {
    let schema = ppdl_core::data::ColumnSchema::new(config.columns.clone())?;
    let mut datasets = Vec::new();
    for inst in &config.institutions {
        let path = resolve_path(data_root, &inst.path);
        datasets.push(ingest_csv(&path, &schema, &inst.name)?);
    }
    // Descending size, matching the naming convention everywhere else.
    datasets.sort_by(|a, b| {
        b.n()
            .cmp(&a.n())
            .then(a.institution_id().cmp(b.institution_id()))
    });
    Ok(datasets)
}

pub fn cmd_prepare(config: &ExperimentConfig, layout: &Layout, data_root: &Path) -> Result<()> {
    config.validate()?;
    let (datasets, assignment) = match &config.data {
        DataConfig::Synthetic(s) => {
            let (d, a) = build_synthetic(s)?;
            (d, Some(a))
        }
        DataConfig::Csv(c) => (load_csv_institutions(c, data_root)?, None),
    };

    let ratios = SplitRatios::new(config.split.train, config.split.val, config.split.test)?;
    let data_seed = config.data_seed();
    let mut stats_entries = Vec::new();
    for (idx, ds) in datasets.iter().enumerate() {
        let split_seed = derive_seed(data_seed, &[SPLIT_STREAM, idx as u64]);
        let inst = InstitutionData::from_split(ds, ratios, split_seed)?;
        let dir = layout.institution_dir(&inst.name);
        fs::create_dir_all(&dir)?;
        write_csv(&inst.train, &layout.split_csv(&inst.name, "train"))?;
        write_csv(&inst.val, &layout.split_csv(&inst.name, "val"))?;
        write_csv(&inst.test, &layout.split_csv(&inst.name, "test"))?;
        stats_entries.push((inst.name.clone(), local_stats(&inst.train)?));
    }
    let stats = StatsExchangeFile::build(stats_entries)?;
    stats.save(&layout.stats_file())?;

    if let Some(summary) = assignment {
        fs::write(
            layout.assignment_file(),
            serde_json::to_string_pretty(&summary).map_err(Error::Json)?,
        )?;
    }
    Ok(())
}

/// Read the prepared splits back, ordered as the stats exchange file lists
/// them (descending training-split size).
pub fn load_prepared_institutions(
    config: &ExperimentConfig,
    layout: &Layout,
) -> Result<Vec<InstitutionData>> {
    let stats_path = layout.stats_file();
    if !stats_path.exists() {
        return Err(Error::Config(format!(
            "missing prepare artifacts ({}); run `ppdl prepare` first",
            stats_path.display()
        )));
    }
    let stats = StatsExchangeFile::load(&stats_path)?;
    let schema = config.schema()?;
    let mut institutions = Vec::new();
    for (name, _) in &stats.institutions {
        let train = ingest_csv(&layout.split_csv(name, "train"), &schema, name)?;
        let val = ingest_csv(&layout.split_csv(name, "val"), &schema, name)?;
        let test = ingest_csv(&layout.split_csv(name, "test"), &schema, name)?;
        institutions.push(InstitutionData {
            name: name.clone(),
            train,
            val,
            test,
        });
    }
    Ok(institutions)
}
