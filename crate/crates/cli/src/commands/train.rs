//! `train`: one run per (algorithm, order, seed), resumable at visit
//! granularity. Each run owns a private directory under `runs/`; a manifest
//! lists the completed visits with their checkpoint (and, for RL, transfer
//! bundle) files, rewritten atomically after every visit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use ppdl_core::exec;
use ppdl_core::nn::Mlp;
use ppdl_core::review::{rl_train_on_institution, ReviewConfig, ReviewState, TransferBundle};
use ppdl_core::train::{
    initial_model, prepare_cds_pool, prepare_ll_visits, prepare_ppdl_visits, train_single,
    visit_seed, Algorithm, HyperParams, InstitutionData, PreparedVisit, VisitOrder, VisitRecord,
};
use ppdl_core::{Error, Result};

use crate::config::{ExperimentConfig, RunSpec};
use crate::layout::Layout;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestVisit {
    pub institution: String,
    pub checkpoint: String,
    pub bundle: Option<String>,
    /// Validation AUROC at every evaluation of this visit.
    pub trail: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub algorithm: Algorithm,
    pub order: Option<VisitOrder>,
    pub seed: u64,
    pub hyper: HyperParams,
    pub visits: Vec<ManifestVisit>,
}

impl RunManifest {
    fn new(spec: &RunSpec, hyper: &HyperParams) -> Self {
        Self {
            version: MANIFEST_VERSION,
            algorithm: spec.algorithm,
            order: spec.order,
            seed: spec.seed,
            hyper: hyper.clone(),
            visits: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest version {}",
                manifest.version
            )));
        }
        Ok(manifest)
    }

    fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(self)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

fn write_visit(
    run_dir: &Path,
    manifest: &mut RunManifest,
    visit_idx: usize,
    record: &VisitRecord,
    bundle: Option<&TransferBundle>,
) -> Result<()> {
    let ckpt_path = Layout::checkpoint_file(run_dir, visit_idx, &record.institution);
    fs::write(&ckpt_path, serde_json::to_string_pretty(record)?)?;
    let bundle_name = match bundle {
        Some(b) => {
            let path = Layout::bundle_file(run_dir, visit_idx);
            b.save(&path)?;
            Some(path.file_name().unwrap().to_string_lossy().into_owned())
        }
        None => None,
    };
    manifest.visits.push(ManifestVisit {
        institution: record.institution.clone(),
        checkpoint: ckpt_path
            .file_name()
            .unwrap()
            .to_string_lossy()
            .into_owned(),
        bundle: bundle_name,
        trail: record.trail.clone(),
    });
    manifest.save(&Layout::manifest_file(run_dir))
}

fn load_visit_model(run_dir: &Path, manifest: &RunManifest, visit_idx: usize) -> Result<Mlp> {
    let record: VisitRecord = serde_json::from_str(&fs::read_to_string(
        run_dir.join(&manifest.visits[visit_idx].checkpoint),
    )?)?;
    Ok(record.model)
}

fn run_one(
    spec: &RunSpec,
    institutions: &[InstitutionData],
    config: &ExperimentConfig,
    layout: &Layout,
) -> Result<()> {
    let hyper = config.hyper.with_seed(spec.seed);
    let run_dir = layout.run_dir(spec);
    fs::create_dir_all(&run_dir)?;
    let manifest_path = Layout::manifest_file(&run_dir);
    let mut manifest = if manifest_path.exists() {
        let loaded = RunManifest::load(&manifest_path)?;
        if loaded.algorithm != spec.algorithm || loaded.seed != spec.seed {
            return Err(Error::Config(format!(
                "run directory {} holds a different run",
                run_dir.display()
            )));
        }
        loaded
    } else {
        RunManifest::new(spec, &hyper)
    };

    let visits: Vec<PreparedVisit> = match spec.algorithm {
        Algorithm::Ll => prepare_ll_visits(institutions)?,
        Algorithm::Cds => vec![prepare_cds_pool(institutions)?],
        Algorithm::Tl | Algorithm::Rl => prepare_ppdl_visits(
            institutions,
            spec.order.expect("sequential run has an order"),
        )?,
    };
    let done = manifest.visits.len();
    if done >= visits.len() {
        return Ok(());
    }
    if spec.algorithm == Algorithm::Cds && config.privacy {
        return Err(Error::Config(
            "CDS cannot run under the privacy flag".to_owned(),
        ));
    }

    match spec.algorithm {
        Algorithm::Ll => {
            for (v, visit) in visits.iter().enumerate().skip(done) {
                let model = initial_model(visit.train.schema().len(), &hyper)?;
                let outcome = train_single(
                    model,
                    &visit.train,
                    &visit.val,
                    &hyper,
                    visit_seed(spec.seed, v),
                )?;
                let record = VisitRecord {
                    institution: visit.name.clone(),
                    model: outcome.model,
                    trail: outcome.trail,
                    stats: visit.stats.clone(),
                };
                write_visit(&run_dir, &mut manifest, v, &record, None)?;
            }
        }
        Algorithm::Cds => {
            let visit = &visits[0];
            let model = initial_model(visit.train.schema().len(), &hyper)?;
            let outcome = train_single(
                model,
                &visit.train,
                &visit.val,
                &hyper,
                visit_seed(spec.seed, 0),
            )?;
            let record = VisitRecord {
                institution: visit.name.clone(),
                model: outcome.model,
                trail: outcome.trail,
                stats: visit.stats.clone(),
            };
            write_visit(&run_dir, &mut manifest, 0, &record, None)?;
        }
        Algorithm::Tl => {
            let mut model = if done == 0 {
                initial_model(visits[0].train.schema().len(), &hyper)?
            } else {
                load_visit_model(&run_dir, &manifest, done - 1)?
            };
            for (v, visit) in visits.iter().enumerate().skip(done) {
                let outcome = train_single(
                    model,
                    &visit.train,
                    &visit.val,
                    &hyper,
                    visit_seed(spec.seed, v),
                )?;
                model = outcome.model.clone();
                let record = VisitRecord {
                    institution: visit.name.clone(),
                    model: outcome.model,
                    trail: outcome.trail,
                    stats: visit.stats.clone(),
                };
                write_visit(&run_dir, &mut manifest, v, &record, None)?;
            }
        }
        Algorithm::Rl => {
            let (mut model, mut state) = if done == 0 {
                (
                    initial_model(visits[0].train.schema().len(), &hyper)?,
                    ReviewState::new(ReviewConfig::from_hyper(&hyper))?,
                )
            } else {
                let bundle_name = manifest.visits[done - 1].bundle.as_ref().ok_or_else(|| {
                    Error::Config("RL manifest visit is missing its bundle".to_owned())
                })?;
                TransferBundle::load(&run_dir.join(bundle_name))?.into_state()?
            };
            for (v, visit) in visits.iter().enumerate().skip(done) {
                let outcome = rl_train_on_institution(
                    model,
                    &mut state,
                    &visit.train,
                    &visit.val,
                    &hyper,
                    visit_seed(spec.seed, v),
                )?;
                model = outcome.model.clone();
                let record = VisitRecord {
                    institution: visit.name.clone(),
                    model: outcome.model.clone(),
                    trail: outcome.trail,
                    stats: visit.stats.clone(),
                };
                let bundle = TransferBundle::new(outcome.model, &state, hyper.clone());
                write_visit(&run_dir, &mut manifest, v, &record, Some(&bundle))?;
            }
        }
    }
    Ok(())
}

pub fn cmd_train(config: &ExperimentConfig, layout: &Layout) -> Result<()> {
    config.validate()?;
    let institutions = super::prepare::load_prepared_institutions(config, layout)?;
    fs::create_dir_all(layout.runs_dir())?;
    let runs = config.runs();
    // Independent runs on the worker pool, each writing to its own
    // directory.
    let results = exec::map_indexed(runs.len(), |i| {
        run_one(&runs[i], &institutions, config, layout)
    });
    for (spec, result) in runs.iter().zip(results) {
        result.map_err(|e| Error::Config(format!("run {}: {e}", spec.name())))?;
    }
    Ok(())
}
