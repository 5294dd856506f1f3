//! On-disk layout of one experiment: `<output_dir>/<config_hash>/` holding
//! `prepare/`, `runs/`, `eval/`, and `report/`. Raw feature rows live only
//! under `prepare/institutions/<name>/`.

use std::path::{Path, PathBuf};

use crate::config::RunSpec;

pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(output_root: &Path, config_hash: &str) -> Self {
        Self {
            root: output_root.join(config_hash),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn prepare_dir(&self) -> PathBuf {
        self.root.join("prepare")
    }

    pub fn institutions_dir(&self) -> PathBuf {
        self.prepare_dir().join("institutions")
    }

    pub fn institution_dir(&self, name: &str) -> PathBuf {
        self.institutions_dir().join(sanitize(name))
    }

    pub fn split_csv(&self, name: &str, split: &str) -> PathBuf {
        self.institution_dir(name).join(format!("{split}.csv"))
    }

    pub fn stats_file(&self) -> PathBuf {
        self.prepare_dir().join("stats_exchange.json")
    }

    pub fn assignment_file(&self) -> PathBuf {
        self.prepare_dir().join("assignment.json")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_dir(&self, spec: &RunSpec) -> PathBuf {
        self.runs_dir().join(spec.name())
    }

    pub fn manifest_file(run_dir: &Path) -> PathBuf {
        run_dir.join("manifest.json")
    }

    pub fn checkpoint_file(run_dir: &Path, visit: usize, institution: &str) -> PathBuf {
        run_dir.join(format!("visit_{:02}_{}.json", visit, sanitize(institution)))
    }

    pub fn bundle_file(run_dir: &Path, visit: usize) -> PathBuf {
        run_dir.join(format!("bundle_{visit:02}.json"))
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn flat_metrics_file(&self) -> PathBuf {
        self.eval_dir().join("metrics.csv")
    }

    pub fn summary_file(&self) -> PathBuf {
        self.eval_dir().join("summary.csv")
    }

    pub fn global_minmax_file(&self) -> PathBuf {
        self.eval_dir().join("global_minmax.csv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn trajectories_file(&self) -> PathBuf {
        self.report_dir().join("global_auroc_trajectories.csv")
    }

    pub fn grid_file(&self, spec_label: &str) -> PathBuf {
        self.report_dir()
            .join(format!("local_mcc_grid_{spec_label}.csv"))
    }
}
