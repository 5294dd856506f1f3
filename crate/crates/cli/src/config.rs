//! Experiment configuration: one JSON file, overridable by flags, with an
//! environment variable (`PPDL_DATA_ROOT`) or `--data-root` setting the base
//! for relative paths.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ppdl_core::data::{ColumnDef, ColumnSchema, SplitRatios, SyntheticSpec};
use ppdl_core::train::{Algorithm, HyperParams, VisitOrder};
use ppdl_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticMode {
    /// Generate each institution directly from its angle.
    Direct,
    /// Generate a pool, forget its provenance, and rediscover institutions
    /// with the GMM pairing search.
    HeteroSplit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDataConfig {
    pub mode: SyntheticMode,
    #[serde(flatten)]
    pub spec: SyntheticSpec,
    /// Seed for data generation and splitting; training seeds live in
    /// `seeds`.
    #[serde(default)]
    pub data_seed: u64,
    /// Number of institutions the pairing search should produce
    /// (hetero_split mode; defaults to the number of generator entries).
    #[serde(default)]
    pub n_institutions: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvInstitution {
    pub name: String,
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvDataConfig {
    pub columns: Vec<ColumnDef>,
    pub institutions: Vec<CsvInstitution>,
    #[serde(default)]
    pub data_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataConfig {
    Synthetic(SyntheticDataConfig),
    Csv(CsvDataConfig),
}

fn default_min_specificity() -> f64 {
    0.75
}

fn default_orders() -> Vec<VisitOrder> {
    vec![VisitOrder::Desc]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub algorithms: Vec<Algorithm>,
    /// Visit orders for the sequential algorithms (TL, RL).
    #[serde(default = "default_orders")]
    pub orders: Vec<VisitOrder>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub split: SplitRatios,
    #[serde(default)]
    pub hyper: HyperParams,
    pub output_dir: String,
    /// Blocks CDS and any raw-row pooling; raw rows then never leave their
    /// institution directory.
    #[serde(default)]
    pub privacy: bool,
    #[serde(default = "default_min_specificity")]
    pub min_specificity: f64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".to_owned()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithms must be nonempty".to_owned()));
        }
        let mut seen = std::collections::HashSet::new();
        for a in &self.algorithms {
            if !seen.insert(*a) {
                return Err(Error::Config(format!("algorithm '{a}' listed twice")));
            }
        }
        if self.privacy && self.algorithms.contains(&Algorithm::Cds) {
            return Err(Error::Config(
                "CDS pools raw rows and cannot run under the privacy flag".to_owned(),
            ));
        }
        if self.algorithms.iter().any(|a| a.is_sequential()) && self.orders.is_empty() {
            return Err(Error::Config(
                "sequential algorithms need at least one visit order".to_owned(),
            ));
        }
        if !(0.0..1.0).contains(&self.min_specificity) {
            return Err(Error::Config(
                "min_specificity must lie in [0, 1)".to_owned(),
            ));
        }
        SplitRatios::new(self.split.train, self.split.val, self.split.test)?;
        self.hyper.validate()?;
        match &self.data {
            DataConfig::Synthetic(s) => {
                if let Some(n) = s.n_institutions {
                    if s.mode == SyntheticMode::HeteroSplit && n == 0 {
                        return Err(Error::Config("n_institutions must be positive".to_owned()));
                    }
                }
                // Full generator validation happens at prepare; make sure
                // the schema at least constructs.
                s.spec.schema()?;
            }
            DataConfig::Csv(c) => {
                ColumnSchema::new(c.columns.clone())?;
                if c.institutions.is_empty() {
                    return Err(Error::Config("csv mode needs institutions".to_owned()));
                }
                // Names become directory names and CSV fields.
                let mut sanitized = std::collections::HashSet::new();
                for inst in &c.institutions {
                    if inst.name.is_empty()
                        || inst.name == "global"
                        || inst.name.contains(',')
                        || inst.name.contains('\n')
                    {
                        return Err(Error::Config(format!(
                            "institution name '{}' is empty, reserved, or holds a comma/newline",
                            inst.name
                        )));
                    }
                    if !sanitized.insert(crate::layout::sanitize(&inst.name)) {
                        return Err(Error::Config(format!(
                            "institution names collide after sanitization ('{}')",
                            inst.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<ColumnSchema> {
        match &self.data {
            DataConfig::Synthetic(s) => s.spec.schema(),
            DataConfig::Csv(c) => ColumnSchema::new(c.columns.clone()),
        }
    }

    pub fn data_seed(&self) -> u64 {
        match &self.data {
            DataConfig::Synthetic(s) => s.data_seed,
            DataConfig::Csv(c) => c.data_seed,
        }
    }

    /// Hash of the semantic configuration (output location excluded), used
    /// to name the run directory so reruns are collision-free.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = String::new();
        let text = serde_json::to_string(&canonical).expect("config serializes");
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }

    /// Runs this configuration expands to: one per (algorithm, order, seed),
    /// with orders applying only to the sequential algorithms.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut runs = Vec::new();
        for &algorithm in &self.algorithms {
            let orders: Vec<Option<VisitOrder>> = if algorithm.is_sequential() {
                self.orders.iter().map(|&o| Some(o)).collect()
            } else {
                vec![None]
            };
            for order in orders {
                for &seed in &self.seeds {
                    runs.push(RunSpec {
                        algorithm,
                        order,
                        seed,
                    });
                }
            }
        }
        runs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub order: Option<VisitOrder>,
    pub seed: u64,
}

impl RunSpec {
    pub fn name(&self) -> String {
        match self.order {
            Some(order) => format!("{}_{}_seed{}", self.algorithm, order, self.seed),
            None => format!("{}_seed{}", self.algorithm, self.seed),
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub orders: Option<Vec<VisitOrder>>,
    pub data_root: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            config.seeds = vec![seed];
        }
        if let Some(algos) = &self.algorithms {
            config.algorithms = algos.clone();
        }
        if let Some(orders) = &self.orders {
            config.orders = orders.clone();
        }
    }

    /// Resolution order: flag, then `PPDL_DATA_ROOT`, then the current
    /// directory.
    pub fn resolve_data_root(&self) -> PathBuf {
        if let Some(root) = &self.data_root {
            return root.clone();
        }
        if let Ok(env_root) = std::env::var("PPDL_DATA_ROOT") {
            if !env_root.is_empty() {
                return PathBuf::from(env_root);
            }
        }
        PathBuf::from(".")
    }
}

pub fn resolve_path(root: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        root.join(path)
    }
}
