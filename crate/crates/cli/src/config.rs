//! The run configuration file and its flag overrides.

use std::path::{Path, PathBuf};

use predbench::bench_store::CostModel;
use predbench::eval::TestProtocol;
use predbench::microbench::{DatasetConfig, NetConfig, TrainConfig};
use predbench::nas::Framework;
use predbench::zerocost::ProxyConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SEED_ENV: &str = "PREDBENCH_SEED";

/// Everything a run reads, after flags and the environment are applied.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    /// Worker threads; 0 means one per available core.
    pub threads: usize,
    pub build: BuildSection,
    pub score: ScoreSection,
    pub grid: GridSection,
    pub nas: NasSection,
    pub report: ReportSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildSection {
    pub archs: usize,
    /// Trainings averaged per stored curve.
    pub seeds: usize,
    pub file: String,
    pub train: TrainConfig,
    pub net: NetConfig,
    pub dataset: DatasetConfig,
    pub costs: CostModel,
}

impl Default for BuildSection {
    fn default() -> Self {
        Self {
            archs: 2000,
            seeds: predbench::bench_store::DEFAULT_SEEDS,
            file: "bench.nbstore".into(),
            train: TrainConfig::default(),
            net: NetConfig::default(),
            dataset: DatasetConfig::default(),
            costs: CostModel::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreSection {
    pub store: Option<PathBuf>,
    pub predictors: Vec<String>,
    /// Explicit architectures; when empty, `count` are drawn from the store.
    pub archs: Vec<String>,
    pub count: usize,
    /// Full trainings available to model-based predictors.
    pub train_size: usize,
    /// Per-architecture query budget; unset allows a full training.
    pub query_budget: Option<f64>,
    pub hpo_iterations: Option<usize>,
    pub proxy: ProxyConfig,
    /// Trains architectures missing from the store when asked for them.
    pub on_demand: bool,
}

impl Default for ScoreSection {
    fn default() -> Self {
        Self {
            store: None,
            predictors: vec!["synflow".into(), "jacob_cov".into()],
            archs: Vec::new(),
            count: 100,
            train_size: 0,
            query_budget: None,
            hpo_iterations: None,
            proxy: ProxyConfig::default(),
            on_demand: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub store: Option<PathBuf>,
    pub predictors: Vec<String>,
    /// Init-budget levels in epoch-equivalents; empty selects the default grid.
    pub init: Vec<f64>,
    pub query: Vec<f64>,
    pub trials: usize,
    pub test_size: usize,
    pub protocol: TestProtocol,
    pub hpo_iterations: Option<usize>,
    pub proxy: ProxyConfig,
    /// Metric ranked by the Pareto table.
    pub metric: String,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            store: None,
            predictors: vec!["oracle".into(), "random".into()],
            init: Vec::new(),
            query: Vec::new(),
            trials: 100,
            test_size: 200,
            protocol: TestProtocol::Uniform,
            hpo_iterations: None,
            proxy: ProxyConfig::default(),
            metric: "kendall_tau".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NasSection {
    pub store: Option<PathBuf>,
    pub framework: Framework,
    /// Evolution: predictor name. BO: surrogate model kind or `oracle`.
    pub predictor: String,
    pub runs: usize,
    pub iterations: usize,
    pub initial_population: usize,
    pub elite: usize,
    pub mutations_per_elite: usize,
    pub k: usize,
    pub pool: usize,
    pub select: usize,
    pub members: usize,
    pub hpo_every: usize,
    pub hpo_iterations: usize,
    pub query_budget: f64,
    pub on_demand: bool,
}

impl Default for NasSection {
    fn default() -> Self {
        let d = predbench::nas::NasConfig::default();
        Self {
            store: None,
            framework: Framework::Evolution,
            predictor: "gbt".into(),
            runs: 10,
            iterations: d.iterations,
            initial_population: d.initial_population,
            elite: d.elite,
            mutations_per_elite: d.mutations_per_elite,
            k: d.k,
            pool: d.pool,
            select: d.select,
            members: d.members,
            hpo_every: d.hpo_every,
            hpo_iterations: d.hpo_iterations,
            query_budget: d.query_budget,
            on_demand: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// `grid.json` files written by `grid`.
    pub grids: Vec<PathBuf>,
    /// `nas.json` files written by `nas`.
    pub nas: Vec<PathBuf>,
    pub metric: String,
    pub seed_variance: Option<SeedVarianceSection>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { grids: Vec::new(), nas: Vec::new(), metric: "kendall_tau".into(), seed_variance: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedVarianceSection {
    pub store: Option<PathBuf>,
    pub predictors: Vec<String>,
    pub redraws: usize,
    pub fixed_trials: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub query_budget: f64,
    pub hpo_iterations: Option<usize>,
}

impl Default for SeedVarianceSection {
    fn default() -> Self {
        let d = predbench::eval::SeedVarianceConfig::default();
        Self {
            store: None,
            predictors: Vec::new(),
            redraws: d.redraws,
            fixed_trials: d.fixed_trials,
            train_size: d.train_size,
            test_size: d.test_size,
            query_budget: d.query_budget,
            hpo_iterations: None,
        }
    }
}

/// 1-based line of byte offset `pos`.
fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| line_of(text, s.start));
            let msg = e.message().replace('\n', " ");
            CliError::Config(format!("{}: line {line}: {msg}", origin.display()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// The flag value, else the file value, else `PREDBENCH_SEED`.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64, CliError> {
        if let Some(s) = flag {
            self.seed = Some(s);
        }
        if self.seed.is_none() {
            if let Ok(v) = std::env::var(SEED_ENV) {
                let s = v.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
                self.seed = Some(s);
            }
        }
        self.seed.ok_or_else(|| CliError::Config(format!("a seed is required: pass --seed, set `seed` in the config, or export {SEED_ENV}")))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}
