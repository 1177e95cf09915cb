//! Model-based predictors: supervised regressors over architecture
//! encodings, trained on fully evaluated architectures.

mod gp;
pub mod hpo;
mod mlp;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gp::{BayesLinear, GaussianProcess, JITTER};
pub use hpo::{random_search, HpoResult, HpoSpec, Hyper, ParamRange};
pub use mlp::{Mlp, MlpParams};
pub use tree::{BoostParams, ForestParams, GradientBoosting, RandomForest, TreeParams};

use crate::arch_space::{Architecture, EncodingKind, SearchSpace};
use crate::bench_store::BenchmarkStore;
use crate::error::{Error, Result};
use crate::predictor::{BudgetLedger, Family, InitEnv, Prediction, Predictor};
use crate::seed;

/// A fitted regressor over feature vectors.
pub trait Regressor: Send + Sync + fmt::Debug {
    fn predict(&self, x: &[f64]) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    BayesLinear,
    GaussianProcess,
    RandomForest,
    GradientBoostedTrees,
    /// Fully connected regressor; ensembled for uncertainty.
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::BayesLinear, ModelKind::GaussianProcess, ModelKind::RandomForest, ModelKind::GradientBoostedTrees, ModelKind::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BayesLinear => "bayes_linear",
            ModelKind::GaussianProcess => "gp",
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoostedTrees => "gbt",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn min_rows(self) -> usize {
        match self {
            ModelKind::BayesLinear | ModelKind::GaussianProcess => 2,
            _ => 10,
        }
    }

    /// Whether members differ through their own seed (rather than a
    /// bootstrap resample).
    fn seed_driven(self) -> bool {
        self == ModelKind::Mlp
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::invalid(format!("unknown model kind '{s}'")))
    }
}

fn hp(h: &Hyper, name: &str, default: f64) -> f64 {
    h.get(name).copied().unwrap_or(default)
}

fn hp_usize(h: &Hyper, name: &str, default: usize) -> usize {
    hp(h, name, default as f64).round().max(0.0) as usize
}

/// Fits one model with explicit hyperparameters; missing entries take
/// their defaults.
pub fn fit_single(kind: ModelKind, h: &Hyper, x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<Box<dyn Regressor>> {
    if x.len() != y.len() {
        return Err(Error::invalid("feature rows and targets differ in length"));
    }
    if y.len() < kind.min_rows() {
        return Err(Error::InsufficientData(format!("{} needs at least {} rows, got {}", kind.name(), kind.min_rows(), y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data must be finite"));
    }
    let mut rng = seed::rng(seed, &[seed::tag(kind.name())]);
    Ok(match kind {
        ModelKind::BayesLinear => Box::new(BayesLinear::fit(x, y, hp(h, "alpha", 1.0), hp(h, "beta", 10.0))?),
        ModelKind::GaussianProcess => Box::new(GaussianProcess::fit(x, y, hp(h, "length_scale", 2.0), hp(h, "noise", 0.1))?),
        ModelKind::RandomForest => {
            let p = ForestParams {
                n_trees: hp_usize(h, "n_estimators", 116),
                bootstrap: hp(h, "bootstrap", 1.0) != 0.0,
                tree: TreeParams {
                    max_depth: h.get("max_depth").map(|d| d.round() as usize),
                    min_samples_leaf: hp_usize(h, "min_samples_leaf", 2),
                    min_samples_split: hp_usize(h, "min_samples_split", 2),
                    split_feature_fraction: hp(h, "max_features", 0.17),
                },
            };
            Box::new(RandomForest::fit(x, y, &p, &mut rng))
        }
        ModelKind::GradientBoostedTrees => {
            let d = BoostParams::default();
            let p = BoostParams {
                n_estimators: hp_usize(h, "n_estimators", d.n_estimators),
                learning_rate: hp(h, "learning_rate", d.learning_rate),
                max_depth: hp_usize(h, "max_depth", d.max_depth),
                feature_fraction: hp(h, "feature_fraction", d.feature_fraction),
                min_samples_leaf: hp_usize(h, "min_samples_leaf", d.min_samples_leaf),
                max_bins: d.max_bins,
            };
            Box::new(GradientBoosting::fit(x, y, &p, &mut rng))
        }
        ModelKind::Mlp => {
            let d = MlpParams::default();
            let p = MlpParams {
                hidden_layers: hp_usize(h, "hidden_layers", d.hidden_layers),
                width: hp_usize(h, "width", d.width),
                learning_rate: hp(h, "learning_rate", d.learning_rate),
                epochs: hp_usize(h, "epochs", d.epochs),
                batch_size: hp_usize(h, "batch_size", d.batch_size),
            };
            Box::new(Mlp::fit(x, y, &p, &mut rng))
        }
    })
}

/// Fitted members plus the hyperparameters they share.
#[derive(Debug)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub hyper: Hyper,
    pub dim: usize,
    members: Vec<Box<dyn Regressor>>,
}

impl FittedModel {
    pub fn members(&self) -> usize {
        self.members.len()
    }

    /// Mean and (population) standard deviation across members.
    pub fn predict_dist(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!("feature length {} does not match the fitted {}", x.len(), self.dim)));
        }
        let preds: Vec<f64> = self.members.iter().map(|m| m.predict(x)).collect();
        let n = preds.len() as f64;
        let mean = preds.iter().sum::<f64>() / n;
        let var = preds.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        Ok((mean, var.sqrt()))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_dist(x)?.0)
    }
}

/// Fits one member per seed. Neural members differ by initialization and
/// data order; other kinds fit a seeded bootstrap resample when there is
/// more than one member.
pub fn ensemble_fit(kind: ModelKind, h: &Hyper, x: &[Vec<f64>], y: &[f64], seeds: &[u64]) -> Result<FittedModel> {
    if seeds.is_empty() {
        return Err(Error::invalid("an ensemble needs at least one member"));
    }
    let dim = x.first().map_or(0, Vec::len);
    let mut members = Vec::with_capacity(seeds.len());
    for &s in seeds {
        if seeds.len() == 1 || kind.seed_driven() {
            members.push(fit_single(kind, h, x, y, s)?);
        } else {
            use rand::Rng as _;
            let mut rng = seed::rng(s, &[seed::tag("bootstrap")]);
            let idx: Vec<usize> = (0..y.len()).map(|_| rng.random_range(0..y.len())).collect();
            let bx: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
            let by: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            members.push(fit_single(kind, h, &bx, &by, s)?);
        }
    }
    Ok(FittedModel { kind, hyper: h.clone(), dim, members })
}

/// HPO (when the spec asks for more than the defaults), then a final fit on
/// all rows.
pub fn fit(kind: ModelKind, x: &[Vec<f64>], y: &[f64], spec: &HpoSpec, members: usize, seed: u64) -> Result<FittedModel> {
    if y.len() < kind.min_rows() {
        return Err(Error::InsufficientData(format!("{} needs at least {} rows, got {}", kind.name(), kind.min_rows(), y.len())));
    }
    let hyper = random_search(kind, spec, x, y, seed)?.best;
    let seeds: Vec<u64> = (0..members.max(1) as u64).map(|m| seed::derive(seed, &[seed::tag("member"), m])).collect();
    ensemble_fit(kind, &hyper, x, y, &seeds)
}

pub fn encode_all(space: &SearchSpace, archs: &[Architecture], kind: EncodingKind) -> Result<Vec<Vec<f64>>> {
    archs.iter().map(|a| Ok(space.encode(a, kind)?.values)).collect()
}

/// A model-based predictor over one encoding.
#[derive(Debug)]
pub struct ModelPredictor {
    pub name: String,
    pub kind: ModelKind,
    pub encoding: EncodingKind,
    pub members: usize,
    pub hpo: HpoSpec,
    seed: u64,
    model: Option<FittedModel>,
}

impl ModelPredictor {
    pub fn new(name: &str, kind: ModelKind, encoding: EncodingKind, members: usize, hpo: HpoSpec) -> Self {
        Self { name: name.to_string(), kind, encoding, members, hpo, seed: 0, model: None }
    }

    pub fn model(&self) -> Option<&FittedModel> {
        self.model.as_ref()
    }

    fn refit(&mut self, store: &BenchmarkStore, archs: &[Architecture], y: &[f64]) -> Result<()> {
        let x = encode_all(store.space(), archs, self.encoding)?;
        self.model = Some(fit(self.kind, &x, y, &self.hpo, self.members, self.seed)?);
        Ok(())
    }
}

impl Predictor for ModelPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn family(&self) -> Family {
        Family::ModelBased
    }

    fn uses_init_budget(&self) -> bool {
        true
    }

    fn configure(&mut self, _: &BenchmarkStore, _: f64, seed: u64) {
        self.seed = seed;
    }

    fn initialize(&mut self, mut env: InitEnv<'_>) -> Result<()> {
        self.seed = env.seed;
        let recs = env.gather_full_trainings()?;
        let archs: Vec<Architecture> = recs.iter().map(|r| r.arch.clone()).collect();
        let y: Vec<f64> = recs.iter().map(|r| r.final_val_acc()).collect();
        self.refit(env.store, &archs, &y)
    }

    fn query(&self, arch: &Architecture, store: &BenchmarkStore, ledger: &mut BudgetLedger) -> Result<Prediction> {
        let model = self.model.as_ref().ok_or_else(|| Error::invalid("predictor queried before initialization"))?;
        let cost = store.costs().model_query;
        ledger.charge(cost, self.kind.name())?;
        let x = store.space().encode(arch, self.encoding)?;
        let (mean, std) = model.predict_dist(&x.values)?;
        Ok(Prediction { std: Some(std), ..Prediction::new(mean, cost) })
    }

    fn update(&mut self, store: &BenchmarkStore, population: &[(Architecture, f64)]) -> Result<()> {
        let archs: Vec<Architecture> = population.iter().map(|(a, _)| a.clone()).collect();
        let y: Vec<f64> = population.iter().map(|(_, v)| *v).collect();
        self.refit(store, &archs, &y)
    }
}
