//! The initialization-budget × query-budget experiment.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::MetricKind;
use super::protocol::MutationProtocol;
use crate::arch_space::Architecture;
use crate::bench_store::BenchmarkStore;
use crate::error::{Error, Result};
use crate::predictor::{BudgetLedger, BuildOptions, InitEnv, Predictor, PredictorSpec};
use crate::seed;

/// Budget levels in epoch-equivalents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetGrid {
    pub init: Vec<f64>,
    pub query: Vec<f64>,
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| if i == 0 { lo } else if i == n - 1 { hi } else { (a + (b - a) * i as f64 / (n - 1) as f64).exp() }).collect()
}

impl BudgetGrid {
    /// 11 init levels (none, then 10 to 300 full trainings) × 14 query
    /// levels (0.05 to `epochs` epochs), log-spaced.
    pub fn default_for(epochs: usize) -> Self {
        let e = epochs as f64;
        let mut init = vec![0.0];
        init.extend(log_spaced(10.0 * e, 300.0 * e, 10));
        Self { init, query: log_spaced(0.05, e, 14) }
    }

    pub fn validate(&self) -> Result<()> {
        for levels in [&self.init, &self.query] {
            if levels.is_empty() || levels.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || levels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("budget levels must be non-empty, finite, non-negative and strictly increasing"));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.init.len() * self.query.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestProtocol {
    /// Test and training architectures drawn uniformly from the table.
    #[default]
    Uniform,
    /// Test set mutated from strong seeds; training rows one edit from it.
    Mutation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub test_size: usize,
    pub trials: usize,
    pub seed: u64,
    pub protocol: TestProtocol,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { test_size: 200, trials: 100, seed: 0, protocol: TestProtocol::Uniform }
    }
}

/// Constructs fresh predictor instances.
#[derive(Clone)]
pub struct PredictorFactory {
    pub name: String,
    make: Arc<dyn Fn() -> Box<dyn Predictor> + Send + Sync>,
}

impl std::fmt::Debug for PredictorFactory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PredictorFactory({})", self.name)
    }
}

impl PredictorFactory {
    pub fn new(name: &str, make: impl Fn() -> Box<dyn Predictor> + Send + Sync + 'static) -> Self {
        Self { name: name.to_string(), make: Arc::new(make) }
    }

    pub fn from_spec(spec: &PredictorSpec, opts: &BuildOptions) -> Self {
        let (spec, opts) = (spec.clone(), opts.clone());
        Self::new(spec.name(), move || spec.build(&opts))
    }

    pub fn make(&self) -> Box<dyn Predictor> {
        (self.make)()
    }
}

/// Summary of one metric in one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    #[serde(with = "nan_as_null")]
    pub std: f64,
    /// Trials with a defined value.
    pub n: usize,
    /// Trials attempted.
    pub trials: usize,
}

impl Stat {
    pub fn from_values(values: &[f64], trials: usize) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n, trials };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        Self { mean, std, n, trials }
    }

    pub fn is_defined(&self) -> bool {
        self.n > 0
    }
}

// JSON has no NaN; undefined summaries travel as null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() { None } else { Some(*v) }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Key of one cell entry: predictor, init index, query index.
pub type CellKey = (String, usize, usize);

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultGrid {
    pub grid: Option<BudgetGrid>,
    pub predictors: Vec<String>,
    pub metrics: Vec<MetricKind>,
    #[serde(with = "cells_serde")]
    pub cells: BTreeMap<CellKey, BTreeMap<MetricKind, Stat>>,
}

mod cells_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        predictor: String,
        init: usize,
        query: usize,
        stats: BTreeMap<MetricKind, Stat>,
    }

    pub fn serialize<S: Serializer>(cells: &BTreeMap<CellKey, BTreeMap<MetricKind, Stat>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<Entry> = cells.iter().map(|((p, i, q), st)| Entry { predictor: p.clone(), init: *i, query: *q, stats: st.clone() }).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<CellKey, BTreeMap<MetricKind, Stat>>, D::Error> {
        let v: Vec<Entry> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|e| ((e.predictor, e.init, e.query), e.stats)).collect())
    }
}

impl ResultGrid {
    pub fn stat(&self, predictor: &str, init: usize, query: usize, metric: MetricKind) -> Option<&Stat> {
        self.cells.get(&(predictor.to_string(), init, query))?.get(&metric)
    }

    pub fn mean(&self, predictor: &str, init: usize, query: usize, metric: MetricKind) -> Option<f64> {
        self.stat(predictor, init, query, metric).filter(|s| s.is_defined()).map(|s| s.mean)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.grid.as_ref().map_or((0, 0), |g| (g.init.len(), g.query.len()))
    }

    pub const CSV_HEADER: &'static str = "predictor,init_budget,query_budget,metric,mean,std,trials,defined";

    /// One row per (predictor, cell, metric).
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let g = self.grid.as_ref().ok_or_else(|| Error::invalid("result grid has no budget levels"))?;
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for ((p, i, q), stats) in &self.cells {
            for (m, s) in stats {
                writeln!(w, "{p},{},{},{},{},{},{},{}", g.init[*i], g.query[*q], m.name(), s.mean, s.std, s.trials, s.n)?;
            }
        }
        Ok(())
    }
}

/// Draws the test set and training-architecture order of one trial.
struct TrialData {
    test: Vec<Architecture>,
    truth: Vec<f64>,
    train_order: Vec<Architecture>,
}

fn uniform_trial(store: &BenchmarkStore, cfg: &GridConfig, trial: u64, train_cap: usize) -> Result<TrialData> {
    let keys = store.architectures();
    if keys.len() < cfg.test_size + 1 {
        return Err(Error::invalid(format!("store has {} architectures, need more than the test size {}", keys.len(), cfg.test_size)));
    }
    let mut rng = seed::rng(cfg.seed, &[seed::tag("trial"), trial]);
    let picked = index::sample(&mut rng, keys.len(), cfg.test_size).into_vec();
    let mut in_test = vec![false; keys.len()];
    picked.iter().for_each(|&i| in_test[i] = true);
    let test: Vec<Architecture> = picked.iter().map(|&i| keys[i].clone()).collect();
    let mut rest: Vec<Architecture> = keys.iter().enumerate().filter(|(i, _)| !in_test[*i]).map(|(_, a)| a.clone()).collect();
    rest.shuffle(&mut rng);
    rest.truncate(train_cap);
    let truth = test.iter().map(|a| store.final_val_acc(a)).collect::<Result<_>>()?;
    Ok(TrialData { test, truth, train_order: rest })
}

fn mutation_trial(store: &BenchmarkStore, cfg: &GridConfig, trial: u64, train_cap: usize) -> Result<TrialData> {
    let proto = MutationProtocol::new(store, cfg.test_size, seed::derive(cfg.seed, &[seed::tag("trial"), trial]))?;
    let train_order = proto.train_pool(train_cap)?;
    let truth = proto.test.iter().map(|a| store.final_val_acc(a)).collect::<Result<_>>()?;
    Ok(TrialData { test: proto.test, truth, train_order })
}

/// Metric values of one predictor run, or `None` if it failed.
fn run_once(
    store: &BenchmarkStore,
    factory: &PredictorFactory,
    init: f64,
    query: f64,
    data: &TrialData,
    pseed: u64,
    metrics: &[MetricKind],
) -> Option<Vec<Option<f64>>> {
    let mut p = factory.make();
    let mut ledger = BudgetLedger::new(init, query);
    let mut source = data.train_order.iter().cloned();
    let env = InitEnv { store, ledger: &mut ledger, source: &mut source, seed: pseed };
    if let Err(e) = p.initialize(env) {
        log::debug!("{} failed to initialize at ({init}, {query}): {e}", factory.name);
        return None;
    }
    let mut scores = Vec::with_capacity(data.test.len());
    for a in &data.test {
        ledger.begin_query(a);
        match p.query(a, store, &mut ledger) {
            Ok(pred) => scores.push(pred.score),
            Err(e) => {
                log::debug!("{} failed on {a}: {e}", factory.name);
                return None;
            }
        }
    }
    Some(metrics.iter().map(|m| m.compute(&scores, &data.truth)).collect())
}

/// Per trial, per predictor: `[init][query] -> metric values`.
type TrialResult = Vec<Vec<Vec<Option<Vec<Option<f64>>>>>>;

fn run_trial(store: &BenchmarkStore, factories: &[PredictorFactory], grid: &BudgetGrid, cfg: &GridConfig, metrics: &[MetricKind], trial: u64) -> Result<TrialResult> {
    let e = store.epochs() as f64 * store.costs().epoch;
    let train_cap = grid.init.iter().map(|b| (b / e + 1e-9).floor() as usize).max().unwrap_or(0);
    let data = match cfg.protocol {
        TestProtocol::Uniform => uniform_trial(store, cfg, trial, train_cap)?,
        TestProtocol::Mutation => mutation_trial(store, cfg, trial, train_cap)?,
    };
    let mut out = Vec::with_capacity(factories.len());
    for f in factories {
        let pseed = seed::derive(cfg.seed, &[seed::tag("predictor"), trial, seed::tag(&f.name)]);
        let probe = f.make();
        let mut cache: HashMap<(u64, u64), Option<Vec<Option<f64>>>> = HashMap::new();
        let mut rows = Vec::with_capacity(grid.init.len());
        for &ib in &grid.init {
            let mut row = Vec::with_capacity(grid.query.len());
            for &qb in &grid.query {
                let key = probe.budget_key(store, ib, qb);
                let r = cache.entry(key).or_insert_with(|| run_once(store, f, ib, qb, &data, pseed, metrics)).clone();
                row.push(r);
            }
            rows.push(row);
        }
        out.push(rows);
    }
    Ok(out)
}

/// Runs every predictor in every cell for `cfg.trials` trials.
///
/// Each trial draws one test set and one training order shared by all
/// predictors and cells; larger initialization budgets see a superset of
/// the training architectures of smaller ones. Predictor failures are
/// recorded as undefined trials.
pub fn run_grid(store: &BenchmarkStore, factories: &[PredictorFactory], grid: &BudgetGrid, cfg: &GridConfig) -> Result<ResultGrid> {
    grid.validate()?;
    if cfg.trials == 0 || cfg.test_size < 2 {
        return Err(Error::invalid("need at least one trial and two test architectures"));
    }
    let metrics = MetricKind::ALL.to_vec();
    let trials: Vec<TrialResult> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(store, factories, grid, cfg, &metrics, t))
        .collect::<Result<_>>()?;
    let mut cells = BTreeMap::new();
    for (pi, f) in factories.iter().enumerate() {
        for ii in 0..grid.init.len() {
            for qi in 0..grid.query.len() {
                let mut stats = BTreeMap::new();
                for (mi, &m) in metrics.iter().enumerate() {
                    let vals: Vec<f64> = trials.iter().filter_map(|t| t[pi][ii][qi].as_ref().and_then(|v| v[mi])).collect();
                    stats.insert(m, Stat::from_values(&vals, cfg.trials));
                }
                cells.insert((f.name.clone(), ii, qi), stats);
            }
        }
    }
    Ok(ResultGrid { grid: Some(grid.clone()), predictors: factories.iter().map(|f| f.name.clone()).collect(), metrics, cells })
}
