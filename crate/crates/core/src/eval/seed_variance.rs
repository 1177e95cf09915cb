//! Splits Kendall-Tau spread into dataset-draw and predictor-seed parts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::PredictorFactory;
use super::metrics::MetricKind;
use crate::bench_store::BenchmarkStore;
use crate::error::{Error, Result};
use crate::predictor::{BudgetLedger, InitEnv};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedVarianceConfig {
    pub redraws: usize,
    pub fixed_trials: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Query budget in epoch-equivalents.
    pub query_budget: f64,
    pub seed: u64,
}

impl Default for SeedVarianceConfig {
    fn default() -> Self {
        Self { redraws: 50, fixed_trials: 10, train_size: 100, test_size: 200, query_budget: 0.0, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedVariance {
    pub predictor: String,
    /// Std over all redraws × trials.
    pub overall_std: f64,
    /// Std across predictor seeds on a fixed train/test draw, averaged over draws.
    pub fixed_dataset_std: f64,
    pub mean: f64,
    /// Runs that failed or gave an undefined metric.
    pub failures: usize,
}

fn std_of(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn kendall_run(store: &BenchmarkStore, f: &PredictorFactory, cfg: &SeedVarianceConfig, redraw: u64, trial: u64) -> Result<Option<f64>> {
    let keys = store.architectures();
    let mut rng = seed::rng(cfg.seed, &[seed::tag("sv_draw"), redraw]);
    let picked = rand::seq::index::sample(&mut rng, keys.len(), cfg.test_size + cfg.train_size).into_vec();
    let test: Vec<_> = picked[..cfg.test_size].iter().map(|&i| keys[i].clone()).collect();
    let train: Vec<_> = picked[cfg.test_size..].iter().map(|&i| keys[i].clone()).collect();
    let truth: Vec<f64> = test.iter().map(|a| store.final_val_acc(a)).collect::<Result<_>>()?;
    let init = cfg.train_size as f64 * store.epochs() as f64 * store.costs().epoch;
    let mut ledger = BudgetLedger::new(init, cfg.query_budget);
    let mut p = f.make();
    let pseed = seed::derive(cfg.seed, &[seed::tag("sv_predictor"), redraw, trial, seed::tag(&f.name)]);
    let mut source = train.into_iter();
    if p.initialize(InitEnv { store, ledger: &mut ledger, source: &mut source, seed: pseed }).is_err() {
        return Ok(None);
    }
    let mut scores = Vec::with_capacity(test.len());
    for a in &test {
        ledger.begin_query(a);
        match p.query(a, store, &mut ledger) {
            Ok(pr) => scores.push(pr.score),
            Err(_) => return Ok(None),
        }
    }
    Ok(MetricKind::KendallTau.compute(&scores, &truth))
}

/// Runs `fixed_trials` predictor seeds on each of `redraws` train/test draws.
pub fn seed_variance(store: &BenchmarkStore, factory: &PredictorFactory, cfg: &SeedVarianceConfig) -> Result<SeedVariance> {
    if cfg.redraws == 0 || cfg.fixed_trials == 0 || cfg.test_size < 2 {
        return Err(Error::invalid("seed variance needs at least one redraw, one trial and two test architectures"));
    }
    if store.len() < cfg.test_size + cfg.train_size {
        return Err(Error::invalid(format!("store has {} architectures, need {}", store.len(), cfg.test_size + cfg.train_size)));
    }
    let per_draw: Vec<Vec<Option<f64>>> = (0..cfg.redraws as u64)
        .into_par_iter()
        .map(|r| (0..cfg.fixed_trials as u64).map(|t| kendall_run(store, factory, cfg, r, t)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let all: Vec<f64> = per_draw.iter().flatten().flatten().copied().collect();
    let failures = cfg.redraws * cfg.fixed_trials - all.len();
    let fixed: Vec<f64> = per_draw
        .iter()
        .map(|d| d.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|d| !d.is_empty())
        .map(|d| std_of(&d))
        .collect();
    let mean = if all.is_empty() { f64::NAN } else { all.iter().sum::<f64>() / all.len() as f64 };
    let fixed_dataset_std = if fixed.is_empty() { f64::NAN } else { fixed.iter().sum::<f64>() / fixed.len() as f64 };
    Ok(SeedVariance { predictor: factory.name.clone(), overall_std: std_of(&all), fixed_dataset_std, mean, failures })
}
