//! The predictor contract shared by every family, plus the two reference
//! predictors (oracle and random).

mod ledger;
pub mod registry;

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use ledger::{BudgetLedger, LedgerEntry, Phase, BUDGET_TOLERANCE};
pub use registry::{BuildOptions, PredictorSpec, PREDICTOR_NAMES};

use crate::arch_space::Architecture;
use crate::bench_store::{BenchmarkRecord, BenchmarkStore};
use crate::error::Result;
use crate::seed;

/// Score returned for statistics that are undefined (ranks last).
pub const DEGENERATE_SCORE: f64 = f64::NEG_INFINITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Baseline,
    ZeroCost,
    LearningCurve,
    ModelBased,
    Hybrid,
}

/// One score. Higher always means better predicted final accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub score: f64,
    pub cost_charged: f64,
    /// Spread across ensemble members, when the predictor has one.
    pub std: Option<f64>,
    /// A fallback path produced the score (e.g. a failed curve fit).
    pub fallback: bool,
    /// The query budget did not cover the requested work.
    pub degraded: bool,
}

impl Prediction {
    pub fn new(score: f64, cost_charged: f64) -> Self {
        Self { score, cost_charged, std: None, fallback: false, degraded: false }
    }

    pub fn degenerate(cost_charged: f64) -> Self {
        Self::new(DEGENERATE_SCORE, cost_charged)
    }

    pub fn is_degenerate(&self) -> bool {
        self.score == DEGENERATE_SCORE
    }
}

/// Supplies architectures for a predictor's training data.
pub trait ArchSource {
    fn next_arch(&mut self) -> Option<Architecture>;
}

impl<I: Iterator<Item = Architecture>> ArchSource for I {
    fn next_arch(&mut self) -> Option<Architecture> {
        self.next()
    }
}

/// Everything `initialize` may touch.
pub struct InitEnv<'a> {
    pub store: &'a BenchmarkStore,
    pub ledger: &'a mut BudgetLedger,
    pub source: &'a mut dyn ArchSource,
    pub seed: u64,
}

impl InitEnv<'_> {
    /// Fully trains source architectures while the init budget affords one
    /// more training.
    pub fn gather_full_trainings(&mut self) -> Result<Vec<std::sync::Arc<BenchmarkRecord>>> {
        let full = self.store.costs().epoch * self.store.epochs() as f64;
        let mut out = Vec::new();
        while self.ledger.can_afford(full) {
            let Some(arch) = self.source.next_arch() else { break };
            out.push(self.store.query_full(&arch, self.ledger)?);
        }
        Ok(out)
    }
}

/// Initialization / query / update lifecycle.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;

    fn family(&self) -> Family;

    /// Whether results depend on the initialization budget.
    fn uses_init_budget(&self) -> bool {
        false
    }

    /// Whether results depend on the query budget.
    fn uses_query_budget(&self) -> bool {
        false
    }

    /// Identifies the budget pair's effect on this predictor: two budget
    /// pairs with equal keys yield identical results, letting evaluation
    /// reuse them.
    fn budget_key(&self, store: &BenchmarkStore, init_budget: f64, query_budget: f64) -> (u64, u64) {
        let _ = store;
        let init = if self.uses_init_budget() { init_budget.to_bits() } else { 0 };
        let query = if self.uses_query_budget() { query_budget.to_bits() } else { 0 };
        (init, query)
    }

    /// Sets the seed and query-budget-dependent state without touching any
    /// training data; used by search loops that drive `update` directly.
    fn configure(&mut self, store: &BenchmarkStore, query_budget: f64, seed: u64) {
        let _ = (store, query_budget, seed);
    }

    /// One-time pre-computation. Called exactly once before any query.
    fn initialize(&mut self, env: InitEnv<'_>) -> Result<()> {
        let _ = env;
        Ok(())
    }

    /// Scores `arch`. The ledger is already in its query phase.
    fn query(&self, arch: &Architecture, store: &BenchmarkStore, ledger: &mut BudgetLedger) -> Result<Prediction>;

    /// Refits on fully evaluated `(architecture, final accuracy)` pairs.
    fn update(&mut self, store: &BenchmarkStore, population: &[(Architecture, f64)]) -> Result<()> {
        let _ = (store, population);
        Ok(())
    }
}

impl fmt::Debug for dyn Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Predictor({})", self.name())
    }
}

/// Returns the true final accuracy (or its negation).
#[derive(Clone, Debug, Default)]
pub struct OraclePredictor {
    pub reversed: bool,
}

impl Predictor for OraclePredictor {
    fn name(&self) -> &str {
        if self.reversed {
            "reversed_oracle"
        } else {
            "oracle"
        }
    }

    fn family(&self) -> Family {
        Family::Baseline
    }

    fn query(&self, arch: &Architecture, store: &BenchmarkStore, _: &mut BudgetLedger) -> Result<Prediction> {
        let f = store.final_val_acc(arch)?;
        Ok(Prediction::new(if self.reversed { -f } else { f }, 0.0))
    }
}

/// I.i.d. uniform scores, fixed per (seed, architecture).
#[derive(Clone, Debug, Default)]
pub struct RandomPredictor {
    seed: u64,
}

impl RandomPredictor {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl Predictor for RandomPredictor {
    fn name(&self) -> &str {
        "random"
    }

    fn family(&self) -> Family {
        Family::Baseline
    }

    fn configure(&mut self, _: &BenchmarkStore, _: f64, seed: u64) {
        self.seed = seed;
    }

    fn initialize(&mut self, env: InitEnv<'_>) -> Result<()> {
        self.seed = env.seed;
        Ok(())
    }

    fn query(&self, arch: &Architecture, store: &BenchmarkStore, _: &mut BudgetLedger) -> Result<Prediction> {
        let idx = store.space().index_of(arch);
        let mut rng = seed::rng(self.seed, &[seed::tag("random_predictor"), idx]);
        Ok(Prediction::new(rng.random::<f64>(), 0.0))
    }
}
