//! OMNI: a supervised model over the architecture encoding, SoTL-E and
//! Jacobian covariance, combining three predictor families.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::arch_space::{Architecture, EncodingKind};
use crate::bench_store::{BenchmarkRecord, BenchmarkStore};
use crate::error::{Error, Result};
use crate::lc_pred::sotl_e;
use crate::model_pred::{fit, FittedModel, HpoSpec, ModelKind};
use crate::predictor::{BudgetLedger, Family, InitEnv, Prediction, Predictor};
use crate::zerocost::{self, ProxyConfig, ProxyKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmniFeature {
    Encoding,
    SotlE,
    JacobCov,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmniConfig {
    pub base: ModelKind,
    pub features: BTreeSet<OmniFeature>,
    pub encoding: EncodingKind,
    pub members: usize,
    pub hpo: HpoSpec,
    pub proxy: ProxyConfig,
}

impl OmniConfig {
    pub fn new(features: &[OmniFeature]) -> Self {
        let base = ModelKind::GradientBoostedTrees;
        Self {
            base,
            features: features.iter().copied().collect(),
            encoding: EncodingKind::AdjacencyOneHot,
            members: 1,
            hpo: HpoSpec::for_kind(base),
            proxy: ProxyConfig::default(),
        }
    }

    /// All three features.
    pub fn full() -> Self {
        Self::new(&[OmniFeature::Encoding, OmniFeature::SotlE, OmniFeature::JacobCov])
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::invalid("OMNI needs at least one feature"));
        }
        Ok(())
    }
}

/// Query-time plan fixed at initialization from the query budget.
#[derive(Clone, Debug, Default)]
struct Plan {
    use_jc: bool,
    /// SoTL-E epoch index, 0 when unused.
    sotl_epoch: usize,
    degraded: bool,
}

#[derive(Debug)]
pub struct OmniPredictor {
    name: String,
    pub config: OmniConfig,
    seed: u64,
    plan: Plan,
    /// Stand-in for degenerate Jacobian scores: below every training value.
    jc_floor: f64,
    model: Option<FittedModel>,
}

impl OmniPredictor {
    pub fn new(name: &str, config: OmniConfig) -> Self {
        Self { name: name.to_string(), config, seed: 0, plan: Plan::default(), jc_floor: 0.0, model: None }
    }

    fn has(&self, f: OmniFeature) -> bool {
        self.config.features.contains(&f)
    }

    /// Decides which features a query budget of `q` affords: the Jacobian
    /// score first, then as many epochs as remain for SoTL-E.
    fn plan(&self, store: &BenchmarkStore, q: f64) -> Plan {
        let costs = store.costs();
        let mut left = q;
        let mut plan = Plan::default();
        if self.has(OmniFeature::JacobCov) {
            if costs.zero_cost <= left + crate::predictor::BUDGET_TOLERANCE {
                plan.use_jc = true;
                left -= costs.zero_cost;
            } else {
                plan.degraded = true;
            }
        }
        if self.has(OmniFeature::SotlE) {
            let k = if left.is_infinite() { store.epochs() } else { ((left + crate::predictor::BUDGET_TOLERANCE) / costs.epoch).floor().max(0.0) as usize };
            plan.sotl_epoch = k.min(store.epochs());
            if plan.sotl_epoch == 0 {
                plan.degraded = true;
            }
        }
        plan
    }

    fn row(&self, store: &BenchmarkStore, arch: &Architecture, sotl: Option<f64>, jc: Option<f64>) -> Result<Vec<f64>> {
        let mut row = Vec::new();
        if self.has(OmniFeature::Encoding) {
            row.extend(store.space().encode(arch, self.config.encoding)?.values);
        }
        if let Some(s) = sotl {
            row.push(s);
        }
        if let Some(j) = jc {
            row.push(if j.is_finite() { j } else { self.jc_floor });
        }
        Ok(row)
    }

    fn jc(&self, store: &BenchmarkStore, arch: &Architecture) -> Result<f64> {
        zerocost::score(store, arch, ProxyKind::JacobCov, &self.config.proxy)
    }

    /// Fits on fully trained records; their SoTL-E feature is read at the
    /// planned epoch and their Jacobian score is not charged.
    fn fit_records(&mut self, store: &BenchmarkStore, recs: &[&BenchmarkRecord]) -> Result<()> {
        let jcs: Vec<f64> = if self.plan.use_jc { recs.iter().map(|r| self.jc(store, &r.arch)).collect::<Result<_>>()? } else { Vec::new() };
        let finite = jcs.iter().copied().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        self.jc_floor = if lo.is_finite() { lo - (hi - lo).max(1.0) } else { 0.0 };
        let k = self.plan.sotl_epoch;
        let mut x = Vec::with_capacity(recs.len());
        for (i, r) in recs.iter().enumerate() {
            let sotl = (k > 0).then(|| sotl_e(&r.curve.prefix(k)));
            let jc = self.plan.use_jc.then(|| jcs[i]);
            x.push(self.row(store, &r.arch, sotl, jc)?);
        }
        if x.first().is_some_and(|r| r.is_empty()) {
            return Err(Error::InsufficientData("query budget affords none of the configured features".into()));
        }
        let y: Vec<f64> = recs.iter().map(|r| r.final_val_acc()).collect();
        self.model = Some(fit(self.config.base, &x, &y, &self.config.hpo, self.config.members, self.seed)?);
        Ok(())
    }
}

impl Predictor for OmniPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn family(&self) -> Family {
        Family::Hybrid
    }

    fn uses_init_budget(&self) -> bool {
        true
    }

    fn uses_query_budget(&self) -> bool {
        self.has(OmniFeature::SotlE) || self.has(OmniFeature::JacobCov)
    }

    fn budget_key(&self, store: &BenchmarkStore, init_budget: f64, query_budget: f64) -> (u64, u64) {
        let p = self.plan(store, query_budget);
        (init_budget.to_bits(), ((p.sotl_epoch as u64) << 1) | u64::from(p.use_jc))
    }

    fn configure(&mut self, store: &BenchmarkStore, query_budget: f64, seed: u64) {
        self.seed = seed;
        self.plan = self.plan(store, query_budget);
    }

    fn initialize(&mut self, mut env: InitEnv<'_>) -> Result<()> {
        self.config.validate()?;
        self.configure(env.store, env.ledger.query_budget(), env.seed);
        let recs = env.gather_full_trainings()?;
        let refs: Vec<&BenchmarkRecord> = recs.iter().map(|r| r.as_ref()).collect();
        self.fit_records(env.store, &refs)
    }

    fn query(&self, arch: &Architecture, store: &BenchmarkStore, ledger: &mut BudgetLedger) -> Result<Prediction> {
        let model = self.model.as_ref().ok_or_else(|| Error::invalid("predictor queried before initialization"))?;
        let before = ledger.query_spent();
        let jc = if self.plan.use_jc {
            ledger.charge(store.costs().zero_cost, "jacob_cov")?;
            Some(self.jc(store, arch)?)
        } else {
            None
        };
        let sotl = if self.plan.sotl_epoch > 0 {
            let k = self.plan.sotl_epoch.min(ledger.affordable_units(store.costs().epoch));
            if k < self.plan.sotl_epoch {
                return Err(Error::BudgetExceeded { requested: self.plan.sotl_epoch as f64, remaining: ledger.remaining() });
            }
            Some(sotl_e(&store.query_partial(arch, k, ledger)?))
        } else {
            None
        };
        ledger.charge(store.costs().model_query, self.config.base.name())?;
        let (mean, std) = model.predict_dist(&self.row(store, arch, sotl, jc)?)?;
        let cost = ledger.query_spent() - before;
        Ok(Prediction { std: Some(std), degraded: self.plan.degraded, ..Prediction::new(mean, cost) })
    }

    fn update(&mut self, store: &BenchmarkStore, population: &[(Architecture, f64)]) -> Result<()> {
        let recs = population.iter().map(|(a, _)| store.record(a)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&BenchmarkRecord> = recs.iter().map(|r| r.as_ref()).collect();
        self.fit_records(store, &refs)
    }
}
