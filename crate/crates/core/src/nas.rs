//! Predictor-guided NAS: evolution, and Bayesian optimization with
//! independent Thompson sampling.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::arch_space::{Architecture, EncodingKind, MutationCount};
use crate::bench_store::BenchmarkStore;
use crate::error::{Error, Result};
use crate::model_pred::hpo::{random_search, Hyper, HpoSpec};
use crate::model_pred::{encode_all, ensemble_fit, FittedModel, ModelKind};
use crate::predictor::{BudgetLedger, Predictor};
use crate::seed::{self, Rng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    #[default]
    Evolution,
    BoIts,
}

impl std::str::FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "evolution" => Ok(Self::Evolution),
            "bo_its" => Ok(Self::BoIts),
            _ => Err(Error::invalid(format!("unknown framework {s:?}; expected evolution or bo_its"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NasConfig {
    pub framework: Framework,
    pub iterations: usize,
    pub initial_population: usize,
    pub elite: usize,
    pub mutations_per_elite: usize,
    pub k: usize,
    pub pool: usize,
    pub select: usize,
    pub members: usize,
    /// BO re-tunes surrogate hyperparameters every this many iterations.
    pub hpo_every: usize,
    /// Random-search candidates per tuning round.
    pub hpo_iterations: usize,
    /// Per-candidate query budget handed to the predictor, in epochs.
    pub query_budget: f64,
    pub seed: u64,
}

impl Default for NasConfig {
    fn default() -> Self {
        Self {
            framework: Framework::Evolution,
            iterations: 25,
            initial_population: 10,
            elite: 5,
            mutations_per_elite: 40,
            k: 20,
            pool: 200,
            select: 20,
            members: 3,
            hpo_every: 5,
            hpo_iterations: 20,
            query_budget: 0.0,
            seed: 0,
        }
    }
}

impl NasConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [self.iterations, self.initial_population, self.elite, self.mutations_per_elite, self.k, self.pool, self.select, self.members, self.hpo_every];
        if counts.contains(&0) {
            return Err(Error::invalid("NAS counts must all be at least 1"));
        }
        if self.select > self.pool {
            return Err(Error::invalid(format!("select ({}) exceeds pool ({})", self.select, self.pool)));
        }
        if !(self.query_budget.is_finite() && self.query_budget >= 0.0) {
            return Err(Error::invalid("query budget must be finite and non-negative"));
        }
        Ok(())
    }
}

/// One full evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Cumulative simulated cost after this evaluation.
    pub cost: f64,
    pub arch: Architecture,
    pub val_error: f64,
    pub best_val_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NasTrace {
    pub seed: u64,
    pub steps: Vec<TraceStep>,
    /// Iterations whose predictor failed and fell back to random choice.
    pub fallbacks: usize,
}

impl NasTrace {
    pub fn final_error(&self) -> Option<f64> {
        self.steps.last().map(|s| s.best_val_error)
    }

    pub fn total_cost(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cost)
    }

    /// Best error found within `cost`.
    pub fn best_at_cost(&self, cost: f64) -> Option<f64> {
        self.steps.iter().take_while(|s| s.cost <= cost * (1.0 + 1e-12)).last().map(|s| s.best_val_error)
    }

    pub const CSV_HEADER: &'static str = "seed,step,cost,best_val_error";

    pub fn write_csv_rows(&self, mut w: impl Write) -> Result<()> {
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(w, "{},{i},{},{}", self.seed, s.cost, s.best_val_error)?;
        }
        Ok(())
    }
}

/// Evaluated population and trace bookkeeping shared by both loops.
struct Search<'a> {
    store: &'a BenchmarkStore,
    ledger: BudgetLedger,
    cost: f64,
    seen: HashSet<Architecture>,
    population: Vec<(Architecture, f64)>,
    trace: NasTrace,
}

impl<'a> Search<'a> {
    fn new(store: &'a BenchmarkStore, seed: u64) -> Self {
        Self { store, ledger: BudgetLedger::unlimited(), cost: 0.0, seen: HashSet::new(), population: Vec::new(), trace: NasTrace { seed, ..Default::default() } }
    }

    fn evaluate(&mut self, arch: Architecture) -> Result<()> {
        let before = self.ledger.total_spent();
        let rec = self.store.query_full(&arch, &mut self.ledger)?;
        self.cost += self.ledger.total_spent() - before;
        let acc = rec.final_val_acc();
        let err = 1.0 - acc;
        let best = self.trace.steps.last().map_or(err, |s| s.best_val_error.min(err));
        self.trace.steps.push(TraceStep { cost: self.cost, arch: arch.clone(), val_error: err, best_val_error: best });
        self.seen.insert(arch.clone());
        self.population.push((arch, acc));
        Ok(())
    }

    fn random_unseen(&self, rng: &mut Rng, n: usize, exclude: &HashSet<Architecture>) -> Result<Vec<Architecture>> {
        let space = self.store.space();
        let mut out = Vec::with_capacity(n);
        let mut taken = HashSet::new();
        let mut attempts = 0;
        while out.len() < n {
            attempts += 1;
            if attempts > 1000 * n.max(1) {
                return Err(Error::DuplicateExhaustion { requested: n, available: out.len() });
            }
            let a = space.sample_uniform(rng);
            if !self.seen.contains(&a) && !exclude.contains(&a) && taken.insert(a.clone()) {
                out.push(a);
            }
        }
        Ok(out)
    }

    fn seed_population(&mut self, rng: &mut Rng, n: usize) -> Result<()> {
        for a in self.random_unseen(rng, n, &HashSet::new())? {
            self.evaluate(a)?;
        }
        Ok(())
    }
}

/// Indices of the `k` largest scores; ties keep candidate order.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn elite_candidates(search: &Search<'_>, cfg: &NasConfig, rng: &mut Rng) -> Result<Vec<Architecture>> {
    let space = search.store.space();
    let mut ranked: Vec<&(Architecture, f64)> = search.population.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let elites: Vec<&Architecture> = ranked.iter().take(cfg.elite).map(|(a, _)| a).collect();
    let mut out = Vec::new();
    let mut taken = HashSet::new();
    let mut push = |a: Architecture, out: &mut Vec<Architecture>| {
        if !search.seen.contains(&a) && taken.insert(a.clone()) {
            out.push(a);
        }
    };
    for e in &elites {
        for _ in 0..cfg.mutations_per_elite {
            push(space.mutate(e, 1, MutationCount::Uniform, rng)?, &mut out);
        }
    }
    // crowded neighbourhoods: keep mutating so k fresh candidates exist
    let mut extra = 0;
    while out.len() < cfg.k && extra < 100 * cfg.k {
        extra += 1;
        let e = elites.choose(rng).expect("population is non-empty");
        push(space.mutate(e, 1, MutationCount::Uniform, rng)?, &mut out);
    }
    if out.len() < cfg.k {
        let exclude: HashSet<Architecture> = out.iter().cloned().collect();
        out.extend(search.random_unseen(rng, cfg.k - out.len(), &exclude)?);
    }
    Ok(out)
}

/// Predictor scores for `cands`, or `None` if the predictor failed.
fn score_all(predictor: &dyn Predictor, store: &BenchmarkStore, cands: &[Architecture], query_budget: f64) -> (Option<Vec<f64>>, f64) {
    let mut ledger = BudgetLedger::new(0.0, query_budget);
    let mut scores = Vec::with_capacity(cands.len());
    let mut spent = 0.0;
    for a in cands {
        ledger.begin_query(a);
        match predictor.query(a, store, &mut ledger) {
            Ok(p) => {
                spent += p.cost_charged;
                scores.push(if p.score.is_nan() { f64::NEG_INFINITY } else { p.score });
            }
            Err(e) => {
                log::warn!("{} failed to score {a}: {e}", predictor.name());
                return (None, spent);
            }
        }
    }
    (Some(scores), spent)
}

/// Predictor-guided evolution. The predictor is refit on the whole
/// population each iteration and picks `k` of the elite mutations.
pub fn run_evolution(store: &BenchmarkStore, predictor: &mut dyn Predictor, cfg: &NasConfig) -> Result<NasTrace> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed, &[seed::tag("evolution")]);
    let mut search = Search::new(store, cfg.seed);
    predictor.configure(store, cfg.query_budget, seed::derive(cfg.seed, &[seed::tag("nas_predictor")]));
    search.seed_population(&mut rng, cfg.initial_population)?;
    for it in 0..cfg.iterations {
        let cands = elite_candidates(&search, cfg, &mut rng)?;
        let scores = match predictor.update(store, &search.population) {
            Ok(()) => {
                let (s, spent) = score_all(predictor, store, &cands, cfg.query_budget);
                search.cost += spent;
                s
            }
            Err(e) => {
                log::warn!("iteration {it}: {} refit failed: {e}", predictor.name());
                None
            }
        };
        let picked: Vec<usize> = match scores {
            Some(s) => top_k(&s, cfg.k),
            None => {
                search.trace.fallbacks += 1;
                rand::seq::index::sample(&mut rng, cands.len(), cfg.k.min(cands.len())).into_vec()
            }
        };
        for i in picked {
            search.evaluate(cands[i].clone())?;
        }
    }
    Ok(search.trace)
}

/// Mean and spread per candidate, fit on the evaluated population.
pub trait Surrogate {
    fn fit(&mut self, store: &BenchmarkStore, population: &[(Architecture, f64)], iteration: usize) -> Result<()>;
    fn predict_dist(&self, store: &BenchmarkStore, archs: &[Architecture]) -> Result<Vec<(f64, f64)>>;
}

/// An ensemble of one model kind over adjacency encodings.
#[derive(Debug)]
pub struct EnsembleSurrogate {
    pub kind: ModelKind,
    pub members: usize,
    pub hpo: HpoSpec,
    pub hpo_every: usize,
    pub encoding: EncodingKind,
    /// All members share one seed (and so coincide).
    pub identical: bool,
    seed: u64,
    hyper: Option<Hyper>,
    model: Option<FittedModel>,
}

impl EnsembleSurrogate {
    pub fn new(kind: ModelKind, cfg: &NasConfig) -> Self {
        let hpo = HpoSpec { iterations: cfg.hpo_iterations, ..HpoSpec::for_kind(kind) };
        Self {
            kind,
            members: cfg.members,
            hpo,
            hpo_every: cfg.hpo_every,
            encoding: EncodingKind::AdjacencyOneHot,
            identical: false,
            seed: seed::derive(cfg.seed, &[seed::tag("surrogate")]),
            hyper: None,
            model: None,
        }
    }
}

impl Surrogate for EnsembleSurrogate {
    fn fit(&mut self, store: &BenchmarkStore, population: &[(Architecture, f64)], iteration: usize) -> Result<()> {
        let archs: Vec<Architecture> = population.iter().map(|(a, _)| a.clone()).collect();
        let y: Vec<f64> = population.iter().map(|(_, v)| *v).collect();
        let x = encode_all(store.space(), &archs, self.encoding)?;
        let it_seed = seed::derive(self.seed, &[iteration as u64]);
        if self.hyper.is_none() || iteration % self.hpo_every == 0 {
            self.hyper = Some(random_search(self.kind, &self.hpo, &x, &y, it_seed)?.best);
        }
        let seeds: Vec<u64> = (0..self.members as u64)
            .map(|m| if self.identical { it_seed } else { seed::derive(it_seed, &[seed::tag("member"), m]) })
            .collect();
        self.model = Some(ensemble_fit(self.kind, self.hyper.as_ref().expect("tuned above"), &x, &y, &seeds)?);
        Ok(())
    }

    fn predict_dist(&self, store: &BenchmarkStore, archs: &[Architecture]) -> Result<Vec<(f64, f64)>> {
        let model = self.model.as_ref().ok_or_else(|| Error::invalid("surrogate used before fitting"))?;
        archs.iter().map(|a| model.predict_dist(&store.space().encode(a, self.encoding)?.values)).collect()
    }
}

/// True accuracy with zero spread.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleSurrogate;

impl Surrogate for OracleSurrogate {
    fn fit(&mut self, _: &BenchmarkStore, _: &[(Architecture, f64)], _: usize) -> Result<()> {
        Ok(())
    }

    fn predict_dist(&self, store: &BenchmarkStore, archs: &[Architecture]) -> Result<Vec<(f64, f64)>> {
        archs.iter().map(|a| Ok((store.final_val_acc(a)?, 0.0))).collect()
    }
}

/// One Normal(mean, std) draw per candidate.
pub fn thompson_draws(dists: &[(f64, f64)], rng: &mut Rng) -> Vec<f64> {
    if dists.iter().all(|(_, s)| *s == 0.0) {
        log::debug!("all surrogate spreads are zero; ranking by mean");
    }
    dists
        .iter()
        .map(|&(m, s)| {
            let z: f64 = rng.sample(StandardNormal);
            m + s * z
        })
        .collect()
}

/// Bayesian optimization: each iteration samples a random pool and
/// evaluates the top `select` by independent Thompson sampling.
pub fn run_bo_its(store: &BenchmarkStore, surrogate: &mut dyn Surrogate, cfg: &NasConfig) -> Result<NasTrace> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed, &[seed::tag("bo_its")]);
    let mut search = Search::new(store, cfg.seed);
    search.seed_population(&mut rng, cfg.initial_population)?;
    for it in 0..cfg.iterations {
        let pool = search.random_unseen(&mut rng, cfg.pool, &HashSet::new())?;
        let picked = match surrogate.fit(store, &search.population, it).and_then(|()| surrogate.predict_dist(store, &pool)) {
            Ok(d) => top_k(&thompson_draws(&d, &mut rng), cfg.select),
            Err(e) => {
                log::warn!("iteration {it}: surrogate failed: {e}");
                search.trace.fallbacks += 1;
                rand::seq::index::sample(&mut rng, pool.len(), cfg.select).into_vec()
            }
        };
        for i in picked {
            search.evaluate(pool[i].clone())?;
        }
    }
    Ok(search.trace)
}
