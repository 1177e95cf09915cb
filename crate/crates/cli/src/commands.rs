//! One function per subcommand.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use predbench::bench_store::{BenchmarkStore, StoreHeader};
use predbench::eval::{pareto_best, run_grid, seed_variance, BudgetGrid, GridConfig, MetricKind, PredictorFactory, ResultGrid, SeedVarianceConfig};
use predbench::model_pred::ModelKind;
use predbench::nas::{run_bo_its, run_evolution, EnsembleSurrogate, Framework, NasConfig, NasTrace, OracleSurrogate};
use predbench::predictor::{BudgetLedger, BuildOptions, InitEnv, PredictorSpec};
use predbench::{seed, Architecture};
use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{config, CliError};
use crate::output::Sink;

type Res<T> = Result<T, CliError>;

fn parse_predictors(names: &[String]) -> Res<Vec<PredictorSpec>> {
    if names.is_empty() {
        return Err(config("at least one predictor is required"));
    }
    let specs: Vec<PredictorSpec> = names.iter().map(|n| n.parse().map_err(|e: predbench::Error| config(e.to_string()))).collect::<Res<_>>()?;
    let mut seen = HashSet::new();
    if let Some(dup) = specs.iter().find(|s| !seen.insert(s.name())) {
        return Err(config(format!("predictor '{dup}' is listed twice")));
    }
    Ok(specs)
}

fn parse_metric(name: &str) -> Res<MetricKind> {
    MetricKind::ALL.into_iter().find(|m| m.name() == name).ok_or_else(|| {
        let valid: Vec<_> = MetricKind::ALL.iter().map(|m| m.name()).collect();
        config(format!("unknown metric '{name}'; valid names: {}", valid.join(", ")))
    })
}

/// The configured store path, else the one `build` writes.
fn store_path(cfg: &RunConfig, given: &Option<PathBuf>) -> PathBuf {
    given.clone().unwrap_or_else(|| cfg.output_dir().join(&cfg.build.file))
}

fn load_store(path: &Path) -> Res<BenchmarkStore> {
    Ok(BenchmarkStore::load(path).with_context(|| format!("loading store {}", path.display()))?)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> predbench::Result<()>) -> Res<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes(v: &impl Serialize) -> Res<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(anyhow::Error::from)?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn build(cfg: &RunConfig) -> Res<()> {
    let b = &cfg.build;
    if b.archs == 0 || b.seeds == 0 {
        return Err(config("build.archs and build.seeds must be at least 1"));
    }
    let mut header = StoreHeader::with_seed(cfg.seed.expect("seed resolved"));
    header.seeds = b.seeds;
    header.train = b.train.clone();
    header.net = b.net.clone();
    header.dataset = b.dataset.clone();
    header.costs = b.costs.clone();
    if let Some(size) = header.space.size().filter(|&s| (b.archs as u64) > s) {
        return Err(config(format!("build.archs = {} exceeds the space size {size}", b.archs)));
    }
    let store = BenchmarkStore::build(header, b.archs)?;
    Sink::new("build", cfg)?.write(&b.file, &store.to_bytes())?;
    Ok(())
}

pub fn score(cfg: &RunConfig) -> Res<()> {
    let s = &cfg.score;
    let specs = parse_predictors(&s.predictors)?;
    if s.query_budget.is_some_and(|q| !(q.is_finite() && q >= 0.0)) {
        return Err(config("score.query_budget must be finite and non-negative"));
    }
    let master = cfg.seed.expect("seed resolved");
    let store = load_store(&store_path(cfg, &s.store))?.with_on_demand(s.on_demand);
    let query_budget = s.query_budget.unwrap_or(store.epochs() as f64 * store.costs().epoch);
    let archs: Vec<Architecture> = if s.archs.is_empty() {
        let keys = store.architectures();
        if s.count == 0 || s.count > keys.len() {
            return Err(config(format!("score.count must be in 1..={}", keys.len())));
        }
        let mut rng = seed::rng(master, &[seed::tag("score")]);
        index::sample(&mut rng, keys.len(), s.count).into_iter().map(|i| keys[i].clone()).collect()
    } else {
        s.archs
            .iter()
            .map(|t| {
                let a: Architecture = t.parse().map_err(|e: predbench::Error| config(e.to_string()))?;
                store.space().check(&a).map_err(|e| config(e.to_string()))?;
                Ok(a)
            })
            .collect::<Res<_>>()?
    };
    let scored: HashSet<&Architecture> = archs.iter().collect();
    let mut train: Vec<Architecture> = store.architectures().iter().filter(|a| !scored.contains(a)).cloned().collect();
    train.shuffle(&mut seed::rng(master, &[seed::tag("score_train")]));
    train.truncate(s.train_size);
    let init_budget = train.len() as f64 * store.epochs() as f64 * store.costs().epoch;
    let opts = BuildOptions { hpo_iterations: s.hpo_iterations, proxy: s.proxy.clone() };

    let columns: Vec<Vec<(f64, f64)>> = specs
        .par_iter()
        .map(|spec| -> anyhow::Result<Vec<(f64, f64)>> {
            let mut p = spec.build(&opts);
            let mut ledger = BudgetLedger::new(init_budget, query_budget);
            let mut source = train.iter().cloned();
            let pseed = seed::derive(master, &[seed::tag("score_predictor"), seed::tag(spec.name())]);
            p.initialize(InitEnv { store: &store, ledger: &mut ledger, source: &mut source, seed: pseed })
                .with_context(|| format!("initializing {spec}"))?;
            archs
                .iter()
                .map(|a| {
                    ledger.begin_query(a);
                    let pr = p.query(a, &store, &mut ledger).with_context(|| format!("{spec} on {a}"))?;
                    Ok((pr.score, pr.cost_charged))
                })
                .collect()
        })
        .collect::<anyhow::Result<_>>()?;

    let mut out = String::from("arch,predictor,score,query_cost,val_acc\n");
    for (j, a) in archs.iter().enumerate() {
        let truth = store.final_val_acc(a).map(|v| v.to_string()).unwrap_or_default();
        for (spec, col) in specs.iter().zip(&columns) {
            let (score, cost) = col[j];
            out.push_str(&format!("{a},{spec},{score},{cost},{truth}\n"));
        }
    }
    Sink::new("score", cfg)?.write("scores.csv", out.as_bytes())?;
    Ok(())
}

pub fn grid(cfg: &RunConfig) -> Res<()> {
    let g = &cfg.grid;
    let specs = parse_predictors(&g.predictors)?;
    let metric = parse_metric(&g.metric)?;
    if g.trials == 0 || g.test_size < 2 {
        return Err(config("grid.trials must be at least 1 and grid.test_size at least 2"));
    }
    let store = load_store(&store_path(cfg, &g.store))?;
    let levels = if g.init.is_empty() && g.query.is_empty() {
        let mut d = BudgetGrid::default_for(store.epochs());
        let unit = store.costs().epoch;
        d.init.iter_mut().chain(d.query.iter_mut()).for_each(|v| *v *= unit);
        d
    } else {
        BudgetGrid { init: g.init.clone(), query: g.query.clone() }
    };
    levels.validate().map_err(|e| config(format!("grid levels: {e}")))?;
    let opts = BuildOptions { hpo_iterations: g.hpo_iterations, proxy: g.proxy.clone() };
    let factories: Vec<PredictorFactory> = specs.iter().map(|s| PredictorFactory::from_spec(s, &opts)).collect();
    let gc = GridConfig { test_size: g.test_size, trials: g.trials, seed: cfg.seed.expect("seed resolved"), protocol: g.protocol };
    let result = run_grid(&store, &factories, &levels, &gc)?;
    let pareto = pareto_best(&result, metric);
    let sink = Sink::new("grid", cfg)?;
    sink.write("grid.csv", &csv_bytes(|w| result.write_csv(w))?)?;
    sink.write("pareto.csv", &csv_bytes(|w| pareto.write_csv(&result, w))?)?;
    sink.write("grid.json", &json_bytes(&result)?)?;
    Ok(())
}

fn nas_config(cfg: &RunConfig, run: u64) -> NasConfig {
    let n = &cfg.nas;
    NasConfig {
        framework: n.framework,
        iterations: n.iterations,
        initial_population: n.initial_population,
        elite: n.elite,
        mutations_per_elite: n.mutations_per_elite,
        k: n.k,
        pool: n.pool,
        select: n.select,
        members: n.members,
        hpo_every: n.hpo_every,
        hpo_iterations: n.hpo_iterations,
        query_budget: n.query_budget,
        seed: seed::derive(cfg.seed.expect("seed resolved"), &[seed::tag("nas_run"), run]),
    }
}

pub fn nas(cfg: &RunConfig) -> Res<()> {
    let n = &cfg.nas;
    if n.runs == 0 {
        return Err(config("nas.runs must be at least 1"));
    }
    nas_config(cfg, 0).validate().map_err(|e| config(format!("nas: {e}")))?;
    enum Guide {
        Predictor(PredictorSpec),
        Oracle,
        Model(ModelKind),
    }
    let guide = match n.framework {
        Framework::Evolution => Guide::Predictor(n.predictor.parse().map_err(|e: predbench::Error| config(e.to_string()))?),
        Framework::BoIts if n.predictor == "oracle" => Guide::Oracle,
        Framework::BoIts => Guide::Model(n.predictor.parse().map_err(|e: predbench::Error| {
            let valid: Vec<_> = ModelKind::ALL.iter().map(|k| k.name()).collect();
            config(format!("{e}; BO surrogates: oracle, {}", valid.join(", ")))
        })?),
    };
    let store = load_store(&store_path(cfg, &n.store))?.with_on_demand(n.on_demand);
    let traces: Vec<NasTrace> = (0..n.runs as u64)
        .into_par_iter()
        .map(|run| {
            let rc = nas_config(cfg, run);
            match &guide {
                Guide::Predictor(spec) => {
                    let opts = BuildOptions { hpo_iterations: Some(n.hpo_iterations), ..Default::default() };
                    run_evolution(&store, spec.build(&opts).as_mut(), &rc)
                }
                Guide::Oracle => run_bo_its(&store, &mut OracleSurrogate, &rc),
                Guide::Model(kind) => run_bo_its(&store, &mut EnsembleSurrogate::new(*kind, &rc), &rc),
            }
        })
        .collect::<predbench::Result<_>>()?;
    let mut csv = Vec::new();
    csv.extend_from_slice(NasTrace::CSV_HEADER.as_bytes());
    csv.push(b'\n');
    for t in &traces {
        t.write_csv_rows(&mut csv)?;
    }
    let sink = Sink::new("nas", cfg)?;
    sink.write("nas.csv", &csv)?;
    sink.write("nas.json", &json_bytes(&traces)?)?;
    Ok(())
}

#[derive(Serialize)]
struct CellWinner {
    init_budget: f64,
    query_budget: f64,
    winner: String,
    mean: f64,
}

#[derive(Serialize)]
struct GridSummary {
    file: String,
    metric: MetricKind,
    predictors: Vec<String>,
    pareto_set: Vec<String>,
    winners: Vec<CellWinner>,
}

#[derive(Serialize)]
struct NasSummary {
    file: String,
    runs: usize,
    mean_final_error: f64,
    std_final_error: f64,
    mean_total_cost: f64,
    fallbacks: usize,
}

#[derive(Serialize)]
struct Report {
    schema_version: u32,
    grids: Vec<GridSummary>,
    nas: Vec<NasSummary>,
    seed_variance: Vec<predbench::eval::SeedVariance>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Res<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
}

pub fn report(cfg: &RunConfig) -> Res<()> {
    let r = &cfg.report;
    let metric = parse_metric(&r.metric)?;
    if r.grids.is_empty() && r.nas.is_empty() && r.seed_variance.is_none() {
        return Err(config("report needs at least one grid file, NAS file or a seed_variance section"));
    }
    let mut grids = Vec::new();
    for path in &r.grids {
        let rg: ResultGrid = read_json(path)?;
        let levels = rg.grid.clone().with_context(|| format!("{} has no budget levels", path.display()))?;
        let p = pareto_best(&rg, metric);
        let winners = p
            .winners
            .iter()
            .map(|(&(i, q), (w, m))| CellWinner { init_budget: levels.init[i], query_budget: levels.query[q], winner: w.clone(), mean: *m })
            .collect();
        grids.push(GridSummary { file: path.display().to_string(), metric, predictors: rg.predictors.clone(), pareto_set: p.pareto_set.into_iter().collect(), winners });
    }
    let mut nas = Vec::new();
    for path in &r.nas {
        let traces: Vec<NasTrace> = read_json(path)?;
        let finals: Vec<f64> = traces.iter().filter_map(|t| t.final_error()).collect();
        let stat = predbench::eval::Stat::from_values(&finals, traces.len());
        let cost = traces.iter().map(|t| t.total_cost()).sum::<f64>() / traces.len().max(1) as f64;
        nas.push(NasSummary {
            file: path.display().to_string(),
            runs: traces.len(),
            mean_final_error: stat.mean,
            std_final_error: stat.std,
            mean_total_cost: cost,
            fallbacks: traces.iter().map(|t| t.fallbacks).sum(),
        });
    }
    let mut table = Vec::new();
    if let Some(sv) = &r.seed_variance {
        let specs = parse_predictors(&sv.predictors)?;
        let store = load_store(&store_path(cfg, &sv.store))?;
        let svc = SeedVarianceConfig {
            redraws: sv.redraws,
            fixed_trials: sv.fixed_trials,
            train_size: sv.train_size,
            test_size: sv.test_size,
            query_budget: sv.query_budget,
            seed: cfg.seed.expect("seed resolved"),
        };
        let opts = BuildOptions { hpo_iterations: sv.hpo_iterations, ..Default::default() };
        for spec in &specs {
            table.push(seed_variance(&store, &PredictorFactory::from_spec(spec, &opts), &svc)?);
        }
    }
    let report = Report { schema_version: crate::output::SCHEMA_VERSION, grids, nas, seed_variance: table };
    Sink::new("report", cfg)?.write("report.json", &json_bytes(&report)?)?;
    Ok(())
}
