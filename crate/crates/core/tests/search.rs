//! Search-loop trace invariants.

mod common;

use std::collections::HashSet;
use std::sync::OnceLock;

use predbench::bench_store::BenchmarkStore;
use predbench::nas::{run_bo_its, run_evolution, EnsembleSurrogate, Framework, NasConfig, NasTrace, OracleSurrogate};
use predbench::model_pred::ModelKind;
use predbench::predictor::{OraclePredictor, Predictor, RandomPredictor};

fn store() -> &'static BenchmarkStore {
    static S: OnceLock<BenchmarkStore> = OnceLock::new();
    S.get_or_init(|| common::small_store(12, 200, 6).with_on_demand(true))
}

fn cfg(seed: u64, framework: Framework) -> NasConfig {
    NasConfig { framework, iterations: 6, k: 5, pool: 40, select: 5, mutations_per_elite: 10, hpo_iterations: 1, seed, ..Default::default() }
}

fn check_trace(t: &NasTrace, expected_len: usize) {
    assert_eq!(t.steps.len(), expected_len);
    let mut best = f64::INFINITY;
    let mut seen = HashSet::new();
    for (i, s) in t.steps.iter().enumerate() {
        best = best.min(s.val_error);
        assert_eq!(s.best_val_error, best, "step {i}");
        assert!(seen.insert(s.arch.clone()), "{} evaluated twice", s.arch);
        if i > 0 {
            assert!(s.cost > t.steps[i - 1].cost);
            assert!(s.best_val_error <= t.steps[i - 1].best_val_error);
        }
    }
    assert_eq!(t.final_error(), Some(best));
    assert_eq!(t.best_at_cost(t.total_cost()), Some(best));
    assert_eq!(t.best_at_cost(0.0), None);
}

#[test]
fn evolution_traces_are_anytime_and_complete() {
    let s = store();
    let preds: Vec<Box<dyn Predictor>> = vec![Box::new(RandomPredictor::new(0)), Box::new(OraclePredictor::default())];
    for mut p in preds {
        let c = cfg(3, Framework::Evolution);
        let t = run_evolution(s, p.as_mut(), &c).unwrap();
        check_trace(&t, c.initial_population + c.iterations * c.k);
        assert_eq!(t.fallbacks, 0);
        assert_eq!(t, run_evolution(s, p.as_mut(), &c).unwrap());
    }
}

#[test]
fn query_costs_enter_the_search_cost() {
    let s = store();
    let mut p = "sotl_e".parse::<predbench::PredictorSpec>().unwrap().build(&Default::default());
    let c = NasConfig { query_budget: 2.0, ..cfg(5, Framework::Evolution) };
    let t = run_evolution(s, p.as_mut(), &c).unwrap();
    check_trace(&t, c.initial_population + c.iterations * c.k);
    let full = (s.epochs() as f64 * s.costs().epoch) * t.steps.len() as f64;
    assert!(t.total_cost() > full, "{} vs {full}", t.total_cost());
}

#[test]
fn oracle_bo_evaluates_each_pool_best_first() {
    let s = store();
    let c = cfg(7, Framework::BoIts);
    let t = run_bo_its(s, &mut OracleSurrogate, &c).unwrap();
    check_trace(&t, c.initial_population + c.iterations * c.select);
    for block in t.steps[c.initial_population..].chunks(c.select) {
        assert!(block.windows(2).all(|w| w[0].val_error <= w[1].val_error), "{:?}", block.iter().map(|s| s.val_error).collect::<Vec<_>>());
    }
}

#[test]
fn surrogate_bo_traces_hold_the_same_invariants() {
    let s = store();
    let c = cfg(9, Framework::BoIts);
    let mut sur = EnsembleSurrogate::new(ModelKind::GradientBoostedTrees, &c);
    let t = run_bo_its(s, &mut sur, &c).unwrap();
    check_trace(&t, c.initial_population + c.iterations * c.select);
}

#[test]
fn oracle_guidance_beats_random_guidance() {
    let s = store();
    let (mut oracle, mut random) = (0.0, 0.0);
    for seed in 0..6 {
        let c = cfg(100 + seed, Framework::Evolution);
        oracle += run_evolution(s, &mut OraclePredictor::default(), &c).unwrap().final_error().unwrap();
        random += run_evolution(s, &mut RandomPredictor::new(seed), &c).unwrap().final_error().unwrap();
    }
    assert!(oracle <= random, "oracle {oracle} vs random {random}");
}
