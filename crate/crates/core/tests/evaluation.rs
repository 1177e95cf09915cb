//! Budget grids, Pareto winners and the mutation test protocol.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use predbench::arch_space::edit_distance;
use predbench::bench_store::BenchmarkStore;
use predbench::eval::{pareto_best, run_grid, BudgetGrid, GridConfig, MetricKind, MutationProtocol, PredictorFactory, ResultGrid, Stat, TestProtocol};
use predbench::predictor::{BuildOptions, PredictorSpec};
use proptest::prelude::*;

const EPOCHS: usize = 6;

fn store() -> &'static BenchmarkStore {
    static S: OnceLock<BenchmarkStore> = OnceLock::new();
    S.get_or_init(|| common::small_store(8, 300, EPOCHS))
}

fn factories(names: &[&str]) -> Vec<PredictorFactory> {
    let opts = BuildOptions { hpo_iterations: Some(1), ..Default::default() };
    names.iter().map(|n| PredictorFactory::from_spec(&n.parse::<PredictorSpec>().unwrap(), &opts)).collect()
}

#[test]
fn oracle_is_perfect_and_random_is_centred() {
    let s = store();
    let grid = BudgetGrid { init: vec![0.0, 10.0 * EPOCHS as f64], query: vec![0.5, 2.0] };
    let cfg = GridConfig { test_size: 100, trials: 30, seed: 1, protocol: TestProtocol::Uniform };
    let r = run_grid(s, &factories(&["oracle", "random"]), &grid, &cfg).unwrap();
    assert_eq!(r.cells.len(), 2 * grid.cells());
    assert_eq!(r.shape(), (2, 2));
    for i in 0..2 {
        for q in 0..2 {
            for m in MetricKind::ALL {
                let st = r.stat("oracle", i, q, m).unwrap();
                assert_eq!((st.mean, st.std, st.n), (1.0, 0.0, 30), "{m}");
            }
            let kt = r.mean("random", i, q, MetricKind::KendallTau).unwrap();
            // mean of 30 taus over 100 points; each has sd near 0.067
            assert!(kt.abs() < 0.05, "random tau {kt}");
        }
    }
    let p = pareto_best(&r, MetricKind::KendallTau);
    assert_eq!(p.pareto_set, BTreeSet::from(["oracle".to_string()]));
    assert_eq!(p.winners.len(), 4);
}

#[test]
fn grids_are_reproducible_and_seed_sensitive() {
    let s = store();
    let grid = BudgetGrid { init: vec![0.0], query: vec![3.0] };
    let cfg = GridConfig { test_size: 50, trials: 5, seed: 2, protocol: TestProtocol::Uniform };
    let f = factories(&["random", "sotl_e"]);
    let a = run_grid(s, &f, &grid, &cfg).unwrap();
    assert_eq!(a, run_grid(s, &f, &grid, &cfg).unwrap());
    let b = run_grid(s, &f, &grid, &GridConfig { seed: 3, ..cfg }).unwrap();
    assert_ne!(a, b);
}

#[test]
fn mutation_protocol_structure_holds() {
    let s = store();
    for seed in 0..5 {
        let p = MutationProtocol::new(s, 60, seed).unwrap();
        assert_eq!(p.seeds.len(), 5);
        assert_eq!(p.test.len(), 60);
        assert_eq!(p.test.iter().collect::<BTreeSet<_>>().len(), 60);
        let train = p.train_pool(120).unwrap();
        p.check(&train).unwrap();
        for t in &p.test {
            let d = p.seeds.iter().map(|s| edit_distance(s, t).unwrap()).min().unwrap();
            assert!(d <= 3);
        }
        for a in &train {
            assert!(!p.in_test(a));
            assert!(p.test.iter().any(|t| edit_distance(t, a).unwrap() == 1));
        }
        // prefixes of the training order are the smaller training sets
        assert_eq!(p.train_pool(30).unwrap(), train[..30]);
        // seeds come from the strongest stored architectures sampled
        let worst_seed = p.seeds.iter().map(|a| s.final_val_acc(a).unwrap()).fold(f64::INFINITY, f64::min);
        let median = {
            let mut v: Vec<f64> = s.records().map(|r| r.final_val_acc()).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(worst_seed >= median);
    }
}

#[test]
fn mutation_grid_runs_on_generated_sets() {
    let s = store().snapshot().with_on_demand(true);
    let grid = BudgetGrid { init: vec![0.0], query: vec![1.0] };
    let cfg = GridConfig { test_size: 30, trials: 2, seed: 4, protocol: TestProtocol::Mutation };
    let r = run_grid(&s, &factories(&["oracle", "early_stop_acc"]), &grid, &cfg).unwrap();
    assert_eq!(r.mean("oracle", 0, 0, MetricKind::KendallTau), Some(1.0));
}

fn brute_winners(r: &ResultGrid, metric: MetricKind) -> BTreeMap<(usize, usize), (String, f64)> {
    let (ni, nq) = r.shape();
    let mut out = BTreeMap::new();
    for i in 0..ni {
        for q in 0..nq {
            let mut cands: Vec<(String, f64)> =
                r.predictors.iter().filter_map(|p| r.mean(p, i, q, metric).filter(|m| !m.is_nan()).map(|m| (p.clone(), m))).collect();
            if cands.is_empty() {
                continue;
            }
            let best = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            cands.retain(|c| c.1 == best);
            cands.sort_by(|a, b| a.0.cmp(&b.0));
            out.insert((i, q), cands.swap_remove(0));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pareto_winners_match_exhaustive_search(
        ni in 1usize..4,
        nq in 1usize..4,
        means in prop::collection::vec(prop::option::of(-4i32..=4), 4 * 3 * 3),
    ) {
        let names = ["d", "b", "a", "c"];
        let mut cells = BTreeMap::new();
        for (p, name) in names.iter().enumerate() {
            for i in 0..ni {
                for q in 0..nq {
                    let st = match means[(p * 3 + i) * 3 + q] {
                        Some(m) => Stat::from_values(&[f64::from(m) / 4.0], 1),
                        None => Stat::from_values(&[], 1),
                    };
                    cells.insert((name.to_string(), i, q), BTreeMap::from([(MetricKind::KendallTau, st)]));
                }
            }
        }
        let grid = BudgetGrid { init: (0..ni).map(|v| v as f64).collect(), query: (1..=nq).map(|v| v as f64).collect() };
        let r = ResultGrid { grid: Some(grid), predictors: names.iter().map(|s| s.to_string()).collect(), metrics: vec![MetricKind::KendallTau], cells };
        let p = pareto_best(&r, MetricKind::KendallTau);
        let brute = brute_winners(&r, MetricKind::KendallTau);
        prop_assert_eq!(&p.winners, &brute);
        let set: BTreeSet<String> = brute.values().map(|w| w.0.clone()).collect();
        prop_assert_eq!(p.pareto_set, set);
    }
}
