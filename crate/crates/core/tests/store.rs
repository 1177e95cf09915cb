//! Benchmark table persistence, partial queries, budget accounting and
//! zero-cost proxies read through the store.

mod common;

use std::sync::OnceLock;

use predbench::arch_space::SearchSpace;
use predbench::bench_store::BenchmarkStore;
use predbench::microbench::{NetConfig, Network};
use predbench::predictor::{BudgetLedger, InitEnv, Phase, PredictorSpec, BUDGET_TOLERANCE};
use predbench::seed;
use predbench::eval::kendall_tau;
use predbench::zerocost::{all_scores, ProxyConfig, ProxyKind};
use proptest::prelude::*;

const EPOCHS: usize = 8;

fn store() -> &'static BenchmarkStore {
    static S: OnceLock<BenchmarkStore> = OnceLock::new();
    S.get_or_init(|| common::small_store(3, 250, EPOCHS))
}

#[test]
fn save_then_load_is_byte_exact() {
    let s = store();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.nbstore");
    s.save(&path).unwrap();
    let back = BenchmarkStore::load(&path).unwrap();
    assert_eq!(back.to_bytes(), s.to_bytes());
    assert_eq!(std::fs::read(&path).unwrap(), s.to_bytes());
    assert_eq!(back.header(), s.header());
    for (a, b) in back.records().zip(s.records()) {
        assert_eq!(a, b);
    }
}

#[test]
fn build_seed_determines_the_table() {
    let a = common::small_store(5, 20, 4);
    let b = common::small_store(5, 20, 4);
    let c = common::small_store(6, 20, 4);
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_ne!(a.to_bytes(), c.to_bytes());
}

#[test]
fn malformed_files_fail_to_load() {
    let text = String::from_utf8(common::small_store(5, 5, 4).to_bytes()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let with = |i: usize, line: &str| {
        let mut l = lines.clone();
        l[i] = line;
        l.join("\n") + "\n"
    };
    // duplicated record
    assert!(BenchmarkStore::from_reader(with(2, lines[1]).as_bytes()).is_err());
    // header edited without updating its hash
    let edited = lines[0].replacen("\"build_seed\":5", "\"build_seed\":6", 1);
    assert_ne!(edited, lines[0]);
    assert!(BenchmarkStore::from_reader(with(0, &edited).as_bytes()).is_err());
    // truncated curve
    let short = lines[1].replacen("\"val_acc\":[", "\"val_acc\":[0.5,", 1);
    assert!(BenchmarkStore::from_reader(with(1, &short).as_bytes()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partial_queries_are_nested_prefixes(i in 0usize..250, k1 in 1usize..=EPOCHS, k2 in 1usize..=EPOCHS) {
        let s = store();
        let (k1, k2) = (k1.min(k2), k1.max(k2));
        let a = &s.architectures()[i];
        let mut ledger = BudgetLedger::unlimited();
        let short = s.query_partial(a, k1, &mut ledger).unwrap();
        let long = s.query_partial(a, k2, &mut ledger).unwrap();
        prop_assert_eq!(&short.val_acc[..], &long.val_acc[..k1]);
        prop_assert_eq!(&short.train_loss[..], &long.train_loss[..k1]);
        prop_assert_eq!(&short.val_loss[..], &long.val_loss[..k1]);
        prop_assert_eq!(long, s.record(a).unwrap().curve.prefix(k2));
    }

    #[test]
    fn ledger_debits_equal_epochs_served(ops in prop::collection::vec((0usize..250, 0usize..=EPOCHS), 1..40)) {
        let s = store();
        let mut ledger = BudgetLedger::unlimited();
        let mut served = 0usize;
        for (i, k) in ops {
            let a = &s.architectures()[i];
            if k == 0 {
                served += s.query_full(a, &mut ledger).unwrap().curve.epochs();
            } else {
                served += s.query_partial(a, k, &mut ledger).unwrap().epochs();
            }
        }
        let epoch = s.costs().epoch;
        prop_assert!((ledger.total_spent() - served as f64 * epoch).abs() <= 1e-9);
        prop_assert_eq!(ledger.total_spent(), ledger.spent_in(Phase::Init) + ledger.spent_in(Phase::Query));
    }
}

#[test]
fn out_of_range_prefixes_are_rejected_without_charge() {
    let s = store();
    let a = &s.architectures()[0];
    let mut ledger = BudgetLedger::unlimited();
    assert!(s.query_partial(a, 0, &mut ledger).is_err());
    assert!(s.query_partial(a, EPOCHS + 1, &mut ledger).is_err());
    assert!(ledger.log().is_empty());
}

/// Every registered predictor, initialized on a shared training order and
/// queried on the same test architectures, leaves a log whose sum is its
/// whole spend, and never exceeds either budget.
#[test]
fn every_predictor_honors_the_ledger() {
    let s = store();
    let e = s.epochs() as f64 * s.costs().epoch;
    let opts = predbench::predictor::BuildOptions { hpo_iterations: Some(1), ..Default::default() };
    let test: Vec<_> = s.architectures()[..12].to_vec();
    for (init, query) in [(12.0 * e, 2.5), (0.0, 0.03), (30.0 * e, 100.0)] {
        for spec in PredictorSpec::all() {
            let mut p = spec.build(&opts);
            let mut ledger = BudgetLedger::new(init, query);
            let mut source = s.architectures()[12..].to_vec().into_iter();
            let env = InitEnv { store: s, ledger: &mut ledger, source: &mut source, seed: 4 };
            if p.initialize(env).is_err() {
                // too little data is a legal outcome; the charges must still add up
                assert!(ledger.init_spent() <= init + BUDGET_TOLERANCE);
                continue;
            }
            assert!(ledger.init_spent() <= init + BUDGET_TOLERANCE, "{} overspent init", spec.name());
            let mut charged = 0.0;
            for a in &test {
                ledger.begin_query(a);
                let before = ledger.total_spent();
                let pred = p.query(a, s, &mut ledger).unwrap();
                let spent = ledger.total_spent() - before;
                assert!(spent <= query + BUDGET_TOLERANCE, "{} spent {spent} of {query}", spec.name());
                assert!((pred.cost_charged - spent).abs() <= 1e-9, "{} reports {} but logged {spent}", spec.name(), pred.cost_charged);
                charged += spent;
            }
            assert!((ledger.spent_in(Phase::Query) - charged).abs() <= 1e-9);
            assert!((ledger.spent_in(Phase::Init) - ledger.init_spent()).abs() <= 1e-9);
            assert!((ledger.total_spent() - ledger.init_spent() - charged).abs() <= 1e-9);
        }
    }
}

#[test]
fn over_budget_learning_curve_queries_use_the_affordable_prefix() {
    let s = store();
    let opts = Default::default();
    let a = &s.architectures()[7];
    let curve = &s.record(a).unwrap().curve;
    // 2.7 epochs affords two; more than the full curve affords all of it
    for (budget, k) in [(2.7, 2usize), (EPOCHS as f64 * 4.0, EPOCHS)] {
        let p = "early_stop_acc".parse::<PredictorSpec>().unwrap().build(&opts);
        let mut ledger = BudgetLedger::new(0.0, budget);
        ledger.begin_query(a);
        let pred = p.query(a, s, &mut ledger).unwrap();
        assert_eq!(pred.score, curve.val_acc[k - 1]);
        assert_eq!(pred.cost_charged, k as f64 * s.costs().epoch);
    }
    // below one epoch nothing is affordable: a degenerate score, no error
    let p = "sotl".parse::<PredictorSpec>().unwrap().build(&opts);
    let mut ledger = BudgetLedger::new(0.0, 0.5);
    ledger.begin_query(a);
    let pred = p.query(a, s, &mut ledger).unwrap();
    assert!(pred.is_degenerate() && pred.degraded);
    assert_eq!(ledger.total_spent(), 0.0);
}

#[test]
fn proxies_are_deterministic_and_signed_as_defined() {
    let s = store();
    let cfg = ProxyConfig::default();
    for a in &s.architectures()[..40] {
        let x = all_scores(s, a, &cfg).unwrap();
        assert_eq!(x, all_scores(s, a, &cfg).unwrap());
        for k in [ProxyKind::Snip, ProxyKind::GradNorm, ProxyKind::Fisher, ProxyKind::Synflow] {
            let v = x[ProxyKind::ALL.iter().position(|&p| p == k).unwrap()];
            assert!(v >= 0.0, "{k} of {a} is {v}");
        }
    }
}

#[test]
fn weight_scale_leaves_flops_and_params_ranking_unchanged() {
    let space = SearchSpace::default();
    let mut rng = seed::rng(41, &[]);
    let (mut f, mut f_scaled, mut p, mut p_scaled) = (vec![], vec![], vec![], vec![]);
    for i in 0..200 {
        let a = space.sample_uniform(&mut rng);
        let n = Network::<f64>::instantiate(&space, &a, &NetConfig::default(), 2, 3, i).unwrap();
        let scaled = Network { program: n.program.clone(), params: n.params.iter().map(|w| 3.7 * w).collect() };
        f.push(n.flop_count() as f64);
        p.push(n.param_count() as f64);
        f_scaled.push(scaled.flop_count() as f64);
        p_scaled.push(scaled.param_count() as f64);
    }
    assert_eq!(kendall_tau(&f, &f_scaled), Some(1.0));
    assert_eq!(kendall_tau(&p, &p_scaled), Some(1.0));
}
