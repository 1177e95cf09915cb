//! Property tests over the pure parts: search space, rank metrics,
//! learning-curve scores and the sign test.

use predbench::arch_space::{edit_distance, Architecture, EncodingKind, MutationCount, SearchSpace};
use predbench::eval::metrics::average_ranks;
use predbench::eval::{kendall_tau, pearson, sign_test, sparse_kendall_tau, spearman};
use predbench::lc_pred::{combine, sotl, sotl_e, CurveModel, LceVariant};
use predbench::microbench::LearningCurve;
use predbench::seed;
use proptest::prelude::*;

fn space() -> SearchSpace {
    SearchSpace::default()
}

fn arch() -> impl Strategy<Value = Architecture> {
    prop::collection::vec(0u8..5, 6).prop_map(Architecture::new)
}

/// Values from a small lattice so ties are common.
fn tied_pair(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2..=max).prop_flat_map(|n| (prop::collection::vec(0i32..6, n), prop::collection::vec(0i32..6, n)))
        .prop_map(|(a, b)| (a.into_iter().map(f64::from).collect(), b.into_iter().map(f64::from).collect()))
}

fn distinct_pair(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2..=max).prop_flat_map(move |n| (Just(n), any::<u64>())).prop_map(|(n, s)| {
        // two random permutations of 0..n, perturbed off the integer grid
        use rand::seq::SliceRandom;
        let mut rng = seed::rng(s, &[]);
        let mut a: Vec<f64> = (0..n).map(|i| i as f64 + 0.25).collect();
        let mut b = a.clone();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        (a, b)
    })
}

fn brute_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).signum() * (x[i] != x[j]) as i32 as f64;
            let dy = (y[i] - y[j]).signum() * (y[i] != y[j]) as i32 as f64;
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            match (dx * dy).partial_cmp(&0.0).unwrap() {
                std::cmp::Ordering::Greater => conc += 1,
                std::cmp::Ordering::Less => disc += 1,
                _ => {}
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    if tx == pairs || ty == pairs {
        return None;
    }
    Some((conc - disc) as f64 / (((pairs - tx) as f64) * ((pairs - ty) as f64)).sqrt())
}

fn curve(train_loss: Vec<f64>) -> LearningCurve {
    let n = train_loss.len();
    LearningCurve { train_loss, val_acc: vec![0.5; n], val_loss: vec![1.0; n] }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn adjacency_encoding_is_injective(a in arch(), b in arch()) {
        let s = space();
        let (ea, eb) = (s.encode(&a, EncodingKind::AdjacencyOneHot).unwrap(), s.encode(&b, EncodingKind::AdjacencyOneHot).unwrap());
        prop_assert_eq!(a == b, ea == eb);
        prop_assert_eq!(ea.values.iter().filter(|&&v| v == 1.0).count(), 6);
    }

    #[test]
    fn path_encoding_is_binary(a in arch()) {
        let e = space().encode(&a, EncodingKind::Path).unwrap();
        prop_assert_eq!(e.values.len(), 180);
        prop_assert!(e.values.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn edit_distance_is_a_metric(a in arch(), b in arch(), c in arch()) {
        let d = |x: &Architecture, y: &Architecture| edit_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &b) == 0, a == b);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
    }

    #[test]
    fn sampling_is_seed_determined(s in any::<u64>()) {
        let sp = space();
        let a = sp.sample_uniform(&mut seed::rng(s, &[]));
        prop_assert_eq!(&a, &sp.sample_uniform(&mut seed::rng(s, &[])));
        prop_assert!(sp.check(&a).is_ok());
        prop_assert_eq!(sp.from_index(sp.index_of(&a)), a);
    }

    #[test]
    fn mutation_moves_between_one_and_max_edits(a in arch(), s in any::<u64>(), max in 1usize..=6) {
        let sp = space();
        let mut rng = seed::rng(s, &[]);
        let m = sp.mutate(&a, max, MutationCount::Uniform, &mut rng).unwrap();
        let d = edit_distance(&a, &m).unwrap();
        prop_assert!((1..=max).contains(&d));
        let m = sp.mutate(&a, max, MutationCount::Max, &mut rng).unwrap();
        prop_assert_eq!(edit_distance(&a, &m).unwrap(), max);
    }

    #[test]
    fn kendall_tau_matches_pair_counting((x, y) in tied_pair(50)) {
        prop_assert_eq!(kendall_tau(&x, &y), brute_tau_b(&x, &y));
    }

    #[test]
    fn kendall_tau_matches_pair_counting_without_ties((x, y) in distinct_pair(50)) {
        prop_assert_eq!(kendall_tau(&x, &y), brute_tau_b(&x, &y));
    }

    #[test]
    fn spearman_is_pearson_on_ranks((x, y) in tied_pair(50)) {
        let oracle = pearson(&average_ranks(&x), &average_ranks(&y));
        match (spearman(&x, &y), oracle) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn rank_metrics_ignore_increasing_transforms((x, y) in distinct_pair(40), scale in 0.01f64..100.0, shift in -50.0f64..50.0) {
        let affine: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        // keep exp well inside f64 range
        let exp: Vec<f64> = x.iter().map(|v| (v / 8.0).exp()).collect();
        for t in [&affine, &exp] {
            prop_assert_eq!(kendall_tau(t, &y), kendall_tau(&x, &y));
            let (a, b) = (spearman(t, &y).unwrap(), spearman(&x, &y).unwrap());
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn sparse_tau_vanishing_resolution_is_plain_tau((x, y) in distinct_pair(40)) {
        prop_assert_eq!(sparse_kendall_tau(&x, &y, 0.0), kendall_tau(&x, &y));
        prop_assert_eq!(sparse_kendall_tau(&x, &y, 1e-9), kendall_tau(&x, &y));
    }

    #[test]
    fn sotl_increments_are_negated_losses(loss in prop::collection::vec(0.0f64..5.0, 2..60)) {
        let c = curve(loss.clone());
        for k in 2..=loss.len() {
            let diff = sotl(&c.prefix(k)) - sotl(&c.prefix(k - 1));
            // the sum is accumulated left to right, so this holds to rounding
            prop_assert!((diff + loss[k - 1]).abs() <= 1e-12 * loss.iter().sum::<f64>().max(1.0));
            prop_assert_eq!(sotl_e(&c.prefix(k)), -loss[k - 1]);
        }
    }

    #[test]
    fn curve_combination_ignores_model_order(
        preds in prop::collection::vec(0.0f64..1.2, 3),
        mses in prop::collection::vec(1e-6f64..1.0, 3),
        perm in Just([0usize, 1, 2]).prop_shuffle(),
    ) {
        let fits: Vec<_> = CurveModel::ALL.iter().enumerate().map(|(i, &m)| (m, preds[i], mses[i])).collect();
        let shuffled: Vec<_> = perm.iter().map(|&i| fits[i]).collect();
        for v in [LceVariant::Lce, LceVariant::LceM] {
            prop_assert_eq!(combine(&fits, v), combine(&shuffled, v));
        }
    }

    #[test]
    fn sign_test_tail_matches_direct_binomial(d in prop::collection::vec(-2i32..=2, 0..40)) {
        let a: Vec<f64> = d.iter().map(|&v| f64::from(v)).collect();
        let zeros = vec![0.0; a.len()];
        let t = sign_test(&a, &zeros);
        prop_assert_eq!(t.wins + t.losses + t.ties, a.len());
        let n = t.wins + t.losses;
        let choose = |n: usize, k: usize| (0..k).fold(1.0f64, |c, i| c * (n - i) as f64 / (i + 1) as f64);
        let p: f64 = (t.wins..=n).map(|k| choose(n, k)).sum::<f64>() / 2f64.powi(n as i32);
        prop_assert!((t.p_value - p.min(1.0)).abs() <= 1e-12, "{} vs {}", t.p_value, p);
    }
}

#[test]
fn uniform_sampling_passes_chi_square_per_edge() {
    let sp = space();
    let mut rng = seed::rng(31, &[]);
    let draws = 60_000;
    let mut counts = [[0usize; 5]; 6];
    for _ in 0..draws {
        let a = sp.sample_uniform(&mut rng);
        for (e, &o) in a.ops.iter().enumerate() {
            counts[e][o as usize] += 1;
        }
    }
    // chi-square critical value, 4 degrees of freedom, alpha 0.01
    const CRITICAL: f64 = 13.2767;
    let expected = draws as f64 / 5.0;
    for row in counts {
        let chi: f64 = row.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi < CRITICAL, "{row:?} gives {chi}");
    }
}

#[test]
fn single_edit_mutations_always_change_the_architecture() {
    let sp = space();
    let a: Architecture = "1|3|0|2|4|1".parse().unwrap();
    let mut rng = seed::rng(32, &[]);
    for _ in 0..10_000 {
        let m = sp.mutate(&a, 1, MutationCount::Uniform, &mut rng).unwrap();
        assert_eq!(edit_distance(&a, &m).unwrap(), 1);
    }
}
