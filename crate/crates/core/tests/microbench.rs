use predbench::arch_space::{Architecture, SearchSpace};
use predbench::microbench::{batch_grad, batch_loss, instantiate, make_dataset, train, DatasetConfig, NetConfig, Network, SyntheticDataset, TrainConfig};
use predbench::seed;
use predbench::zerocost::jacob_cov;
use predbench::microbench::grad_snapshot_on;
use predbench::eval::spearman;

fn data() -> SyntheticDataset {
    make_dataset(&DatasetConfig::default()).unwrap()
}

fn fit(arch: &str, net: &NetConfig, cfg: &TrainConfig, d: &SyntheticDataset) -> f64 {
    let space = SearchSpace::default();
    let mut n = instantiate::<f64>(&space, &arch.parse().unwrap(), net, d, 1).unwrap();
    train(&mut n, d, cfg).unwrap().final_val_acc()
}

/// Multinomial logistic regression on the raw coordinates, full-batch
/// gradient descent.
fn softmax_regression_val_acc(d: &SyntheticDataset) -> f64 {
    let c = d.classes;
    let mut w = vec![[0.0f64; 3]; c];
    for _ in 0..3000 {
        let mut g = vec![[0.0f64; 3]; c];
        for (x, &y) in d.train_x.iter().zip(&d.train_y) {
            let f = [x[0], x[1], 1.0];
            let z: Vec<f64> = w.iter().map(|r| r.iter().zip(&f).map(|(a, b)| a * b).sum()).collect();
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for k in 0..c {
                let p = e[k] / s - if k == y { 1.0 } else { 0.0 };
                for j in 0..3 {
                    g[k][j] += p * f[j];
                }
            }
        }
        let n = d.train_x.len() as f64;
        for k in 0..c {
            for j in 0..3 {
                w[k][j] -= 0.5 * g[k][j] / n;
            }
        }
    }
    let hits = d
        .val_x
        .iter()
        .zip(&d.val_y)
        .filter(|(x, &y)| {
            let z: Vec<f64> = w.iter().map(|r| r[0] * x[0] + r[1] * x[1] + r[2]).collect();
            let best = (0..c).max_by(|&a, &b| z[a].total_cmp(&z[b])).unwrap();
            best == y
        })
        .count();
    hits as f64 / d.val_x.len() as f64
}

#[test]
fn spiral_defeats_a_linear_classifier_but_not_a_two_layer_net() {
    let d = data();
    let linear = softmax_regression_val_acc(&d);
    assert!(linear < 0.75, "linear classifier reached {linear}");
    // stem plus one dense edge from cell input to output: two hidden layers
    let net = NetConfig { width: 32, ..Default::default() };
    let cfg = TrainConfig { epochs: 200, learning_rate: 0.05, ..Default::default() };
    let deep = fit("0|0|0|2|0|0", &net, &cfg, &d);
    assert!(deep > 0.85, "two-hidden-layer net reached {deep}");
}

#[test]
fn datasets_are_balanced_disjoint_and_reproducible() {
    let d = data();
    assert_eq!(d, data());
    for c in 0..d.classes {
        assert_eq!(d.train_y.iter().filter(|&&y| y == c).count(), d.train_y.len() / d.classes);
        assert_eq!(d.val_y.iter().filter(|&&y| y == c).count(), d.val_y.len() / d.classes);
    }
    for v in &d.val_x {
        assert!(!d.train_x.contains(v));
    }
}

#[test]
fn all_zeroize_binary_net_learns_only_the_prior() {
    let d = make_dataset(&DatasetConfig { classes: 2, ..Default::default() }).unwrap();
    let acc = fit("0|0|0|0|0|0", &NetConfig::default(), &TrainConfig::default(), &d);
    assert!((acc - 0.5).abs() <= 0.05, "{acc}");
}

#[test]
fn capacity_raises_mean_accuracy() {
    let d = data();
    let space = SearchSpace::default();
    let cfg = TrainConfig::default();
    let mut rng = seed::rng(21, &[]);
    let (mut rich, mut poor) = (Vec::new(), Vec::new());
    while rich.len() < 100 || poor.len() < 100 {
        let a = space.sample_uniform(&mut rng);
        let dense = (0..space.num_edges()).filter(|&e| space.op(&a, e).is_parametric()).count();
        let bucket = match dense {
            0 | 1 if poor.len() < 100 => &mut poor,
            3.. if rich.len() < 100 => &mut rich,
            _ => continue,
        };
        let mut n = instantiate::<f64>(&space, &a, &NetConfig::default(), &d, bucket.len() as u64).unwrap();
        bucket.push(train(&mut n, &d, &cfg).unwrap().final_val_acc());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&rich) > mean(&poor), "rich {} vs poor {}", mean(&rich), mean(&poor));
}

#[test]
fn random_architectures_spread_out() {
    let d = data();
    let space = SearchSpace::default();
    let mut rng = seed::rng(22, &[]);
    let accs: Vec<f64> = (0..200)
        .map(|i| {
            let a = space.sample_uniform(&mut rng);
            let mut n = instantiate::<f64>(&space, &a, &NetConfig::default(), &d, i).unwrap();
            train(&mut n, &d, &TrainConfig::default()).unwrap().final_val_acc()
        })
        .collect();
    let hi = accs.iter().cloned().fold(f64::MIN, f64::max);
    let lo = accs.iter().cloned().fold(f64::MAX, f64::min);
    assert!(hi - lo >= 0.15, "spread {}", hi - lo);
}

#[test]
fn training_is_bit_reproducible() {
    let d = data();
    let space = SearchSpace::default();
    let a: Architecture = "2|1|3|0|4|2".parse().unwrap();
    let cfg = TrainConfig { epochs: 6, ..Default::default() };
    let run = || {
        let mut n = instantiate::<f64>(&space, &a, &NetConfig::default(), &d, 9).unwrap();
        train(&mut n, &d, &cfg).unwrap()
    };
    let (x, y) = (run(), run());
    assert_eq!(x, y);
    assert_eq!(x.epochs(), 6);
    assert!(x.val_acc.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(x.train_loss.iter().all(|l| l.is_finite() && *l >= 0.0));
}

#[test]
fn tiny_network_gradient_is_tight() {
    // stem 2->1, one dense edge 1->1, head 1->3: 11 parameters
    let space = SearchSpace::default();
    let net = Network::<f64>::instantiate(&space, &"0|0|0|2|0|0".parse().unwrap(), &NetConfig { width: 1, ..Default::default() }, 2, 3, 4).unwrap();
    assert_eq!(net.params.len(), 11);
    let xs = [[0.2, -0.4], [0.9, 0.1], [-0.5, 0.5]];
    let ys = [0, 2, 1];
    let g = batch_grad(&net, &xs, &ys);
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    for j in 0..g.len() {
        let mut n = net.clone();
        n.params[j] += eps;
        let hi = batch_loss(&n, &xs, &ys);
        n.params[j] -= 2.0 * eps;
        let lo = batch_loss(&n, &xs, &ys);
        let fd = (hi - lo) / (2.0 * eps);
        worst = worst.max((g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-6));
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn flops_and_params_rank_identically() {
    let space = SearchSpace::default();
    let mut rng = seed::rng(23, &[]);
    let (mut f, mut p) = (Vec::new(), Vec::new());
    for _ in 0..500 {
        let n = Network::<f64>::instantiate(&space, &space.sample_uniform(&mut rng), &NetConfig::default(), 2, 3, 0).unwrap();
        f.push(n.flop_count() as f64);
        p.push(n.param_count() as f64);
    }
    assert_eq!(spearman(&f, &p), Some(1.0));
}

#[test]
fn jacobian_rows_feed_jacob_cov() {
    let space = SearchSpace::default();
    let net = Network::<f64>::instantiate(&space, &"2|2|1|3|4|2".parse().unwrap(), &NetConfig::default(), 2, 3, 2).unwrap();
    let xs = [[0.1, 0.2], [0.5, -0.3], [-0.8, 0.4], [0.1, 0.2]];
    let snap = grad_snapshot_on(&net, &xs, &[0, 1, 2, 0]);
    assert_eq!(snap.jacobian_rows.len(), 4);
    assert_eq!(snap.jacobian_rows[0], snap.jacobian_rows[3]);
    // a duplicated input makes two rows perfectly correlated: −ln(1 + ε)
    let all = jacob_cov(&snap.jacobian_rows).unwrap();
    let distinct = jacob_cov(&snap.jacobian_rows[..3]).unwrap();
    assert!(all > distinct);
}
