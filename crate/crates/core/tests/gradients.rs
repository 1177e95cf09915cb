//! Reverse-mode gradients against central finite differences.

use predbench::arch_space::{Architecture, OpKind, SearchSpace};
use predbench::microbench::{batch_grad, batch_loss, grad_snapshot_on, make_dataset, minibatch, DatasetConfig, Mode, NetConfig, Network};
use predbench::seed;
use predbench::zerocost::{grad_norm, hessian_vector_product, synflow};
use rand::Rng;

const EPS: f64 = 1e-4;
const REL_TOL: f64 = 1e-3;
/// Magnitudes below this are compared absolutely.
const FLOOR: f64 = 1e-5;
const NETWORKS: usize = 100;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

fn batch() -> (Vec<[f64; 2]>, Vec<usize>) {
    let data = make_dataset(&DatasetConfig::default()).unwrap();
    let idx = minibatch(&data, 8, 3);
    (idx.iter().map(|&i| data.train_x[i]).collect(), idx.iter().map(|&i| data.train_y[i]).collect())
}

/// Network `i` forces edge `i mod 6` to op `i mod 5`, so every op type
/// appears on every edge position across the sweep.
fn random_net(space: &SearchSpace, i: usize) -> (Architecture, Network<f64>) {
    let mut rng = seed::rng(11, &[i as u64]);
    let mut arch = space.sample_uniform(&mut rng);
    arch.ops[i % space.num_edges()] = (i % space.num_ops()) as u8;
    let cfg = NetConfig { width: rng.random_range(2..=8), cells: rng.random_range(1..=2), ..Default::default() };
    let net = Network::instantiate(space, &arch, &cfg, 2, 3, i as u64).unwrap();
    (arch, net)
}

fn fd_param(net: &Network<f64>, j: usize, f: impl Fn(&Network<f64>) -> f64) -> f64 {
    let mut n = net.clone();
    n.params[j] = net.params[j] + EPS;
    let hi = f(&n);
    n.params[j] = net.params[j] - EPS;
    let lo = f(&n);
    (hi - lo) / (2.0 * EPS)
}

#[test]
fn parameter_gradients_match_finite_differences_for_every_op() {
    let space = SearchSpace::default();
    let (xs, ys) = batch();
    let mut covered = [0usize; 5];
    for i in 0..NETWORKS {
        let (arch, net) = random_net(&space, i);
        for e in 0..space.num_edges() {
            covered[space.op(&arch, e) as usize] += 1;
        }
        let g = batch_grad(&net, &xs, &ys);
        for (j, &gj) in g.iter().enumerate() {
            let fd = fd_param(&net, j, |n| batch_loss(n, &xs, &ys));
            assert!(rel_err(gj, fd) < REL_TOL, "net {i} ({arch}) param {j}: backprop {gj} vs fd {fd}");
        }
    }
    for op in OpKind::ALL {
        assert!(covered[op as usize] >= NETWORKS / 5, "{} covered only {} times", op.name(), covered[op as usize]);
    }
}

#[test]
fn linear_mode_gradients_match_finite_differences() {
    let space = SearchSpace::default();
    let x = [0.3, -0.7];
    let r = |n: &Network<f64>| {
        let mut ws = n.workspace();
        n.forward(&x, Mode::Linear, &mut ws).iter().sum::<f64>()
    };
    for i in 0..NETWORKS / 4 {
        let (_, net) = random_net(&space, i);
        let mut ws = net.workspace();
        net.forward(&x, Mode::Linear, &mut ws);
        let mut g = vec![0.0; net.params.len()];
        net.backward(&[1.0; 3], Mode::Linear, &mut ws, &mut g, None);
        for (j, &gj) in g.iter().enumerate() {
            let fd = fd_param(&net, j, r);
            assert!(rel_err(gj, fd) < REL_TOL, "net {i} param {j}: {gj} vs {fd}");
        }
    }
}

#[test]
fn input_gradients_match_finite_differences() {
    let space = SearchSpace::default();
    for i in 0..NETWORKS / 4 {
        let (_, net) = random_net(&space, i);
        let x = [0.4, 0.1];
        for c in 0..3 {
            let logit = |x: [f64; 2]| {
                let mut ws = net.workspace();
                net.forward(&x, Mode::Normal, &mut ws)[c]
            };
            let mut ws = net.workspace();
            net.forward(&x, Mode::Normal, &mut ws);
            let mut e = [0.0; 3];
            e[c] = 1.0;
            let mut sink = vec![0.0; net.params.len()];
            net.backward(&e, Mode::Normal, &mut ws, &mut sink, None);
            let g = net.input_grad(&ws).to_vec();
            for d in 0..2 {
                let (mut hi, mut lo) = (x, x);
                hi[d] += EPS;
                lo[d] -= EPS;
                let fd = (logit(hi) - logit(lo)) / (2.0 * EPS);
                assert!(rel_err(g[d], fd) < REL_TOL, "net {i} class {c} dim {d}: {} vs {fd}", g[d]);
            }
        }
    }
}

#[test]
fn grad_norm_matches_finite_difference_gradient() {
    let space = SearchSpace::default();
    let (xs, ys) = batch();
    for i in 0..NETWORKS / 4 {
        let (_, net) = random_net(&space, i);
        let snap = grad_snapshot_on(&net, &xs, &ys);
        let fd: Vec<f64> = (0..net.params.len()).map(|j| fd_param(&net, j, |n| batch_loss(n, &xs, &ys))).collect();
        assert!(rel_err(grad_norm(&snap.grads), grad_norm(&fd)) < REL_TOL);
        assert!(rel_err(snap.loss, batch_loss(&net, &xs, &ys)) < 1e-12);
    }
}

#[test]
fn hessian_vector_products_match_differenced_gradients() {
    let space = SearchSpace::default();
    let (xs, ys) = batch();
    for i in 0..NETWORKS / 10 {
        let (_, net) = random_net(&space, i);
        let mut rng = seed::rng(5, &[i as u64]);
        let v: Vec<f64> = (0..net.params.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hv = hessian_vector_product(&net, &v, &xs, &ys);
        let shifted = |s: f64| {
            let n = Network { program: net.program.clone(), params: net.params.iter().zip(&v).map(|(p, d)| p + s * d).collect() };
            batch_grad(&n, &xs, &ys)
        };
        // fourth-order stencil: second derivatives of tiny entries drown a
        // plain central difference in truncation error
        let (h1, l1, h2, l2) = (shifted(EPS), shifted(-EPS), shifted(2.0 * EPS), shifted(-2.0 * EPS));
        for j in 0..hv.len() {
            let fd = (8.0 * (h1[j] - l1[j]) - (h2[j] - l2[j])) / (12.0 * EPS);
            assert!(rel_err(hv[j], fd) < REL_TOL, "net {i} param {j}: {} vs {fd}", hv[j]);
        }
    }
}

#[test]
fn synflow_is_the_directional_derivative_along_the_weights() {
    // Σ θ ∂R/∂θ is the derivative of R along the ray (1+s)|θ| at s = 0
    let space = SearchSpace::default();
    for i in 0..NETWORKS / 10 {
        let (_, net) = random_net(&space, i);
        let r = |s: f64| {
            let n = Network { program: net.program.clone(), params: net.params.iter().map(|p| p.abs() * (1.0 + s)).collect() };
            let mut ws = n.workspace();
            let ones = [1.0, 1.0];
            n.forward(&ones, Mode::Linear, &mut ws).iter().sum::<f64>()
        };
        let fd = (r(EPS) - r(-EPS)) / (2.0 * EPS);
        assert!(rel_err(synflow(&net), fd) < REL_TOL);
    }
}
