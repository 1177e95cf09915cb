//! Zero-cost proxies: statistics of one minibatch on an untrained network,
//! plus the flops and params baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arch_space::Architecture;
use crate::bench_store::BenchmarkStore;
use crate::error::{Error, Result};
use crate::microbench::{self, batch_grad, grad_snapshot_on, minibatch, Mode, Network};
use crate::predictor::{BudgetLedger, Family, Prediction, Predictor, DEGENERATE_SCORE};
use crate::scalar::{Dual, Scalar};
use crate::seed;

/// Added to `|ρ|` before the logarithm in the Jacobian-covariance score.
pub const JACOB_COV_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyKind {
    Snip,
    GradNorm,
    Fisher,
    Grasp,
    Synflow,
    JacobCov,
    Flops,
    Params,
}

impl ProxyKind {
    pub const ALL: [ProxyKind; 8] = [
        ProxyKind::Snip,
        ProxyKind::GradNorm,
        ProxyKind::Fisher,
        ProxyKind::Grasp,
        ProxyKind::Synflow,
        ProxyKind::JacobCov,
        ProxyKind::Flops,
        ProxyKind::Params,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProxyKind::Snip => "snip",
            ProxyKind::GradNorm => "grad_norm",
            ProxyKind::Fisher => "fisher",
            ProxyKind::Grasp => "grasp",
            ProxyKind::Synflow => "synflow",
            ProxyKind::JacobCov => "jacob_cov",
            ProxyKind::Flops => "flops",
            ProxyKind::Params => "params",
        }
    }

    fn index(self) -> usize {
        ProxyKind::ALL.iter().position(|&k| k == self).expect("listed")
    }
}

impl fmt::Display for ProxyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProxyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProxyKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::invalid(format!("unknown proxy '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProxyConfig {
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self { batch_size: 32, seed: 0 }
    }
}

impl ProxyConfig {
    fn key(&self) -> u64 {
        seed::derive(self.seed, &[self.batch_size as u64])
    }
}

/// `Σ |θ · g|`.
pub fn snip<T: Scalar>(params: &[T], grads: &[T]) -> T {
    params.iter().zip(grads).map(|(&p, &g)| (p * g).abs()).sum()
}

/// `‖g‖₂`.
pub fn grad_norm<T: Scalar>(grads: &[T]) -> T {
    grads.iter().map(|&g| g * g).sum::<T>().sqrt()
}

/// `Σ_units (Σ_batch z · dz)²` given per-unit batch sums.
pub fn fisher<T: Scalar>(saliency: &[(usize, Vec<T>)]) -> T {
    saliency.iter().flat_map(|(_, s)| s.iter()).map(|&s| s * s).sum()
}

/// `Σ −(H g ⊙ θ)`.
pub fn grasp<T: Scalar>(params: &[T], hg: &[T]) -> T {
    params.iter().zip(hg).map(|(&p, &h)| -(h * p)).sum()
}

/// Hessian-vector product `H v` of the batch loss at the network's weights,
/// by forward-mode differentiation of the reverse-mode gradient.
pub fn hessian_vector_product<T: Scalar>(net: &Network<T>, v: &[T], xs: &[[f64; 2]], ys: &[usize]) -> Vec<T> {
    let dual = Network { program: net.program.clone(), params: net.params.iter().zip(v).map(|(&p, &d)| Dual::new(p, d)).collect() };
    batch_grad(&dual, xs, ys).into_iter().map(|g| g.eps).collect()
}

/// `Σ θ̃ · ∂R/∂θ̃` with `θ̃ = |θ|` and `R` the sum of the logits of the
/// linearized network on an all-ones input.
pub fn synflow<T: Scalar>(net: &Network<T>) -> T {
    let abs = Network { program: net.program.clone(), params: net.params.iter().map(|p| p.abs()).collect() };
    let mut ws = abs.workspace();
    let ones = vec![T::one(); abs.program.in_dim];
    abs.forward(&ones, Mode::Linear, &mut ws);
    let mut grads = vec![T::zero(); abs.params.len()];
    let seed = vec![T::one(); abs.program.classes];
    abs.backward(&seed, Mode::Linear, &mut ws, &mut grads, None);
    abs.params.iter().zip(&grads).map(|(&p, &g)| p * g).sum()
}

/// `Σ_{i<j} −ln(|ρ_ij| + ε)` over the correlation matrix of the Jacobian
/// rows; `None` when a row is constant or the matrix is not finite.
pub fn jacob_cov<T: Scalar>(rows: &[Vec<T>]) -> Option<T> {
    if rows.len() < 2 {
        return None;
    }
    let mut centred = Vec::with_capacity(rows.len());
    for r in rows {
        let n = T::of(r.len() as f64);
        let m = r.iter().copied().sum::<T>() / n;
        let c: Vec<T> = r.iter().map(|&v| v - m).collect();
        let norm = c.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return None;
        }
        centred.push(c.into_iter().map(|v| v / norm).collect::<Vec<T>>());
    }
    let eps = T::of(JACOB_COV_EPS);
    let mut score = T::zero();
    for i in 0..centred.len() {
        for j in i + 1..centred.len() {
            let rho = centred[i].iter().zip(&centred[j]).map(|(&a, &b)| a * b).sum::<T>();
            score += -(rho.abs().min(T::one()) + eps).ln();
        }
    }
    score.is_finite().then_some(score)
}

fn finite_or_sentinel(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        DEGENERATE_SCORE
    }
}

/// All eight proxies of `arch`, in [`ProxyKind::ALL`] order.
pub fn all_scores(store: &BenchmarkStore, arch: &Architecture, cfg: &ProxyConfig) -> Result<Vec<f64>> {
    let h = store.header();
    let idx = h.space.index_of(arch);
    let data = store.dataset();
    let net = microbench::instantiate::<f64>(&h.space, arch, &h.net, data, seed::derive(cfg.seed, &[seed::tag("proxy_init"), idx]))?;
    let batch = minibatch(data, cfg.batch_size, seed::derive(cfg.seed, &[seed::tag("proxy_batch")]));
    let xs: Vec<[f64; 2]> = batch.iter().map(|&i| data.train_x[i]).collect();
    let ys: Vec<usize> = batch.iter().map(|&i| data.train_y[i]).collect();
    let snap = grad_snapshot_on(&net, &xs, &ys);
    let hg = hessian_vector_product(&net, &snap.grads, &xs, &ys);
    let scores = [
        snip(&net.params, &snap.grads),
        grad_norm(&snap.grads),
        fisher(&snap.activation_saliency),
        grasp(&net.params, &hg),
        synflow(&net),
        jacob_cov(&snap.jacobian_rows).unwrap_or(DEGENERATE_SCORE),
        net.flop_count() as f64,
        net.param_count() as f64,
    ];
    Ok(scores.into_iter().map(finite_or_sentinel).collect())
}

/// One proxy, memoized on the store per (arch, config).
pub fn score(store: &BenchmarkStore, arch: &Architecture, kind: ProxyKind, cfg: &ProxyConfig) -> Result<f64> {
    let all = store.memoize(seed::tag("zerocost"), arch, cfg.key(), || all_scores(store, arch, cfg))?;
    Ok(all[kind.index()])
}

/// Zero-cost proxy as a predictor; each query charges the zero-cost constant.
#[derive(Clone, Debug)]
pub struct ZeroCostPredictor {
    pub kind: ProxyKind,
    pub config: ProxyConfig,
}

impl ZeroCostPredictor {
    pub fn new(kind: ProxyKind) -> Self {
        Self { kind, config: ProxyConfig::default() }
    }
}

impl Predictor for ZeroCostPredictor {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn family(&self) -> Family {
        Family::ZeroCost
    }

    fn budget_key(&self, store: &BenchmarkStore, _: f64, query_budget: f64) -> (u64, u64) {
        (0, u64::from(store.costs().zero_cost <= query_budget + crate::predictor::BUDGET_TOLERANCE))
    }

    fn query(&self, arch: &Architecture, store: &BenchmarkStore, ledger: &mut BudgetLedger) -> Result<Prediction> {
        let cost = store.costs().zero_cost;
        if !ledger.can_afford(cost) {
            return Ok(Prediction { degraded: true, ..Prediction::degenerate(0.0) });
        }
        ledger.charge(cost, self.kind.name())?;
        Ok(Prediction::new(score(store, arch, self.kind, &self.config)?, cost))
    }
}
