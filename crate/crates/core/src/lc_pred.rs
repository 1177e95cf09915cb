//! Learning-curve predictors: early stopping, SoTL, SoTL-E and parametric
//! curve extrapolation.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::arch_space::Architecture;
use crate::bench_store::BenchmarkStore;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::microbench::LearningCurve;
use crate::predictor::{BudgetLedger, Family, Prediction, Predictor};
use crate::scalar::{Dual, Scalar};
use crate::seed;

/// Extrapolated accuracies and fitted asymptotes are clamped to this range.
pub const ACC_CLAMP: (f64, f64) = (0.0, 1.25);
/// Fewest epochs the parametric fits accept.
pub const MIN_FIT_EPOCHS: usize = 4;
pub const RESTARTS: usize = 5;
const MAX_ITERS: usize = 200;
const MSE_FLOOR: f64 = 1e-12;
/// Smallest rate or exponent a fitted curve may take.
const MIN_RATE: f64 = 1e-6;

pub fn early_stop_acc(prefix: &LearningCurve) -> f64 {
    *prefix.val_acc.last().expect("non-empty prefix")
}

pub fn early_stop_loss(prefix: &LearningCurve) -> f64 {
    -*prefix.val_loss.last().expect("non-empty prefix")
}

pub fn sotl(prefix: &LearningCurve) -> f64 {
    -prefix.train_loss.iter().sum::<f64>()
}

pub fn sotl_e(prefix: &LearningCurve) -> f64 {
    -*prefix.train_loss.last().expect("non-empty prefix")
}

/// Three-parameter learning-curve families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveModel {
    /// `c − a·t^(−α)`, params `[c, a, α]`.
    Pow3,
    /// `c − a·e^(−b t)`, params `[c, a, b]`.
    Exp3,
    /// `c / (1 + (t / e^b)^(−a))`, params `[c, a, b]`.
    LogPower,
}

impl CurveModel {
    pub const ALL: [CurveModel; 3] = [CurveModel::Pow3, CurveModel::Exp3, CurveModel::LogPower];

    pub fn name(self) -> &'static str {
        match self {
            CurveModel::Pow3 => "pow3",
            CurveModel::Exp3 => "exp3",
            CurveModel::LogPower => "log_power",
        }
    }

    /// Parameter vectors always lead with the asymptote-like `c`.
    pub fn eval<T: Scalar>(self, p: &[T; 3], t: T) -> T {
        let [c, a, b] = *p;
        match self {
            CurveModel::Pow3 => c - a * t.powf(-b),
            CurveModel::Exp3 => c - a * (-b * t).exp(),
            CurveModel::LogPower => c / (T::one() + (t / b.exp()).powf(-a)),
        }
    }

    /// Keeps parameters inside the increasing, saturating region.
    fn project(self, mut p: [f64; 3]) -> [f64; 3] {
        p[0] = p[0].clamp(ACC_CLAMP.0, ACC_CLAMP.1);
        match self {
            CurveModel::Pow3 | CurveModel::Exp3 => {
                p[1] = p[1].max(0.0);
                p[2] = p[2].max(MIN_RATE);
            }
            CurveModel::LogPower => p[1] = p[1].max(MIN_RATE),
        }
        p
    }

    fn random_start(self, y: &[f64], rng: &mut seed::Rng) -> [f64; 3] {
        let last = *y.last().expect("non-empty");
        let c = (last + rng.random_range(0.0..0.3)).clamp(ACC_CLAMP.0, ACC_CLAMP.1);
        match self {
            CurveModel::Pow3 => [c, rng.random_range(0.0..1.0), rng.random_range(0.1..2.0)],
            CurveModel::Exp3 => [c, rng.random_range(0.0..1.0), rng.random_range(0.01..1.0)],
            CurveModel::LogPower => [c, rng.random_range(0.1..2.0), rng.random_range(-2.0..2.0)],
        }
    }
}

impl FromStr for CurveModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CurveModel::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::invalid(format!("unknown curve model '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveFit {
    pub model: CurveModel,
    pub params: [f64; 3],
    pub mse: f64,
}

impl CurveFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.model.eval(&self.params, t).clamp(ACC_CLAMP.0, ACC_CLAMP.1)
    }
}

fn sse(model: CurveModel, p: &[f64; 3], y: &[f64]) -> f64 {
    let s: f64 = y.iter().enumerate().map(|(i, &v)| (model.eval(p, (i + 1) as f64) - v).powi(2)).sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

/// Levenberg–Marquardt from one start; returns the parameters and SSE.
fn levenberg_marquardt(model: CurveModel, start: [f64; 3], y: &[f64]) -> ([f64; 3], f64) {
    let mut p = model.project(start);
    let mut cost = sse(model, &p, y);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERS {
        if !cost.is_finite() {
            break;
        }
        let mut jtj = Matrix::<f64>::zeros(3);
        let mut jtr = [0.0; 3];
        for (i, &v) in y.iter().enumerate() {
            let t = Dual::constant((i + 1) as f64);
            let mut row = [0.0; 3];
            let mut r = 0.0;
            for (k, slot) in row.iter_mut().enumerate() {
                let dp: [Dual<f64>; 3] = std::array::from_fn(|j| Dual::new(p[j], if j == k { 1.0 } else { 0.0 }));
                let f = model.eval(&dp, t);
                *slot = f.eps;
                r = f.re - v;
            }
            for a in 0..3 {
                jtr[a] += row[a] * r;
                for b in 0..3 {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }
        if !jtj.data.iter().chain(&jtr).all(|v| v.is_finite()) {
            break;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for d in 0..3 {
                a[(d, d)] += lambda * (jtj[(d, d)] + 1e-12);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Ok(step) = linalg::solve(&a, &rhs) else {
                lambda *= 4.0;
                continue;
            };
            let q = model.project([p[0] + step[0], p[1] + step[1], p[2] + step[2]]);
            let c = sse(model, &q, y);
            if c < cost {
                let rel = (cost - c) / cost.max(1e-300);
                p = q;
                cost = c;
                lambda = (lambda / 3.0).max(1e-12);
                improved = rel > 1e-12;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (p, cost)
}

/// Best of a deterministic start plus [`RESTARTS`] seeded random starts.
///
/// Seeds derive from the model name, so the fit does not depend on which
/// other models are fitted alongside.
pub fn fit_curve(model: CurveModel, y: &[f64]) -> Option<CurveFit> {
    if y.len() < MIN_FIT_EPOCHS {
        return None;
    }
    let mut rng = seed::rng(seed::tag(model.name()), &[y.len() as u64]);
    let last = *y.last().expect("non-empty");
    let first = match model {
        CurveModel::Pow3 => [last, last - y[0], 1.0],
        CurveModel::Exp3 => [last, last - y[0], 0.2],
        CurveModel::LogPower => [last.max(1e-3), 1.0, 0.0],
    };
    let starts = std::iter::once(first).chain((0..RESTARTS).map(|_| model.random_start(y, &mut rng))).collect::<Vec<_>>();
    let mut best: Option<([f64; 3], f64)> = None;
    for s in starts {
        let (p, c) = levenberg_marquardt(model, s, y);
        if c.is_finite() && best.is_none_or(|(_, b)| c < b) {
            best = Some((p, c));
        }
    }
    best.map(|(params, s)| CurveFit { model, params, mse: s / y.len() as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LceVariant {
    /// Inverse-MSE weighted combination.
    Lce,
    /// Unweighted mean.
    LceM,
}

/// Per-model `(prediction at target, mse)`; NaN marks a failed fit.
pub fn fit_all(y: &[f64], target: usize) -> Vec<(f64, f64)> {
    CurveModel::ALL
        .iter()
        .map(|&m| fit_curve(m, y).map_or((f64::NAN, f64::NAN), |f| (f.predict(target as f64), f.mse)))
        .collect()
}

/// Combines per-model results; `None` when every fit failed.
pub fn combine(fits: &[(CurveModel, f64, f64)], variant: LceVariant) -> Option<f64> {
    let mut ok: Vec<_> = fits.iter().filter(|(_, p, m)| p.is_finite() && m.is_finite()).collect();
    if ok.is_empty() {
        return None;
    }
    ok.sort_by_key(|(m, _, _)| m.name());
    let v = match variant {
        LceVariant::LceM => ok.iter().map(|(_, p, _)| p).sum::<f64>() / ok.len() as f64,
        LceVariant::Lce => {
            let w: Vec<f64> = ok.iter().map(|(_, _, m)| 1.0 / (m + MSE_FLOOR)).collect();
            let total: f64 = w.iter().sum();
            ok.iter().zip(&w).map(|((_, p, _), w)| p * w).sum::<f64>() / total
        }
    };
    Some(v.clamp(ACC_CLAMP.0, ACC_CLAMP.1))
}

/// Extrapolates `val_acc` to `target`; `(score, fell_back)`.
pub fn lce_extrapolate(prefix: &LearningCurve, target: usize, variant: LceVariant) -> (f64, bool) {
    if prefix.val_acc.len() < MIN_FIT_EPOCHS {
        return (early_stop_acc(prefix), true);
    }
    let fits: Vec<_> = CurveModel::ALL.iter().zip(fit_all(&prefix.val_acc, target)).map(|(&m, (p, e))| (m, p, e)).collect();
    match combine(&fits, variant) {
        Some(v) => (v, false),
        None => (early_stop_acc(prefix), true),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LcKind {
    EarlyStopAcc,
    EarlyStopLoss,
    Sotl,
    SotlE,
    Lce,
    LceM,
}

impl LcKind {
    pub const ALL: [LcKind; 6] = [LcKind::EarlyStopAcc, LcKind::EarlyStopLoss, LcKind::Sotl, LcKind::SotlE, LcKind::Lce, LcKind::LceM];

    pub fn name(self) -> &'static str {
        match self {
            LcKind::EarlyStopAcc => "early_stop_acc",
            LcKind::EarlyStopLoss => "early_stop_loss",
            LcKind::Sotl => "sotl",
            LcKind::SotlE => "sotl_e",
            LcKind::Lce => "lce",
            LcKind::LceM => "lce_m",
        }
    }
}

impl fmt::Display for LcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Learning-curve predictor: trains each queried architecture for as many
/// epochs as the query budget affords.
#[derive(Clone, Debug)]
pub struct LcPredictor {
    pub kind: LcKind,
}

impl LcPredictor {
    pub fn new(kind: LcKind) -> Self {
        Self { kind }
    }
}

/// Score of `kind` on a prefix; `target` is the full epoch count.
pub fn lc_score(kind: LcKind, prefix: &LearningCurve, target: usize) -> (f64, bool) {
    match kind {
        LcKind::EarlyStopAcc => (early_stop_acc(prefix), false),
        LcKind::EarlyStopLoss => (early_stop_loss(prefix), false),
        LcKind::Sotl => (sotl(prefix), false),
        LcKind::SotlE => (sotl_e(prefix), false),
        LcKind::Lce => lce_extrapolate(prefix, target, LceVariant::Lce),
        LcKind::LceM => lce_extrapolate(prefix, target, LceVariant::LceM),
    }
}

impl Predictor for LcPredictor {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn family(&self) -> Family {
        Family::LearningCurve
    }

    fn uses_query_budget(&self) -> bool {
        true
    }

    fn budget_key(&self, store: &BenchmarkStore, _: f64, query_budget: f64) -> (u64, u64) {
        let mut probe = BudgetLedger::new(0.0, query_budget);
        probe.begin_query(&Architecture::new(Vec::new()));
        (0, probe.affordable_units(store.costs().epoch).min(store.epochs()) as u64)
    }

    fn query(&self, arch: &Architecture, store: &BenchmarkStore, ledger: &mut BudgetLedger) -> Result<Prediction> {
        let e = store.epochs();
        let k = ledger.affordable_units(store.costs().epoch).min(e);
        if k == 0 {
            return Ok(Prediction { degraded: true, ..Prediction::degenerate(0.0) });
        }
        let before = ledger.query_spent();
        let prefix = store.query_partial(arch, k, ledger)?;
        let cost = ledger.query_spent() - before;
        let (score, fallback) = match self.kind {
            LcKind::Lce | LcKind::LceM => {
                let variant = if self.kind == LcKind::Lce { LceVariant::Lce } else { LceVariant::LceM };
                if k < MIN_FIT_EPOCHS {
                    (early_stop_acc(&prefix), true)
                } else {
                    let fits = store.memoize(seed::tag("lce"), arch, seed::derive(k as u64, &[e as u64]), || {
                        Ok(fit_all(&prefix.val_acc, e).into_iter().flat_map(|(p, m)| [p, m]).collect())
                    })?;
                    let fits: Vec<_> = CurveModel::ALL.iter().zip(fits.chunks_exact(2)).map(|(&m, c)| (m, c[0], c[1])).collect();
                    combine(&fits, variant).map_or((early_stop_acc(&prefix), true), |v| (v, false))
                }
            }
            kind => lc_score(kind, &prefix, e),
        };
        Ok(Prediction { fallback, ..Prediction::new(score, cost) })
    }
}
