//! Random-search hyperparameter optimization with cross-validated Kendall tau.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{fit_single, ModelKind, Regressor};
use crate::error::{Error, Result};
use crate::eval::metrics::kendall_tau;
use crate::seed;

pub type Hyper = BTreeMap<String, f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRange {
    pub name: String,
    pub low: f64,
    pub high: f64,
    #[serde(default)]
    pub log: bool,
    #[serde(default)]
    pub integer: bool,
    pub default: f64,
}

impl ParamRange {
    fn new(name: &str, low: f64, high: f64, log: bool, integer: bool, default: f64) -> Self {
        Self { name: name.to_string(), low, high, log, integer, default }
    }

    fn sample(&self, rng: &mut seed::Rng) -> f64 {
        let v = if self.log {
            rng.random_range(self.low.ln()..=self.high.ln()).exp()
        } else {
            rng.random_range(self.low..=self.high)
        };
        let v = v.clamp(self.low, self.high);
        if self.integer {
            v.round()
        } else {
            v
        }
    }
}

/// Search space and effort for one model kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpoSpec {
    /// Candidates evaluated, including the defaults. `<= 1` skips the search.
    pub iterations: usize,
    pub folds: usize,
    /// Wall-clock cap; results are no longer reproducible once it binds.
    #[serde(default)]
    pub time_cap_secs: Option<f64>,
    pub ranges: Vec<ParamRange>,
}

impl HpoSpec {
    pub fn for_kind(kind: ModelKind) -> Self {
        let r = ParamRange::new;
        let ranges = match kind {
            ModelKind::BayesLinear => vec![r("alpha", 1e-3, 1e3, true, false, 1.0), r("beta", 1e-1, 1e3, true, false, 10.0)],
            ModelKind::GaussianProcess => vec![r("length_scale", 0.1, 10.0, true, false, 2.0), r("noise", 1e-6, 1.0, true, false, 0.1)],
            ModelKind::RandomForest => vec![
                r("n_estimators", 16.0, 128.0, true, true, 116.0),
                r("max_features", 0.1, 0.9, true, false, 0.17),
                r("min_samples_leaf", 1.0, 20.0, false, true, 2.0),
                r("min_samples_split", 2.0, 20.0, true, true, 2.0),
            ],
            ModelKind::GradientBoostedTrees => vec![
                r("n_estimators", 128.0, 512.0, true, true, 505.0),
                r("learning_rate", 0.001, 0.1, true, false, 0.081),
                r("max_depth", 1.0, 25.0, false, true, 6.0),
                r("feature_fraction", 0.1, 1.0, false, false, 0.79),
                r("min_samples_leaf", 1.0, 10.0, false, true, 1.0),
            ],
            ModelKind::Mlp => vec![
                r("hidden_layers", 5.0, 25.0, false, true, 5.0),
                r("width", 5.0, 25.0, false, true, 20.0),
                r("learning_rate", 1e-4, 0.1, true, false, 0.01),
            ],
        };
        Self { iterations: 200, folds: 3, time_cap_secs: None, ranges }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid("cross-validation needs at least 2 folds"));
        }
        for p in &self.ranges {
            let ok = p.low <= p.high && (p.low..=p.high).contains(&p.default) && (!p.log || p.low > 0.0);
            if !ok {
                return Err(Error::invalid(format!("bad range for hyperparameter '{}'", p.name)));
            }
        }
        Ok(())
    }

    pub fn defaults(&self) -> Hyper {
        self.ranges.iter().map(|p| (p.name.clone(), p.default)).collect()
    }

    /// Candidate 0 is the defaults; the rest are seeded random draws.
    pub fn candidates(&self, seed: u64) -> Vec<Hyper> {
        let mut rng = seed::rng(seed, &[seed::tag("hpo")]);
        let mut out = vec![self.defaults()];
        for _ in 1..self.iterations {
            out.push(self.ranges.iter().map(|p| (p.name.clone(), p.sample(&mut rng))).collect());
        }
        out
    }
}

/// Rows below which cross-validation switches to leave-one-out.
pub const LOO_BELOW: usize = 10;

/// Validation folds as index lists.
pub fn folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    if n < LOO_BELOW {
        return (0..n).map(|i| vec![i]).collect();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed, &[seed::tag("folds")]));
    let k = k.min(n);
    (0..k).map(|f| idx.iter().copied().skip(f).step_by(k).collect()).collect()
}

/// Cross-validated Kendall tau of one candidate. Leave-one-out pools the
/// out-of-fold predictions; K-fold averages per-fold values. Undefined
/// correlations count as 0.
pub fn cv_score(kind: ModelKind, hyper: &Hyper, x: &[Vec<f64>], y: &[f64], folds: &[Vec<usize>], seed: u64) -> f64 {
    let n = y.len();
    let fit_predict = |val: &[usize]| -> Option<Vec<f64>> {
        let mut mask = vec![true; n];
        val.iter().for_each(|&i| mask[i] = false);
        let tx: Vec<Vec<f64>> = (0..n).filter(|&i| mask[i]).map(|i| x[i].clone()).collect();
        let ty: Vec<f64> = (0..n).filter(|&i| mask[i]).map(|i| y[i]).collect();
        let m: Box<dyn Regressor> = fit_single(kind, hyper, &tx, &ty, seed).ok()?;
        Some(val.iter().map(|&i| m.predict(&x[i])).collect())
    };
    if folds.iter().all(|f| f.len() == 1) {
        let mut pred = vec![f64::NAN; n];
        for f in folds {
            match fit_predict(f) {
                Some(p) => pred[f[0]] = p[0],
                None => return 0.0,
            }
        }
        let truth: Vec<f64> = folds.iter().map(|f| y[f[0]]).collect();
        let pooled: Vec<f64> = folds.iter().map(|f| pred[f[0]]).collect();
        return kendall_tau(&pooled, &truth).unwrap_or(0.0);
    }
    let mut total = 0.0;
    for f in folds {
        let truth: Vec<f64> = f.iter().map(|&i| y[i]).collect();
        total += fit_predict(f).and_then(|p| kendall_tau(&p, &truth)).unwrap_or(0.0);
    }
    total / folds.len() as f64
}

#[derive(Clone, Debug)]
pub struct HpoResult {
    pub best: Hyper,
    pub best_score: f64,
    /// `(candidate, cv score)` in evaluation order.
    pub trials: Vec<(Hyper, f64)>,
}

/// Random search; ties keep the earlier candidate, so the defaults win
/// unless strictly beaten.
pub fn random_search(kind: ModelKind, spec: &HpoSpec, x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<HpoResult> {
    spec.validate()?;
    let cands = spec.candidates(seed);
    if cands.len() <= 1 {
        return Ok(HpoResult { best: cands.into_iter().next().unwrap_or_default(), best_score: f64::NAN, trials: Vec::new() });
    }
    let fl = folds(y.len(), spec.folds, seed);
    let start = Instant::now();
    let cap = spec.time_cap_secs.map(Duration::from_secs_f64);
    let mut trials: Vec<(Hyper, f64)> = Vec::new();
    for (i, c) in cands.into_iter().enumerate() {
        if i > 0 && cap.is_some_and(|cap| start.elapsed() > cap) {
            log::info!("hyperparameter search for {} stopped by time cap after {i} candidates", kind.name());
            break;
        }
        let s = cv_score(kind, &c, x, y, &fl, seed);
        trials.push((c, s));
    }
    let (bi, _) = trials.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bs), (i, (_, s))| if *s > bs { (i, *s) } else { (bi, bs) });
    Ok(HpoResult { best: trials[bi].0.clone(), best_score: trials[bi].1, trials })
}
