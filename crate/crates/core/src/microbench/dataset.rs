//! Interleaved-spiral classification data.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub classes: usize,
    pub n_train: usize,
    pub n_val: usize,
    /// Angular noise (radians) added to every point.
    pub noise: f64,
    /// Spiral turns from the centre to the rim.
    pub turns: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { classes: 3, n_train: 300, n_val: 300, noise: 0.35, turns: 0.75, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub in_dim: usize,
    pub classes: usize,
    pub train_x: Vec<[f64; 2]>,
    pub train_y: Vec<usize>,
    pub val_x: Vec<[f64; 2]>,
    pub val_y: Vec<usize>,
}

impl SyntheticDataset {
    pub fn train_input(&self, i: usize) -> &[f64] {
        &self.train_x[i]
    }

    pub fn val_input(&self, i: usize) -> &[f64] {
        &self.val_x[i]
    }
}

pub fn make_dataset(cfg: &DatasetConfig) -> Result<SyntheticDataset> {
    if cfg.classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if cfg.n_train == 0 || cfg.n_val == 0 {
        return Err(Error::invalid("dataset sizes must be positive"));
    }
    if cfg.n_train % cfg.classes != 0 || cfg.n_val % cfg.classes != 0 {
        return Err(Error::invalid("dataset sizes must be multiples of the class count"));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::invalid("noise must be finite and non-negative"));
    }
    let (train_x, train_y) = spiral(cfg, cfg.n_train, seed::tag("train"));
    let (val_x, val_y) = spiral(cfg, cfg.n_val, seed::tag("val"));
    Ok(SyntheticDataset { in_dim: 2, classes: cfg.classes, train_x, train_y, val_x, val_y })
}

fn spiral(cfg: &DatasetConfig, n: usize, split: u64) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut rng = seed::rng(cfg.seed, &[split]);
    let noise = Normal::new(0.0, cfg.noise).expect("validated noise");
    let per = n / cfg.classes;
    let mut pts = Vec::with_capacity(n);
    for i in 0..per {
        for c in 0..cfg.classes {
            let t = (i as f64 + rng.random::<f64>()) / per as f64;
            let r = 0.1 + 0.9 * t;
            let theta = 2.0 * PI * (c as f64 / cfg.classes as f64 + cfg.turns * t) + noise.sample(&mut rng);
            pts.push(([r * theta.cos(), r * theta.sin()], c));
        }
    }
    pts.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_identical_regeneration() {
        let cfg = DatasetConfig::default();
        assert_eq!(make_dataset(&cfg).unwrap(), make_dataset(&cfg).unwrap());
    }

    #[test]
    fn balanced_two_class_majority_is_half() {
        let cfg = DatasetConfig { classes: 2, n_train: 100, n_val: 60, ..Default::default() };
        let d = make_dataset(&cfg).unwrap();
        let ones = d.val_y.iter().filter(|&&y| y == 1).count();
        let majority = ones.max(d.val_y.len() - ones) as f64 / d.val_y.len() as f64;
        assert_eq!(majority, 0.5);
    }

    #[test]
    fn splits_are_disjoint() {
        let d = make_dataset(&DatasetConfig::default()).unwrap();
        for p in &d.val_x {
            assert!(!d.train_x.contains(p));
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(make_dataset(&DatasetConfig { classes: 1, ..Default::default() }).is_err());
        assert!(make_dataset(&DatasetConfig { n_train: 0, ..Default::default() }).is_err());
        assert!(make_dataset(&DatasetConfig { n_train: 301, ..Default::default() }).is_err());
    }
}
