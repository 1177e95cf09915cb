//! Name-based construction of predictors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{OraclePredictor, Predictor, RandomPredictor};
use crate::arch_space::EncodingKind;
use crate::error::{Error, Result};
use crate::lc_pred::{LcKind, LcPredictor};
use crate::model_pred::{HpoSpec, ModelKind, ModelPredictor};
use crate::omni::{OmniConfig, OmniFeature, OmniPredictor};
use crate::zerocost::{ProxyConfig, ProxyKind, ZeroCostPredictor};

/// Every name [`PredictorSpec::from_str`] accepts.
pub const PREDICTOR_NAMES: &[&str] = &[
    "oracle",
    "random",
    "snip",
    "grad_norm",
    "fisher",
    "grasp",
    "synflow",
    "jacob_cov",
    "flops",
    "params",
    "early_stop_acc",
    "early_stop_loss",
    "sotl",
    "sotl_e",
    "lce",
    "lce_m",
    "bayes_linear",
    "gp",
    "random_forest",
    "gbt",
    "mlp",
    "bananas",
    "omni",
    "omni_enc_jc",
    "omni_enc_sotl_e",
    "omni_jc_sotl_e",
    "omni_mlp",
];

/// Shared knobs applied when building predictors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildOptions {
    /// Overrides the hyperparameter-search iteration count of every
    /// model-based and hybrid predictor.
    pub hpo_iterations: Option<usize>,
    pub proxy: ProxyConfig,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { hpo_iterations: None, proxy: ProxyConfig::default() }
    }
}

impl BuildOptions {
    fn hpo(&self, kind: ModelKind) -> HpoSpec {
        let mut spec = HpoSpec::for_kind(kind);
        if let Some(it) = self.hpo_iterations {
            spec.iterations = it;
        }
        spec
    }
}

/// A parsed predictor name.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PredictorSpec {
    name: &'static str,
}

impl PredictorSpec {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn all() -> Vec<PredictorSpec> {
        PREDICTOR_NAMES.iter().map(|&name| PredictorSpec { name }).collect()
    }

    pub fn build(&self, opts: &BuildOptions) -> Box<dyn Predictor> {
        use OmniFeature::*;
        let model = |kind: ModelKind, enc: EncodingKind, members: usize| -> Box<dyn Predictor> {
            Box::new(ModelPredictor::new(self.name, kind, enc, members, opts.hpo(kind)))
        };
        let omni = |features: &[OmniFeature], base: ModelKind, members: usize| -> Box<dyn Predictor> {
            let mut cfg = OmniConfig::new(features);
            cfg.base = base;
            cfg.members = members;
            cfg.hpo = opts.hpo(base);
            cfg.proxy = opts.proxy.clone();
            Box::new(OmniPredictor::new(self.name, cfg))
        };
        if let Ok(kind) = self.name.parse::<ProxyKind>() {
            return Box::new(ZeroCostPredictor { kind, config: opts.proxy.clone() });
        }
        if let Some(kind) = LcKind::ALL.into_iter().find(|k| k.name() == self.name) {
            return Box::new(LcPredictor::new(kind));
        }
        if let Ok(kind) = self.name.parse::<ModelKind>() {
            return model(kind, EncodingKind::AdjacencyOneHot, 1);
        }
        match self.name {
            "oracle" => Box::new(OraclePredictor::default()),
            "random" => Box::new(RandomPredictor::default()),
            "bananas" => model(ModelKind::Mlp, EncodingKind::Path, 3),
            "omni" => omni(&[Encoding, SotlE, JacobCov], ModelKind::GradientBoostedTrees, 1),
            "omni_enc_jc" => omni(&[Encoding, JacobCov], ModelKind::GradientBoostedTrees, 1),
            "omni_enc_sotl_e" => omni(&[Encoding, SotlE], ModelKind::GradientBoostedTrees, 1),
            "omni_jc_sotl_e" => omni(&[JacobCov, SotlE], ModelKind::GradientBoostedTrees, 1),
            "omni_mlp" => omni(&[Encoding, SotlE, JacobCov], ModelKind::Mlp, 3),
            other => unreachable!("name '{other}' is listed but not constructible"),
        }
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

impl FromStr for PredictorSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PREDICTOR_NAMES
            .iter()
            .find(|&&n| n == s)
            .map(|&name| PredictorSpec { name })
            .ok_or_else(|| Error::invalid(format!("unknown predictor '{s}'; valid names: {}", PREDICTOR_NAMES.join(", "))))
    }
}
