//! Per-cell winners and the set of predictors that win somewhere.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::grid::ResultGrid;
use super::metrics::MetricKind;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoResult {
    pub metric: MetricKind,
    /// `(init index, query index) -> (winner, mean)`; cells where no
    /// predictor has a defined mean are absent.
    pub winners: BTreeMap<(usize, usize), (String, f64)>,
    pub pareto_set: BTreeSet<String>,
}

/// Highest mean wins; equal means go to the lexicographically smaller name.
pub fn pareto_best(grid: &ResultGrid, metric: MetricKind) -> ParetoResult {
    let mut names = grid.predictors.clone();
    names.sort();
    let (ni, nq) = grid.shape();
    let mut winners = BTreeMap::new();
    for i in 0..ni {
        for q in 0..nq {
            let mut best: Option<(&String, f64)> = None;
            for p in &names {
                if let Some(m) = grid.mean(p, i, q, metric).filter(|m| !m.is_nan()) {
                    // names are visited in order, so only a strict gain replaces
                    if best.is_none_or(|(_, b)| m > b) {
                        best = Some((p, m));
                    }
                }
            }
            if let Some((p, m)) = best {
                winners.insert((i, q), (p.clone(), m));
            }
        }
    }
    let pareto_set = winners.values().map(|(p, _)| p.clone()).collect();
    ParetoResult { metric, winners, pareto_set }
}

impl ParetoResult {
    pub const CSV_HEADER: &'static str = "init_budget,query_budget,metric,winner,mean";

    pub fn write_csv(&self, grid: &ResultGrid, mut w: impl Write) -> Result<()> {
        let g = grid.grid.as_ref().ok_or_else(|| Error::invalid("result grid has no budget levels"))?;
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for ((i, q), (p, m)) in &self.winners {
            writeln!(w, "{},{},{},{p},{m}", g.init[*i], g.query[*q], self.metric.name())?;
        }
        Ok(())
    }
}
