//! Cell search space: a complete DAG whose edges each carry one operation.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Operation placed on a cell edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    /// Constant zero; the edge carries no signal.
    Zeroize,
    /// Identity.
    Skip,
    /// `tanh(W x + b)`.
    Dense,
    /// Two stacked dense layers.
    Dense2,
    /// Parameter-free elementwise `tanh`.
    Squash,
}

impl OpKind {
    pub const ALL: [OpKind; 5] = [OpKind::Zeroize, OpKind::Skip, OpKind::Dense, OpKind::Dense2, OpKind::Squash];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Zeroize => "zeroize",
            OpKind::Skip => "skip",
            OpKind::Dense => "dense",
            OpKind::Dense2 => "dense2",
            OpKind::Squash => "squash",
        }
    }

    /// Number of dense layers the op contributes.
    pub fn dense_layers(self) -> usize {
        match self {
            OpKind::Dense => 1,
            OpKind::Dense2 => 2,
            _ => 0,
        }
    }

    pub fn is_parametric(self) -> bool {
        self.dense_layers() > 0
    }
}

impl FromStr for OpKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown operation '{s}'")))
    }
}

/// Complete-DAG cell space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub num_nodes: usize,
    pub ops: Vec<OpKind>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self { num_nodes: 4, ops: OpKind::ALL.to_vec() }
    }
}

impl SearchSpace {
    pub fn new(num_nodes: usize, ops: Vec<OpKind>) -> Result<Self> {
        let space = Self { num_nodes, ops };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes < 2 {
            return Err(Error::invalid("a cell needs at least 2 nodes"));
        }
        if self.ops.is_empty() || self.ops.len() > u8::MAX as usize {
            return Err(Error::invalid("operation list must hold 1..=255 entries"));
        }
        let mut seen = self.ops.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.ops.len() {
            return Err(Error::invalid("duplicate operation in search space"));
        }
        Ok(())
    }

    pub fn num_edges(&self) -> usize {
        self.num_nodes * (self.num_nodes - 1) / 2
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    /// `(from, to)` pairs in canonical order: (0,1), (0,2), (1,2), (0,3), ...
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (1..self.num_nodes).flat_map(|to| (0..to).map(move |from| (from, to))).collect()
    }

    /// `|ops|^edges`, or `None` when it overflows `u64`.
    pub fn size(&self) -> Option<u64> {
        (self.num_ops() as u64).checked_pow(self.num_edges() as u32)
    }

    pub fn op(&self, arch: &Architecture, edge: usize) -> OpKind {
        self.ops[arch.ops[edge] as usize]
    }

    pub fn check(&self, arch: &Architecture) -> Result<()> {
        if arch.ops.len() != self.num_edges() {
            return Err(Error::invalid(format!(
                "architecture has {} edges, space has {}",
                arch.ops.len(),
                self.num_edges()
            )));
        }
        if let Some(&bad) = arch.ops.iter().find(|&&o| o as usize >= self.num_ops()) {
            return Err(Error::invalid(format!("op index {bad} out of range")));
        }
        Ok(())
    }

    /// Input-to-output paths through strictly increasing nodes, shortest first.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        let last = self.num_nodes - 1;
        let inner = last - 1;
        let mut paths = Vec::new();
        for mask in 0u64..(1u64 << inner) {
            let mut nodes = vec![0];
            nodes.extend((0..inner).filter(|b| mask >> b & 1 == 1).map(|b| b + 1));
            nodes.push(last);
            paths.push(nodes);
        }
        paths.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        paths
    }

    fn edge_index(&self, from: usize, to: usize) -> usize {
        to * (to - 1) / 2 + from
    }

    pub fn encoding_len(&self, kind: EncodingKind) -> usize {
        match kind {
            EncodingKind::AdjacencyOneHot => self.num_edges() * self.num_ops(),
            EncodingKind::Path => self.paths().iter().map(|p| self.num_ops().pow(p.len() as u32 - 1)).sum(),
        }
    }

    pub fn from_index(&self, mut idx: u64) -> Architecture {
        let n = self.num_ops() as u64;
        let mut ops = vec![0u8; self.num_edges()];
        for slot in ops.iter_mut().rev() {
            *slot = (idx % n) as u8;
            idx /= n;
        }
        Architecture { ops }
    }

    pub fn index_of(&self, arch: &Architecture) -> u64 {
        let n = self.num_ops() as u64;
        arch.ops.iter().fold(0, |acc, &o| acc * n + o as u64)
    }

    pub fn sample_uniform(&self, rng: &mut Rng) -> Architecture {
        let n = self.num_ops();
        Architecture { ops: (0..self.num_edges()).map(|_| rng.random_range(0..n) as u8).collect() }
    }

    /// Changes between 1 and `max_attrs` edges, each to a different op.
    pub fn mutate(&self, arch: &Architecture, max_attrs: usize, count: MutationCount, rng: &mut Rng) -> Result<Architecture> {
        self.check(arch)?;
        let edges = self.num_edges();
        if max_attrs < 1 || max_attrs > edges {
            return Err(Error::invalid(format!("max_attrs must lie in [1, {edges}], got {max_attrs}")));
        }
        if self.num_ops() < 2 {
            return Err(Error::invalid("mutation needs at least two operations"));
        }
        let k = match count {
            MutationCount::Uniform => rng.random_range(1..=max_attrs),
            MutationCount::Max => max_attrs,
        };
        let mut out = arch.clone();
        for e in index::sample(rng, edges, k) {
            // draw from the other |ops|-1 values
            let shift = rng.random_range(1..self.num_ops()) as u8;
            out.ops[e] = ((arch.ops[e] as usize + shift as usize) % self.num_ops()) as u8;
        }
        Ok(out)
    }

    pub fn encode(&self, arch: &Architecture, kind: EncodingKind) -> Result<FeatureVector> {
        self.check(arch)?;
        let n = self.num_ops();
        let mut values = vec![0.0; self.encoding_len(kind)];
        match kind {
            EncodingKind::AdjacencyOneHot => {
                for (e, &o) in arch.ops.iter().enumerate() {
                    values[e * n + o as usize] = 1.0;
                }
            }
            EncodingKind::Path => {
                let mut offset = 0;
                for path in self.paths() {
                    let pos = path
                        .windows(2)
                        .fold(0, |acc, w| acc * n + arch.ops[self.edge_index(w[0], w[1])] as usize);
                    values[offset + pos] = 1.0;
                    offset += n.pow(path.len() as u32 - 1);
                }
            }
        }
        Ok(FeatureVector { values, kind })
    }
}

/// How many edges a mutation touches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationCount {
    /// `k ~ Uniform{1..max_attrs}`.
    #[default]
    Uniform,
    /// Always `max_attrs`.
    Max,
}

/// One operation index per edge, in [`SearchSpace::edges`] order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Architecture {
    pub ops: Vec<u8>,
}

impl Architecture {
    pub fn new(ops: Vec<u8>) -> Self {
        Self { ops }
    }

    pub fn uniform(op: u8, edges: usize) -> Self {
        Self { ops: vec![op; edges] }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, o) in self.ops.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{o}")?;
        }
        Ok(())
    }
}

impl FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let ops = s
            .trim()
            .split('|')
            .map(|t| t.parse::<u8>().map_err(|_| Error::invalid(format!("bad architecture string '{s}'"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { ops })
    }
}

impl Serialize for Architecture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Architecture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Edges whose ops differ.
pub fn edit_distance(a: &Architecture, b: &Architecture) -> Result<usize> {
    if a.ops.len() != b.ops.len() {
        return Err(Error::invalid("architectures come from different spaces"));
    }
    Ok(a.ops.iter().zip(&b.ops).filter(|(x, y)| x != y).count())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingKind {
    #[default]
    AdjacencyOneHot,
    Path,
}

impl EncodingKind {
    pub fn name(self) -> &'static str {
        match self {
            EncodingKind::AdjacencyOneHot => "adjacency_one_hot",
            EncodingKind::Path => "path",
        }
    }
}

impl FromStr for EncodingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacency_one_hot" | "adjacency" | "adj" => Ok(EncodingKind::AdjacencyOneHot),
            "path" => Ok(EncodingKind::Path),
            other => Err(Error::invalid(format!("unknown encoding kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub kind: EncodingKind,
}
