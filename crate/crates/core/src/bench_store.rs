//! The tabular benchmark: trained learning curves for a sample of the space,
//! persisted as line-delimited JSON and served under budget accounting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch_space::{Architecture, SearchSpace};
use crate::error::{Error, Result};
use crate::microbench::{self, DatasetConfig, LearningCurve, NetConfig, SyntheticDataset, TrainConfig};
use crate::predictor::BudgetLedger;
use crate::seed;

pub const FORMAT_VERSION: u32 = 1;

/// Minimum accuracy spread demanded of stores with at least
/// [`SPREAD_CHECK_MIN_ARCHS`] records.
pub const MIN_ACCURACY_SPREAD: f64 = 0.15;
pub const SPREAD_CHECK_MIN_ARCHS: usize = 200;

/// Trainings per architecture in a default build.
pub const DEFAULT_SEEDS: usize = 3;

/// Simulated costs in epoch-equivalents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    pub epoch: f64,
    pub zero_cost: f64,
    pub model_query: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { epoch: 1.0, zero_cost: 0.05, model_query: 0.0 }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.epoch > 0.0 && self.zero_cost >= 0.0 && self.model_query >= 0.0) {
            return Err(Error::invalid("costs must be non-negative and the epoch cost positive"));
        }
        if ![self.epoch, self.zero_cost, self.model_query].iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("costs must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreHeader {
    pub format_version: u32,
    pub space: SearchSpace,
    pub train: TrainConfig,
    pub net: NetConfig,
    pub dataset: DatasetConfig,
    pub build_seed: u64,
    /// Independent trainings averaged into each stored curve.
    #[serde(default = "one")]
    pub seeds: usize,
    pub costs: CostModel,
}

fn one() -> usize {
    1
}

impl StoreHeader {
    /// Default space, training recipe and dataset under `build_seed`.
    pub fn with_seed(build_seed: u64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            space: SearchSpace::default(),
            train: TrainConfig::default(),
            net: NetConfig::default(),
            dataset: DatasetConfig::default(),
            build_seed,
            seeds: DEFAULT_SEEDS,
            costs: CostModel::default(),
        }
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("header serializes");
        hex(&Sha256::digest(bytes))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkRecord {
    pub arch: Architecture,
    pub params: usize,
    pub flops: usize,
    pub epoch_cost: f64,
    pub curve: LearningCurve,
}

impl BenchmarkRecord {
    pub fn final_val_acc(&self) -> f64 {
        self.curve.final_val_acc()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: StoreHeader,
    sha256: String,
}

type MemoKey = (u64, Architecture, u64);

/// An immutable table of trained architectures plus two caches: on-demand
/// trainings of architectures outside the table, and derived per-arch values.
pub struct BenchmarkStore {
    header: StoreHeader,
    records: BTreeMap<Architecture, Arc<BenchmarkRecord>>,
    keys: Vec<Architecture>,
    data: Arc<SyntheticDataset>,
    on_demand: bool,
    extra: Mutex<HashMap<Architecture, Arc<BenchmarkRecord>>>,
    memo: Mutex<HashMap<MemoKey, Vec<f64>>>,
}

impl std::fmt::Debug for BenchmarkStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkStore").field("header", &self.header).field("records", &self.records.len()).finish()
    }
}

/// Network-init and shuffle seeds of one training run of `arch`.
pub fn arch_seeds(build_seed: u64, space: &SearchSpace, arch: &Architecture, run: usize) -> (u64, u64) {
    let idx = space.index_of(arch);
    let mut path = vec![seed::tag("init"), idx];
    if run > 0 {
        path.push(run as u64);
    }
    let init = seed::derive(build_seed, &path);
    path[0] = seed::tag("shuffle");
    (init, seed::derive(build_seed, &path))
}

/// Trains one architecture exactly as a store build would: `header.seeds`
/// runs, averaged epoch by epoch.
pub fn train_record(header: &StoreHeader, data: &SyntheticDataset, arch: &Architecture) -> Result<BenchmarkRecord> {
    header.space.check(arch)?;
    let mut runs = Vec::with_capacity(header.seeds);
    let (mut params, mut flops) = (0, 0);
    for run in 0..header.seeds {
        let (init_seed, shuffle_seed) = arch_seeds(header.build_seed, &header.space, arch, run);
        let mut net = microbench::instantiate::<f64>(&header.space, arch, &header.net, data, init_seed)?;
        let cfg = TrainConfig { seed: shuffle_seed, ..header.train.clone() };
        runs.push(microbench::train(&mut net, data, &cfg)?);
        (params, flops) = (net.param_count(), net.flop_count());
    }
    Ok(BenchmarkRecord { arch: arch.clone(), params, flops, epoch_cost: header.costs.epoch, curve: mean_curve(&runs) })
}

fn mean_curve(runs: &[LearningCurve]) -> LearningCurve {
    let n = runs.len() as f64;
    let avg = |f: fn(&LearningCurve) -> &Vec<f64>| -> Vec<f64> {
        (0..f(&runs[0]).len()).map(|e| runs.iter().map(|r| f(r)[e]).sum::<f64>() / n).collect()
    };
    LearningCurve { train_loss: avg(|c| &c.train_loss), val_acc: avg(|c| &c.val_acc), val_loss: avg(|c| &c.val_loss) }
}

/// Candidate order for a build: rejection sampling for sparse requests,
/// a shuffled enumeration when more than half the space is wanted.
fn candidates(space: &SearchSpace, n: usize, rng: &mut seed::Rng) -> Result<Box<dyn Iterator<Item = Architecture>>> {
    let size = space.size().unwrap_or(u64::MAX);
    if n as u64 > size {
        return Err(Error::DuplicateExhaustion { requested: n, available: size as usize });
    }
    if (n as u64).saturating_mul(2) > size {
        let mut all: Vec<u64> = (0..size).collect();
        all.shuffle(rng);
        let space = space.clone();
        return Ok(Box::new(all.into_iter().map(move |i| space.from_index(i))));
    }
    let space = space.clone();
    let mut rng = rng.clone();
    let mut seen = HashSet::new();
    Ok(Box::new(std::iter::from_fn(move || loop {
        if seen.len() as u64 == size {
            return None;
        }
        let a = space.sample_uniform(&mut rng);
        if seen.insert(a.clone()) {
            return Some(a);
        }
    })))
}

impl BenchmarkStore {
    /// Samples `n_archs` distinct architectures and trains each of them.
    ///
    /// Architectures whose training diverges are skipped and replaced by the
    /// next candidate.
    pub fn build(header: StoreHeader, n_archs: usize) -> Result<Self> {
        if n_archs == 0 {
            return Err(Error::invalid("n_archs must be at least 1"));
        }
        validate_header(&header)?;
        let data = Arc::new(microbench::make_dataset(&header.dataset)?);
        let mut rng = seed::rng(header.build_seed, &[seed::tag("build")]);
        let mut cands = candidates(&header.space, n_archs, &mut rng)?;
        let mut records = BTreeMap::new();
        while records.len() < n_archs {
            let batch: Vec<Architecture> = cands.by_ref().take(n_archs - records.len()).collect();
            if batch.is_empty() {
                let available = records.len();
                return Err(Error::DuplicateExhaustion { requested: n_archs, available });
            }
            let trained: Vec<Result<BenchmarkRecord>> = batch.par_iter().map(|a| train_record(&header, &data, a)).collect();
            for (arch, rec) in batch.into_iter().zip(trained) {
                match rec {
                    Ok(r) => {
                        records.insert(arch, Arc::new(r));
                    }
                    Err(Error::DivergedTraining { epoch }) => {
                        log::warn!("training of {arch} diverged at epoch {epoch}; drawing a replacement");
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let store = Self::from_parts(header, records, data);
        store.check_spread()?;
        Ok(store)
    }

    fn from_parts(header: StoreHeader, records: BTreeMap<Architecture, Arc<BenchmarkRecord>>, data: Arc<SyntheticDataset>) -> Self {
        let keys = records.keys().cloned().collect();
        Self { header, records, keys, data, on_demand: false, extra: Mutex::default(), memo: Mutex::default() }
    }

    fn check_spread(&self) -> Result<()> {
        if self.records.len() < SPREAD_CHECK_MIN_ARCHS {
            return Ok(());
        }
        let accs = self.records.values().map(|r| r.final_val_acc());
        let (lo, hi) = accs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a), hi.max(a)));
        if hi - lo < MIN_ACCURACY_SPREAD {
            return Err(Error::DegenerateBenchmark(format!("final accuracy spread {:.4} is below {MIN_ACCURACY_SPREAD}", hi - lo)));
        }
        Ok(())
    }

    /// Allows architectures outside the table to be trained when queried.
    pub fn with_on_demand(mut self, enabled: bool) -> Self {
        self.on_demand = enabled;
        self
    }

    pub fn on_demand(&self) -> bool {
        self.on_demand
    }

    pub fn header(&self) -> &StoreHeader {
        &self.header
    }

    pub fn space(&self) -> &SearchSpace {
        &self.header.space
    }

    pub fn costs(&self) -> &CostModel {
        &self.header.costs
    }

    pub fn epochs(&self) -> usize {
        self.header.train.epochs
    }

    pub fn dataset(&self) -> &SyntheticDataset {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Table keys in sorted order.
    pub fn architectures(&self) -> &[Architecture] {
        &self.keys
    }

    pub fn contains(&self, arch: &Architecture) -> bool {
        self.records.contains_key(arch)
    }

    pub fn records(&self) -> impl Iterator<Item = &BenchmarkRecord> {
        self.records.values().map(|r| r.as_ref())
    }

    /// Uncharged lookup, training on demand when enabled.
    pub fn record(&self, arch: &Architecture) -> Result<Arc<BenchmarkRecord>> {
        if let Some(r) = self.records.get(arch) {
            return Ok(r.clone());
        }
        if !self.on_demand {
            return Err(Error::NotFound(format!("architecture {arch} is not in the benchmark")));
        }
        if let Some(r) = self.extra.lock().expect("cache lock").get(arch) {
            return Ok(r.clone());
        }
        let rec = Arc::new(train_record(&self.header, &self.data, arch)?);
        self.extra.lock().expect("cache lock").entry(arch.clone()).or_insert(rec.clone());
        Ok(rec)
    }

    /// Ground truth `f(a)`, uncharged.
    pub fn final_val_acc(&self, arch: &Architecture) -> Result<f64> {
        Ok(self.record(arch)?.final_val_acc())
    }

    /// Full training record, charging `E · epoch_cost`.
    pub fn query_full(&self, arch: &Architecture, ledger: &mut BudgetLedger) -> Result<Arc<BenchmarkRecord>> {
        let rec = self.record(arch)?;
        ledger.charge_for(Some(arch.clone()), rec.epoch_cost * rec.curve.epochs() as f64, "full_train")?;
        Ok(rec)
    }

    /// First `k` epochs of the curve, charging `k · epoch_cost`.
    pub fn query_partial(&self, arch: &Architecture, k: usize, ledger: &mut BudgetLedger) -> Result<LearningCurve> {
        let rec = self.record(arch)?;
        if k == 0 || k > rec.curve.epochs() {
            return Err(Error::invalid(format!("prefix length {k} outside 1..={}", rec.curve.epochs())));
        }
        ledger.charge_for(Some(arch.clone()), rec.epoch_cost * k as f64, "partial_train")?;
        Ok(rec.curve.prefix(k))
    }

    /// Caches a derived per-architecture value under `(tag, arch, key)`.
    pub fn memoize(&self, tag: u64, arch: &Architecture, key: u64, f: impl FnOnce() -> Result<Vec<f64>>) -> Result<Vec<f64>> {
        let k = (tag, arch.clone(), key);
        if let Some(v) = self.memo.lock().expect("memo lock").get(&k) {
            return Ok(v.clone());
        }
        let v = f()?;
        self.memo.lock().expect("memo lock").insert(k, v.clone());
        Ok(v)
    }

    /// Architectures trained on demand so far, sorted.
    pub fn on_demand_records(&self) -> Vec<Arc<BenchmarkRecord>> {
        let mut v: Vec<_> = self.extra.lock().expect("cache lock").values().cloned().collect();
        v.sort_by(|a, b| a.arch.cmp(&b.arch));
        v
    }

    /// A new store holding the table plus every on-demand record.
    pub fn snapshot(&self) -> Self {
        let mut records = self.records.clone();
        for r in self.on_demand_records() {
            records.insert(r.arch.clone(), r);
        }
        Self::from_parts(self.header.clone(), records, self.data.clone()).with_on_demand(self.on_demand)
    }

    pub fn to_writer(&self, mut w: impl Write) -> Result<()> {
        let line = HeaderLine { header: self.header.clone(), sha256: self.header.hash() };
        writeln!(w, "{}", serde_json::to_string(&line).expect("header serializes"))?;
        for rec in self.records.values() {
            writeln!(w, "{}", serde_json::to_string(rec.as_ref()).expect("record serializes"))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf).expect("in-memory write");
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        self.to_writer(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn from_reader(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines.next().ok_or(Error::Format { line: 1, message: "empty store file".into() })??;
        let head: HeaderLine = serde_json::from_str(&first).map_err(|e| Error::Format { line: 1, message: e.to_string() })?;
        if head.header.format_version != FORMAT_VERSION {
            return Err(Error::Format { line: 1, message: format!("unsupported format version {}", head.header.format_version) });
        }
        if head.header.hash() != head.sha256 {
            return Err(Error::Format { line: 1, message: "header hash mismatch".into() });
        }
        validate_header(&head.header).map_err(|e| Error::Format { line: 1, message: e.to_string() })?;
        let data = Arc::new(microbench::make_dataset(&head.header.dataset)?);
        let mut records = BTreeMap::new();
        let mut last: Option<Architecture> = None;
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line?;
            let bad = |message: String| Error::Format { line: lineno, message };
            let rec: BenchmarkRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            head.header.space.check(&rec.arch).map_err(|e| bad(e.to_string()))?;
            if rec.curve.epochs() != head.header.train.epochs || !rec.curve.is_valid() {
                return Err(bad(format!("invalid learning curve for {}", rec.arch)));
            }
            if !(rec.epoch_cost > 0.0) {
                return Err(bad("epoch cost must be positive".into()));
            }
            if last.as_ref().is_some_and(|l| *l >= rec.arch) {
                return Err(bad(format!("record {} is duplicated or out of order", rec.arch)));
            }
            last = Some(rec.arch.clone());
            records.insert(rec.arch.clone(), Arc::new(rec));
        }
        Ok(Self::from_parts(head.header, records, data))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(BufReader::new(fs::File::open(path)?))
    }
}

fn validate_header(h: &StoreHeader) -> Result<()> {
    if h.seeds == 0 {
        return Err(Error::invalid("seeds must be at least 1"));
    }
    h.space.validate()?;
    h.train.validate()?;
    h.costs.validate()
}
