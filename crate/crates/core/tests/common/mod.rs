use predbench::bench_store::{BenchmarkStore, StoreHeader};
use predbench::microbench::{DatasetConfig, NetConfig, TrainConfig};

/// A quick table: short curves, one training per curve, a small dataset.
pub fn small_header(build_seed: u64, epochs: usize) -> StoreHeader {
    let mut h = StoreHeader::with_seed(build_seed);
    h.train = TrainConfig { epochs, ..Default::default() };
    h.net = NetConfig { width: 6, ..Default::default() };
    h.dataset = DatasetConfig { n_train: 150, n_val: 150, ..Default::default() };
    h.seeds = 1;
    h
}

pub fn small_store(build_seed: u64, n: usize, epochs: usize) -> BenchmarkStore {
    BenchmarkStore::build(small_header(build_seed, epochs), n).expect("small store builds")
}
