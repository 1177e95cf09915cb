//! Mutation-based test distribution: test architectures clustered around
//! strong seeds, training rows one edit away from the test set.

use std::collections::HashSet;

use rand::seq::{index, IndexedRandom};

use crate::arch_space::{edit_distance, Architecture, MutationCount};
use crate::bench_store::BenchmarkStore;
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

pub const SEED_POOL: usize = 50;
pub const SEED_COUNT: usize = 5;
pub const TEST_MAX_ATTRS: usize = 3;
/// Draw attempts allowed per requested architecture before giving up.
pub const RETRY_FACTOR: usize = 200;

#[derive(Clone, Debug)]
pub struct MutationProtocol {
    pub seeds: Vec<Architecture>,
    pub test: Vec<Architecture>,
    test_set: HashSet<Architecture>,
    rng_seed: u64,
    space: crate::arch_space::SearchSpace,
}

impl MutationProtocol {
    /// Picks the five best of 50 random stored architectures as seeds and
    /// mutates up to three edges of a random seed per test architecture.
    pub fn new(store: &BenchmarkStore, test_size: usize, seed: u64) -> Result<Self> {
        let keys = store.architectures();
        if keys.len() < SEED_POOL {
            return Err(Error::invalid(format!("mutation protocol needs {SEED_POOL} stored architectures, store has {}", keys.len())));
        }
        let space = store.space().clone();
        let mut rng = seed::rng(seed, &[seed::tag("mutation_seeds")]);
        let mut pool: Vec<(f64, &Architecture)> = index::sample(&mut rng, keys.len(), SEED_POOL)
            .into_iter()
            .map(|i| Ok((store.final_val_acc(&keys[i])?, &keys[i])))
            .collect::<Result<_>>()?;
        pool.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        let seeds: Vec<Architecture> = pool.iter().take(SEED_COUNT).map(|(_, a)| (*a).clone()).collect();

        let mut rng = seed::rng(seed, &[seed::tag("mutation_test")]);
        let mut test = Vec::with_capacity(test_size);
        let mut test_set = HashSet::with_capacity(test_size);
        let mut attempts = 0;
        while test.len() < test_size {
            attempts += 1;
            if attempts > RETRY_FACTOR * test_size.max(1) {
                return Err(Error::ProtocolFailure(format!("only {} distinct test architectures after {attempts} draws", test.len())));
            }
            let parent = seeds.choose(&mut rng).expect("seeds are non-empty");
            let child = space.mutate(parent, TEST_MAX_ATTRS.min(space.num_edges()), MutationCount::Uniform, &mut rng)?;
            if test_set.insert(child.clone()) {
                test.push(child);
            }
        }
        Ok(Self { seeds, test, test_set, rng_seed: seed, space })
    }

    pub fn in_test(&self, arch: &Architecture) -> bool {
        self.test_set.contains(arch)
    }

    /// Up to `n` distinct single-edit mutations of test architectures,
    /// none of which is itself a test architecture. The order is a fixed
    /// function of the seed, so prefixes give nested training sets.
    pub fn train_pool(&self, n: usize) -> Result<Vec<Architecture>> {
        let mut rng: Rng = seed::rng(self.rng_seed, &[seed::tag("mutation_train")]);
        let mut out = Vec::with_capacity(n);
        let mut seen = HashSet::with_capacity(n);
        let mut attempts = 0;
        while out.len() < n {
            attempts += 1;
            if attempts > RETRY_FACTOR * n.max(1) {
                return Err(Error::ProtocolFailure(format!(
                    "could not draw {n} training architectures disjoint from the test set ({} after {attempts} draws)",
                    out.len()
                )));
            }
            let parent = self.test.choose(&mut rng).ok_or_else(|| Error::ProtocolFailure("empty test set".into()))?;
            let child = self.space.mutate(parent, 1, MutationCount::Max, &mut rng)?;
            if !self.in_test(&child) && seen.insert(child.clone()) {
                out.push(child);
            }
        }
        Ok(out)
    }

    /// Structural checks; returns the first violation found.
    pub fn check(&self, train: &[Architecture]) -> Result<()> {
        for t in &self.test {
            let d = self.seeds.iter().map(|s| edit_distance(s, t)).collect::<Result<Vec<_>>>()?.into_iter().min().unwrap_or(usize::MAX);
            if d > TEST_MAX_ATTRS {
                return Err(Error::ProtocolFailure(format!("test architecture {t} is {d} edits from every seed")));
            }
        }
        for a in train {
            if self.in_test(a) {
                return Err(Error::ProtocolFailure(format!("training architecture {a} is in the test set")));
            }
            let near = self.test.iter().any(|t| edit_distance(t, a).map(|d| d == 1).unwrap_or(false));
            if !near {
                return Err(Error::ProtocolFailure(format!("training architecture {a} is not one edit from a test architecture")));
            }
        }
        Ok(())
    }
}
