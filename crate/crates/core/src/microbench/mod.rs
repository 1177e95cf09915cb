//! Desk-scale ground truth: every architecture becomes a small tanh network
//! trained on a spiral classification task.

mod dataset;
mod network;
mod train;

pub use dataset::{make_dataset, DatasetConfig, SyntheticDataset};
pub use network::{softmax_xent, Activation, DenseLayer, InitScheme, Mode, NetConfig, Network, Program, Workspace};
pub use train::{batch_grad, batch_loss, evaluate, grad_snapshot, grad_snapshot_on, minibatch, train, GradientSnapshot, LearningCurve, LrSchedule, TrainConfig};

use crate::arch_space::{Architecture, SearchSpace};
use crate::error::Result;
use crate::scalar::Scalar;

/// Builds the network for `arch` sized for `data`.
pub fn instantiate<T: Scalar>(space: &SearchSpace, arch: &Architecture, cfg: &NetConfig, data: &SyntheticDataset, seed: u64) -> Result<Network<T>> {
    Network::instantiate(space, arch, cfg, data.in_dim, data.classes, seed)
}
