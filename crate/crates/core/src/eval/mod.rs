//! Evaluation: correlation metrics, budget grids, Pareto analysis, test-set
//! protocols, and seed-variance decomposition.

pub mod grid;
pub mod metrics;
pub mod pareto;
pub mod protocol;
pub mod seed_variance;
pub mod stats;

pub use grid::{run_grid, BudgetGrid, GridConfig, PredictorFactory, ResultGrid, Stat, TestProtocol};
pub use metrics::{kendall_tau, pearson, sparse_kendall_tau, spearman, MetricKind};
pub use pareto::{pareto_best, ParetoResult};
pub use protocol::MutationProtocol;
pub use seed_variance::{seed_variance, SeedVariance, SeedVarianceConfig};
pub use stats::sign_test;
