//! Performance-predictor benchmark for neural architecture search.
//!
//! The crate trains a desk-scale tabular benchmark ([`bench_store`]), wraps
//! predictors from four families behind one lifecycle ([`predictor`]), and
//! evaluates them over budget grids ([`eval`]) and inside search loops
//! ([`nas`]).

pub mod arch_space;
pub mod bench_store;
pub mod error;
pub mod eval;
pub mod lc_pred;
pub mod linalg;
pub mod microbench;
pub mod model_pred;
pub mod nas;
pub mod omni;
pub mod predictor;
pub mod scalar;
pub mod seed;
pub mod zerocost;

pub use arch_space::{Architecture, EncodingKind, SearchSpace};
pub use bench_store::{BenchmarkRecord, BenchmarkStore, CostModel, StoreHeader};
pub use error::{Error, Result};
pub use predictor::{BudgetLedger, Prediction, Predictor, PredictorSpec};
pub use scalar::{Dual, Scalar};

/// Double-precision network, the type every benchmark build trains.
pub type Network64 = microbench::Network<f64>;
pub type Network32 = microbench::Network<f32>;
/// Network carrying forward-mode tangents, used for Hessian-vector products.
pub type DualNetwork64 = microbench::Network<Dual<f64>>;
