//! Kriging surrogates with kernels for hierarchical (conditionally active)
//! search spaces, a small model-based optimizer, and a benchmark harness
//! comparing the kernels.

pub mod bench;
pub mod cli;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod optim;
pub mod smbo;
pub mod space;

pub use error::{BenchError, CliError, KernelError, ModelError, OptimError, SmboError, SpaceError};
pub use gp::{FitConfig, KrigingModel};
pub use kernels::{KernelKind, KernelParams};
pub use smbo::{expected_improvement, smbo_run, SmboConfig, SmboHistory};
pub use space::{ActivityRule, Dimension, Point, Predicate, SearchSpace};
