//! Morphology-conditioned actor-critic training and evaluation.

mod error;
pub mod morphology;
pub mod env;
pub mod nets;
pub mod reward;
pub mod ppo;
pub mod eval;
mod seed;

pub use seed::derive_seed;

pub use error::{CoreError, Result};
