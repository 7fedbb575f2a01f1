//! Minimal dense-matrix autodiff for small MLP graphs.
//!
//! Everything is 64-bit. A [`Graph`] records operations eagerly as they are
//! applied, and [`Graph::backward`] replays the tape in reverse to produce
//! [`Gradients`] for the parameters held in a [`ParamStore`].

mod adam;
pub mod checkpoint;
mod error;
mod graph;
mod params;
mod tensor;

pub use adam::{clip_global_norm, Adam, AdamConfig, StepOutcome};
pub use checkpoint::{Checkpoint, SCHEMA_VERSION};
pub use error::AutodiffError;
pub use graph::{Graph, Var};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, AutodiffError>;
