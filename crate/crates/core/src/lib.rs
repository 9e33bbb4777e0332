//! Frozen-backbone text classification: multi-model embedding fusion, a
//! trainable classifier head, and runtime/energy/budget accounting.

pub mod classifier;
pub mod cost;
mod error;
pub mod fusion;
pub mod linalg;
pub mod store;

pub use error::{Error, Result};
pub use fusion::{FusionStrategy, ProjectionParams, SourceShape};
pub use linalg::Matrix;
pub use store::{DatasetBundle, EmbeddingMatrix, SyntheticSpec};
