//! Embedding fusion: pooling over depths, concatenation, alignment
//! projections and co-occurrence pooling with power normalization.

mod fuse;
mod ops;
mod projection;
mod strategy;

pub use fuse::{fuse, fuse_backward, FuseInput, FusedBatch, SourceBatch};
pub use ops::{avg_pool, concat, cooccurrence, gram, max_pool, pn, pn_derivative, power_normalize};
pub use projection::{Projection, ProjectionGrads, ProjectionParams};
pub use strategy::{
    FusionStrategy, LlmPart, Recipe, SourceShape, BERT_SOURCE, DEFAULT_PROJECTION_DIM,
    DEFAULT_SIGMA, LLM_SOURCE, ROBERTA_SOURCE, STRATEGY_COUNT,
};
