//! Deep convolutional forest (DCF) for short-text spam classification.
//!
//! Messages are embedded into word matrices, passed through fixed random
//! convolution filters with ReLU and global max-pooling, and classified by a
//! self-growing cascade of levels. Each level holds two random forests and two
//! extremely randomized tree ensembles; the eight class probabilities a level
//! emits are appended to the next level's features. Growth stops once the
//! validation accuracy no longer improves.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! at the crate root pin the common `f64` instantiation.

pub mod balance;
pub mod baseline;
pub mod cascade;
pub mod config;
pub mod convnet;
pub mod corpus;
pub mod embedding;
mod error;
pub mod forest;
pub mod metrics;
mod scalar;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use corpus::Label;

/// Word vectors in double precision.
pub type EmbeddingTable = embedding::EmbeddingTable<f64>;
/// Word vectors in single precision.
pub type EmbeddingTable32 = embedding::EmbeddingTable<f32>;
pub type WordMatrix = embedding::WordMatrix<f64>;
pub type FilterBank = convnet::FilterBank<f64>;
pub type FeatureVector = convnet::FeatureVector<f64>;
pub type Forest = forest::Forest<f64>;
pub type Forest32 = forest::Forest<f32>;
pub type ClassProbabilities = forest::ClassProbabilities<f64>;
pub type CascadeModel = cascade::CascadeModel<f64>;
pub type CascadeModel32 = cascade::CascadeModel<f32>;
pub type EvalReport = metrics::EvalReport<f64>;
