//! Retrofitting frozen sentence embeddings for emotion awareness.
//!
//! A small residual encoder is trained over frozen base embeddings with a
//! supervised contrastive objective (optionally widened by a cross-batch
//! memory) plus a penalty that keeps the retrofitted vectors close to the
//! originals. The crate also carries the evaluation protocol used to judge a
//! retrofit: k-means clustering indices, nearest-neighbour retrieval probes,
//! embedding drift, KNN classification and few-shot subsampling, and the
//! grid sweep that selects a configuration.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod loss;
pub mod optim;
pub mod rng;
pub mod sampler;
pub mod selection;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};

/// Engine version string embedded in every artifact.
pub const ENGINE_VERSION: &str = concat!("emoretrofit ", env!("CARGO_PKG_VERSION"));
