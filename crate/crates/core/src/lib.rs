//! Distributed knowledge-graph-embedding training and inference on
//! simulated lockstep workers.
//!
//! Entities are sharded evenly across `D` workers. Each training step every
//! worker draws positives whose heads it owns and whose tails are spread
//! evenly over all shards, plus an equal number of shared negative tails
//! from every shard, so that all embedding traffic is a balanced AllToAll.
//! Relation embeddings and feature projections are replicated via
//! AllGather. Inference scores every query against every entity and
//! reduces per-shard top-K lists.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod real;
pub mod runtime;
pub mod sampling;
pub mod seed;
pub mod train;
mod wire;

pub use error::{KgeError, Result};
pub use real::{Real, StoragePrecision};
