//! Deterministic federated-learning simulator for training under noisy labels.
//!
//! Clients train a small MLP on their local shard while exchanging class-wise
//! feature centroids with a coordinator. Each client selects confident samples
//! by comparing centroid-similarity labels with the given labels, and corrects
//! the rest with soft pseudo-labels produced by the broadcast global model.
//!
//! Module map:
//!
//! - [`numkit`]: dense matrices, the two-layer MLP with hand-written backprop,
//!   momentum SGD and cosine similarity.
//! - [`noise`]: transition matrices and label corruption.
//! - [`datagen`]: Gaussian blobs, IDX ingestion and i.i.d. partitioning.
//! - [`localnode`]: the client-side local update.
//! - [`coordinator`]: client selection, aggregation and the round loop.
//! - [`bench`]: experiment configuration, metrics and CSV output.

pub mod bench;
pub mod coordinator;
pub mod datagen;
mod error;
pub mod localnode;
pub mod noise;
pub mod numkit;
pub mod rng;

pub use error::{Error, Result};
