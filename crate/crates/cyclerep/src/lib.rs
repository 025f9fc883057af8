//! Self-supervised representation learning for periodic sequences.
//!
//! Frames of a cyclic process are embedded so that frames at the same
//! cycle phase land close together. Triplets are mined from each clip's
//! temporal self-similarity matrix, a small projection head is trained
//! with a triplet loss and hand-derived gradients, and the learned
//! embeddings feed weighted k-NN periodicity classification and
//! unsupervised anomaly scoring.
//!
//! Modules:
//! - [`seqdata`]: synthetic periodic sequences, anomaly injection, the
//!   frozen encoder, dataset files.
//! - [`head`]: the trainable projection head, Adam, checkpoints.
//! - [`tsm`]: self-similarity matrices, autocorrelation, 1-D PCA, cycle
//!   features.
//! - [`mining`]: triplet mining strategies and feature-space augments.
//! - [`train`]: triplet loss and the training loop.
//! - [`eval`]: weighted k-NN with leave-one-video-out, AP/F1 metrics.
//! - [`anomaly`]: nearest-neighbor and LOF anomaly scoring.
//! - [`harness`]: experiment configs and the CLI command implementations.

pub mod anomaly;
pub mod error;
pub mod eval;
pub mod harness;
pub mod head;
pub mod mat;
pub mod mining;
mod rng;
pub mod seqdata;
pub mod train;
pub mod tsm;

pub use error::{Error, Result};
pub mod rngpub { pub fn derive_seed_pub(a: u64, b: u64) -> u64 { crate::rng::derive_seed(a, b) } }
