//! Cold-start active learning for sentence classification.
//!
//! Unlabeled sentences are scored token-by-token with a self-supervised
//! language model; the per-token surprisals at a random subsample of
//! positions form a fixed-length embedding, and k-means over those
//! embeddings picks a diverse, representative batch to annotate without any
//! task-trained model. Uncertainty- and diversity-based baselines and a
//! seeded simulation harness are included for comparison.

pub mod analysis;
pub mod classifier;
pub mod cli;
pub mod clustering;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod linalg;
pub mod seed;
pub mod simulation;
pub mod strategies;
pub mod surprisal_lm;
pub mod synthetic;

pub use error::{Error, Result};
