//! One-shot, data-similarity based user clustering for multi-task
//! hierarchical federated learning, plus a simulator for the training that
//! follows.
//!
//! The pipeline is:
//!
//! 1. every user summarizes its data with the leading eigenvectors of its
//!    Gram matrix ([`similarity`]);
//! 2. pairwise relevance scores are symmetrized into a similarity matrix and
//!    clustered with agglomerative clustering ([`clustering`]);
//! 3. each cluster trains under its own local parameter server while a global
//!    server averages only the shared leading layers ([`fl`]).
//!
//! [`experiment`] wires these together with the loaders in [`data`].

pub mod clustering;
pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod fl;
pub mod rng;
pub mod similarity;

pub use error::{Error, Result};
pub use features::FeatureMatrix;
