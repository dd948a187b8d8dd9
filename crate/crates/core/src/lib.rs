//! Transfer learning toolkit for small-molecule property prediction.
//!
//! The crate covers the full pipeline at desk scale: SMILES parsing into
//! molecular graphs, seven graph-based descriptors, hashed circular
//! fingerprints, a small graph-convolutional network with manual
//! backpropagation and Adam, donor→acceptor weight transfer (feature
//! extraction or fine tuning), diversity-based subset selection, a
//! random-forest baseline over fingerprints, kNN applicability-domain
//! estimation, and the evaluation metrics (R², ROC AUC, PCA, rank sums)
//! used to compare the three model families.
//!
//! Everything is deterministic given explicit seeds: RNGs are ChaCha8
//! streams, fingerprints use a fixed platform-independent mixing hash, and
//! no computation depends on hash-map iteration order.

pub mod analysis;
pub mod appdomain;
pub mod baseline;
pub mod datagen;
pub mod fingerprint;
pub mod hash;
pub mod linalg;
pub mod molgraph;
pub mod neuralnet;
pub mod sampling;
pub mod task;
pub mod transfer;

pub use task::Task;

#[cfg(test)]
pub(crate) mod testutil;
