//! Relation-aware self-attention knowledge tracing.
//!
//! Predicts whether a student answers the next exercise correctly from their
//! interaction history. Past interactions are weighted by a self-attention
//! mechanism whose weights are fused with two sources of contextual
//! information: exercise-to-exercise relations mined from performance logs
//! and exercise text, and an exponential forgetting kernel over elapsed time.
//!
//! Pipeline stages, each its own module:
//!
//! - [`corpus`] — TEX-aware tokenization and SIF text embeddings
//! - [`relation`] — Phi/cosine relation matrix mining
//! - [`dataio`] — log parsing, student splits, fixed-length windows
//! - [`numerics`] — dense tensors, reverse-mode autodiff, Adam, gradcheck
//! - [`model`] — the relation-aware attention network
//! - [`traineval`] — training loop, AUC/ACC metrics, ablations, exports
//! - [`synth`] — synthetic student simulator with known ground truth

pub mod corpus;
pub mod dataio;
pub mod model;
pub mod numerics;
pub mod relation;
pub mod rng;
pub mod synth;
pub mod traineval;

pub use numerics::Tensor;
