//! Same-patient ECG verification and patient-assignment mistake detection.
//!
//! The crate is organised as a pipeline:
//!
//! - [`ecgstore`]: quantized record storage, 8/12 lead algebra, resampling
//!   and length normalisation, plus the `ECGG` container format.
//! - [`preprocess`]: per-lead wavelet baseline-wander and high-frequency
//!   noise removal followed by z-scoring.
//! - [`tensornet`]: a small reverse-mode autodiff core (1D convolution,
//!   dense layers, losses, Adam, checkpoints).
//! - [`embedder`]: the circular-dilated and residual 1D embedding networks.
//! - [`discriminator`]: the weighted-distance discriminator head and its
//!   Siamese training loop.
//! - [`identity`]: the patient vector database and cluster likelihoods.
//! - [`evalharness`]: samplers, gallery-probe matching, the overseer
//!   simulation and metrics.
//! - [`synthgen`]: deterministic synthetic ECG cohorts with ground truth.
//!
//! Data-parallel loops go through [`Exec`]; building without the default
//! `parallel` feature makes every loop sequential.

pub mod discriminator;
pub mod ecgstore;
pub mod embedder;
pub mod evalharness;
mod exec;
pub mod identity;
pub mod preprocess;
pub mod synthgen;
pub mod tensornet;

pub use exec::Exec;
