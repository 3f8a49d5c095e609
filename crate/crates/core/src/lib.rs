//! Cost-aware LLM routing from prefill activations.
//!
//! The crate covers the whole path from hidden-state dumps and binary
//! correctness labels to an evaluated router:
//!
//! - [`ingest`]: the activation container format, label tables, pool
//!   configuration and stratified splits.
//! - [`geometry`]: layer probes (effective dimensionality, anisotropy,
//!   Fisher separability) and routing-layer selection.
//! - [`features`]: PCA models and per-target feature concatenation.
//! - [`predictors`]: the shared-trunk correctness network, the L2 logistic
//!   probe used for layer search, and exact kNN baselines.
//! - [`routing`]: cost estimation, the λ-weighted routing score and sweeps.
//! - [`evaluation`]: AUC, Brier, routing deltas and normalized
//!   accuracy/inverse-cost curve metrics.
//! - [`synth`]: synthetic datasets with planted correctness signal.
//! - [`pipeline`]: the end-to-end run driven by a [`pipeline::RunConfig`].

pub mod container;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod ingest;
pub(crate) mod linalg;
pub mod pipeline;
pub mod predictors;
pub mod report;
pub mod routing;
pub mod synth;

pub use error::{Error, Result};
