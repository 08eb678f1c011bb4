//! Source-sample selection for transfer learning with an autoencoder that
//! maps target samples onto sparse combinations of source samples.
//!
//! The flow is: [`dataset`] loading and scaling, [`transfer::fit`] to learn
//! the autoencoder and the transform matrix, [`relevance`] weights and
//! pseudo-labels for source samples, and a weighted [`classifier`]. The
//! [`pipeline`] module strings these together.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autoencoder;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod l21solver;
pub mod lbfgs;
pub mod numerics;
pub mod pipeline;
pub mod relevance;
pub mod transfer;

pub use error::{Error, ErrorKind, Result};
pub use pipeline::{run_experiment, ExperimentConfig, ExperimentReport, SampleCount};
pub use transfer::{fit, TransferHyperParams, TransferModel};
