//! Smoothness-inducing sequential variational auto-encoder for unsupervised
//! point-level anomaly detection on multi-dimensional time series.
//!
//! The crate is organised bottom-up:
//!
//! - [`diffcore`]: fp64 tensors and reverse-mode differentiation.
//! - [`nets`]: GRU recurrence, feature extractors, Gaussian heads, unroll.
//! - [`objective`]: KL terms, Gaussian likelihood, smoothness penalties.
//! - [`training`]: normalization, windowing, Adam, the training loop.
//! - [`scoring`]: Monte-Carlo reconstruction probability and error scores.
//! - [`evalkit`]: AUROC, AUPRC, best F1, precision@K, History Average.
//! - [`datagen`]: synthetic generators and CSV persistence.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod diffcore;
pub mod evalkit;
pub mod nets;
pub mod objective;
pub mod rng;
pub mod scoring;
pub mod training;

pub use datagen::{DataError, SeriesMatrix};
pub use diffcore::{Tape, Tensor, TensorError, Var};
pub use evalkit::{EvalError, EvalReport, LabeledScores};
pub use nets::{Checkpoint, ModelConfig, ModelParams, NetsError, ParamId};
pub use objective::{LossBreakdown, ObjectiveError, Regularizer};
pub use scoring::{Criterion, ScoreError, ScoreMatrix};
pub use training::{Chunk, TrainConfig, TrainError, TrainHistory};
