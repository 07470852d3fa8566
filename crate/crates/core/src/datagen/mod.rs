//! Synthetic datasets and CSV persistence.
//!
//! Two protocols are provided:
//!
//! - correlated multi-series drawn from a multi-output Gaussian process with
//!   an RBF time kernel and a random coregionalization matrix, contaminated by
//!   signed Poisson point anomalies;
//! - a Mackey-Glass trajectory with additive point anomalies and Gaussian
//!   process sub-sequence replacements.
//!
//! Every generator is a pure function of its configuration and seed.

mod csvio;
mod gp;
mod mackey;
mod series;

pub use csvio::{label_path_for, load_csv, save_csv, write_matrix_csv};
pub use gp::{
    coregionalization_matrix, correlated_preset, gen_correlated_series, gen_correlated_series_with,
    rbf_gram, SynthConfig,
};
pub use mackey::{
    gen_mackey_glass, inject_mackey_point_anomalies, inject_point_anomalies,
    inject_subseq_anomalies, mackey_preset, MackeyConfig, MackeyPreset,
};
pub use series::SeriesMatrix;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty series matrix")]
    Empty,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("Cholesky factorization failed: {0}")]
    Cholesky(String),
    #[error("could not place {count} non-overlapping segments: {detail}")]
    Placement { count: usize, detail: String },
    #[error("non-finite state {value} at step {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
