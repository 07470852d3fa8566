//! Exit codes and the mapping from library errors onto them.

use std::fmt::Display;

use sisvae::{DataError, EvalError, NetsError, ScoreError, TrainError};

pub const BAD_ARGS: u8 = 2;
pub const IO: u8 = 3;
pub const NON_FINITE: u8 = 4;
pub const DIM_MISMATCH: u8 = 5;
pub const EVAL_INPUT: u8 = 6;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(path: &std::path::Path) -> impl FnOnce(Failure) -> Failure + '_ {
        move |f| Failure::new(f.code, format!("{}: {}", path.display(), f.message))
    }

    pub fn io(what: impl Display, err: impl Display) -> Self {
        Failure::new(IO, format!("{what}: {err}"))
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let code = match e {
            DataError::InvalidConfig(_) | DataError::Placement { .. } => BAD_ARGS,
            DataError::NonFinite { .. } | DataError::Cholesky(_) => NON_FINITE,
            DataError::Empty | DataError::Shape(_) | DataError::Parse { .. } | DataError::Io(_) => {
                IO
            }
        };
        Failure::new(code, e.to_string())
    }
}

impl From<NetsError> for Failure {
    fn from(e: NetsError) -> Self {
        let code = match e {
            NetsError::InvalidConfig(_) => BAD_ARGS,
            NetsError::Shape { .. } => DIM_MISMATCH,
            NetsError::InvalidSequence(_) | NetsError::Tensor(_) => NON_FINITE,
            NetsError::Checkpoint(_) | NetsError::Io(_) | NetsError::Json(_) => IO,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Nets(inner) => inner.into(),
            TrainError::InvalidConfig(_) | TrainError::EmptyDataset => {
                Failure::new(BAD_ARGS, e.to_string())
            }
            TrainError::Shape(_) => Failure::new(DIM_MISMATCH, e.to_string()),
            TrainError::NonFinite { .. } | TrainError::Objective(_) => {
                Failure::new(NON_FINITE, e.to_string())
            }
            TrainError::Io(_) => Failure::new(IO, e.to_string()),
        }
    }
}

impl From<ScoreError> for Failure {
    fn from(e: ScoreError) -> Self {
        match e {
            ScoreError::Nets(inner) => inner.into(),
            ScoreError::TooShort { .. } | ScoreError::NoPasses => {
                Failure::new(BAD_ARGS, e.to_string())
            }
            ScoreError::NonFinite { .. } => Failure::new(NON_FINITE, e.to_string()),
            ScoreError::Shape(_) => Failure::new(DIM_MISMATCH, e.to_string()),
            ScoreError::Parse { .. } | ScoreError::Io(_) => Failure::new(IO, e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let code = match e {
            EvalError::Io(_) => IO,
            _ => EVAL_INPUT,
        };
        Failure::new(code, e.to_string())
    }
}
