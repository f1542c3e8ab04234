use std::io;

use thiserror::Error;

use crate::grid::GridPosition;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("event {index} at ({}, {}) lies outside the layout", position.row, position.col)]
    EventOutOfBounds { index: usize, position: GridPosition },

    #[error("position ({}, {}) lies outside the layout", .0.row, .0.col)]
    PositionOutOfBounds(GridPosition),

    #[error("linear index {index} outside [0, {total})")]
    IndexOutOfBounds { index: usize, total: usize },

    #[error("invalid session {session_id}: {reason}")]
    InvalidSession { session_id: String, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no observations to fit")]
    EmptyData,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("label out of range: {0}")]
    LabelOutOfRange(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            reason: reason.into(),
        }
    }

    /// True for failures caused by bad input data rather than by the numerics.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::InvalidConfig(_))
    }
}
