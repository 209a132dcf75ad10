use thiserror::Error;

/// Errors produced while building matrices, precoders or running trials.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CiaError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid configuration `{key}`: {constraint}")]
    Config { key: String, constraint: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The aggregate interference matrix lost rank, so its kernel is wider
    /// than the cyclic prefix and the null-space precoder is ill defined.
    #[error("degenerate channel: numerical rank {rank}, expected {expected}")]
    DegenerateChannel { rank: usize, expected: usize },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("outer precoder needs at least one non-served receiver (K = 1)")]
    NoNeighbors,

    #[error("linear algebra failure: {0}")]
    Decomposition(String),

    #[error("trial {index}: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<CiaError>,
    },
}

impl CiaError {
    pub(crate) fn config(key: &str, constraint: impl Into<String>) -> Self {
        CiaError::Config {
            key: key.to_string(),
            constraint: constraint.into(),
        }
    }

    pub(crate) fn in_trial(self, index: usize) -> Self {
        CiaError::Trial {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, CiaError>;
