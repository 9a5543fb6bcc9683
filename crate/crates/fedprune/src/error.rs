//! Crate-wide error type.

use crate::ClientId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty scores")]
    EmptyScores,

    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),

    #[error("invalid GSM constants")]
    InvalidGsmConstants,

    #[error("length mismatch: {left} vs {right} ({context})")]
    LengthMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },

    #[error("parameter vector has {got} entries, model expects {expected}")]
    ParamDimension { got: usize, expected: usize },

    #[error("sample label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty per-sample loss vector")]
    EmptyLosses,

    #[error("client {0} has no training data")]
    EmptyClientData(ClientId),

    #[error("empty test set")]
    EmptyTestSet,

    #[error("cannot build shards: {0}")]
    InfeasibleShards(String),

    #[error("scores do not cover the active set")]
    ScoreCoverageMismatch,

    #[error("aggregation weight keys do not match update keys")]
    AggregationKeyMismatch,

    #[error("zero participants in round")]
    NoParticipants,

    #[error("participants exceed total clients: {participants} > {total}")]
    TooManyParticipants { participants: usize, total: usize },

    #[error("empty metrics series")]
    EmptyMetricsSeries,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("bad data file: {0}")]
    DataFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("round {round} failed: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps any error with the round in which it occurred.
    pub fn in_round(self, round: usize) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }
}
