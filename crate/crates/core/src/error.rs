use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::prompt::{SampleRecord, WordSet};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),

    #[error("invalid group space: {0}")]
    InvalidGroupSpace(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid level r={level} for k={words} words and pivot {pivot}")]
    InvalidLevel {
        level: usize,
        words: usize,
        pivot: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no transmutation candidates for mask {mask}")]
    NoCandidates { mask: WordSet },

    #[error("transmuter unavailable: {0}")]
    TransmuterUnavailable(String),

    #[error("generator unavailable: {0}")]
    GeneratorUnavailable(String),

    #[error("classifier unavailable: {0}")]
    ClassifierUnavailable(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("empty sample batch")]
    EmptyBatch,

    #[error("incomplete run: no distribution for mask {missing}")]
    IncompleteRun { missing: WordSet },

    #[error("oracle supports at most {max} words, got {words}")]
    OracleSize { words: usize, max: usize },

    #[error("batch failed after {} completed records: {source}", completed.len())]
    PartialBatch {
        completed: Vec<SampleRecord>,
        source: Box<Error>,
    },
}

impl Error {
    /// Whether retrying the failed call can succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            Error::TransmuterUnavailable(_)
            | Error::GeneratorUnavailable(_)
            | Error::ClassifierUnavailable(_) => true,
            Error::PartialBatch { source, .. } => source.is_retryable(),
            _ => false,
        }
    }

    /// True for failures caused by a model backend rather than by the input.
    pub fn is_backend(&self) -> bool {
        match self {
            Error::TransmuterUnavailable(_)
            | Error::GeneratorUnavailable(_)
            | Error::ClassifierUnavailable(_)
            | Error::Protocol(_)
            | Error::NoCandidates { .. } => true,
            Error::PartialBatch { source, .. } => source.is_backend(),
            _ => false,
        }
    }
}
