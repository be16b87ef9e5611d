use thiserror::Error;

use crate::lineage::SeedId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),

    #[error("branch {id} out of range for a program with {count} branches")]
    BranchOutOfRange { id: u32, count: usize },

    #[error("seed trace is empty")]
    EmptyTrace,

    #[error("invalid program model: {0}")]
    InvalidProgram(String),

    #[error("invalid program source `{source_str}`: {reason}")]
    InvalidSource { source_str: String, reason: String },

    #[error("unknown preset `{name}` (available: {available})")]
    UnknownPreset { name: String, available: String },

    #[error("seed {0} already recorded")]
    DuplicateSeed(SeedId),

    #[error("parent {parent} of seed {child} is not recorded")]
    UnknownParent { child: SeedId, parent: SeedId },

    #[error("seed {0} is not a selection root")]
    UnknownRoot(SeedId),

    #[error("invalid seed {id}: {reason}")]
    InvalidSeed { id: SeedId, reason: String },

    #[error("invalid model parameter: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("training example contains a non-finite value")]
    NonFinite,

    #[error("training data is empty")]
    EmptyData,

    #[error("model is not fitted")]
    Unfitted,

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("model file checksum mismatch")]
    Checksum,

    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error("sample too small: need at least {min} observations, got {got}")]
    SampleSize { min: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot parse program file: {0}")]
    ProgramFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
