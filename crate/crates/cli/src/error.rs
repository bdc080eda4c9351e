use std::fmt::Display;

use thiserror::Error;

use tca_core::compare::CompareError;
use tca_core::curation::CurationError;
use tca_core::ingest::export::ExportError;
use tca_core::ingest::mask::MaskError;
use tca_core::ingest::npy::NpyError;
use tca_core::ingest::TensorFileError;

/// Every failure maps to one of the frozen exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("no usable replicate: {0}")]
    NoUsableReplicate(String),
    #[error("{0}")]
    NoStableRank(String),
    #[error("{0}")]
    RankMismatch(String),
    #[error("curation failed: {0}")]
    Curate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::NoUsableReplicate(_) => 4,
            CliError::NoStableRank(_) => 5,
            CliError::RankMismatch(_) => 6,
            CliError::Curate(_) => 7,
        }
    }

    pub fn io(context: impl Display, err: impl Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<TensorFileError> for CliError {
    fn from(e: TensorFileError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ExportError> for CliError {
    fn from(e: ExportError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<NpyError> for CliError {
    fn from(e: NpyError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CompareError> for CliError {
    fn from(e: CompareError) -> Self {
        match e {
            CompareError::RankMismatch { .. } => CliError::RankMismatch(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<CurationError> for CliError {
    fn from(e: CurationError) -> Self {
        match e {
            CurationError::Npy(NpyError::Io(_)) => CliError::Io(e.to_string()),
            CurationError::Csv(ref c) if c.is_io_error() => CliError::Io(e.to_string()),
            other => CliError::Curate(other.to_string()),
        }
    }
}

impl From<MaskError> for CliError {
    fn from(e: MaskError) -> Self {
        match e {
            MaskError::Npy(_) | MaskError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}
