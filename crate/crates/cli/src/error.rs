use std::path::PathBuf;

use thiserror::Error;

/// Every failure the command line can report. Each variant maps to its own
/// exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {reason}")]
    Config { reason: String },
    #[error("unknown scene {name:?} (built-ins: {known})")]
    UnknownScene { name: String, known: String },
    #[error("camera file not found: {}", path.display())]
    CameraFileNotFound { path: PathBuf },
    #[error("{stage} stage: input not found: {}", path.display())]
    MissingInput { stage: &'static str, path: PathBuf },
    #[error("{stage} stage: dimension mismatch: {detail}")]
    DimensionMismatch { stage: &'static str, detail: String },
    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: hdr_fringe::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 3,
            CliError::UnknownScene { .. } => 4,
            CliError::CameraFileNotFound { .. } => 5,
            CliError::MissingInput { .. } => 6,
            CliError::DimensionMismatch { .. } => 7,
            CliError::Stage { source, .. } => match source {
                hdr_fringe::Error::Io { .. } => 8,
                hdr_fringe::Error::Format { .. } => 9,
                hdr_fringe::Error::OutsideFieldOfView(_) => 10,
                _ => 11,
            },
        }
    }

    /// Wraps a library error, promoting size mismatches to their own variant.
    pub fn stage(stage: &'static str) -> impl Fn(hdr_fringe::Error) -> CliError {
        move |source| match source {
            hdr_fringe::Error::DimensionMismatch { .. } => CliError::DimensionMismatch {
                stage,
                detail: source.to_string(),
            },
            source => CliError::Stage { stage, source },
        }
    }
}

/// Exit code clap uses for usage errors.
pub const EXIT_USAGE: i32 = 2;
