use std::path::PathBuf;

/// Errors produced anywhere in the coordination pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("manifest {path}, row {row}: {message}")]
    Manifest {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: missing column(s) {}", .missing.join(", "))]
    MissingColumns { path: PathBuf, missing: Vec<String> },

    #[error("{path}: non-finite value at data row {row} (frame {frame}), channel '{channel}'")]
    NonFinite {
        path: PathBuf,
        row: usize,
        frame: usize,
        channel: String,
    },

    #[error("invalid feature track: {0}")]
    InvalidTrack(String),

    #[error("invalid delay configuration: {0}")]
    InvalidDelayConfig(String),

    #[error(
        "window too short for delay spacing {spacing}: need {required} frames, have {available}"
    )]
    WindowTooShort {
        spacing: usize,
        required: usize,
        available: usize,
    },

    #[error("{provenance}: zero variance in channel '{channel}' at delay index {delay}")]
    ZeroVariance {
        provenance: String,
        channel: String,
        delay: usize,
    },

    #[error("coordination matrix rejected ({provenance}): {message}")]
    InvalidMatrix { provenance: String, message: String },

    #[error("symmetric eigensolver failed for {provenance}: {message}")]
    EigenSolver { provenance: String, message: String },

    #[error("spectrum length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("aggregation: {0}")]
    Aggregation(String),

    #[error("correlation undefined: {0}")]
    Correlation(String),

    #[error("duplicate subject row '{0}' in score table")]
    DuplicateSubject(String),

    #[error("no healthy-control sessions in manifest")]
    NoHealthyControls,

    #[error("structure mismatch: reference has {reference} ranks, configuration implies {expected}")]
    StructureMismatch { reference: usize, expected: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
