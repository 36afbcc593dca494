use thiserror::Error;

/// Errors raised across the shape-model pipeline.
///
/// Every variant names the offending entity so the CLI can report it
/// verbatim. [`Error::exit_code`] maps each variant onto the CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("insufficient data for {what}: need at least {needed}, got {got}")]
    InsufficientData {
        what: String,
        needed: usize,
        got: usize,
    },

    #[error("degenerate geometry in {0}")]
    Degenerate(String),

    #[error("rank deficient {what}: singular value {value:e} below tolerance {tolerance:e}")]
    RankDeficient {
        what: String,
        value: f64,
        tolerance: f64,
    },

    #[error("missing landmark `{0}`")]
    MissingLandmark(String),

    #[error("unknown measurement label `{0}`")]
    UnknownLabel(String),

    #[error("topology mismatch: expected `{expected}`, got `{got}`")]
    TopologyMismatch { expected: String, got: String },

    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("parse error in {path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dimension(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            got,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of the numerics (rank loss, degenerate fits).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Degenerate(_) | Error::RankDeficient { .. })
    }

    /// CLI exit code: 2 for data/validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }
}
