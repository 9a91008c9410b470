use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors shared by every module of the laboratory.
///
/// The CLI maps `Internal` to exit code 2 and everything else to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} {index} out of range (valid: 0..{len})")]
    Range {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("cycle does not bound a finite region: winding ({wx}, {wy})")]
    NoInterior { wx: i64, wy: i64 },

    #[error("{what}: size {requested} exceeds cap {cap}")]
    Size {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("run exceeded its bound of {limit} {unit}; {remaining} remaining")]
    BoundedRun {
        limit: u64,
        unit: &'static str,
        remaining: usize,
    },

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn range(what: &'static str, index: usize, len: usize) -> Self {
        Error::Range { what, index, len }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Attach a pipeline stage tag.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures that indicate a bug rather than bad input.
    pub fn is_internal(&self) -> bool {
        match self {
            Error::Internal(_) => true,
            Error::Stage { source, .. } => source.is_internal(),
            _ => false,
        }
    }
}
