use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
///
/// Variants map one-to-one onto the failure classes callers need to
/// distinguish: malformed input files, invalid topology or geometry, and
/// numerical breakdowns. The CLI turns them into exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("invalid mesh topology: {0}")]
    Topology(String),

    #[error("limit exceeded: {0}")]
    Limit(String),

    #[error("index {index} out of range (size {len})")]
    Index { index: usize, len: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("{what} did not converge after {iterations} iterations (last {measure}: {value:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        measure: &'static str,
        value: f64,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("linear algebra error: {0}")]
    LinAlg(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
