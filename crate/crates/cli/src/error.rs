use thiserror::Error;

/// Process exit codes (sysexits-style).
pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Numeric(String),

    #[error(transparent)]
    Core(#[from] esi_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn config(line: usize, message: impl Into<String>) -> Self {
        CliError::Config {
            line,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use esi_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Core(
                E::Numerical(_) | E::Convergence { .. } | E::LinAlg(_) | E::Degenerate(_),
            ) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
