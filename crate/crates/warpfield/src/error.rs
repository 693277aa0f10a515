use thiserror::Error;

/// Errors produced by the warpfield library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient history: period {period} needs more than {required} prior periods")]
    InsufficientHistory { period: u32, required: u32 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("numerical failure: {message} (condition estimate {condition:.3e})")]
    IllConditioned { message: String, condition: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad configuration or usage rather than a
    /// runtime/numerical failure. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InsufficientHistory { .. }
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::EmptyInput(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
