use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid constants: {0}")]
    InvalidConstants(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no bins")]
    NoBins,

    #[error("range error: no bins fully contained in [{lo}, {hi}] keV")]
    EmptyRange { lo: f64, hi: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
