use thiserror::Error;

/// Errors produced by the synthesis engine and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Bad magic, version, truncation or unparseable metadata.
    #[error("format error: {0}")]
    Format(String),

    /// Tensor names or shapes do not match what the model configuration requires.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty spectrogram: {0}")]
    EmptySpectrogram(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("control file row {row}: {message}")]
    Control { row: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
