use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("metadata schema error: {0}")]
    MetadataSchema(String),

    #[error("invalid timestamp {text:?}{}: {reason}", row.map(|r| format!(" on row {r}")).unwrap_or_default())]
    TimestampFormat {
        row: Option<usize>,
        text: String,
        reason: String,
    },

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt file: {reason} (expected {expected} bytes, found {actual})")]
    CorruptFile {
        reason: String,
        expected: u64,
        actual: u64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("segment produced no analysis frames")]
    EmptySegment,

    #[error(transparent)]
    Tol(#[from] TolConfigError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Violated precondition of third-octave analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TolConfigError {
    #[error("Signal incompatible with TOL computation, it should be longer than a second ({length} samples at {sample_rate} Hz).")]
    SignalTooShort { length: usize, sample_rate: f64 },

    #[error("Incorrect windowFunction for TOL, it should be of size sampleRate (nfft {nfft}, sample rate {sample_rate} Hz).")]
    WindowNotSampleRate { nfft: usize, sample_rate: f64 },

    #[error("Incorrect lowFreq for TOL, it should be higher than 1.0 (got {0}).")]
    LowFreqTooLow(f64),

    #[error("Incorrect highFreq for TOL, it should be lower than sampleRate/2 (got {high_freq}, sample rate {sample_rate} Hz).")]
    HighFreqAboveNyquist { high_freq: f64, sample_rate: f64 },

    #[error("Incorrect lowFreq,highFreq for TOL, lowFreq is higher than highFreq ({low_freq} >= {high_freq}).")]
    InvertedRange { low_freq: f64, high_freq: f64 },
}
