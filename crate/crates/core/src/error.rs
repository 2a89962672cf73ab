use thiserror::Error;

/// Errors produced anywhere in the training / inference pipeline.
///
/// Every variant renders as a single line starting with a stable,
/// machine-parsable prefix (`format:`, `config:`, ...), which the CLI
/// forwards verbatim.
#[derive(Debug, Error)]
pub enum KgeError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Binary file (KGT/KGF/KGC) did not decode.
    #[error("format: {what} at byte offset {offset}: {message}")]
    Format {
        what: &'static str,
        offset: u64,
        message: String,
    },

    /// Text file (TSV, config) did not parse.
    #[error("parse: {what} line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error("config: {key}: {message}")]
    Config { key: String, message: String },

    #[error("shape: {0}")]
    Shape(String),

    #[error("partition: {0}")]
    Partition(String),

    #[error("sampler: {0}")]
    Sampler(String),

    #[error("fabric: {0}")]
    Fabric(String),

    /// A micro-batch plan does not match the shard layout.
    #[error("plan: worker {worker} bucket ({worker},{bucket}): {message}")]
    Plan {
        worker: usize,
        bucket: usize,
        message: String,
    },

    #[error("schedule: {0}")]
    Schedule(String),

    #[error("query: {0}")]
    Query(String),

    #[error("ensemble: {0}")]
    Ensemble(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("benchmark: {0}")]
    Benchmark(String),
}

impl KgeError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        KgeError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn format(what: &'static str, offset: u64, message: impl Into<String>) -> Self {
        KgeError::Format {
            what,
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn parse(what: &'static str, line: usize, message: impl Into<String>) -> Self {
        KgeError::Parse {
            what,
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, KgeError>;
