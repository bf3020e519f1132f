use std::path::PathBuf;

/// Errors produced anywhere in the detection stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The provider could not be reached (after retries) while fetching a sentence.
    #[error("transport error at sentence {sent_index}: {message}")]
    Transport { sent_index: usize, message: String },

    /// The provider answered, but the answer violates the wire contract.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Stored or received numbers violate a data invariant (e.g. positive logprob).
    #[error("data integrity error: {0}")]
    DataIntegrity(String),

    #[error("no logprob record for doc_id {doc_id:?}, sent_index {sent_index}")]
    MissingRecord { doc_id: String, sent_index: usize },

    #[error("no testable sentences")]
    NoTestableSentences,

    #[error("n too small for gamma0: n = {n}, gamma0 = {gamma0}")]
    EmptyRange { n: usize, gamma0: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("threshold unresolvable: {0}")]
    Threshold(String),

    #[error("insufficient data: required {required}, available {available} ({what})")]
    Insufficient {
        what: &'static str,
        required: usize,
        available: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
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
