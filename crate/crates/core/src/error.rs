use std::io;

/// Errors raised by the modeling engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty document")]
    EmptyDocument,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("position {position} out of range for length {length}")]
    PositionOutOfRange { position: usize, length: usize },
    #[error("document {doc} has length {length}, shorter than filter width {width}")]
    DocumentTooShort { doc: usize, length: usize, width: usize },
    #[error("zero Poisson rate at observed position {position} of document {doc}")]
    ZeroRate { doc: usize, position: usize },
    #[error("all-zero allocation probabilities for a positive count")]
    DegenerateAllocation,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("missing label for document {0}")]
    MissingLabel(usize),
    #[error("classification requires at least two classes")]
    SingleClass,
    #[error("invalid node {node} at layer {layer}")]
    InvalidNode { layer: usize, node: usize },
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("in document {doc}: {source}")]
    InDocument {
        doc: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Attach a document index, leaving already-attributed errors untouched.
    pub(crate) fn in_document(self, doc: usize) -> Self {
        match self {
            Error::ZeroRate { position, .. } => Error::ZeroRate { doc, position },
            e @ Error::InDocument { .. } => e,
            e @ Error::DocumentTooShort { .. } => e,
            e => Error::InDocument {
                doc,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
