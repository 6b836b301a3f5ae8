use std::path::PathBuf;

use crate::corpus::Span;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sentence has no tokens")]
    EmptySentence,

    #[error("token {index} is empty")]
    EmptyToken { index: usize },

    #[error("span [{}, {}] is out of bounds for a sentence of {len} tokens", span.start, span.end)]
    SpanOutOfBounds { span: Span, len: usize },

    #[error("span [{}, {}] ends before it starts", span.start, span.end)]
    InvertedSpan { span: Span },

    #[error("predicate has no pieces")]
    EmptyPredicate,

    #[error("predicate pieces are unsorted or overlapping")]
    OverlappingPieces,

    #[error("frame {0:?} is not in the ontology")]
    UnknownFrame(String),

    #[error("role {role:?} is not defined for frame {frame:?}")]
    UnknownRole { frame: String, role: String },

    #[error("invalid ontology: {0}")]
    Ontology(String),

    #[error("lemmatizer returned {got} lemmas for {expected} tokens")]
    LemmaCount { expected: usize, got: usize },

    #[error("lemmatizer returned an empty lemma for token {index}")]
    EmptyLemma { index: usize },

    #[error("unknown model variant {0:?}")]
    UnknownVariant(String),

    #[error("predicate edge needs two distinct spans")]
    SelfEdge,

    #[error("node {0} has no frame distribution")]
    MissingFrameDistribution(usize),

    #[error("non-finite {term} loss")]
    NonFiniteLoss { term: &'static str },

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("sentence {index}: {message}")]
    Alignment { index: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_line(self, line: usize) -> Self {
        Error::Line {
            line,
            source: Box::new(self),
        }
    }
}
