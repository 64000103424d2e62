use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context} line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("duplicate doc_id `{0}`")]
    DuplicateDocId(String),

    #[error("duplicate vocabulary entry `{surface}` at line {line}")]
    DuplicateSurface { surface: String, line: usize },

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("surface form `{0}` is not in the vocabulary")]
    UnknownSurface(String),

    #[error("unknown doc_id `{0}`")]
    UnknownDocId(String),

    #[error("term {0:?} was not tracked when the index was built")]
    UntrackedTerm(Vec<u32>),

    #[error("source and target terms are identical ({0:?}); co-occurrence is undefined")]
    ExcludedPair(Vec<u32>),

    #[error("invalid index file: {0}")]
    IndexFormat(String),

    #[error("invalid loss record for task `{task_id}`: {message}")]
    InvalidRecord { task_id: String, message: String },

    #[error("task `{task_id}` is incomplete: {gaps}")]
    IncompleteTask { task_id: String, gaps: String },

    #[error("invalid task `{task_id}`: {message}")]
    InvalidTask { task_id: String, message: String },

    #[error("invalid trace for task `{task_id}`: {message}")]
    InvalidTrace { task_id: String, message: String },

    #[error("trace `{task_id}` has no tracked probability for pivot token {token}")]
    MissingTrackedToken { task_id: String, token: u32 },

    #[error("judge response has no decision for candidate token {0}")]
    MissingJudgement(u32),

    #[error("no chunk label for document `{doc_id}` chunk {chunk}")]
    MissingChunkLabel { doc_id: String, chunk: usize },

    #[error("frequency tables disagree on vocabulary size ({0} vs {1})")]
    VocabularyMismatch(usize, usize),

    #[error(
        "min_docs={min_docs} pruning is lossy at theta={theta} over {total_docs} documents; \
         lower min_docs"
    )]
    LossyPruning {
        min_docs: u64,
        theta: f64,
        total_docs: u64,
    },

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            message: message.to_string(),
        }
    }

    /// Short machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::DuplicateDocId(_) => "duplicate_doc_id",
            Error::DuplicateSurface { .. } => "duplicate_surface",
            Error::TokenOutOfRange { .. } => "token_out_of_range",
            Error::UnknownSurface(_) => "unknown_surface",
            Error::UnknownDocId(_) => "unknown_doc_id",
            Error::UntrackedTerm(_) => "untracked_term",
            Error::ExcludedPair(_) => "excluded_pair",
            Error::IndexFormat(_) => "index_format",
            Error::InvalidRecord { .. } => "invalid_record",
            Error::IncompleteTask { .. } => "incomplete_task",
            Error::InvalidTask { .. } => "invalid_task",
            Error::InvalidTrace { .. } => "invalid_trace",
            Error::MissingTrackedToken { .. } => "missing_tracked_token",
            Error::MissingJudgement(_) => "missing_judgement",
            Error::MissingChunkLabel { .. } => "missing_chunk_label",
            Error::VocabularyMismatch(..) => "vocabulary_mismatch",
            Error::LossyPruning { .. } => "lossy_pruning",
            Error::InvalidInput(_) => "invalid_input",
        }
    }
}
