use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("record {index}: {message}")]
    Record { index: usize, message: String },

    #[error("sample {id}: answer {answer:?} is not among the candidates")]
    UnknownAnswer { id: String, answer: String },

    #[error("invalid query {0:?}: expected `<relation> <subject>`")]
    Query(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("graph: {0}")]
    Graph(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("schema version mismatch in {file}: expected {expected}, found {found}")]
    SchemaVersion {
        file: String,
        expected: u32,
        found: u32,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case name of the variant, used in one-line CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::Record { .. } => "record",
            Error::UnknownAnswer { .. } => "unknown_answer",
            Error::Query(_) => "query",
            Error::Invalid(_) => "invalid",
            Error::Graph(_) => "graph",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::SchemaVersion { .. } => "schema_version",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn shape(op: &'static str, left: [usize; 2], right: [usize; 2]) -> Self {
        Error::Shape { op, left, right }
    }
}
