use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("degenerate head: keypoint {0} has zero confidence")]
    DegenerateHead(usize),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("unsupported template: {0}")]
    UnsupportedTemplate(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("container error: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
