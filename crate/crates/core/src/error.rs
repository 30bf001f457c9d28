use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Data { line: Option<usize>, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable tag used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Shape { .. } => "shape",
            Error::Config(_) => "config",
            Error::Data { .. } => "data",
            Error::Checkpoint(_) => "checkpoint",
            Error::Numerical(_) => "numerical",
            Error::Empty(_) => "empty",
            Error::Io(_) => "io",
        }
    }

    pub fn data(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Data {
            line,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }
}
