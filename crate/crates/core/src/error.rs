use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("structural error for subject {subject}: {message}")]
    Structure { subject: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("unknown column `{name}`; available columns: {available}")]
    UnknownColumn { name: String, available: String },

    #[error("type error: {0}")]
    Type(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("index {index} out of bounds (max {max})")]
    Bounds { index: usize, max: usize },

    #[error("rank-deficient design; aliased columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("degrees of freedom: {n} observations for {p} parameters")]
    DegreesOfFreedom { n: usize, p: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("intervention error: {0}")]
    Intervention(String),

    #[error("plugin error: {0}")]
    Plugin(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Wraps the error with the name of the component that produced it.
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
