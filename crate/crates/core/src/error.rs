use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single offending field reported by config validation.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("length error: expected {expected} entries, got {got}")]
    Length { expected: usize, got: usize },
    #[error("unsupported radius {radius} (maximum admissible radius is {max})")]
    UnsupportedRadius { radius: f64, max: f64 },
    #[error("infeasible ball mass {mass} at x = {x}: largest admissible ball has mass {max}")]
    Infeasible { x: f64, mass: f64, max: f64 },
    #[error("invalid descriptor: {0}")]
    Descriptor(String),
    #[error("bins are not aligned with the Markov partition: {0}")]
    Alignment(String),
    #[error("operator is not exact; refusing {0}")]
    NotExact(&'static str),
    #[error("invalid config: {}", format_fields(.0))]
    Validation(Vec<FieldError>),
    #[error("substream index {0} exceeds 2^63")]
    StreamOverflow(u64),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_fields(fields: &[FieldError]) -> String {
    fields.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips `Context` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
