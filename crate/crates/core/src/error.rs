use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants map one-to-one onto the failure classes of the public operations;
/// the CLI turns `Parameter`/`Request`/`Validation` into exit code 2 and
/// numeric failures into exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("numeric error in {context}: achieved error estimate {estimate:e}")]
    Numeric { context: String, estimate: f64 },

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("mapping error: {0}")]
    Mapping(String),

    #[error("request error: {0}")]
    Request(String),

    #[error("at path {path}, time index {time_index}: {source}")]
    AtCoordinate {
        path: usize,
        time_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn numeric(context: impl Into<String>, estimate: f64) -> Self {
        Error::Numeric {
            context: context.into(),
            estimate,
        }
    }

    pub(crate) fn at(self, path: usize, time_index: usize) -> Self {
        Error::AtCoordinate {
            path,
            time_index,
            source: Box::new(self),
        }
    }

    /// True for failures that come from numerical procedures rather than
    /// from bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric { .. } | Error::Simulation(_) => true,
            Error::AtCoordinate { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
