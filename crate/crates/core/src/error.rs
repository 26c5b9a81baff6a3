use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("resource limit exceeded: {what} ({value} > {limit})")]
    Resource {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid instance: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("numeric degeneracy: all-zero normalization at {0}")]
    Degenerate(String),

    #[error("observables undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
