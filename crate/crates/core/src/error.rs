use thiserror::Error;

/// Errors produced by the guesswork library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("type {q} is not realizable for width {m} (q*m must be an integer)")]
    NotRealizable { q: f64, m: u32 },

    #[error("type {q} is outside the region {region}")]
    Region { q: f64, region: String },

    #[error("{what} exceeds the explicit-table cap ({value} > {cap})")]
    Resource {
        what: &'static str,
        value: u64,
        cap: u64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("password index {index} is out of range for n = {n}")]
    PasswordRange { index: u64, n: u32 },

    #[error("invalid configuration field `{field}`: {message}")]
    Config {
        field: &'static str,
        message: String,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            domain,
        }
    }

    pub(crate) fn config(field: &'static str, message: impl Into<String>) -> Self {
        Error::Config {
            field,
            message: message.into(),
        }
    }
}
