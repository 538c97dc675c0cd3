use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The estimated Gram matrix of link `(user, ap)` is singular or too badly conditioned.
    #[error("singular channel estimate for user {user}, AP {ap} (condition number {condition:e})")]
    SingularChannel { user: usize, ap: usize, condition: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
