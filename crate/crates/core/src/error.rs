use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller supplied an argument outside the operation's domain
    /// (mismatched dimensions, non-positive counts, non-finite data).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An input object (distribution, exponent triple, MDP file) is malformed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical routine failed where it should not be able to.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_arg(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
