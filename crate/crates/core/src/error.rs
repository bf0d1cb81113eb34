use thiserror::Error;

use crate::lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("problem too large: {what} needs {required} units, limit is {limit}")]
    Capacity {
        what: &'static str,
        required: u128,
        limit: u128,
    },

    /// The second-stage problem had no feasible solution for some state,
    /// which breaks the relatively complete recourse assumption.
    #[error("recourse problem infeasible: {0}")]
    Model(String),

    #[error(transparent)]
    Lp(#[from] LpError),

    #[error("callback: {0}")]
    Callback(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
