use thiserror::Error;

use crate::lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration at `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("constraint violation: {0}")]
    Constraint(String),
    #[error("infeasible control: {0}")]
    InfeasibleControl(String),
    #[error("LP failure at {context}: {source}")]
    Lp { context: String, source: LpError },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("certification violation: {0}")]
    Certification(String),
    #[error("enumeration budget exceeded: {0}")]
    Budget(String),
    #[error("stale artifacts: {0}")]
    Stale(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }

    pub fn lp(context: impl Into<String>, source: LpError) -> Self {
        Error::Lp { context: context.into(), source }
    }
}
