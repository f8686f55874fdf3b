use std::path::PathBuf;

use crate::{InterestId, UserId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front-ends to pick exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameters supplied by the caller.
    Usage,
    /// Malformed or inconsistent input data.
    Data,
    /// An entity (user, interest) that does not exist.
    NotFound,
    /// A fit or bootstrap that could not produce a number.
    Numerical,
    /// Session version mismatch.
    Conflict,
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: user references unknown interest {interest}")]
    UnknownInterestInFile {
        path: PathBuf,
        line: usize,
        interest: InterestId,
    },

    #[error("{path}:{line}: duplicate user_id {user}")]
    DuplicateUser {
        path: PathBuf,
        line: usize,
        user: UserId,
    },

    #[error("population has no users")]
    EmptyPopulation,

    #[error("no users match subgroup {0}")]
    EmptySubgroup(String),

    #[error("unknown interest {0}")]
    UnknownInterest(InterestId),

    #[error("unknown user {0}")]
    UnknownUser(UserId),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("interest {interest} does not belong to user {user}")]
    ForeignInterest { user: UserId, interest: InterestId },

    #[error("stale session version for user {user}: expected {current}, got {provided}")]
    StaleVersion {
        user: UserId,
        current: u64,
        provided: u64,
    },

    #[error("user {0} has no active interests")]
    EmptyActiveSet(UserId),

    #[error(transparent)]
    Fit(#[from] crate::estimator::FitError),

    #[error("bootstrap at Q={q}: {failed} of {total} resamples failed to fit (limit 1%)")]
    BootstrapFailures { q: f64, failed: usize, total: usize },

    #[error("no subgroup has at least {min_users} users")]
    NoQualifyingGroups { min_users: usize },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Serialization(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidQuery(_)
            | Error::InvalidParameter(_)
            | Error::EmptySubgroup(_)
            | Error::ForeignInterest { .. }
            | Error::EmptyActiveSet(_) => ErrorKind::Usage,
            Error::Malformed { .. }
            | Error::UnknownInterestInFile { .. }
            | Error::DuplicateUser { .. }
            | Error::EmptyPopulation
            | Error::NoQualifyingGroups { .. }
            | Error::Io { .. }
            | Error::Serialization(_) => ErrorKind::Data,
            Error::UnknownInterest(_) | Error::UnknownUser(_) => ErrorKind::NotFound,
            Error::Fit(_) | Error::BootstrapFailures { .. } => ErrorKind::Numerical,
            Error::StaleVersion { .. } => ErrorKind::Conflict,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
