//! Crate-wide error type.
//!
//! Variants map onto the harness exit codes: configuration and usage problems
//! exit 2, backend/protocol problems exit 3, store-format problems exit 4.

use thiserror::Error;

/// Unified error for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum EhcError {
    /// Bad configuration: unknown key, unparseable value, missing file the
    /// config points at, invalid template placeholder, capacity < 2, ...
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller broke an API contract (duplicate record id, missing insight id
    /// passed where one is required, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A referenced entity does not exist (e.g. promoting an id that is not
    /// in the deep store).
    #[error("not found: {0}")]
    NotFound(String),

    /// The on-disk store is unreadable or malformed. `line` is 1-based; 0
    /// means the file itself could not be read.
    #[error("store format error at line {line}: {msg}")]
    StoreFormat { line: usize, msg: String },

    /// The completion/embedding backend failed (transport, non-2xx status
    /// after retries, scripted-backend misuse).
    #[error("backend error: {0}")]
    Backend(String),

    /// The backend answered, but the response body did not have the expected
    /// shape.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl EhcError {
    /// Process exit code the harness maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            EhcError::Config(_) | EhcError::Usage(_) | EhcError::NotFound(_) => 2,
            EhcError::Backend(_) | EhcError::Protocol(_) => 3,
            EhcError::StoreFormat { .. } => 4,
            EhcError::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, EhcError>;
