use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure surfaced by the simulator.
///
/// The `Display` impl always starts with a lowercase category word followed by
/// a colon. The CLI relies on that to print category-prefixed messages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape: {0}")]
    Shape(String),

    #[error("numerical: {0}")]
    Numerical(String),

    #[error("parse: {path}: row {row}, column {column}: {reason}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        reason: String,
    },

    #[error("data: {0}")]
    Data(String),

    #[error("rank: k_pca = {k} outside 1..={max}")]
    Rank { k: usize, max: usize },

    #[error("company: index {index} out of range for {count} companies")]
    Company { index: usize, count: usize },

    #[error("divergence: non-finite gradient in layer `{layer}`")]
    Divergence { layer: String },

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("transport: {0}")]
    Transport(#[from] TransportError),

    #[error("timeout: no message for phase `{phase}` from {party}")]
    Timeout { phase: String, party: String },

    #[error("state: {0}")]
    State(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Wire-level failures, kept distinct so callers can tell a bad peer from a dead one.
#[derive(Debug, Error)]
pub enum TransportError {
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),

    #[error("protocol version {got}, expected {expected}")]
    VersionMismatch { got: u8, expected: u8 },

    #[error("unknown message type {0}")]
    UnknownType(u8),

    #[error("truncated frame: needed {needed} bytes, had {available}")]
    Truncated { needed: usize, available: usize },

    #[error("malformed payload: {0}")]
    Malformed(String),

    #[error("connection lost: {0}")]
    ConnectionLost(String),

    #[error("read timed out")]
    TimedOut,
}

impl Error {
    /// The category word that prefixes the rendered message.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Numerical(_) => "numerical",
            Error::Parse { .. } => "parse",
            Error::Data(_) => "data",
            Error::Rank { .. } => "rank",
            Error::Company { .. } => "company",
            Error::Divergence { .. } => "divergence",
            Error::Protocol(_) => "protocol",
            Error::Transport(_) => "transport",
            Error::Timeout { .. } => "timeout",
            Error::State(_) => "state",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
