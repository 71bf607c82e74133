use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown generator symbol `{0}`")]
    UnknownSymbol(String),
    #[error("relation must be a nonempty reduced word: {0}")]
    InvalidRelation(String),
    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),
    #[error("line {line}: not a permutation of 0..{size}")]
    NotAPermutation { line: usize, size: usize },
    #[error("generator {0}: inverse permutation does not invert the forward one")]
    InverseMismatch(usize),
    #[error("vertex {vertex} out of range for |V| = {size}")]
    VertexOutOfRange { vertex: usize, size: usize },
    #[error("shape mismatch: {0}")]
    Mismatch(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("integer overflow in exact linear algebra")]
    Overflow,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
