use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("non-finite value at float index {index}")]
    NonFiniteValue { index: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("duplicate entry name `{0}`")]
    DuplicateName(String),

    #[error("loss mask selects no elements")]
    EmptyMask,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("degenerate box: width {width}, length {length}")]
    DegenerateBox { width: f64, length: f64 },

    #[error("cluster has no members")]
    EmptyCluster,

    #[error("invalid label id {id} for taxonomy {taxonomy:?}")]
    InvalidLabel {
        id: u32,
        taxonomy: crate::labels::Taxonomy,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
