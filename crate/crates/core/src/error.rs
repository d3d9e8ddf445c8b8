use std::fmt;

/// Everything that can go wrong inside the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("input {height}x{width} is too small: grid pooling needs at least 3x3")]
    InputTooSmall { height: usize, width: usize },

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("internal contract violated: {0}")]
    Contract(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn format(offset: usize, msg: impl fmt::Display) -> Self {
        Error::Format {
            offset,
            msg: msg.to_string(),
        }
    }
}

/// Failures specific to loading a binary checkpoint.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic")]
    BadMagic,

    #[error("checkpoint truncated: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated { offset: usize, needed: usize, len: usize },

    #[error("checkpoint CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },

    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("tensor `{name}` stored as dtype {found}, expected {expected}")]
    Dtype { name: String, expected: u8, found: u8 },

    #[error("checkpoint is missing tensor `{0}`")]
    Missing(String),

    #[error("checkpoint has unexpected tensor `{0}`")]
    Unexpected(String),

    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}
