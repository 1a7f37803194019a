use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("bad geometry: {0}")]
    Geometry(String),
    #[error("range {offset}+{len} is outside the medium")]
    OutOfRange { offset: usize, len: usize },
    #[error("page data is {got} bytes, page size is {expected}")]
    PageLength { expected: usize, got: usize },
    #[error("device lost power and accepts no further writes")]
    Failed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("medium is not erased")]
    NotErased,
    #[error("log header missing or corrupt")]
    BadHeader,
    #[error("log is full")]
    Full,
    #[error("invalid item type {0:#04x}")]
    InvalidType(u8),
    #[error("payload of {0} bytes exceeds the 224-byte item limit")]
    PayloadTooLong(usize),
    #[error("ack cursor may not move backwards ({from:#x} -> {to:#x})")]
    AckRegression { from: u32, to: u32 },
    #[error("ack cursor {0:#x} is beyond the write address")]
    AckBeyondEnd(u32),
    #[error(transparent)]
    Media(#[from] MediaError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("type {0} does not fit in 16 bits")]
    TypeRange(u32),
    #[error("length {0} exceeds 255")]
    LengthRange(usize),
    #[error("truncated data item at offset {0}")]
    Truncated(usize),
    #[error("non-canonical header at offset {0}")]
    NonCanonical(usize),
    #[error("reserved header prefix {byte:#04x} at offset {offset}")]
    ReservedPrefix { offset: usize, byte: u8 },
    #[error("packet of {0} bytes exceeds the 255-byte payload limit")]
    Overflow(usize),
    #[error("packet carries no data items")]
    Empty,
    #[error("malformed {kind} item at offset {offset}")]
    BadItem { kind: &'static str, offset: usize },
}

/// Tag-definition and scenario diagnostics carry the 1-based line and column.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("{line}:{column}: {message}")]
pub struct DefError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl DefError {
    pub fn at(line: usize, column: usize, message: impl Into<String>) -> Self {
        DefError {
            line,
            column,
            message: message.into(),
        }
    }

    pub fn semantic(message: impl Into<String>) -> Self {
        DefError::at(0, 0, message)
    }
}

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("unsupported config block version {0}")]
    Version(u8),
    #[error("config block is truncated")]
    Truncated,
    #[error("malformed config block: {0}")]
    Malformed(String),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Definition(#[from] DefError),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("record store is full")]
    Full,
    #[error("bad store file: {0}")]
    Format(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no sensor configuration for {sensor} in session at {session:#x} of tag {tag_id}, and no definition given")]
    MissingConfig {
        tag_id: u64,
        session: u32,
        sensor: String,
    },
    #[error("pressure must be positive (got p={p}, p0={p0})")]
    NonPositivePressure { p: f64, p0: f64 },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Scenario(#[from] DefError),
    #[error("scenario validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
}
