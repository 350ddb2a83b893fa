use thiserror::Error;

use crate::expr::{AstDecodeError, EvalError, TypeError};
use crate::item::{DecodeError, ValidationError};
use crate::volume::VolumeError;

/// Stable numeric status codes carried in completions and error frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum ErrorCode {
    NoSuchContainer = 1,
    NoSuchToken = 2,
    NoSuchHandle = 3,
    StaleHandle = 4,
    NoSuchTrigger = 5,
    NameInUse = 6,
    InvalidSchema = 7,
    Validation = 8,
    Type = 9,
    Frozen = 10,
    Tombstoned = 11,
    IndexOutOfBounds = 12,
    RangeOutOfBounds = 13,
    DivByZero = 14,
    Overflow = 15,
    SchemaMismatch = 16,
    EmptyInput = 17,
    QueueFull = 18,
    NotDelayable = 19,
    JournalWriteFailed = 20,
    BadRequest = 21,
    Storage = 22,
    Crashed = 23,
    Closed = 24,
    Unsupported = 25,
    BadFrame = 26,
    Unknown = 0xFFFF,
}

impl ErrorCode {
    const ALL: [ErrorCode; 26] = [
        ErrorCode::NoSuchContainer,
        ErrorCode::NoSuchToken,
        ErrorCode::NoSuchHandle,
        ErrorCode::StaleHandle,
        ErrorCode::NoSuchTrigger,
        ErrorCode::NameInUse,
        ErrorCode::InvalidSchema,
        ErrorCode::Validation,
        ErrorCode::Type,
        ErrorCode::Frozen,
        ErrorCode::Tombstoned,
        ErrorCode::IndexOutOfBounds,
        ErrorCode::RangeOutOfBounds,
        ErrorCode::DivByZero,
        ErrorCode::Overflow,
        ErrorCode::SchemaMismatch,
        ErrorCode::EmptyInput,
        ErrorCode::QueueFull,
        ErrorCode::NotDelayable,
        ErrorCode::JournalWriteFailed,
        ErrorCode::BadRequest,
        ErrorCode::Storage,
        ErrorCode::Crashed,
        ErrorCode::Closed,
        ErrorCode::Unsupported,
        ErrorCode::BadFrame,
    ];

    pub fn from_u16(v: u16) -> Self {
        Self::ALL
            .into_iter()
            .find(|c| *c as u16 == v)
            .unwrap_or(ErrorCode::Unknown)
    }
}

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("no container with id {0}")]
    NoSuchContainer(u64),
    #[error("no container named {0:?}")]
    NoSuchName(String),
    #[error("no active freeze token {0}")]
    NoSuchToken(u64),
    #[error("no result handle {0}")]
    NoSuchHandle(u64),
    #[error("result handle {0} is stale")]
    StaleHandle(u64),
    #[error("no trigger {0}")]
    NoSuchTrigger(u64),
    #[error("container name {0:?} is in use")]
    NameInUse(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("item {0} lies in a frozen range")]
    Frozen(u64),
    #[error("item {0} is deleted")]
    Tombstoned(u64),
    #[error("index {index} out of bounds for {count} items")]
    IndexOutOfBounds { index: u64, count: u64 },
    #[error("range [{lo}, {hi}) out of bounds for {count} items")]
    RangeOutOfBounds { lo: u64, hi: u64, count: u64 },
    #[error("integer division by zero")]
    DivByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("target schemas differ")]
    SchemaMismatch,
    #[error("program needs at least one live item")]
    EmptyInput,
    #[error("device queue is full")]
    QueueFull,
    #[error("{0} requests cannot be delayed")]
    NotDelayable(&'static str),
    #[error("journal write failed: {0}")]
    JournalWriteFailed(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("malformed frame: {0}")]
    BadFrame(String),
    #[error("storage: {0}")]
    Storage(String),
    #[error("device crashed at {0}")]
    Crashed(&'static str),
    #[error("device is shut down")]
    Closed,
}

impl DeviceError {
    pub fn code(&self) -> ErrorCode {
        match self {
            DeviceError::NoSuchContainer(_) | DeviceError::NoSuchName(_) => ErrorCode::NoSuchContainer,
            DeviceError::NoSuchToken(_) => ErrorCode::NoSuchToken,
            DeviceError::NoSuchHandle(_) => ErrorCode::NoSuchHandle,
            DeviceError::StaleHandle(_) => ErrorCode::StaleHandle,
            DeviceError::NoSuchTrigger(_) => ErrorCode::NoSuchTrigger,
            DeviceError::NameInUse(_) => ErrorCode::NameInUse,
            DeviceError::InvalidSchema(_) => ErrorCode::InvalidSchema,
            DeviceError::Validation(_) => ErrorCode::Validation,
            DeviceError::Type(_) => ErrorCode::Type,
            DeviceError::Frozen(_) => ErrorCode::Frozen,
            DeviceError::Tombstoned(_) => ErrorCode::Tombstoned,
            DeviceError::IndexOutOfBounds { .. } => ErrorCode::IndexOutOfBounds,
            DeviceError::RangeOutOfBounds { .. } => ErrorCode::RangeOutOfBounds,
            DeviceError::DivByZero => ErrorCode::DivByZero,
            DeviceError::Overflow => ErrorCode::Overflow,
            DeviceError::SchemaMismatch => ErrorCode::SchemaMismatch,
            DeviceError::EmptyInput => ErrorCode::EmptyInput,
            DeviceError::QueueFull => ErrorCode::QueueFull,
            DeviceError::NotDelayable(_) => ErrorCode::NotDelayable,
            DeviceError::JournalWriteFailed(_) => ErrorCode::JournalWriteFailed,
            DeviceError::BadRequest(_) => ErrorCode::BadRequest,
            DeviceError::BadFrame(_) => ErrorCode::BadFrame,
            DeviceError::Storage(_) => ErrorCode::Storage,
            DeviceError::Crashed(_) => ErrorCode::Crashed,
            DeviceError::Closed => ErrorCode::Closed,
        }
    }

    pub fn to_op_error(&self) -> OpError {
        OpError {
            code: self.code(),
            message: self.to_string(),
        }
    }
}

impl From<VolumeError> for DeviceError {
    fn from(e: VolumeError) -> Self {
        match e {
            VolumeError::NoSuchContainer(id) => DeviceError::NoSuchContainer(id),
            VolumeError::NoSuchName(n) => DeviceError::NoSuchName(n),
            VolumeError::NameInUse(n) => DeviceError::NameInUse(n),
            VolumeError::InvalidSchema(e) => DeviceError::InvalidSchema(e.to_string()),
            VolumeError::Validation(e) => DeviceError::Validation(e),
            VolumeError::RangeOutOfBounds { lo, hi, count } => {
                DeviceError::RangeOutOfBounds { lo, hi, count }
            }
            VolumeError::IndexOutOfBounds { index, count } => {
                DeviceError::IndexOutOfBounds { index, count }
            }
            VolumeError::Tombstoned(i) => DeviceError::Tombstoned(i),
            VolumeError::Frozen(i) => DeviceError::Frozen(i),
            VolumeError::NoSuchToken(t) => DeviceError::NoSuchToken(t),
            VolumeError::SimulatedCrash(p) => DeviceError::Crashed(p),
            other => DeviceError::Storage(other.to_string()),
        }
    }
}

impl From<EvalError> for DeviceError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::DivByZero => DeviceError::DivByZero,
            EvalError::Overflow => DeviceError::Overflow,
            EvalError::Validation(v) => DeviceError::Validation(v),
            EvalError::IllTyped => DeviceError::BadRequest(e.to_string()),
        }
    }
}

impl From<AstDecodeError> for DeviceError {
    fn from(e: AstDecodeError) -> Self {
        DeviceError::BadRequest(e.to_string())
    }
}

impl From<DecodeError> for DeviceError {
    fn from(e: DecodeError) -> Self {
        DeviceError::BadRequest(e.to_string())
    }
}

impl From<crate::codec::Truncated> for DeviceError {
    fn from(_: crate::codec::Truncated) -> Self {
        DeviceError::BadRequest("payload truncated".into())
    }
}

/// Error status as carried inside a completion: a code plus the device's message.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct OpError {
    pub code: ErrorCode,
    pub message: String,
}
