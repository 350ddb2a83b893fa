//! Payload conventions shared by the server and the client.

use crate::codec::{Put, Reader};
use crate::device::{CompletionRecord, DeviceError, ErrorCode, OpError};

/// First byte of a verb request: how the host wants to learn of completion.
pub const MODE_POLL: u8 = 0;
pub const MODE_INTERRUPT: u8 = 1;

/// `POLL_COMPLETION` selectors: by seq (sync poll), or the next async completion.
pub const POLL_BY_SEQ: u8 = 0;
pub const POLL_NEXT: u8 = 1;

/// First byte of a `COMPLETION_NOTIFY` payload.
pub const NOTIFY_COMPLETION: u8 = 0;
pub const NOTIFY_TRIGGER: u8 = 1;

/// `TRIGGER_REGISTER` sub-operations.
pub const TRIGGER_ADD: u8 = 0;
pub const TRIGGER_LIST: u8 = 1;

/// `OPEN` flag bits.
pub const OPEN_CREATE: u8 = 1;
pub const OPEN_READ_ONLY: u8 = 1 << 1;

pub(crate) fn error_payload(e: &DeviceError) -> Vec<u8> {
    let mut out = Vec::new();
    out.put_u16(e.code() as u16);
    let msg = e.to_string();
    let msg = msg.as_bytes();
    out.put_bytes16(&msg[..msg.len().min(u16::MAX as usize)]);
    out
}

pub(crate) fn decode_error(payload: &[u8]) -> OpError {
    let mut r = Reader::new(payload);
    match (r.u16(), r.bytes16()) {
        (Ok(code), Ok(msg)) => OpError {
            code: ErrorCode::from_u16(code),
            message: String::from_utf8_lossy(msg).into_owned(),
        },
        _ => OpError {
            code: ErrorCode::Unknown,
            message: "unreadable error payload".into(),
        },
    }
}

/// `u8 0` when nothing is ready, else `u8 1` and the completion.
pub(crate) fn maybe_completion(done: Option<&CompletionRecord>) -> Vec<u8> {
    match done {
        None => vec![0],
        Some(c) => {
            let mut out = vec![1];
            c.encode_into(&mut out);
            out
        }
    }
}

pub(crate) fn utf8(bytes: &[u8]) -> Result<String, DeviceError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| DeviceError::BadRequest("name is not UTF-8".into()))
}

pub(crate) fn finish(r: &Reader<'_>) -> Result<(), DeviceError> {
    if r.is_empty() {
        Ok(())
    } else {
        Err(DeviceError::BadRequest("trailing bytes".into()))
    }
}
