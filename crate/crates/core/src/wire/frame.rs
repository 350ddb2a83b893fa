//! Frame layout: `"NDP1" | u8 version | u8 msg_type | u16 flags |
//! u64 request_id | u32 payload_len | payload | u32 crc`, little-endian,
//! with the CRC-32 covering every byte before it.

use std::io::{self, Read};

use thiserror::Error;

use crate::codec::crc32;

pub const MAGIC: [u8; 4] = *b"NDP1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;
pub const CRC_LEN: usize = 4;
pub const FRAME_OVERHEAD: usize = HEADER_LEN + CRC_LEN;
pub const MAX_PAYLOAD: usize = 16 << 20;

pub const FLAG_RESPONSE: u16 = 1;
pub const FLAG_ERROR: u16 = 1 << 1;
pub const FLAG_NOTIFY: u16 = 1 << 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("checksum mismatch")]
    BadCrc,
    #[error("truncated frame")]
    Truncated,
    #[error("payload of {0} bytes exceeds the 16 MiB limit")]
    PayloadTooLarge(usize),
}

/// A decoded frame. `msg_type` is kept raw so unknown types survive a round trip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: u8,
    pub flags: u16,
    pub request_id: u64,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: u8, flags: u16, request_id: u64, payload: Vec<u8>) -> Self {
        Self {
            msg_type,
            flags,
            request_id,
            payload,
        }
    }

    pub fn is_response(&self) -> bool {
        self.flags & FLAG_RESPONSE != 0
    }

    pub fn is_error(&self) -> bool {
        self.flags & FLAG_ERROR != 0
    }

    pub fn is_notify(&self) -> bool {
        self.flags & FLAG_NOTIFY != 0
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_OVERHEAD + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        encode_frame(self.msg_type, self.flags, self.request_id, &self.payload)
    }
}

pub fn encode_frame(msg_type: u8, flags: u16, request_id: u64, payload: &[u8]) -> Result<Vec<u8>, FrameError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(FRAME_OVERHEAD + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg_type);
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&request_id.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Header {
    msg_type: u8,
    flags: u16,
    request_id: u64,
    payload_len: usize,
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<Header, FrameError> {
    if h[..4] != MAGIC {
        return Err(FrameError::BadMagic);
    }
    if h[4] != VERSION {
        return Err(FrameError::BadVersion(h[4]));
    }
    let payload_len = u32::from_le_bytes(h[16..20].try_into().unwrap()) as usize;
    if payload_len > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLarge(payload_len));
    }
    Ok(Header {
        msg_type: h[5],
        flags: u16::from_le_bytes([h[6], h[7]]),
        request_id: u64::from_le_bytes(h[8..16].try_into().unwrap()),
        payload_len,
    })
}

/// Decodes the frame at the start of `bytes` and returns it with its length.
pub fn decode_frame_prefix(bytes: &[u8]) -> Result<(Frame, usize), FrameError> {
    let header: &[u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .ok_or(FrameError::Truncated)?
        .try_into()
        .unwrap();
    let h = parse_header(header)?;
    let end = HEADER_LEN + h.payload_len;
    let crc = bytes.get(end..end + CRC_LEN).ok_or(FrameError::Truncated)?;
    if crc32(&bytes[..end]).to_le_bytes() != crc {
        return Err(FrameError::BadCrc);
    }
    let frame = Frame::new(h.msg_type, h.flags, h.request_id, bytes[HEADER_LEN..end].to_vec());
    Ok((frame, end + CRC_LEN))
}

/// Decodes exactly one frame; bytes after it are ignored.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    decode_frame_prefix(bytes).map(|(f, _)| f)
}

#[derive(Debug, Error)]
pub enum ReadFrameError {
    /// The stream ended inside a frame or could not be read.
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    /// A malformed frame; `request` is the `(msg_type, request_id)` pair
    /// when the header was readable.
    #[error("{error}")]
    Frame {
        error: FrameError,
        request: Option<(u8, u64)>,
    },
}

/// Reads one frame. `Ok(None)` is a clean end of stream between frames.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>, ReadFrameError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(ReadFrameError::Frame {
                    error: FrameError::Truncated,
                    request: None,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let h = parse_header(&header).map_err(|error| ReadFrameError::Frame {
        request: matches!(error, FrameError::PayloadTooLarge(_))
            .then(|| (header[5], u64::from_le_bytes(header[8..16].try_into().unwrap()))),
        error,
    })?;
    let mut rest = vec![0u8; h.payload_len + CRC_LEN];
    r.read_exact(&mut rest).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ReadFrameError::Frame {
            error: FrameError::Truncated,
            request: Some((h.msg_type, h.request_id)),
        },
        _ => e.into(),
    })?;
    let crc = u32::from_le_bytes(rest[h.payload_len..].try_into().unwrap());
    rest.truncate(h.payload_len);
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&header);
    hasher.update(&rest);
    if hasher.finalize() != crc {
        return Err(ReadFrameError::Frame {
            error: FrameError::BadCrc,
            request: Some((h.msg_type, h.request_id)),
        });
    }
    Ok(Some(Frame::new(h.msg_type, h.flags, h.request_id, rest)))
}
