//! Framed request/response protocol between host and device, over an
//! in-process pipe or TCP.

mod client;
mod frame;
mod msg;
pub mod proto;
mod server;
mod transport;

pub use client::{frame_size, loopback, Client, ClientError, OpenFlags, TrafficLedger};
pub use frame::{
    decode_frame, decode_frame_prefix, encode_frame, read_frame, Frame, FrameError, ReadFrameError, CRC_LEN,
    FLAG_ERROR, FLAG_NOTIFY, FLAG_RESPONSE, FRAME_OVERHEAD, HEADER_LEN, MAGIC, MAX_PAYLOAD, VERSION,
};
pub use msg::MsgType;
pub use server::{serve, serve_connection, ServerHandle};
pub use transport::{Closer, Conn};
