//! Host side of the protocol: request correlation, notification routing
//! and byte accounting at the transport boundary.

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{Receiver, Sender};
use parking_lot::Mutex;
use thiserror::Error;

use crate::codec::{Put, Reader};
use crate::device::{
    Capabilities, CompletionRecord, ContainerInfo, Device, DeviceError, DeviceMetrics, ErrorCode, Notify,
    OpError, Request, TriggerRecord, TriggerRegistration, TriggerSpec,
};
use crate::item::ItemSchema;

use super::frame::{encode_frame, read_frame, Frame, FrameError, FRAME_OVERHEAD};
use super::proto;
use super::server::serve_connection;
use super::transport::{Closer, Conn};
use super::MsgType;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport closed")]
    TransportClosed,
    #[error("device error {}: {}", .0.code as u16, .0.message)]
    Remote(OpError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error("bad response: {0}")]
    BadResponse(String),
}

impl ClientError {
    /// The device error code, if the device rejected the request.
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Remote(e) => Some(e.code),
            _ => None,
        }
    }
}

impl From<DeviceError> for ClientError {
    fn from(e: DeviceError) -> Self {
        ClientError::BadResponse(e.to_string())
    }
}

impl From<crate::codec::Truncated> for ClientError {
    fn from(_: crate::codec::Truncated) -> Self {
        ClientError::BadResponse("response truncated".into())
    }
}

/// Bytes of whole frames that crossed the transport, headers and CRCs included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrafficLedger {
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

impl TrafficLedger {
    pub fn total(&self) -> u64 {
        self.bytes_sent + self.bytes_received
    }

    pub fn since(&self, earlier: &TrafficLedger) -> TrafficLedger {
        TrafficLedger {
            bytes_sent: self.bytes_sent - earlier.bytes_sent,
            bytes_received: self.bytes_received - earlier.bytes_received,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpenFlags {
    pub create: bool,
    pub read_only: bool,
}

impl OpenFlags {
    fn bits(self) -> u8 {
        (self.create as u8 * proto::OPEN_CREATE) | (self.read_only as u8 * proto::OPEN_READ_ONLY)
    }
}

struct Shared {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Mutex<HashMap<u64, Sender<Frame>>>,
    next_id: AtomicU64,
    closed: AtomicBool,
    sent: AtomicU64,
    received: AtomicU64,
    unsolicited: Sender<Frame>,
    triggers: Sender<TriggerRecord>,
}

/// A connection to a device. Safe to share between threads.
pub struct Client {
    shared: Arc<Shared>,
    unsolicited: Receiver<Frame>,
    triggers: Receiver<TriggerRecord>,
    closer: Closer,
    reader: Option<JoinHandle<()>>,
}

/// Connects to `device` through an in-process pipe served on its own thread.
pub fn loopback(device: Arc<Device>) -> Client {
    let (host, dev) = Conn::pair();
    std::thread::Builder::new()
        .name("ndp-loopback".into())
        .spawn(move || serve_connection(device, dev))
        .expect("spawn loopback server");
    Client::new(host)
}

impl Client {
    pub fn new(conn: Conn) -> Self {
        let closer = conn.closer();
        let Conn { mut reader, writer, .. } = conn;
        let (unsolicited_tx, unsolicited) = crossbeam_channel::unbounded();
        let (triggers_tx, triggers) = crossbeam_channel::unbounded();
        let shared = Arc::new(Shared {
            writer: Mutex::new(writer),
            pending: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            closed: AtomicBool::new(false),
            sent: AtomicU64::new(0),
            received: AtomicU64::new(0),
            unsolicited: unsolicited_tx,
            triggers: triggers_tx,
        });
        let s = shared.clone();
        let reader = std::thread::Builder::new()
            .name("ndp-client-reader".into())
            .spawn(move || {
                while let Ok(Some(frame)) = read_frame(&mut reader) {
                    s.received.fetch_add(frame.encoded_len() as u64, Ordering::SeqCst);
                    s.route(frame);
                }
                s.closed.store(true, Ordering::SeqCst);
                s.pending.lock().clear();
            })
            .expect("spawn client reader");
        Self {
            shared,
            unsolicited,
            triggers,
            closer,
            reader: Some(reader),
        }
    }

    pub fn connect_tcp(addr: &str) -> io::Result<Self> {
        Ok(Self::new(Conn::connect(addr)?))
    }

    pub fn ledger(&self) -> TrafficLedger {
        TrafficLedger {
            bytes_sent: self.shared.sent.load(Ordering::SeqCst),
            bytes_received: self.shared.received.load(Ordering::SeqCst),
        }
    }

    /// Trigger records pushed by the device after this connection registered
    /// or listed triggers.
    pub fn trigger_notifications(&self) -> Receiver<TriggerRecord> {
        self.triggers.clone()
    }

    /// Frames that matched no outstanding request.
    pub fn unsolicited(&self) -> Receiver<Frame> {
        self.unsolicited.clone()
    }

    pub fn close(&mut self) {
        self.closer.close();
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }

    fn start(&self, msg_type: u8, payload: &[u8]) -> Result<(u64, Receiver<Frame>), ClientError> {
        let id = self.shared.next_id.fetch_add(1, Ordering::SeqCst);
        let bytes = encode_frame(msg_type, 0, id, payload)?;
        let (tx, rx) = crossbeam_channel::unbounded();
        self.shared.pending.lock().insert(id, tx);
        if self.shared.closed.load(Ordering::SeqCst) {
            self.shared.pending.lock().remove(&id);
            return Err(ClientError::TransportClosed);
        }
        let written = {
            let mut w = self.shared.writer.lock();
            w.write_all(&bytes).and_then(|_| w.flush())
        };
        if written.is_err() {
            self.shared.pending.lock().remove(&id);
            return Err(ClientError::TransportClosed);
        }
        self.shared.sent.fetch_add(bytes.len() as u64, Ordering::SeqCst);
        Ok((id, rx))
    }

    fn finish(&self, id: u64) {
        self.shared.pending.lock().remove(&id);
    }

    fn response(frame: Frame) -> Result<Vec<u8>, ClientError> {
        if frame.is_error() {
            Err(ClientError::Remote(proto::decode_error(&frame.payload)))
        } else {
            Ok(frame.payload)
        }
    }

    /// Sends one request and returns the matching response payload.
    pub fn call(&self, msg_type: MsgType, payload: &[u8]) -> Result<Vec<u8>, ClientError> {
        self.call_raw(msg_type as u8, payload)
    }

    pub fn call_raw(&self, msg_type: u8, payload: &[u8]) -> Result<Vec<u8>, ClientError> {
        let (id, rx) = self.start(msg_type, payload)?;
        let result = loop {
            match rx.recv() {
                Ok(f) if f.is_notify() => continue,
                Ok(f) => break Self::response(f),
                Err(_) => break Err(ClientError::TransportClosed),
            }
        };
        self.finish(id);
        result
    }

    pub fn ping(&self) -> Result<(), ClientError> {
        self.call(MsgType::Ping, &[]).map(|_| ())
    }

    pub fn open(&self, name: &str, flags: OpenFlags, schema: Option<&ItemSchema>) -> Result<ContainerInfo, ClientError> {
        let mut p = vec![flags.bits()];
        p.put_bytes16(name.as_bytes());
        if flags.create {
            let schema = schema.ok_or_else(|| ClientError::BadResponse("create needs a schema".into()))?;
            p.put_bytes32(&schema.encode());
        }
        let resp = self.call(MsgType::Open, &p)?;
        let mut r = Reader::new(&resp);
        Ok(ContainerInfo::decode_from(&mut r)?)
    }

    pub fn close_container(&self, id: u64) -> Result<(), ClientError> {
        self.call(MsgType::Close, &id.to_le_bytes()).map(|_| ())
    }

    pub fn create_container(&self, name: &str, schema: &ItemSchema) -> Result<u64, ClientError> {
        let mut p = Vec::new();
        p.put_bytes16(name.as_bytes());
        p.put_bytes32(&schema.encode());
        read_u64(&self.call(MsgType::CreateContainer, &p)?)
    }

    /// Runs a verb synchronously and waits for its completion.
    pub fn submit(&self, req: &Request, notify: Notify) -> Result<CompletionRecord, ClientError> {
        let mode = match notify {
            Notify::Poll(_) => proto::MODE_POLL,
            Notify::Interrupt => proto::MODE_INTERRUPT,
        };
        let mut p = vec![mode];
        req.encode_body(&mut p);
        let (id, rx) = self.start(req.msg_type() as u8, &p)?;
        let result = match notify {
            Notify::Interrupt => Self::await_interrupt(&rx),
            Notify::Poll(interval) => {
                let acked = Self::await_ack(&rx);
                self.finish(id);
                let seq = acked?;
                return self.poll_until_done(seq, interval);
            }
        };
        self.finish(id);
        result
    }

    fn await_ack(rx: &Receiver<Frame>) -> Result<u64, ClientError> {
        match rx.recv() {
            Ok(f) => read_u64(&Self::response(f)?),
            Err(_) => Err(ClientError::TransportClosed),
        }
    }

    /// The ack and the notification may arrive in either order.
    fn await_interrupt(rx: &Receiver<Frame>) -> Result<CompletionRecord, ClientError> {
        let mut acked = false;
        let mut done = None;
        while !(acked && done.is_some()) {
            let f = rx.recv().map_err(|_| ClientError::TransportClosed)?;
            if f.is_notify() {
                let (&kind, body) = f
                    .payload
                    .split_first()
                    .ok_or_else(|| ClientError::BadResponse("empty notification".into()))?;
                if kind != proto::NOTIFY_COMPLETION {
                    return Err(ClientError::BadResponse(format!("unexpected notification kind {kind}")));
                }
                done = Some(CompletionRecord::decode(body)?);
            } else {
                Self::response(f)?;
                acked = true;
            }
        }
        Ok(done.expect("loop exits with a completion"))
    }

    fn poll_until_done(&self, seq: u64, interval: Duration) -> Result<CompletionRecord, ClientError> {
        loop {
            if let Some(done) = self.poll_completion(seq)? {
                return Ok(done);
            }
            std::thread::sleep(interval);
        }
    }

    pub fn poll_completion(&self, seq: u64) -> Result<Option<CompletionRecord>, ClientError> {
        let mut p = vec![proto::POLL_BY_SEQ];
        p.put_u64(seq);
        read_maybe_completion(&self.call(MsgType::PollCompletion, &p)?)
    }

    pub fn submit_async(&self, req: &Request) -> Result<u64, ClientError> {
        read_u64(&self.call(MsgType::SubmitAsync, &req.encode())?)
    }

    pub fn next_completion(&self, wait: bool) -> Result<Option<CompletionRecord>, ClientError> {
        let p = [proto::POLL_NEXT, wait as u8];
        read_maybe_completion(&self.call(MsgType::PollCompletion, &p)?)
    }

    pub fn enqueue_delayed(&self, req: &Request) -> Result<u64, ClientError> {
        read_u64(&self.call(MsgType::DelayedEnqueue, &req.encode())?)
    }

    pub fn flush_delayed(&self) -> Result<Vec<CompletionRecord>, ClientError> {
        let resp = self.call(MsgType::DelayedFlush, &[])?;
        let mut r = Reader::new(&resp);
        let n = r.u32()? as usize;
        let mut out = Vec::with_capacity(r.capacity_hint(n, 33));
        for _ in 0..n {
            out.push(CompletionRecord::decode_from(&mut r)?);
        }
        Ok(out)
    }

    pub fn register_trigger(&self, spec: &TriggerSpec) -> Result<u64, ClientError> {
        let mut p = vec![proto::TRIGGER_ADD];
        spec.encode_into(&mut p);
        read_u64(&self.call(MsgType::TriggerRegister, &p)?)
    }

    pub fn list_triggers(&self) -> Result<Vec<TriggerRegistration>, ClientError> {
        let resp = self.call(MsgType::TriggerRegister, &[proto::TRIGGER_LIST])?;
        let mut r = Reader::new(&resp);
        let n = r.u32()? as usize;
        let mut out = Vec::with_capacity(r.capacity_hint(n, 20));
        for _ in 0..n {
            let trigger_id = r.u64()?;
            out.push(TriggerRegistration {
                trigger_id,
                spec: TriggerSpec::decode_from(&mut r)?,
            });
        }
        Ok(out)
    }

    pub fn unregister_trigger(&self, id: u64) -> Result<(), ClientError> {
        self.call(MsgType::TriggerUnregister, &id.to_le_bytes()).map(|_| ())
    }

    pub fn metrics(&self) -> Result<(DeviceMetrics, Capabilities), ClientError> {
        let resp = self.call(MsgType::Metrics, &[])?;
        let mut r = Reader::new(&resp);
        Ok((DeviceMetrics::decode_from(&mut r)?, Capabilities::decode_from(&mut r)?))
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        self.close();
    }
}

impl Shared {
    fn route(&self, frame: Frame) {
        if frame.is_notify() && frame.request_id == 0 && frame.payload.first() == Some(&proto::NOTIFY_TRIGGER) {
            match TriggerRecord::decode_from(&mut Reader::new(&frame.payload[1..])) {
                Ok(rec) => {
                    let _ = self.triggers.send(rec);
                }
                Err(e) => log::warn!("dropping unreadable trigger notification: {e}"),
            }
            return;
        }
        let target = self.pending.lock().get(&frame.request_id).cloned();
        match target {
            Some(tx) => {
                let _ = tx.send(frame);
            }
            None => {
                let _ = self.unsolicited.send(frame);
            }
        }
    }
}

fn read_u64(payload: &[u8]) -> Result<u64, ClientError> {
    let mut r = Reader::new(payload);
    let v = r.u64()?;
    if !r.is_empty() {
        return Err(ClientError::BadResponse("trailing bytes".into()));
    }
    Ok(v)
}

fn read_maybe_completion(payload: &[u8]) -> Result<Option<CompletionRecord>, ClientError> {
    match payload.split_first() {
        Some((0, [])) => Ok(None),
        Some((1, rest)) => Ok(Some(CompletionRecord::decode(rest)?)),
        _ => Err(ClientError::BadResponse("bad completion poll response".into())),
    }
}

/// Size on the wire of a frame carrying `payload_len` bytes.
pub fn frame_size(payload_len: usize) -> u64 {
    (FRAME_OVERHEAD + payload_len) as u64
}
