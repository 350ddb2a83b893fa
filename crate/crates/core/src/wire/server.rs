//! Device side of the protocol.
//!
//! Each connection gets a reader loop (this thread) and a writer thread that
//! owns the outgoing half, so frames from the reader, the executor callbacks
//! and the trigger forwarder never interleave mid-frame. Verb requests are
//! acknowledged with their seq right away; the completion follows either as a
//! `COMPLETION_NOTIFY` push (interrupt) or in reply to `POLL_COMPLETION`.

use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crossbeam_channel::{select, Receiver, Sender};
use parking_lot::Mutex;

use crate::codec::{Put, Reader};
use crate::device::{Device, DeviceError, Request, TriggerSpec};
use crate::item::ItemSchema;

use super::frame::{encode_frame, read_frame, Frame, ReadFrameError, FLAG_ERROR, FLAG_NOTIFY, FLAG_RESPONSE};
use super::proto::{self, NOTIFY_COMPLETION, NOTIFY_TRIGGER};
use super::transport::{Closer, Conn};
use super::MsgType;

enum Out {
    Frame(Vec<u8>),
    Close,
}

struct Ctx {
    device: Arc<Device>,
    out: Sender<Out>,
    /// Disconnects when the reader loop ends; stops the trigger forwarder.
    done: Receiver<()>,
    forwarding: bool,
}

fn send(out: &Sender<Out>, msg_type: u8, flags: u16, request_id: u64, payload: &[u8]) {
    match encode_frame(msg_type, flags, request_id, payload) {
        Ok(bytes) => {
            let _ = out.send(Out::Frame(bytes));
        }
        Err(e) => {
            let err = proto::error_payload(&DeviceError::BadRequest(e.to_string()));
            let bytes = encode_frame(msg_type, FLAG_RESPONSE | FLAG_ERROR, request_id, &err).expect("small frame");
            let _ = out.send(Out::Frame(bytes));
        }
    }
}

fn reply(out: &Sender<Out>, req: &Frame, result: Result<Vec<u8>, DeviceError>) {
    match result {
        Ok(payload) => send(out, req.msg_type, FLAG_RESPONSE, req.request_id, &payload),
        Err(e) => send(
            out,
            req.msg_type,
            FLAG_RESPONSE | FLAG_ERROR,
            req.request_id,
            &proto::error_payload(&e),
        ),
    }
}

/// Serves one connection until it closes or sends a malformed frame.
pub fn serve_connection(device: Arc<Device>, conn: Conn) {
    let closer = conn.closer();
    let Conn { mut reader, writer, .. } = conn;
    let (out, out_rx) = crossbeam_channel::unbounded();
    let (done_tx, done) = crossbeam_channel::bounded::<()>(0);
    let writer = std::thread::Builder::new()
        .name("ndp-conn-writer".into())
        .spawn(move || write_loop(writer, out_rx, closer))
        .expect("spawn connection writer");
    let mut ctx = Ctx {
        device,
        out,
        done,
        forwarding: false,
    };
    loop {
        match read_frame(&mut reader) {
            Ok(Some(frame)) => ctx.handle(frame),
            Ok(None) => break,
            Err(ReadFrameError::Io(e)) => {
                log::debug!("connection read failed: {e}");
                break;
            }
            Err(ReadFrameError::Frame { error, request }) => {
                log::debug!("malformed frame: {error}");
                if let Some((ty, id)) = request {
                    let err = proto::error_payload(&DeviceError::BadFrame(error.to_string()));
                    send(&ctx.out, ty, FLAG_RESPONSE | FLAG_ERROR, id, &err);
                }
                break;
            }
        }
    }
    let _ = ctx.out.send(Out::Close);
    drop(done_tx);
    let _ = writer.join();
}

fn write_loop(mut w: Box<dyn Write + Send>, rx: Receiver<Out>, closer: Closer) {
    for msg in rx {
        match msg {
            Out::Frame(bytes) => {
                if w.write_all(&bytes).and_then(|_| w.flush()).is_err() {
                    break;
                }
            }
            Out::Close => break,
        }
    }
    let _ = w.flush();
    closer.close();
}

impl Ctx {
    fn handle(&mut self, frame: Frame) {
        if frame.is_response() || frame.is_notify() {
            let err = DeviceError::BadRequest("clients send requests only".into());
            return reply(&self.out, &frame, Err(err));
        }
        let Some(ty) = MsgType::from_u8(frame.msg_type) else {
            let err = DeviceError::BadRequest(format!("unknown message type {:#04x}", frame.msg_type));
            return reply(&self.out, &frame, Err(err));
        };
        if ty.is_verb() {
            return self.verb(ty, &frame);
        }
        if ty == MsgType::PollCompletion {
            return self.poll(&frame);
        }
        let result = self.control(ty, &frame.payload);
        reply(&self.out, &frame, result);
    }

    fn verb(&self, ty: MsgType, frame: &Frame) {
        let result = (|| {
            let (&notify, body) = frame
                .payload
                .split_first()
                .ok_or_else(|| DeviceError::BadRequest("missing notify mode".into()))?;
            let req = Request::decode_body(ty, body)?;
            let seq = match notify {
                proto::MODE_POLL => self.device.submit_polled(req)?,
                proto::MODE_INTERRUPT => {
                    let out = self.out.clone();
                    let id = frame.request_id;
                    self.device.submit_notify(req, move |done| {
                        let mut payload = vec![NOTIFY_COMPLETION];
                        done.encode_into(&mut payload);
                        send(&out, MsgType::CompletionNotify as u8, FLAG_NOTIFY, id, &payload);
                    })?
                }
                m => return Err(DeviceError::BadRequest(format!("bad notify mode {m}"))),
            };
            Ok(seq.to_le_bytes().to_vec())
        })();
        reply(&self.out, frame, result);
    }

    fn poll(&self, frame: &Frame) {
        let mut r = Reader::new(&frame.payload);
        let parsed = (|| -> Result<(u8, u64), DeviceError> {
            let selector = r.u8()?;
            let arg = match selector {
                proto::POLL_BY_SEQ => r.u64()?,
                proto::POLL_NEXT => r.u8()? as u64,
                s => return Err(DeviceError::BadRequest(format!("bad poll selector {s}"))),
            };
            if !r.is_empty() {
                return Err(DeviceError::BadRequest("trailing bytes".into()));
            }
            Ok((selector, arg))
        })();
        match parsed {
            Err(e) => reply(&self.out, frame, Err(e)),
            Ok((proto::POLL_BY_SEQ, seq)) => {
                let done = self.device.poll_completion(seq);
                reply(&self.out, frame, Ok(proto::maybe_completion(done.as_ref())));
            }
            Ok((_, 0)) => {
                let done = self.device.next_completion(false);
                reply(&self.out, frame, Ok(proto::maybe_completion(done.as_ref())));
            }
            Ok(_) => {
                // a blocking wait must not stall the reader loop
                let (device, out, frame) = (self.device.clone(), self.out.clone(), frame.clone());
                std::thread::spawn(move || {
                    let done = device.next_completion(true);
                    reply(&out, &frame, Ok(proto::maybe_completion(done.as_ref())));
                });
            }
        }
    }

    fn control(&mut self, ty: MsgType, payload: &[u8]) -> Result<Vec<u8>, DeviceError> {
        let mut r = Reader::new(payload);
        let mut out = Vec::new();
        match ty {
            MsgType::Ping => {}
            MsgType::Open => {
                let flags = r.u8()?;
                let name = proto::utf8(r.bytes16()?)?;
                let schema = if flags & proto::OPEN_CREATE != 0 {
                    Some(ItemSchema::decode(r.bytes32()?)?)
                } else {
                    None
                };
                proto::finish(&r)?;
                self.device.open_container(&name, schema)?.encode_into(&mut out);
            }
            MsgType::Close => {
                let id = r.u64()?;
                proto::finish(&r)?;
                self.device.container_info(id)?;
            }
            MsgType::CreateContainer => {
                let name = proto::utf8(r.bytes16()?)?;
                let schema = ItemSchema::decode(r.bytes32()?)?;
                proto::finish(&r)?;
                out.put_u64(self.device.create_container(&name, schema)?);
            }
            MsgType::SubmitAsync | MsgType::DelayedEnqueue => {
                let req = Request::decode(r.rest())?;
                let seq = if ty == MsgType::SubmitAsync {
                    self.device.submit_async(req)?
                } else {
                    self.device.enqueue_delayed(req)?
                };
                out.put_u64(seq);
            }
            MsgType::DelayedFlush => {
                proto::finish(&r)?;
                let done = self.device.flush_delayed()?;
                out.put_u32(done.len() as u32);
                for c in &done {
                    c.encode_into(&mut out);
                }
            }
            MsgType::TriggerRegister => {
                self.forward_triggers();
                match r.u8()? {
                    proto::TRIGGER_ADD => {
                        let spec = TriggerSpec::decode_from(&mut r)?;
                        proto::finish(&r)?;
                        out.put_u64(self.device.register_trigger(spec)?);
                    }
                    proto::TRIGGER_LIST => {
                        proto::finish(&r)?;
                        let regs = self.device.triggers();
                        out.put_u32(regs.len() as u32);
                        for reg in &regs {
                            out.put_u64(reg.trigger_id);
                            reg.spec.encode_into(&mut out);
                        }
                    }
                    op => return Err(DeviceError::BadRequest(format!("bad trigger sub-op {op}"))),
                }
            }
            MsgType::TriggerUnregister => {
                let id = r.u64()?;
                proto::finish(&r)?;
                self.device.unregister_trigger(id)?;
            }
            MsgType::Metrics => {
                proto::finish(&r)?;
                self.device.metrics().encode_into(&mut out);
                self.device.capabilities().encode_into(&mut out);
            }
            MsgType::CompletionNotify => {
                return Err(DeviceError::BadRequest("notifications flow device to host only".into()))
            }
            _ => unreachable!("verbs and polls are dispatched earlier"),
        }
        Ok(out)
    }

    fn forward_triggers(&mut self) {
        if self.forwarding {
            return;
        }
        self.forwarding = true;
        let records = self.device.subscribe_triggers();
        let (out, done) = (self.out.clone(), self.done.clone());
        std::thread::spawn(move || loop {
            select! {
                recv(records) -> rec => match rec {
                    Ok(rec) => {
                        let mut payload = vec![NOTIFY_TRIGGER];
                        rec.encode_into(&mut payload);
                        send(&out, MsgType::CompletionNotify as u8, FLAG_NOTIFY, 0, &payload);
                    }
                    Err(_) => break,
                },
                recv(done) -> _ => break,
            }
        });
    }
}

/// A running TCP server.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    conns: Arc<Mutex<Vec<Closer>>>,
    accept: Option<JoinHandle<()>>,
}

/// Accepts connections on `listener` until [`ServerHandle::shutdown`].
pub fn serve(device: Arc<Device>, listener: TcpListener) -> io::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let conns: Arc<Mutex<Vec<Closer>>> = Arc::default();
    let accept = {
        let (stop, conns) = (stop.clone(), conns.clone());
        std::thread::Builder::new()
            .name("ndp-accept".into())
            .spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let conn = match stream.and_then(Conn::tcp) {
                        Ok(c) => c,
                        Err(e) => {
                            log::warn!("accept failed: {e}");
                            continue;
                        }
                    };
                    conns.lock().push(conn.closer());
                    let device = device.clone();
                    std::thread::spawn(move || serve_connection(device, conn));
                }
            })?
    };
    Ok(ServerHandle {
        addr,
        stop,
        conns,
        accept: Some(accept),
    })
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server is shut down from another thread.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Stops accepting and closes every open connection.
    pub fn shutdown(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.addr);
        for c in self.conns.lock().drain(..) {
            c.close();
        }
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}
