//! Byte-stream transports: an in-process pipe pair and TCP.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::Arc;

use parking_lot::{Condvar, Mutex};

#[derive(Default)]
struct PipeState {
    buf: VecDeque<u8>,
    closed: bool,
}

#[derive(Default)]
struct Pipe {
    state: Mutex<PipeState>,
    cond: Condvar,
}

impl Pipe {
    fn close(&self) {
        self.state.lock().closed = true;
        self.cond.notify_all();
    }
}

struct PipeReader(Arc<Pipe>);

struct PipeWriter(Arc<Pipe>);

impl Read for PipeReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if out.is_empty() {
            return Ok(0);
        }
        let mut st = self.0.state.lock();
        while st.buf.is_empty() && !st.closed {
            self.0.cond.wait(&mut st);
        }
        let n = out.len().min(st.buf.len());
        for (dst, src) in out.iter_mut().zip(st.buf.drain(..n)) {
            *dst = src;
        }
        Ok(n)
    }
}

impl Write for PipeWriter {
    fn write(&mut self, bytes: &[u8]) -> io::Result<usize> {
        let mut st = self.0.state.lock();
        if st.closed {
            return Err(io::ErrorKind::BrokenPipe.into());
        }
        st.buf.extend(bytes);
        self.0.cond.notify_all();
        Ok(bytes.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Drop for PipeWriter {
    fn drop(&mut self) {
        self.0.close();
    }
}

/// One end of a bidirectional byte stream.
pub struct Conn {
    pub reader: Box<dyn Read + Send>,
    pub writer: Box<dyn Write + Send>,
    closer: Closer,
}

/// Closes both directions of a connection from any thread, waking blocked readers.
#[derive(Clone)]
pub struct Closer(Arc<dyn Fn() + Send + Sync>);

impl Closer {
    pub fn close(&self) {
        (self.0)()
    }
}

impl Conn {
    pub fn closer(&self) -> Closer {
        self.closer.clone()
    }

    /// Two connected in-process ends.
    pub fn pair() -> (Conn, Conn) {
        let a_to_b = Arc::new(Pipe::default());
        let b_to_a = Arc::new(Pipe::default());
        let closer = {
            let (x, y) = (a_to_b.clone(), b_to_a.clone());
            Closer(Arc::new(move || {
                x.close();
                y.close();
            }))
        };
        let a = Conn {
            reader: Box::new(PipeReader(b_to_a.clone())),
            writer: Box::new(PipeWriter(a_to_b.clone())),
            closer: closer.clone(),
        };
        let b = Conn {
            reader: Box::new(PipeReader(a_to_b)),
            writer: Box::new(PipeWriter(b_to_a)),
            closer,
        };
        (a, b)
    }

    pub fn tcp(stream: TcpStream) -> io::Result<Conn> {
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        let handle = stream.try_clone()?;
        Ok(Conn {
            reader: Box::new(reader),
            writer: Box::new(stream),
            closer: Closer(Arc::new(move || {
                let _ = handle.shutdown(Shutdown::Both);
            })),
        })
    }

    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Conn> {
        Conn::tcp(TcpStream::connect(addr)?)
    }
}
