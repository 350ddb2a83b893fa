//! The simulated smart storage device.
//!
//! One executor thread drains a FIFO of accepted requests (synchronous and
//! asynchronous submissions share it), so requests execute one at a time in
//! seq order. Delayed requests go to the on-volume journal and run when
//! [`Device::flush_delayed`] is called or when the device is reopened.
//!
//! Control-plane calls (opening containers, trigger registration, metrics)
//! run on the caller's thread.

mod completion;
mod error;
mod exec;
mod request;
pub mod scan;
mod trigger;

pub use completion::{
    CompletionRecord, HandleKind, HandleSource, OpMetrics, OpResult, ResultHandle, TriggerEvent,
    TriggerPayload, TriggerRecord,
};
pub use error::{DeviceError, ErrorCode, OpError};
pub use request::{ReadSource, Request, Target};
pub use trigger::{TriggerAction, TriggerRegistration, TriggerSpec};

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{Receiver, Sender};
use parking_lot::{Condvar, Mutex, RwLock};

use crate::codec::{Put, Reader};
use crate::expr::{Predicate, Program};
use crate::item::{ItemSchema, Value};
use crate::volume::{FreezeToken, JournalRecord, Volume, VolumeOptions};
use exec::{Handles, Outcome, State};
use trigger::TriggerRegistry;

pub const DEFAULT_QUEUE_DEPTH: usize = 32;
pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_millis(1);

#[derive(Debug, Clone)]
pub struct DeviceConfig {
    /// Maximum accepted-but-unretrieved asynchronous requests.
    pub queue_depth: usize,
    pub poll_interval: Duration,
    pub volume: VolumeOptions,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            queue_depth: DEFAULT_QUEUE_DEPTH,
            poll_interval: DEFAULT_POLL_INTERVAL,
            volume: VolumeOptions::default(),
        }
    }
}

/// How a synchronous caller learns that its request finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Notify {
    /// Re-ask for the completion every interval.
    Poll(Duration),
    /// The device pushes the completion on a notification channel.
    Interrupt,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeviceMetrics {
    pub host_bytes_in: u64,
    pub host_bytes_out: u64,
    pub device_items_scanned: u64,
    pub requests_completed: u64,
    pub trigger_fires: u64,
    /// Trigger actions that ran as a consequence of another trigger action.
    pub nested_trigger_fires: u64,
}

impl DeviceMetrics {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        for v in [
            self.host_bytes_in,
            self.host_bytes_out,
            self.device_items_scanned,
            self.requests_completed,
            self.trigger_fires,
            self.nested_trigger_fires,
        ] {
            out.put_u64(v);
        }
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DeviceError> {
        Ok(Self {
            host_bytes_in: r.u64()?,
            host_bytes_out: r.u64()?,
            device_items_scanned: r.u64()?,
            requests_completed: r.u64()?,
            trigger_fires: r.u64()?,
            nested_trigger_fires: r.u64()?,
        })
    }
}

/// Static description of what the device supports, returned with metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub queue_depth: u32,
    pub poll_interval_us: u32,
    /// Bit set over message-type codes.
    pub msg_types: u32,
    /// Bits: 0 sync poll, 1 sync interrupt, 2 async, 3 delayed, 4 trigger.
    pub modes: u8,
}

impl Capabilities {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u32(self.queue_depth);
        out.put_u32(self.poll_interval_us);
        out.put_u32(self.msg_types);
        out.put_u8(self.modes);
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DeviceError> {
        Ok(Self {
            queue_depth: r.u32()?,
            poll_interval_us: r.u32()?,
            msg_types: r.u32()?,
            modes: r.u8()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerInfo {
    pub id: u64,
    pub name: String,
    pub schema: ItemSchema,
    pub item_count: u64,
    pub live_count: u64,
    pub generation: u64,
}

impl ContainerInfo {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u64(self.id);
        out.put_bytes16(self.name.as_bytes());
        out.put_bytes32(&self.schema.encode());
        out.put_u64(self.item_count);
        out.put_u64(self.live_count);
        out.put_u64(self.generation);
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DeviceError> {
        Ok(Self {
            id: r.u64()?,
            name: String::from_utf8(r.bytes16()?.to_vec())
                .map_err(|_| DeviceError::BadRequest("container name is not UTF-8".into()))?,
            schema: ItemSchema::decode(r.bytes32()?)?,
            item_count: r.u64()?,
            live_count: r.u64()?,
            generation: r.u64()?,
        })
    }
}

type Callback = Box<dyn FnOnce(CompletionRecord) + Send>;

enum Sink {
    /// Parked until fetched with [`Device::poll_completion`].
    Poll,
    /// Queued for [`Device::next_completion`]; counts against the queue depth.
    Async,
    /// Handed to the callback on the executor thread.
    Callback(Callback),
}

struct Job {
    seq: u64,
    req: Request,
    sink: Sink,
}

#[derive(Default)]
struct Queue {
    fifo: VecDeque<Job>,
    paused: bool,
    shutdown: bool,
    async_outstanding: usize,
    async_done: VecDeque<CompletionRecord>,
    polled: HashMap<u64, CompletionRecord>,
}

struct Inner {
    state: RwLock<State>,
    handles: Mutex<Handles>,
    metrics: Mutex<DeviceMetrics>,
    queue: Mutex<Queue>,
    cond: Condvar,
    subscribers: Mutex<Vec<Sender<TriggerRecord>>>,
    config: DeviceConfig,
}

pub struct Device {
    inner: Arc<Inner>,
    executor: Option<JoinHandle<()>>,
}

impl Device {
    pub fn create(path: impl AsRef<Path>, config: DeviceConfig) -> Result<Self, DeviceError> {
        drop(Volume::create(path.as_ref(), config.volume.clone())?);
        Self::open(path, config)
    }

    /// Opens the volume and replays any journaled requests not yet processed
    /// before accepting new work.
    pub fn open(path: impl AsRef<Path>, config: DeviceConfig) -> Result<Self, DeviceError> {
        let vol = Volume::open(path.as_ref(), config.volume.clone())?;
        let triggers = TriggerRegistry::decode(&vol.read_triggers()?)?;
        let inner = Arc::new(Inner {
            state: RwLock::new(State { vol, triggers }),
            handles: Mutex::new(Handles::default()),
            metrics: Mutex::new(DeviceMetrics::default()),
            queue: Mutex::new(Queue::default()),
            cond: Condvar::new(),
            subscribers: Mutex::new(Vec::new()),
            config,
        });
        for done in inner.flush()? {
            log::info!("replayed journaled request {}: {:?}", done.seq, done.status);
        }
        let worker = inner.clone();
        let executor = std::thread::Builder::new()
            .name("ndp-executor".into())
            .spawn(move || worker.run_executor())
            .map_err(|e| DeviceError::Storage(e.to_string()))?;
        Ok(Self {
            inner,
            executor: Some(executor),
        })
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.inner.config
    }

    // ---- submission -------------------------------------------------------

    fn submit(&self, req: Request, sink: Sink) -> Result<u64, DeviceError> {
        let mut q = self.inner.queue.lock();
        if q.shutdown {
            return Err(DeviceError::Closed);
        }
        if matches!(sink, Sink::Async) {
            if q.async_outstanding >= self.inner.config.queue_depth {
                return Err(DeviceError::QueueFull);
            }
            q.async_outstanding += 1;
        }
        let seq = match self.inner.state.write().vol.allocate_seq() {
            Ok(seq) => seq,
            Err(e) => {
                if matches!(sink, Sink::Async) {
                    q.async_outstanding -= 1;
                }
                return Err(e.into());
            }
        };
        q.fifo.push_back(Job { seq, req, sink });
        self.inner.cond.notify_all();
        Ok(seq)
    }

    /// Blocks until the device has executed `req`.
    pub fn submit_sync(&self, req: Request, notify: Notify) -> Result<CompletionRecord, DeviceError> {
        match notify {
            Notify::Interrupt => {
                let rx = self.submit_with_callback(req)?.1;
                rx.recv().map_err(|_| DeviceError::Closed)
            }
            Notify::Poll(interval) => {
                let seq = self.submit_polled(req)?;
                loop {
                    std::thread::sleep(interval);
                    if let Some(done) = self.poll_completion(seq) {
                        return Ok(done);
                    }
                    if self.inner.queue.lock().shutdown {
                        return Err(DeviceError::Closed);
                    }
                }
            }
        }
    }

    /// Accepts a request whose completion is parked for [`Device::poll_completion`].
    pub fn submit_polled(&self, req: Request) -> Result<u64, DeviceError> {
        self.submit(req, Sink::Poll)
    }

    /// Accepts a request whose completion is delivered on the returned channel.
    pub fn submit_with_callback(&self, req: Request) -> Result<(u64, Receiver<CompletionRecord>), DeviceError> {
        let (tx, rx) = crossbeam_channel::bounded(1);
        let seq = self.submit(
            req,
            Sink::Callback(Box::new(move |c| {
                let _ = tx.send(c);
            })),
        )?;
        Ok((seq, rx))
    }

    /// Accepts a request whose completion is handed to `callback` on the
    /// executor thread.
    pub fn submit_notify(
        &self,
        req: Request,
        callback: impl FnOnce(CompletionRecord) + Send + 'static,
    ) -> Result<u64, DeviceError> {
        self.submit(req, Sink::Callback(Box::new(callback)))
    }

    pub fn poll_completion(&self, seq: u64) -> Option<CompletionRecord> {
        self.inner.queue.lock().polled.remove(&seq)
    }

    /// Enqueues without waiting; the returned ticket is the request's seq.
    pub fn submit_async(&self, req: Request) -> Result<u64, DeviceError> {
        self.submit(req, Sink::Async)
    }

    /// Oldest unretrieved asynchronous completion. With `wait`, blocks while
    /// asynchronous requests are still outstanding.
    pub fn next_completion(&self, wait: bool) -> Option<CompletionRecord> {
        let mut q = self.inner.queue.lock();
        loop {
            if let Some(done) = q.async_done.pop_front() {
                q.async_outstanding -= 1;
                return Some(done);
            }
            if !wait || q.async_outstanding == 0 || q.shutdown {
                return None;
            }
            self.inner.cond.wait(&mut q);
        }
    }

    /// Stops the executor from taking new work (queued requests stay queued).
    pub fn pause(&self) {
        self.inner.queue.lock().paused = true;
    }

    pub fn resume(&self) {
        self.inner.queue.lock().paused = false;
        self.inner.cond.notify_all();
    }

    /// Runs `req` as a synchronous interrupt-mode request and returns its result.
    pub fn call(&self, req: Request) -> Result<OpResult, OpError> {
        self.submit_sync(req, Notify::Interrupt)
            .map_err(|e| e.to_op_error())?
            .status
    }

    // ---- typed verbs --------------------------------------------------------

    pub fn exec_get(&self, target: Target, pred: Predicate) -> Result<ResultHandle, OpError> {
        match self.call(Request::Get { target, pred })? {
            OpResult::Handle(h) => Ok(h),
            other => Err(unexpected(other)),
        }
    }

    pub fn exec_read(&self, handle: u64, offset: u64, count: u64) -> Result<Vec<(u64, crate::item::Item)>, OpError> {
        match self.call(Request::Read(ReadSource::Handle { handle, offset, count }))? {
            OpResult::Items { items, .. } => Ok(items),
            other => Err(unexpected(other)),
        }
    }

    pub fn exec_write(&self, handle: u64, dest: &str) -> Result<u64, OpError> {
        match self.call(Request::Write { handle, dest: dest.into() })? {
            OpResult::Container(id) => Ok(id),
            other => Err(unexpected(other)),
        }
    }

    pub fn exec_set(&self, container: u64, pred: Predicate, mutation: crate::expr::Mutation) -> Result<u64, OpError> {
        match self.call(Request::Set { container, pred, mutation })? {
            OpResult::Count(n) => Ok(n),
            other => Err(unexpected(other)),
        }
    }

    pub fn exec_execute(&self, program: Program, targets: Vec<u64>) -> Result<OpResult, OpError> {
        self.call(Request::Execute { program, targets })
    }

    pub fn freeze(&self, container: u64, range: Option<(u64, u64)>) -> Result<FreezeToken, OpError> {
        match self.call(Request::Freeze { container, range })? {
            OpResult::Token(t) => Ok(t),
            other => Err(unexpected(other)),
        }
    }

    pub fn unfreeze(&self, token: u64) -> Result<(), OpError> {
        self.call(Request::Unfreeze { token }).map(|_| ())
    }

    pub fn append(&self, container: u64, items: Vec<crate::item::Item>) -> Result<(u64, u64), OpError> {
        let schema = self.schema(container).map_err(|e| e.to_op_error())?;
        match self.call(Request::Append { container, schema, items })? {
            OpResult::Appended { first_index, generation } => Ok((first_index, generation)),
            other => Err(unexpected(other)),
        }
    }

    pub fn delete(&self, container: u64, indices: Vec<u64>) -> Result<u64, OpError> {
        match self.call(Request::Delete { container, indices })? {
            OpResult::Count(n) => Ok(n),
            other => Err(unexpected(other)),
        }
    }

    // ---- delayed execution --------------------------------------------------

    /// Durably journals `req` for later execution and returns its seq.
    pub fn enqueue_delayed(&self, req: Request) -> Result<u64, DeviceError> {
        if !req.is_delayable() {
            return Err(DeviceError::NotDelayable(req.name()));
        }
        let body = req.encode();
        let mut state = self.inner.state.write();
        let seq = state.vol.allocate_seq()?;
        state.vol.journal_append(seq, &body).map_err(|e| match e {
            crate::volume::VolumeError::SimulatedCrash(p) => DeviceError::Crashed(p),
            other => DeviceError::JournalWriteFailed(other.to_string()),
        })?;
        Ok(seq)
    }

    /// Executes every journaled request past the watermark, in seq order.
    pub fn flush_delayed(&self) -> Result<Vec<CompletionRecord>, DeviceError> {
        self.inner.flush()
    }

    /// Journal records not yet processed.
    pub fn pending_delayed(&self) -> Vec<JournalRecord> {
        self.inner.state.read().vol.journal_pending()
    }

    pub fn journal(&self) -> Vec<JournalRecord> {
        self.inner.state.read().vol.journal_records().to_vec()
    }

    // ---- control plane ------------------------------------------------------

    pub fn create_container(&self, name: &str, schema: ItemSchema) -> Result<u64, DeviceError> {
        Ok(self.inner.state.write().vol.create_container(name, schema)?)
    }

    /// Binds to `name`, creating it with `schema` when absent and a schema is
    /// given. An existing container must have the given schema, if any.
    pub fn open_container(&self, name: &str, create: Option<ItemSchema>) -> Result<ContainerInfo, DeviceError> {
        let mut state = self.inner.state.write();
        let id = match (state.vol.container_id(name), create) {
            (Some(id), Some(schema)) => {
                if *state.vol.schema(id)? != schema {
                    return Err(DeviceError::SchemaMismatch);
                }
                id
            }
            (Some(id), None) => id,
            (None, Some(schema)) => state.vol.create_container(name, schema)?,
            (None, None) => return Err(DeviceError::NoSuchName(name.to_string())),
        };
        container_info(&state.vol, id)
    }

    pub fn container_info(&self, id: u64) -> Result<ContainerInfo, DeviceError> {
        container_info(&self.inner.state.read().vol, id)
    }

    pub fn containers(&self) -> Vec<ContainerInfo> {
        let state = self.inner.state.read();
        state
            .vol
            .containers()
            .iter()
            .filter_map(|m| container_info(&state.vol, m.id).ok())
            .collect()
    }

    pub fn schema(&self, id: u64) -> Result<ItemSchema, DeviceError> {
        Ok((*self.inner.state.read().vol.schema(id)?).clone())
    }

    pub fn register_trigger(&self, spec: TriggerSpec) -> Result<u64, DeviceError> {
        let mut state = self.inner.state.write();
        let schema = state.vol.schema(spec.container_id)?;
        spec.typecheck(&schema)?;
        let (next, id) = state.triggers.with_added(spec);
        state.vol.write_triggers(&next.encode())?;
        state.triggers = next;
        Ok(id)
    }

    pub fn unregister_trigger(&self, trigger_id: u64) -> Result<(), DeviceError> {
        let mut state = self.inner.state.write();
        let next = state.triggers.without(trigger_id)?;
        state.vol.write_triggers(&next.encode())?;
        state.triggers = next;
        Ok(())
    }

    pub fn triggers(&self) -> Vec<TriggerRegistration> {
        self.inner.state.read().triggers.list()
    }

    /// Every trigger record logged from now on is also sent to the returned channel.
    pub fn subscribe_triggers(&self) -> Receiver<TriggerRecord> {
        let (tx, rx) = crossbeam_channel::unbounded();
        self.inner.subscribers.lock().push(tx);
        rx
    }

    pub fn metrics(&self) -> DeviceMetrics {
        *self.inner.metrics.lock()
    }

    pub fn capabilities(&self) -> Capabilities {
        let msg_types = crate::wire::MsgType::ALL
            .iter()
            .fold(0u32, |bits, t| bits | 1 << (*t as u8));
        Capabilities {
            queue_depth: self.inner.config.queue_depth as u32,
            poll_interval_us: self.inner.config.poll_interval.as_micros() as u32,
            msg_types,
            modes: 0b1_1111,
        }
    }

    /// Read access to the volume, for inspection and tests.
    pub fn with_volume<T>(&self, f: impl FnOnce(&Volume) -> T) -> T {
        f(&self.inner.state.read().vol)
    }
}

fn unexpected(result: OpResult) -> OpError {
    OpError {
        code: ErrorCode::BadRequest,
        message: format!("unexpected result {result:?}"),
    }
}

fn container_info(vol: &Volume, id: u64) -> Result<ContainerInfo, DeviceError> {
    let meta = vol.container_meta(id)?;
    Ok(ContainerInfo {
        id,
        live_count: meta.live_count(),
        name: meta.name,
        schema: (*meta.schema).clone(),
        item_count: meta.item_count,
        generation: meta.generation,
    })
}

impl Drop for Device {
    fn drop(&mut self) {
        self.inner.queue.lock().shutdown = true;
        self.inner.cond.notify_all();
        if let Some(h) = self.executor.take() {
            let _ = h.join();
        }
    }
}

impl Inner {
    fn run_executor(&self) {
        loop {
            let job = {
                let mut q = self.queue.lock();
                loop {
                    if q.shutdown {
                        return;
                    }
                    if !q.paused {
                        if let Some(job) = q.fifo.pop_front() {
                            break job;
                        }
                    }
                    self.cond.wait(&mut q);
                }
            };
            let done = self.execute(job.seq, &job.req, None);
            match job.sink {
                Sink::Callback(cb) => cb(done),
                Sink::Poll => {
                    self.queue.lock().polled.insert(job.seq, done);
                }
                Sink::Async => {
                    self.queue.lock().async_done.push_back(done);
                    self.cond.notify_all();
                }
            }
        }
    }

    fn execute(&self, seq: u64, req: &Request, journal_seq: Option<u64>) -> CompletionRecord {
        let outcome = if req.mutates() || matches!(req, Request::Freeze { .. } | Request::Unfreeze { .. }) {
            let mut state = self.state.write();
            self.execute_locked(&mut state, seq, req, journal_seq)
        } else {
            self.state.read().run_read(&self.handles, req)
        };
        self.complete(seq, req, outcome)
    }

    fn execute_locked(
        &self,
        state: &mut State,
        seq: u64,
        req: &Request,
        journal_seq: Option<u64>,
    ) -> Result<Outcome, DeviceError> {
        let outcome = state.run_write(&self.handles, seq, req, journal_seq)?;
        if !outcome.triggers.is_empty() {
            let mut log = Vec::new();
            for rec in &outcome.triggers {
                rec.encode_into(&mut log);
            }
            state.vol.append_trigger_log(&log)?;
            let mut subs = self.subscribers.lock();
            subs.retain(|tx| outcome.triggers.iter().all(|rec| tx.send(rec.clone()).is_ok()));
        }
        Ok(outcome)
    }

    fn complete(&self, seq: u64, req: &Request, outcome: Result<Outcome, DeviceError>) -> CompletionRecord {
        let (status, scanned, matched, fires) = match outcome {
            Ok(o) => (Ok(o.result), o.scanned, o.matched, o.trigger_fires),
            Err(e) => (Err(e.to_op_error()), 0, 0, 0),
        };
        let mut done = CompletionRecord {
            seq,
            status,
            metrics: OpMetrics {
                items_scanned: scanned,
                items_matched: matched,
                host_bytes: 0,
            },
        };
        done.metrics.host_bytes = done.encoded_len() as u64;
        let mut m = self.metrics.lock();
        m.host_bytes_in += 1 + req.body().len() as u64;
        m.host_bytes_out += done.metrics.host_bytes;
        m.device_items_scanned += scanned;
        m.requests_completed += 1;
        m.trigger_fires += fires;
        done
    }

    fn flush(&self) -> Result<Vec<CompletionRecord>, DeviceError> {
        let mut state = self.state.write();
        let mut out = Vec::new();
        for rec in state.vol.journal_pending() {
            let done = match Request::decode(&rec.body) {
                Ok(req) => {
                    let outcome = self.execute_locked(&mut state, rec.seq, &req, Some(rec.seq));
                    if let Err(DeviceError::Crashed(p)) = outcome {
                        return Err(DeviceError::Crashed(p));
                    }
                    self.complete(rec.seq, &req, outcome)
                }
                Err(e) => CompletionRecord {
                    seq: rec.seq,
                    status: Err(e.to_op_error()),
                    metrics: OpMetrics::default(),
                },
            };
            state.vol.advance_watermark(rec.seq)?;
            out.push(done);
        }
        Ok(out)
    }
}

/// Helper for tests and tools: the value of a scalar completion.
pub fn scalar_of(result: &OpResult) -> Option<&Value> {
    match result {
        OpResult::Scalar(v) => Some(v),
        _ => None,
    }
}
