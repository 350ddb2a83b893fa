//! Host-side file system mediator.
//!
//! [`HostFs`] offers both interfaces over one device connection: the classic
//! one, where every item is shipped to the host and filtered there, and the
//! data-centric one, where predicates, mutations and programs run on the
//! device and only results cross the wire. Nothing is cached host-side, so
//! the connection's [`TrafficLedger`] sees every byte.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use thiserror::Error;

use crate::device::{
    CompletionRecord, ContainerInfo, Device, Notify, OpError, OpResult, ReadSource, Request, ResultHandle, Target,
    TriggerAction, TriggerEvent, TriggerRecord, TriggerSpec,
};
use crate::expr::{eval_predicate, Mutation, Predicate, Program};
use crate::item::{Item, ItemSchema};
use crate::volume::FreezeToken;
use crate::wire::{loopback, Client, ClientError, OpenFlags, TrafficLedger};

/// Items per READ request on bulk transfers; keeps every frame far below the
/// payload limit for any schema the bench or the CLI produces.
pub const READ_CHUNK: u64 = 8192;

#[derive(Debug, Error)]
pub enum HostError {
    #[error("file handle is closed")]
    HandleClosed,
    #[error("a schema is required to create a container")]
    SchemaRequired,
    #[error("file is open read-only")]
    ReadOnly,
    #[error("{0} requests cannot be delayed")]
    NotDelayable(&'static str),
    #[error("{0}")]
    Device(OpError),
    #[error(transparent)]
    Transport(ClientError),
    #[error("unexpected result: {0}")]
    Unexpected(String),
}

impl HostError {
    pub fn code(&self) -> Option<crate::device::ErrorCode> {
        match self {
            HostError::Device(e) => Some(e.code),
            HostError::NotDelayable(_) => Some(crate::device::ErrorCode::NotDelayable),
            _ => None,
        }
    }
}

impl From<ClientError> for HostError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Remote(op) => HostError::Device(op),
            other => HostError::Transport(other),
        }
    }
}

impl From<OpError> for HostError {
    fn from(e: OpError) -> Self {
        HostError::Device(e)
    }
}

/// How a data-centric request is issued.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Wait for the result, learning of completion by polling or interrupt.
    Sync(Notify),
    /// Queue on the device and return a ticket for [`HostFs::next_completion`].
    Async,
    /// Journal on the device for later processing.
    Delayed,
}

/// What a mode-aware call produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<T> {
    Done(T),
    /// Async ticket (the request's seq).
    Ticket(u64),
    /// Seq of the journaled request.
    Journaled(u64),
}

impl<T> Outcome<T> {
    pub fn done(self) -> Option<T> {
        match self {
            Outcome::Done(v) => Some(v),
            _ => None,
        }
    }

    pub fn seq(&self) -> Option<u64> {
        match self {
            Outcome::Ticket(s) | Outcome::Journaled(s) => Some(*s),
            Outcome::Done(_) => None,
        }
    }

    fn try_map<U>(self, f: impl FnOnce(T) -> Result<U, HostError>) -> Result<Outcome<U>, HostError> {
        Ok(match self {
            Outcome::Done(v) => Outcome::Done(f(v)?),
            Outcome::Ticket(s) => Outcome::Ticket(s),
            Outcome::Journaled(s) => Outcome::Journaled(s),
        })
    }
}

/// An open data-centric file: a container bound on the device.
#[derive(Debug)]
pub struct DcFile {
    info: ContainerInfo,
    flags: OpenFlags,
    closed: AtomicBool,
    tokens: Mutex<Vec<u64>>,
}

impl DcFile {
    pub fn id(&self) -> u64 {
        self.info.id
    }

    pub fn name(&self) -> &str {
        &self.info.name
    }

    pub fn schema(&self) -> &ItemSchema {
        &self.info.schema
    }

    /// Container state as of open.
    pub fn info(&self) -> &ContainerInfo {
        &self.info
    }

    pub fn flags(&self) -> OpenFlags {
        self.flags
    }

    /// Freeze tokens taken through this file and not yet released.
    pub fn active_tokens(&self) -> Vec<u64> {
        self.tokens.lock().clone()
    }

    fn check(&self) -> Result<u64, HostError> {
        if self.closed.load(Ordering::SeqCst) {
            Err(HostError::HandleClosed)
        } else {
            Ok(self.info.id)
        }
    }

    fn check_writable(&self) -> Result<u64, HostError> {
        let id = self.check()?;
        if self.flags.read_only {
            return Err(HostError::ReadOnly);
        }
        Ok(id)
    }
}

/// What a GET scans: a live file or a frozen snapshot.
#[derive(Debug, Clone, Copy)]
pub enum GetTarget<'a> {
    File(&'a DcFile),
    Token(u64),
}

pub struct HostFs {
    client: Client,
    poll_interval: Duration,
}

impl HostFs {
    pub fn new(client: Client) -> Self {
        Self {
            client,
            poll_interval: crate::device::DEFAULT_POLL_INTERVAL,
        }
    }

    /// Mediator over an in-process connection to `device`.
    pub fn loopback(device: Arc<Device>) -> Self {
        let interval = device.config().poll_interval;
        Self::new(loopback(device)).with_poll_interval(interval)
    }

    pub fn connect(addr: &str) -> Result<Self, HostError> {
        Ok(Self::new(
            Client::connect_tcp(addr).map_err(|e| HostError::Transport(ClientError::Io(e)))?,
        ))
    }

    pub fn with_poll_interval(mut self, interval: Duration) -> Self {
        self.poll_interval = interval;
        self
    }

    pub fn poll_mode(&self) -> Mode {
        Mode::Sync(Notify::Poll(self.poll_interval))
    }

    pub fn client(&self) -> &Client {
        &self.client
    }

    pub fn ledger(&self) -> TrafficLedger {
        self.client.ledger()
    }

    fn run(&self, req: Request, mode: Mode) -> Result<Outcome<OpResult>, HostError> {
        Ok(match mode {
            Mode::Sync(notify) => Outcome::Done(self.client.submit(&req, notify)?.status?),
            Mode::Async => Outcome::Ticket(self.client.submit_async(&req)?),
            Mode::Delayed => {
                if !req.is_delayable() {
                    return Err(HostError::NotDelayable(req.name()));
                }
                Outcome::Journaled(self.client.enqueue_delayed(&req)?)
            }
        })
    }

    fn run_sync(&self, req: Request) -> Result<OpResult, HostError> {
        Ok(self.client.submit(&req, Notify::Interrupt)?.status?)
    }

    // ---- files --------------------------------------------------------------

    pub fn open_dc(&self, name: &str, flags: OpenFlags, schema: Option<&ItemSchema>) -> Result<DcFile, HostError> {
        if flags.create && schema.is_none() {
            return Err(HostError::SchemaRequired);
        }
        let info = self.client.open(name, flags, schema)?;
        Ok(DcFile {
            info,
            flags,
            closed: AtomicBool::new(false),
            tokens: Mutex::new(Vec::new()),
        })
    }

    /// Releases the file's freeze tokens and closes it.
    pub fn close_dc(&self, file: &DcFile) -> Result<(), HostError> {
        let id = file.check()?;
        for token in file.active_tokens() {
            self.dc_unfreeze(file, token)?;
        }
        self.client.close_container(id)?;
        file.closed.store(true, Ordering::SeqCst);
        Ok(())
    }

    /// Current container state (item counts move as the file is modified).
    pub fn stat(&self, file: &DcFile) -> Result<ContainerInfo, HostError> {
        file.check()?;
        Ok(self.client.open(file.name(), OpenFlags::default(), None)?)
    }

    pub fn dc_freeze(&self, file: &DcFile, range: Option<(u64, u64)>) -> Result<FreezeToken, HostError> {
        let container = file.check()?;
        match self.run_sync(Request::Freeze { container, range })? {
            OpResult::Token(t) => {
                file.tokens.lock().push(t.token_id);
                Ok(t)
            }
            other => Err(unexpected(other)),
        }
    }

    pub fn dc_unfreeze(&self, file: &DcFile, token: u64) -> Result<(), HostError> {
        file.check()?;
        self.run_sync(Request::Unfreeze { token })?;
        file.tokens.lock().retain(|t| *t != token);
        Ok(())
    }

    // ---- data-centric verbs -------------------------------------------------

    pub fn dc_get(&self, target: GetTarget<'_>, pred: &Predicate, mode: Mode) -> Result<Outcome<ResultHandle>, HostError> {
        let target = match target {
            GetTarget::File(f) => Target::Container(f.check()?),
            GetTarget::Token(t) => Target::Token(t),
        };
        if mode == Mode::Delayed {
            return Err(HostError::NotDelayable("GET"));
        }
        self.run(Request::Get { target, pred: pred.clone() }, mode)?
            .try_map(|r| match r {
                OpResult::Handle(h) => Ok(h),
                other => Err(unexpected(other)),
            })
    }

    pub fn dc_read(&self, handle: &ResultHandle, offset: u64, count: u64) -> Result<Vec<(u64, Item)>, HostError> {
        let src = ReadSource::Handle {
            handle: handle.handle_id,
            offset,
            count,
        };
        items_of(self.run_sync(Request::Read(src))?)
    }

    /// Reads a whole result set in [`READ_CHUNK`]-item requests.
    pub fn dc_read_all(&self, handle: &ResultHandle) -> Result<Vec<(u64, Item)>, HostError> {
        let mut out = Vec::with_capacity(handle.cardinality as usize);
        let mut offset = 0;
        while offset < handle.cardinality {
            out.extend(self.dc_read(handle, offset, READ_CHUNK)?);
            offset += READ_CHUNK;
        }
        Ok(out)
    }

    pub fn dc_write(&self, handle: &ResultHandle, dest: &str) -> Result<u64, HostError> {
        match self.run_sync(Request::Write {
            handle: handle.handle_id,
            dest: dest.to_string(),
        })? {
            OpResult::Container(id) => Ok(id),
            other => Err(unexpected(other)),
        }
    }

    pub fn dc_set(&self, file: &DcFile, pred: &Predicate, mutation: &Mutation, mode: Mode) -> Result<Outcome<u64>, HostError> {
        let container = file.check_writable()?;
        let req = Request::Set {
            container,
            pred: pred.clone(),
            mutation: mutation.clone(),
        };
        self.run(req, mode)?.try_map(count_of)
    }

    pub fn dc_execute(&self, program: Program, files: &[&DcFile], mode: Mode) -> Result<Outcome<OpResult>, HostError> {
        let targets = files.iter().map(|f| f.check()).collect::<Result<Vec<_>, _>>()?;
        self.run(Request::Execute { program, targets }, mode)
    }

    /// Appends items; returns the first new index.
    pub fn dc_append(&self, file: &DcFile, items: Vec<Item>, mode: Mode) -> Result<Outcome<u64>, HostError> {
        let container = file.check_writable()?;
        let req = Request::Append {
            container,
            schema: file.schema().clone(),
            items,
        };
        self.run(req, mode)?.try_map(|r| match r {
            OpResult::Appended { first_index, .. } => Ok(first_index),
            other => Err(unexpected(other)),
        })
    }

    pub fn dc_delete(&self, file: &DcFile, indices: Vec<u64>, mode: Mode) -> Result<Outcome<u64>, HostError> {
        let container = file.check_writable()?;
        self.run(Request::Delete { container, indices }, mode)?.try_map(count_of)
    }

    /// Oldest unretrieved async completion.
    pub fn next_completion(&self, wait: bool) -> Result<Option<CompletionRecord>, HostError> {
        Ok(self.client.next_completion(wait)?)
    }

    pub fn flush_delayed(&self) -> Result<Vec<CompletionRecord>, HostError> {
        Ok(self.client.flush_delayed()?)
    }

    // ---- triggers -----------------------------------------------------------

    pub fn register_trigger_hf(
        &self,
        file: &DcFile,
        event: TriggerEvent,
        predicate: Predicate,
        action: TriggerAction,
    ) -> Result<u64, HostError> {
        let container_id = file.check()?;
        Ok(self.client.register_trigger(&TriggerSpec {
            event,
            container_id,
            predicate,
            action,
            enabled: true,
        })?)
    }

    pub fn unregister_trigger_hf(&self, trigger_id: u64) -> Result<(), HostError> {
        Ok(self.client.unregister_trigger(trigger_id)?)
    }

    /// Trigger-log records of triggers registered on `file`.
    pub fn read_trigger_log(&self, file: &DcFile) -> Result<Vec<TriggerRecord>, HostError> {
        let container = Some(file.check()?);
        match self.run_sync(Request::Read(ReadSource::TriggerLog { container }))? {
            OpResult::TriggerRecords(r) => Ok(r),
            other => Err(unexpected(other)),
        }
    }

    // ---- classic interface --------------------------------------------------

    /// Ships every live item to the host.
    pub fn classic_read_all(&self, file: &DcFile) -> Result<Vec<(u64, Item)>, HostError> {
        let count = self.stat(file)?.item_count;
        let mut out = Vec::new();
        let mut lo = 0;
        while lo < count {
            let hi = (lo + READ_CHUNK).min(count);
            let req = Request::Read(ReadSource::Range {
                container: file.id(),
                lo,
                hi,
            });
            out.extend(items_of(self.run_sync(req)?)?);
            lo = hi;
        }
        Ok(out)
    }

    /// The CPU-centric baseline: read everything, filter on the host.
    pub fn classic_process(&self, file: &DcFile, pred: &Predicate) -> Result<Vec<(u64, Item)>, HostError> {
        let mut all = self.classic_read_all(file)?;
        all.retain(|(_, item)| eval_predicate(item, pred));
        Ok(all)
    }
}

fn unexpected(r: OpResult) -> HostError {
    HostError::Unexpected(format!("{r:?}"))
}

fn count_of(r: OpResult) -> Result<u64, HostError> {
    match r {
        OpResult::Count(n) => Ok(n),
        other => Err(unexpected(other)),
    }
}

fn items_of(r: OpResult) -> Result<Vec<(u64, Item)>, HostError> {
    match r {
        OpResult::Items { items, .. } => Ok(items),
        other => Err(unexpected(other)),
    }
}
