//! Device-side persistence.
//!
//! A volume is a directory:
//!
//! | file | contents |
//! |------|----------|
//! | `superblock.ndp` | magic, version, id/seq counters (replaced atomically) |
//! | `catalog.ndp` | container metadata, committed data-log lengths (replaced atomically) |
//! | `c<ID>.dat` | append-only log of item records and tombstones |
//! | `c<ID>.idx` | `u64` LE byte offset of each item's current bytes in `c<ID>.dat` |
//! | `c<ID>.del` | tombstone bitmap, bit `i` set when item `i` is deleted |
//! | `journal.ndp`, `journal.mark` | delayed requests and the processed watermark |
//! | `triggers.ndp`, `trigger_log.ndp` | trigger registry and fired-trigger records |
//!
//! The catalog rename is the commit point of every mutation batch: data-log
//! bytes past the committed length are discarded on open, and `.idx`/`.del`
//! are rebuilt from the committed log prefix when they disagree with it.
//!
//! Mutations take `&mut self`, reads take `&self`; callers share a volume
//! behind a reader-writer lock to get single-writer, multi-reader access.

mod catalog;
mod fault;
mod journal;

pub use fault::FaultInjector;
pub use journal::JournalRecord;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::codec::{Put, Reader};
use crate::item::{
    decode_item, encode_values_into, validate_item, Item, ItemSchema, SchemaError, ValidationError,
};
use catalog::{Catalog, CatalogEntry, Superblock, SuperblockError};
use journal::Journal;

const SUPERBLOCK: &str = "superblock.ndp";
const CATALOG: &str = "catalog.ndp";
const JOURNAL: &str = "journal.ndp";
const JOURNAL_MARK: &str = "journal.mark";
const TRIGGERS: &str = "triggers.ndp";
const TRIGGER_LOG: &str = "trigger_log.ndp";

const REC_PUT: u8 = 1;
const REC_TOMBSTONE: u8 = 2;

/// Request seqs are reserved in blocks so the superblock is not rewritten per request.
const SEQ_BLOCK: u64 = 1024;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("path already holds data")]
    AlreadyExists,
    #[error("not a volume")]
    NotAVolume,
    #[error("unsupported volume version {0}")]
    BadVersion(u32),
    #[error("corrupt catalog: {0}")]
    CorruptCatalog(String),
    #[error("no container with id {0}")]
    NoSuchContainer(u64),
    #[error("no container named {0:?}")]
    NoSuchName(String),
    #[error("container name {0:?} is in use")]
    NameInUse(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(#[from] SchemaError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("range [{lo}, {hi}) out of bounds for {count} items")]
    RangeOutOfBounds { lo: u64, hi: u64, count: u64 },
    #[error("index {index} out of bounds for {count} items")]
    IndexOutOfBounds { index: u64, count: u64 },
    #[error("item {0} is deleted")]
    Tombstoned(u64),
    #[error("item {0} lies in a frozen range")]
    Frozen(u64),
    #[error("no active freeze token {0}")]
    NoSuchToken(u64),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("simulated crash at {0}")]
    SimulatedCrash(&'static str),
}

pub type Result<T, E = VolumeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Default)]
pub struct VolumeOptions {
    /// fsync data and metadata at each commit. Without it writes still reach
    /// the OS before a call returns, which survives a process kill.
    pub sync: bool,
    pub fault: Option<Arc<FaultInjector>>,
}

impl VolumeOptions {
    pub fn durable() -> Self {
        Self {
            sync: true,
            fault: None,
        }
    }

    pub fn with_fault(mut self, fault: Arc<FaultInjector>) -> Self {
        self.fault = Some(fault);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerMeta {
    pub id: u64,
    pub name: String,
    pub schema: Arc<ItemSchema>,
    pub item_count: u64,
    pub generation: u64,
    /// Deleted item indices, ascending.
    pub tombstones: Vec<u64>,
}

impl ContainerMeta {
    pub fn live_count(&self) -> u64 {
        self.item_count - self.tombstones.len() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FreezeToken {
    pub token_id: u64,
    pub container_id: u64,
    pub lo: u64,
    pub hi: u64,
    pub generation_at_freeze: u64,
}

impl FreezeToken {
    pub fn covers(&self, index: u64) -> bool {
        self.lo <= index && index < self.hi
    }
}

/// One change inside a commit batch.
#[derive(Debug, Clone)]
pub enum Change {
    /// Write `item` at `index`; `index == item_count` appends.
    Put(u64, Item),
    Tombstone(u64),
}

struct Container {
    id: u64,
    name: String,
    schema: Arc<ItemSchema>,
    generation: u64,
    items: Vec<Item>,
    offsets: Vec<u64>,
    dead: Vec<bool>,
    dead_count: u64,
    dat_len: u64,
    dat: File,
    idx: File,
    del: File,
}

impl Container {
    fn meta(&self) -> ContainerMeta {
        ContainerMeta {
            id: self.id,
            name: self.name.clone(),
            schema: self.schema.clone(),
            item_count: self.items.len() as u64,
            generation: self.generation,
            tombstones: self
                .dead
                .iter()
                .enumerate()
                .filter(|(_, d)| **d)
                .map(|(i, _)| i as u64)
                .collect(),
        }
    }

    fn catalog_entry(&self) -> CatalogEntry {
        CatalogEntry {
            id: self.id,
            name: self.name.clone(),
            schema: (*self.schema).clone(),
            item_count: self.items.len() as u64,
            generation: self.generation,
            dat_len: self.dat_len,
        }
    }
}

/// Read-only view of a container's live items, for device-side scans.
#[derive(Clone, Copy)]
pub struct ContainerView<'a> {
    pub id: u64,
    pub schema: &'a Arc<ItemSchema>,
    pub generation: u64,
    items: &'a [Item],
    dead: &'a [bool],
}

impl<'a> ContainerView<'a> {
    pub fn item_count(&self) -> u64 {
        self.items.len() as u64
    }

    pub fn is_live(&self, index: u64) -> bool {
        !self.dead[index as usize]
    }

    pub fn item(&self, index: u64) -> &'a Item {
        &self.items[index as usize]
    }

    /// Live `(index, item)` pairs in `[lo, hi)`, ascending; `hi` is clamped
    /// to the item count.
    pub fn live_in(&self, lo: u64, hi: u64) -> impl Iterator<Item = (u64, &'a Item)> + 'a {
        let items = self.items;
        let dead = self.dead;
        (lo..hi.min(items.len() as u64))
            .filter(move |i| !dead[*i as usize])
            .map(move |i| (i, &items[i as usize]))
    }

    pub fn items(&self) -> &'a [Item] {
        self.items
    }

    pub fn dead(&self) -> &'a [bool] {
        self.dead
    }
}

pub struct Volume {
    root: PathBuf,
    opts: VolumeOptions,
    superblock: Superblock,
    containers: BTreeMap<u64, Container>,
    names: HashMap<String, u64>,
    journal_applied: u64,
    journal: Journal,
    watermark: u64,
    next_seq: u64,
    freezes: BTreeMap<u64, FreezeToken>,
    next_token: u64,
    trigger_log: File,
    trigger_log_len: u64,
}

fn container_file(root: &Path, id: u64, ext: &str) -> PathBuf {
    root.join(format!("c{id}.{ext}"))
}

fn open_rw(path: &Path) -> io::Result<File> {
    OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)
}

fn read_file(path: &Path) -> io::Result<Vec<u8>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}

fn tombstone_bitmap(dead: &[bool]) -> Vec<u8> {
    let mut bitmap = vec![0u8; dead.len().div_ceil(8)];
    for (i, d) in dead.iter().enumerate() {
        if *d {
            bitmap[i / 8] |= 1 << (i % 8);
        }
    }
    bitmap
}

impl Volume {
    pub fn create(path: impl AsRef<Path>, opts: VolumeOptions) -> Result<Self> {
        let root = path.as_ref();
        if root.exists() {
            if !root.is_dir() || fs::read_dir(root)?.next().is_some() {
                return Err(VolumeError::AlreadyExists);
            }
        } else {
            fs::create_dir_all(root)?;
        }
        let superblock = Superblock {
            next_container_id: 1,
            next_request_seq: 1,
        };
        let vol = VolumeFiles { root, sync: opts.sync };
        vol.write_atomic(CATALOG, &Catalog::default().encode())?;
        Journal::create(&root.join(JOURNAL))?;
        vol.write_atomic(JOURNAL_MARK, &0u64.to_le_bytes())?;
        vol.write_atomic(TRIGGERS, &[])?;
        File::create(root.join(TRIGGER_LOG))?;
        // superblock last: its presence marks a complete volume
        vol.write_atomic(SUPERBLOCK, &superblock.encode())?;
        Self::open(root, opts)
    }

    /// Loads a volume. Delayed requests still pending in the journal are
    /// left for the device to replay.
    pub fn open(path: impl AsRef<Path>, opts: VolumeOptions) -> Result<Self> {
        let root = path.as_ref().to_path_buf();
        let sb_bytes = match read_file(&root.join(SUPERBLOCK)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(VolumeError::NotAVolume),
            Err(e) => return Err(e.into()),
        };
        let superblock = Superblock::decode(&sb_bytes).map_err(|e| match e {
            SuperblockError::NotAVolume => VolumeError::NotAVolume,
            SuperblockError::BadVersion(v) => VolumeError::BadVersion(v),
        })?;
        let catalog = Catalog::decode(&read_file(&root.join(CATALOG))?)
            .map_err(VolumeError::CorruptCatalog)?;

        let mut containers = BTreeMap::new();
        let mut names = HashMap::new();
        for entry in catalog.entries {
            if containers.contains_key(&entry.id) || names.contains_key(&entry.name) {
                return Err(VolumeError::CorruptCatalog(format!("duplicate container {}", entry.id)));
            }
            if entry.id >= superblock.next_container_id {
                return Err(VolumeError::CorruptCatalog(format!(
                    "container id {} beyond superblock counter",
                    entry.id
                )));
            }
            names.insert(entry.name.clone(), entry.id);
            containers.insert(entry.id, load_container(&root, entry)?);
        }

        let journal = Journal::open(&root.join(JOURNAL))?;
        let mark = read_file(&root.join(JOURNAL_MARK))?;
        let watermark = match mark.as_slice().try_into() {
            Ok(b) => u64::from_le_bytes(b),
            Err(_) => return Err(VolumeError::CorruptCatalog("bad journal.mark".into())),
        };
        let trigger_log = open_rw(&root.join(TRIGGER_LOG))?;
        let trigger_log_len = trigger_log.metadata()?.len();

        let next_seq = superblock
            .next_request_seq
            .max(journal.last_seq().map_or(0, |s| s + 1))
            .max(catalog.journal_applied + 1)
            .max(watermark + 1);
        let mut vol = Self {
            root,
            opts,
            superblock,
            containers,
            names,
            journal_applied: catalog.journal_applied,
            journal,
            watermark,
            next_seq,
            freezes: BTreeMap::new(),
            next_token: 1,
            trigger_log,
            trigger_log_len,
        };
        // everything below the reservation may have been handed out already
        vol.superblock.next_request_seq = next_seq;
        Ok(vol)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn files(&self) -> VolumeFiles<'_> {
        VolumeFiles {
            root: &self.root,
            sync: self.opts.sync,
        }
    }

    fn check(&self, point: &'static str) -> Result<()> {
        match &self.opts.fault {
            Some(f) if f.trip(point) => Err(VolumeError::SimulatedCrash(point)),
            _ => Ok(()),
        }
    }

    fn ensure_alive(&self) -> Result<()> {
        match &self.opts.fault {
            Some(f) if f.crashed() => Err(VolumeError::SimulatedCrash(
                f.crash_point().unwrap_or("earlier crash"),
            )),
            _ => Ok(()),
        }
    }

    fn container(&self, id: u64) -> Result<&Container> {
        self.containers.get(&id).ok_or(VolumeError::NoSuchContainer(id))
    }

    fn write_catalog(&self, overrides: Option<&CatalogEntry>, journal_applied: u64) -> Result<()> {
        let entries = self
            .containers
            .values()
            .map(|c| match overrides {
                Some(o) if o.id == c.id => o.clone(),
                _ => c.catalog_entry(),
            })
            .chain(overrides.filter(|o| !self.containers.contains_key(&o.id)).cloned())
            .collect();
        let catalog = Catalog {
            journal_applied,
            entries,
        };
        self.files().write_atomic(CATALOG, &catalog.encode())?;
        Ok(())
    }

    pub fn create_container(&mut self, name: &str, schema: ItemSchema) -> Result<u64> {
        self.ensure_alive()?;
        if name.is_empty() || name.len() > u16::MAX as usize {
            return Err(VolumeError::InvalidSchema(SchemaError::BadSpec(
                "container name must be 1..=65535 bytes".into(),
            )));
        }
        if self.names.contains_key(name) {
            return Err(VolumeError::NameInUse(name.to_string()));
        }
        let schema = ItemSchema::new(schema.fields().to_vec())?;
        let id = self.superblock.next_container_id;
        let mut sb = self.superblock;
        sb.next_container_id += 1;
        self.files().write_atomic(SUPERBLOCK, &sb.encode())?;
        self.superblock = sb;
        self.check("create.superblock")?;

        for ext in ["dat", "idx", "del"] {
            File::create(container_file(&self.root, id, ext))?;
        }
        let entry = CatalogEntry {
            id,
            name: name.to_string(),
            schema,
            item_count: 0,
            generation: 0,
            dat_len: 0,
        };
        self.write_catalog(Some(&entry), self.journal_applied)?;
        self.check("create.catalog")?;
        let container = load_container(&self.root, entry)?;
        self.names.insert(name.to_string(), id);
        self.containers.insert(id, container);
        Ok(id)
    }

    pub fn container_id(&self, name: &str) -> Option<u64> {
        self.names.get(name).copied()
    }

    pub fn container_meta(&self, id: u64) -> Result<ContainerMeta> {
        Ok(self.container(id)?.meta())
    }

    pub fn schema(&self, id: u64) -> Result<Arc<ItemSchema>> {
        Ok(self.container(id)?.schema.clone())
    }

    pub fn generation(&self, id: u64) -> Result<u64> {
        Ok(self.container(id)?.generation)
    }

    pub fn containers(&self) -> Vec<ContainerMeta> {
        self.containers.values().map(Container::meta).collect()
    }

    pub fn view(&self, id: u64) -> Result<ContainerView<'_>> {
        let c = self.container(id)?;
        Ok(ContainerView {
            id,
            schema: &c.schema,
            generation: c.generation,
            items: &c.items,
            dead: &c.dead,
        })
    }

    /// Live items in `[lo, hi)`, ascending by index.
    pub fn read_items(&self, id: u64, lo: u64, hi: u64) -> Result<Vec<(u64, Item)>> {
        let c = self.container(id)?;
        let count = c.items.len() as u64;
        if lo > hi || hi > count {
            return Err(VolumeError::RangeOutOfBounds { lo, hi, count });
        }
        Ok(self
            .view(id)?
            .live_in(lo, hi)
            .map(|(i, item)| (i, item.clone()))
            .collect())
    }

    pub fn append_items(&mut self, id: u64, items: Vec<Item>) -> Result<(u64, u64)> {
        self.append_items_tagged(id, items, None)
    }

    /// `journal_seq` marks the commit as the effect of that journaled request.
    pub fn append_items_tagged(
        &mut self,
        id: u64,
        items: Vec<Item>,
        journal_seq: Option<u64>,
    ) -> Result<(u64, u64)> {
        self.ensure_alive()?;
        let c = self.container(id)?;
        let first = c.items.len() as u64;
        for item in &items {
            validate_item(&c.schema, item)?;
        }
        if items.is_empty() {
            return Ok((first, c.generation));
        }
        let changes = items
            .into_iter()
            .enumerate()
            .map(|(i, item)| Change::Put(first + i as u64, item))
            .collect();
        let generation = self.commit(id, changes, journal_seq)?;
        Ok((first, generation))
    }

    fn check_mutable(&self, c: &Container, index: u64) -> Result<()> {
        let count = c.items.len() as u64;
        if index >= count {
            return Err(VolumeError::IndexOutOfBounds { index, count });
        }
        if c.dead[index as usize] {
            return Err(VolumeError::Tombstoned(index));
        }
        if self.is_frozen(c.id, index) {
            return Err(VolumeError::Frozen(index));
        }
        Ok(())
    }

    pub fn set_item(&mut self, id: u64, index: u64, item: Item) -> Result<u64> {
        self.set_items(id, vec![(index, item)], None)
    }

    /// Replaces several live items in one generation. Every index is checked
    /// before anything is written.
    pub fn set_items(
        &mut self,
        id: u64,
        updates: Vec<(u64, Item)>,
        journal_seq: Option<u64>,
    ) -> Result<u64> {
        self.ensure_alive()?;
        let c = self.container(id)?;
        for (index, item) in &updates {
            self.check_mutable(c, *index)?;
            validate_item(&c.schema, item)?;
        }
        if updates.is_empty() {
            return Ok(c.generation);
        }
        let changes = updates.into_iter().map(|(i, item)| Change::Put(i, item)).collect();
        self.commit(id, changes, journal_seq)
    }

    pub fn delete_items(&mut self, id: u64, indices: &[u64]) -> Result<(u64, u64)> {
        self.delete_items_tagged(id, indices, None)
    }

    pub fn delete_items_tagged(
        &mut self,
        id: u64,
        indices: &[u64],
        journal_seq: Option<u64>,
    ) -> Result<(u64, u64)> {
        self.ensure_alive()?;
        let c = self.container(id)?;
        for (n, index) in indices.iter().enumerate() {
            self.check_mutable(c, *index)?;
            if indices[..n].contains(index) {
                return Err(VolumeError::Tombstoned(*index));
            }
        }
        if indices.is_empty() {
            return Ok((0, c.generation));
        }
        let changes = indices.iter().map(|i| Change::Tombstone(*i)).collect();
        let generation = self.commit(id, changes, journal_seq)?;
        Ok((indices.len() as u64, generation))
    }

    /// Applies a pre-validated batch as one generation. The catalog rename is
    /// the commit point.
    pub(crate) fn commit(
        &mut self,
        id: u64,
        changes: Vec<Change>,
        journal_seq: Option<u64>,
    ) -> Result<u64> {
        self.ensure_alive()?;
        let c = self.container(id)?;
        let mut log = Vec::new();
        let mut item_offsets = Vec::with_capacity(changes.len());
        let mut new_count = c.items.len() as u64;
        for change in &changes {
            match change {
                Change::Put(index, item) => {
                    debug_assert!(*index <= new_count);
                    log.put_u8(REC_PUT);
                    log.put_u64(*index);
                    let len_at = log.len();
                    log.put_u32(0);
                    item_offsets.push(c.dat_len + log.len() as u64);
                    let start = log.len();
                    encode_values_into(item, &mut log);
                    let len = (log.len() - start) as u32;
                    log[len_at..len_at + 4].copy_from_slice(&len.to_le_bytes());
                    if *index == new_count {
                        new_count += 1;
                    }
                }
                Change::Tombstone(index) => {
                    log.put_u8(REC_TOMBSTONE);
                    log.put_u64(*index);
                }
            }
        }
        c.dat.write_all_at(&log, c.dat_len)?;
        if self.opts.sync {
            c.dat.sync_data()?;
        }
        self.check("commit.data")?;

        let mut entry = c.catalog_entry();
        entry.item_count = new_count;
        entry.generation += 1;
        entry.dat_len += log.len() as u64;
        let journal_applied = journal_seq.map_or(self.journal_applied, |s| s.max(self.journal_applied));
        self.write_catalog(Some(&entry), journal_applied)?;
        self.check("commit.catalog")?;

        self.journal_applied = journal_applied;
        let c = self.containers.get_mut(&id).expect("checked above");
        c.generation = entry.generation;
        c.dat_len = entry.dat_len;
        let mut offsets = item_offsets.into_iter();
        let mut dirty_del = false;
        for change in changes {
            match change {
                Change::Put(index, item) => {
                    let offset = offsets.next().expect("one offset per put");
                    if index == c.items.len() as u64 {
                        c.items.push(item);
                        c.offsets.push(offset);
                        c.dead.push(false);
                    } else {
                        c.items[index as usize] = item;
                        c.offsets[index as usize] = offset;
                    }
                    c.idx.write_all_at(&offset.to_le_bytes(), index * 8)?;
                }
                Change::Tombstone(index) => {
                    c.dead[index as usize] = true;
                    c.dead_count += 1;
                    dirty_del = true;
                }
            }
        }
        if dirty_del || c.dead.len().div_ceil(8) as u64 != c.del.metadata()?.len() {
            c.del.write_all_at(&tombstone_bitmap(&c.dead), 0)?;
        }
        if self.opts.sync {
            c.idx.sync_data()?;
            c.del.sync_data()?;
        }
        Ok(entry.generation)
    }

    pub fn is_frozen(&self, id: u64, index: u64) -> bool {
        self.freezes
            .values()
            .any(|t| t.container_id == id && t.covers(index))
    }

    pub fn freeze(&mut self, id: u64, lo: u64, hi: u64) -> Result<FreezeToken> {
        let c = self.container(id)?;
        let count = c.items.len() as u64;
        if lo >= hi || hi > count {
            return Err(VolumeError::RangeOutOfBounds { lo, hi, count });
        }
        let token = FreezeToken {
            token_id: self.next_token,
            container_id: id,
            lo,
            hi,
            generation_at_freeze: c.generation,
        };
        self.next_token += 1;
        self.freezes.insert(token.token_id, token);
        Ok(token)
    }

    pub fn unfreeze(&mut self, token_id: u64) -> Result<()> {
        self.freezes
            .remove(&token_id)
            .map(|_| ())
            .ok_or(VolumeError::NoSuchToken(token_id))
    }

    pub fn token(&self, token_id: u64) -> Result<FreezeToken> {
        self.freezes
            .get(&token_id)
            .copied()
            .ok_or(VolumeError::NoSuchToken(token_id))
    }

    /// Live items inside the token's range. Mutations of the range are
    /// rejected while the token is active and appends land past `hi`, so this
    /// is the view as of `generation_at_freeze`.
    pub fn read_through_token(&self, token_id: u64) -> Result<Vec<(u64, Item)>> {
        let t = self.token(token_id)?;
        self.read_items(t.container_id, t.lo, t.hi)
    }

    pub fn active_tokens(&self) -> Vec<FreezeToken> {
        self.freezes.values().copied().collect()
    }

    /// Hands out the next request seq, persisting a new reservation block
    /// when the current one runs out.
    pub fn allocate_seq(&mut self) -> Result<u64> {
        self.ensure_alive()?;
        if self.next_seq >= self.superblock.next_request_seq {
            let mut sb = self.superblock;
            sb.next_request_seq = self.next_seq + SEQ_BLOCK;
            self.files().write_atomic(SUPERBLOCK, &sb.encode())?;
            self.superblock = sb;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        Ok(seq)
    }

    pub fn journal_append(&mut self, seq: u64, body: &[u8]) -> Result<()> {
        self.ensure_alive()?;
        self.check("journal.before_append")?;
        if self.opts.fault.as_ref().is_some_and(|f| f.trip("journal.torn_append")) {
            let encoded = journal::encode_record(seq, body);
            self.journal.write_partial(&encoded, encoded.len() / 2)?;
            return Err(VolumeError::SimulatedCrash("journal.torn_append"));
        }
        self.journal.append(seq, body, self.opts.sync)?;
        self.check("journal.after_append")
    }

    pub fn journal_records(&self) -> &[JournalRecord] {
        self.journal.records()
    }

    pub fn watermark(&self) -> u64 {
        self.watermark
    }

    /// Highest journal seq whose effects are known applied: the persisted
    /// watermark or the catalog's stamp, whichever is larger.
    pub fn effective_watermark(&self) -> u64 {
        self.watermark.max(self.journal_applied)
    }

    pub fn journal_pending(&self) -> Vec<JournalRecord> {
        let mark = self.effective_watermark();
        let mut pending: Vec<_> = self
            .journal
            .records()
            .iter()
            .filter(|r| r.seq > mark)
            .cloned()
            .collect();
        pending.sort_by_key(|r| r.seq);
        pending
    }

    pub fn advance_watermark(&mut self, seq: u64) -> Result<()> {
        self.ensure_alive()?;
        self.check("mark.before")?;
        let seq = seq.max(self.watermark);
        self.files().write_atomic(JOURNAL_MARK, &seq.to_le_bytes())?;
        self.watermark = seq;
        self.check("mark.after")
    }

    pub fn read_triggers(&self) -> Result<Vec<u8>> {
        Ok(read_file(&self.root.join(TRIGGERS))?)
    }

    pub fn write_triggers(&mut self, bytes: &[u8]) -> Result<()> {
        self.ensure_alive()?;
        self.files().write_atomic(TRIGGERS, bytes)?;
        Ok(())
    }

    pub fn append_trigger_log(&mut self, bytes: &[u8]) -> Result<()> {
        self.ensure_alive()?;
        if bytes.is_empty() {
            return Ok(());
        }
        self.trigger_log.write_all_at(bytes, self.trigger_log_len)?;
        if self.opts.sync {
            self.trigger_log.sync_data()?;
        }
        self.trigger_log_len += bytes.len() as u64;
        Ok(())
    }

    pub fn trigger_log_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; self.trigger_log_len as usize];
        self.trigger_log.read_exact_at(&mut buf, 0)?;
        Ok(buf)
    }

    /// Paths of a container's data, index and tombstone files.
    pub fn container_files(&self, id: u64) -> [PathBuf; 3] {
        ["dat", "idx", "del"].map(|ext| container_file(&self.root, id, ext))
    }
}

struct VolumeFiles<'a> {
    root: &'a Path,
    sync: bool,
}

impl VolumeFiles<'_> {
    /// Write-temp-then-rename.
    fn write_atomic(&self, name: &str, bytes: &[u8]) -> io::Result<()> {
        let tmp = self.root.join(format!("{name}.tmp"));
        let mut f = File::create(&tmp)?;
        io::Write::write_all(&mut f, bytes)?;
        if self.sync {
            f.sync_all()?;
        }
        drop(f);
        fs::rename(&tmp, self.root.join(name))?;
        if self.sync {
            File::open(self.root)?.sync_all()?;
        }
        Ok(())
    }
}

/// Rebuilds a container from the committed prefix of its data log and
/// repairs `.idx`/`.del` if they disagree.
fn load_container(root: &Path, entry: CatalogEntry) -> Result<Container> {
    let dat = open_rw(&container_file(root, entry.id, "dat"))?;
    let idx = open_rw(&container_file(root, entry.id, "idx"))?;
    let del = open_rw(&container_file(root, entry.id, "del"))?;
    let on_disk = dat.metadata()?.len();
    if on_disk < entry.dat_len {
        return Err(VolumeError::CorruptCatalog(format!(
            "c{}.dat is {on_disk} bytes, catalog commits {}",
            entry.id, entry.dat_len
        )));
    }
    if on_disk > entry.dat_len {
        dat.set_len(entry.dat_len)?;
    }
    let mut log = vec![0u8; entry.dat_len as usize];
    dat.read_exact_at(&mut log, 0)?;

    let corrupt = |msg: String| VolumeError::CorruptCatalog(format!("c{}.dat: {msg}", entry.id));
    let mut items: Vec<Item> = Vec::with_capacity(entry.item_count as usize);
    let mut offsets = Vec::with_capacity(entry.item_count as usize);
    let mut dead = Vec::with_capacity(entry.item_count as usize);
    let mut r = Reader::new(&log);
    while !r.is_empty() {
        let kind = r.u8().map_err(|_| corrupt("truncated record".into()))?;
        let index = r.u64().map_err(|_| corrupt("truncated record".into()))?;
        match kind {
            REC_PUT => {
                let len = r.u32().map_err(|_| corrupt("truncated record".into()))?;
                let offset = r.position() as u64;
                let bytes = r.take(len as usize).map_err(|_| corrupt("truncated item".into()))?;
                let item = decode_item(&entry.schema, bytes)
                    .map_err(|e| corrupt(format!("item {index}: {e}")))?;
                if index == items.len() as u64 {
                    items.push(item);
                    offsets.push(offset);
                    dead.push(false);
                } else if index < items.len() as u64 {
                    items[index as usize] = item;
                    offsets[index as usize] = offset;
                } else {
                    return Err(corrupt(format!("put at index {index} leaves a gap")));
                }
            }
            REC_TOMBSTONE if index < items.len() as u64 => dead[index as usize] = true,
            _ => return Err(corrupt(format!("bad record kind {kind} at index {index}"))),
        }
    }
    if items.len() as u64 != entry.item_count {
        return Err(corrupt(format!(
            "log holds {} items, catalog says {}",
            items.len(),
            entry.item_count
        )));
    }

    let mut idx_bytes = Vec::with_capacity(offsets.len() * 8);
    for off in &offsets {
        idx_bytes.put_u64(*off);
    }
    let mut current = Vec::new();
    (&idx).read_to_end(&mut current)?;
    if current != idx_bytes {
        idx.set_len(0)?;
        idx.write_all_at(&idx_bytes, 0)?;
    }
    let bitmap = tombstone_bitmap(&dead);
    let mut current = Vec::new();
    (&del).read_to_end(&mut current)?;
    if current != bitmap {
        del.set_len(0)?;
        del.write_all_at(&bitmap, 0)?;
    }

    let dead_count = dead.iter().filter(|d| **d).count() as u64;
    Ok(Container {
        id: entry.id,
        name: entry.name,
        schema: Arc::new(entry.schema),
        generation: entry.generation,
        items,
        offsets,
        dead,
        dead_count,
        dat_len: entry.dat_len,
        dat,
        idx,
        del,
    })
}

#[cfg(test)]
mod tests;
