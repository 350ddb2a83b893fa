//! Executes one request against the volume.

use std::collections::HashMap;
use std::sync::Arc;

use crate::expr::{
    typecheck_mutation, typecheck_predicate, typecheck_program, Mutation, Predicate, Program,
};
use crate::item::{validate_item, Item, ItemSchema, Value};
use crate::volume::Volume;

use super::completion::{
    HandleKind, HandleSource, OpResult, ResultHandle, TriggerEvent, TriggerRecord,
};
use super::request::{ReadSource, Request, Target};
use super::scan;
use super::trigger::{fire, TriggerRegistry};
use super::DeviceError;

/// Everything guarded by the device's reader-writer lock.
pub(crate) struct State {
    pub vol: Volume,
    pub triggers: TriggerRegistry,
}

enum HandleData {
    Indices(Vec<u64>),
    Rows(Vec<(u64, Item)>),
}

struct HandleEntry {
    info: ResultHandle,
    schema: Arc<ItemSchema>,
    data: HandleData,
}

#[derive(Default)]
pub(crate) struct Handles {
    next_id: u64,
    entries: HashMap<u64, HandleEntry>,
}

impl Handles {
    fn insert(
        &mut self,
        kind: HandleKind,
        source: HandleSource,
        schema: Arc<ItemSchema>,
        data: HandleData,
    ) -> ResultHandle {
        self.next_id += 1;
        let cardinality = match &data {
            HandleData::Indices(v) => v.len(),
            HandleData::Rows(v) => v.len(),
        } as u64;
        let info = ResultHandle {
            handle_id: self.next_id,
            kind,
            source,
            cardinality,
        };
        self.entries.insert(
            info.handle_id,
            HandleEntry {
                info,
                schema,
                data,
            },
        );
        info
    }
}

/// What one executed request produced, before it is wrapped in a completion.
#[derive(Debug)]
pub(crate) struct Outcome {
    pub result: OpResult,
    pub scanned: u64,
    pub matched: u64,
    pub triggers: Vec<TriggerRecord>,
    pub trigger_fires: u64,
}

impl Outcome {
    fn plain(result: OpResult) -> Self {
        Self {
            result,
            scanned: 0,
            matched: 0,
            triggers: Vec::new(),
            trigger_fires: 0,
        }
    }

    fn scan(result: OpResult, scanned: u64, matched: u64) -> Self {
        Self {
            scanned,
            matched,
            ..Self::plain(result)
        }
    }
}

/// Scalar programs over a non-empty sequence of items: Count, Sum folded
/// left from the first item, and Min/Max folds that replace the running
/// value only on a strict `<`/`>` (so a NaN only wins when it comes first).
pub(crate) fn eval_scalar<'a>(
    program: Program,
    mut items: impl Iterator<Item = &'a Item>,
) -> Result<Value, DeviceError> {
    let field = |i: &'a Item, f: u16| &i.values()[f as usize];
    match program {
        Program::Count => Ok(Value::U64(items.count() as u64)),
        Program::Sum(f) => {
            let Some(first) = items.next() else {
                return Err(DeviceError::EmptyInput);
            };
            items.try_fold(field(first, f).clone(), |acc, item| match (acc, field(item, f)) {
                (Value::U64(a), Value::U64(b)) => a.checked_add(*b).map(Value::U64).ok_or(DeviceError::Overflow),
                (Value::I64(a), Value::I64(b)) => a.checked_add(*b).map(Value::I64).ok_or(DeviceError::Overflow),
                (Value::F64(a), Value::F64(b)) => Ok(Value::F64(a + b)),
                _ => Err(DeviceError::BadRequest("sum over a non-numeric field".into())),
            })
        }
        Program::Min(f) | Program::Max(f) => {
            let want = if matches!(program, Program::Min(_)) {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            };
            let first = items.next().ok_or(DeviceError::EmptyInput)?;
            let mut best = field(first, f);
            for item in items {
                let v = field(item, f);
                let replace = match (v, best) {
                    (Value::U64(a), Value::U64(b)) => a.cmp(b) == want,
                    (Value::I64(a), Value::I64(b)) => a.cmp(b) == want,
                    (Value::F64(a), Value::F64(b)) => a.partial_cmp(b) == Some(want),
                    _ => return Err(DeviceError::BadRequest("min/max over a non-numeric field".into())),
                };
                if replace {
                    best = v;
                }
            }
            Ok(best.clone())
        }
        Program::SortBy(..) => Err(DeviceError::BadRequest("sortby is not a scalar program".into())),
    }
}

impl State {
    fn container_schema(&self, id: u64) -> Result<Arc<ItemSchema>, DeviceError> {
        Ok(self.vol.schema(id)?)
    }

    /// Runs a request that only reads volume state.
    pub(crate) fn run_read(&self, handles: &parking_lot::Mutex<Handles>, req: &Request) -> Result<Outcome, DeviceError> {
        match req {
            Request::Get { target, pred } => self.get(handles, *target, pred),
            Request::Read(src) => self.read(handles, *src),
            Request::Execute { program, targets } => self.execute(handles, *program, targets),
            _ => unreachable!("mutating request on the read path"),
        }
    }

    /// Runs a request that may change volume state. `journal_seq` tags the
    /// commit when the request is being replayed from the journal.
    pub(crate) fn run_write(
        &mut self,
        handles: &parking_lot::Mutex<Handles>,
        seq: u64,
        req: &Request,
        journal_seq: Option<u64>,
    ) -> Result<Outcome, DeviceError> {
        match req {
            Request::Get { .. } | Request::Read(_) | Request::Execute { .. } => self.run_read(handles, req),
            Request::Write { handle, dest } => self.write(handles, *handle, dest),
            Request::Set {
                container,
                pred,
                mutation,
            } => self.set(seq, *container, pred, mutation, journal_seq),
            Request::Freeze { container, range } => {
                let (lo, hi) = match range {
                    Some(r) => *r,
                    None => (0, self.vol.container_meta(*container)?.item_count),
                };
                Ok(Outcome::plain(OpResult::Token(self.vol.freeze(*container, lo, hi)?)))
            }
            Request::Unfreeze { token } => {
                self.vol.unfreeze(*token)?;
                Ok(Outcome::plain(OpResult::Unit))
            }
            Request::Append {
                container,
                schema,
                items,
            } => self.append(seq, *container, schema, items.clone(), journal_seq),
            Request::Delete { container, indices } => self.delete(seq, *container, indices, journal_seq),
        }
    }

    fn get(&self, handles: &parking_lot::Mutex<Handles>, target: Target, pred: &Predicate) -> Result<Outcome, DeviceError> {
        let (container, lo, hi, source) = match target {
            Target::Container(id) => {
                let meta = self.vol.container_meta(id)?;
                let source = HandleSource::Live {
                    container: id,
                    generation: meta.generation,
                };
                (id, 0, meta.item_count, source)
            }
            Target::Token(t) => {
                let tok = self.vol.token(t)?;
                let source = HandleSource::Token {
                    token: t,
                    container: tok.container_id,
                };
                (tok.container_id, tok.lo, tok.hi, source)
            }
        };
        let schema = self.container_schema(container)?;
        typecheck_predicate(&schema, pred)?;
        let view = self.vol.view(container)?;
        let indices = scan::filter(&view, lo, hi, pred);
        let scanned = view.live_in(lo, hi).count() as u64;
        let matched = indices.len() as u64;
        let handle = handles
            .lock()
            .insert(HandleKind::IndexSet, source, schema, HandleData::Indices(indices));
        Ok(Outcome::scan(OpResult::Handle(handle), scanned, matched))
    }

    /// Rows of a handle at result positions `[offset, offset + count)`.
    fn handle_rows(
        &self,
        handles: &parking_lot::Mutex<Handles>,
        handle: u64,
        offset: u64,
        count: u64,
    ) -> Result<(Arc<ItemSchema>, Vec<(u64, Item)>), DeviceError> {
        let handles = handles.lock();
        let entry = handles.entries.get(&handle).ok_or(DeviceError::NoSuchHandle(handle))?;
        let card = entry.info.cardinality;
        let start = offset.min(card) as usize;
        let end = offset.saturating_add(count).min(card) as usize;
        let rows = match &entry.data {
            HandleData::Rows(rows) => rows[start..end].to_vec(),
            HandleData::Indices(indices) => {
                let container = match entry.info.source {
                    HandleSource::Live {
                        container,
                        generation,
                    } => {
                        if self.vol.generation(container).ok() != Some(generation) {
                            return Err(DeviceError::StaleHandle(handle));
                        }
                        container
                    }
                    HandleSource::Token { token, container } => {
                        if self.vol.token(token).is_err() {
                            return Err(DeviceError::StaleHandle(handle));
                        }
                        container
                    }
                };
                let view = self.vol.view(container)?;
                indices[start..end]
                    .iter()
                    .map(|i| (*i, view.item(*i).clone()))
                    .collect()
            }
        };
        Ok((entry.schema.clone(), rows))
    }

    fn read(&self, handles: &parking_lot::Mutex<Handles>, src: ReadSource) -> Result<Outcome, DeviceError> {
        match src {
            ReadSource::Handle {
                handle,
                offset,
                count,
            } => {
                let (schema, items) = self.handle_rows(handles, handle, offset, count)?;
                let n = items.len() as u64;
                Ok(Outcome::scan(
                    OpResult::Items {
                        schema: (*schema).clone(),
                        items,
                    },
                    0,
                    n,
                ))
            }
            ReadSource::Range { container, lo, hi } => {
                let schema = self.container_schema(container)?;
                let items = self.vol.read_items(container, lo, hi)?;
                let n = items.len() as u64;
                Ok(Outcome::scan(
                    OpResult::Items {
                        schema: (*schema).clone(),
                        items,
                    },
                    n,
                    n,
                ))
            }
            ReadSource::TriggerLog { container } => {
                let records = TriggerRecord::parse_log(&self.vol.trigger_log_bytes()?)
                    .into_iter()
                    .filter(|r| container.is_none() || self.triggers.owner(r.trigger_id) == container)
                    .collect();
                Ok(Outcome::plain(OpResult::TriggerRecords(records)))
            }
        }
    }

    fn execute(&self, handles: &parking_lot::Mutex<Handles>, program: Program, targets: &[u64]) -> Result<Outcome, DeviceError> {
        let first = *targets
            .first()
            .ok_or_else(|| DeviceError::BadRequest("EXECUTE needs at least one target".into()))?;
        let schema = self.container_schema(first)?;
        for t in &targets[1..] {
            if *self.container_schema(*t)? != *schema {
                return Err(DeviceError::SchemaMismatch);
            }
        }
        typecheck_program(&schema, &program)?;
        let mut views = Vec::with_capacity(targets.len());
        for t in targets {
            views.push(self.vol.view(*t)?);
        }
        let live = || views.iter().flat_map(|v| v.live_in(0, v.item_count()).map(|(_, item)| item));
        let scanned = live().count() as u64;
        let result = match program {
            Program::SortBy(field, dir) => {
                let mut base = 0;
                let mut rows = Vec::with_capacity(scanned as usize);
                for v in &views {
                    rows.extend(v.live_in(0, v.item_count()).map(|(i, item)| (base + i, item.clone())));
                    base += v.item_count();
                }
                scan::sort_by_field(&mut rows, field as usize, dir);
                let source = HandleSource::Live {
                    container: first,
                    generation: views[0].generation,
                };
                OpResult::Handle(handles.lock().insert(
                    HandleKind::Materialized,
                    source,
                    schema,
                    HandleData::Rows(rows),
                ))
            }
            Program::Sum(_) if scanned == 0 => OpResult::Scalar(zero_of(&schema, program)),
            scalar => OpResult::Scalar(eval_scalar(scalar, live())?),
        };
        Ok(Outcome::scan(result, scanned, scanned))
    }

    fn write(&mut self, handles: &parking_lot::Mutex<Handles>, handle: u64, dest: &str) -> Result<Outcome, DeviceError> {
        let (schema, rows) = self.handle_rows(handles, handle, 0, u64::MAX)?;
        if self.vol.container_id(dest).is_some() {
            return Err(DeviceError::NameInUse(dest.to_string()));
        }
        let id = self.vol.create_container(dest, (*schema).clone())?;
        let n = rows.len() as u64;
        self.vol
            .append_items(id, rows.into_iter().map(|(_, item)| item).collect())?;
        Ok(Outcome::scan(OpResult::Container(id), 0, n))
    }

    fn set(
        &mut self,
        seq: u64,
        container: u64,
        pred: &Predicate,
        mutation: &Mutation,
        journal_seq: Option<u64>,
    ) -> Result<Outcome, DeviceError> {
        let schema = self.container_schema(container)?;
        typecheck_predicate(&schema, pred)?;
        typecheck_mutation(&schema, mutation)?;
        let view = self.vol.view(container)?;
        let count = view.item_count();
        let matches = scan::filter(&view, 0, count, pred);
        let scanned = view.live_in(0, count).count() as u64;
        if let Some(i) = matches.iter().find(|i| self.vol.is_frozen(container, **i)) {
            return Err(DeviceError::Frozen(*i));
        }
        let mut updated = scan::mutate(&view, &schema, &matches, mutation)?;
        let fired = fire(&self.triggers, &schema, container, TriggerEvent::OnSet, seq, &mut updated)?;
        let n = updated.len() as u64;
        if n > 0 {
            self.vol.set_items(container, updated, journal_seq)?;
        }
        Ok(Outcome {
            result: OpResult::Count(n),
            scanned,
            matched: n,
            triggers: fired.records,
            trigger_fires: fired.fires,
        })
    }

    fn append(
        &mut self,
        seq: u64,
        container: u64,
        schema: &ItemSchema,
        items: Vec<Item>,
        journal_seq: Option<u64>,
    ) -> Result<Outcome, DeviceError> {
        let own = self.container_schema(container)?;
        if *own != *schema {
            return Err(DeviceError::SchemaMismatch);
        }
        for item in &items {
            validate_item(&own, item)?;
        }
        let first = self.vol.container_meta(container)?.item_count;
        let mut rows: Vec<(u64, Item)> = items
            .into_iter()
            .enumerate()
            .map(|(k, item)| (first + k as u64, item))
            .collect();
        let fired = fire(&self.triggers, &own, container, TriggerEvent::OnAppend, seq, &mut rows)?;
        let n = rows.len() as u64;
        let (first_index, generation) = self.vol.append_items_tagged(
            container,
            rows.into_iter().map(|(_, item)| item).collect(),
            journal_seq,
        )?;
        Ok(Outcome {
            result: OpResult::Appended {
                first_index,
                generation,
            },
            scanned: 0,
            matched: n,
            triggers: fired.records,
            trigger_fires: fired.fires,
        })
    }

    fn delete(
        &mut self,
        seq: u64,
        container: u64,
        indices: &[u64],
        journal_seq: Option<u64>,
    ) -> Result<Outcome, DeviceError> {
        let schema = self.container_schema(container)?;
        let view = self.vol.view(container)?;
        let count = view.item_count();
        let mut pre_images = Vec::with_capacity(indices.len());
        for (k, i) in indices.iter().enumerate() {
            if *i >= count {
                return Err(DeviceError::IndexOutOfBounds { index: *i, count });
            }
            if !view.is_live(*i) || indices[..k].contains(i) {
                return Err(DeviceError::Tombstoned(*i));
            }
            if self.vol.is_frozen(container, *i) {
                return Err(DeviceError::Frozen(*i));
            }
            pre_images.push((*i, view.item(*i).clone()));
        }
        let fired = fire(&self.triggers, &schema, container, TriggerEvent::OnDelete, seq, &mut pre_images)?;
        let (n, _) = self.vol.delete_items_tagged(container, indices, journal_seq)?;
        Ok(Outcome {
            result: OpResult::Count(n),
            scanned: 0,
            matched: n,
            triggers: fired.records,
            trigger_fires: fired.fires,
        })
    }
}

fn zero_of(schema: &ItemSchema, program: Program) -> Value {
    let Program::Sum(f) = program else {
        unreachable!("only sums have a zero")
    };
    match schema.fields()[f as usize].ty.kind() {
        crate::item::Kind::U64 => Value::U64(0),
        crate::item::Kind::I64 => Value::I64(0),
        _ => Value::F64(0.0),
    }
}
