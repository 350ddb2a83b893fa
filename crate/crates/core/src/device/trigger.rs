//! Trigger registry (`triggers.ndp`) and event firing.

use std::collections::BTreeMap;

use crate::codec::{crc32, Put, Reader};
use crate::expr::{
    decode_mutation, decode_predicate, decode_program, encode_mutation_bytes, encode_predicate,
    encode_program_bytes, eval_mutation, eval_predicate, typecheck_mutation, typecheck_predicate,
    typecheck_program, Mutation, Predicate, Program,
};
use crate::item::{Item, ItemSchema};

use super::completion::{TriggerEvent, TriggerPayload, TriggerRecord};
use super::exec::eval_scalar;
use super::DeviceError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TriggerAction {
    /// Rewrites each matching appended or set item before it is committed.
    Mutation(Mutation),
    /// Logs one scalar over the matching items of each event batch.
    Program(Program),
}

/// A registration without its device-assigned id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerSpec {
    pub event: TriggerEvent,
    pub container_id: u64,
    pub predicate: Predicate,
    pub action: TriggerAction,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerRegistration {
    pub trigger_id: u64,
    pub spec: TriggerSpec,
}

impl TriggerSpec {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u8(self.event as u8);
        out.put_u64(self.container_id);
        out.put_bytes32(&encode_predicate(&self.predicate));
        match &self.action {
            TriggerAction::Mutation(m) => {
                out.put_u8(0);
                out.put_bytes32(&encode_mutation_bytes(m));
            }
            TriggerAction::Program(p) => {
                out.put_u8(1);
                out.put_bytes32(&encode_program_bytes(p));
            }
        }
        out.put_u8(self.enabled as u8);
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DeviceError> {
        let event = TriggerEvent::from_u8(r.u8()?)
            .ok_or_else(|| DeviceError::BadRequest("bad trigger event".into()))?;
        let container_id = r.u64()?;
        let predicate = decode_predicate(r.bytes32()?)?;
        let action = match r.u8()? {
            0 => TriggerAction::Mutation(decode_mutation(r.bytes32()?)?),
            1 => TriggerAction::Program(decode_program(r.bytes32()?)?),
            k => return Err(DeviceError::BadRequest(format!("bad trigger action kind {k}"))),
        };
        let enabled = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(DeviceError::BadRequest(format!("bad enabled flag {b}"))),
        };
        Ok(Self {
            event,
            container_id,
            predicate,
            action,
            enabled,
        })
    }

    pub fn typecheck(&self, schema: &ItemSchema) -> Result<(), DeviceError> {
        typecheck_predicate(schema, &self.predicate)?;
        match &self.action {
            TriggerAction::Mutation(_) if self.event == TriggerEvent::OnDelete => Err(
                DeviceError::BadRequest("mutation actions cannot react to deletes".into()),
            ),
            TriggerAction::Mutation(m) => Ok(typecheck_mutation(schema, m)?),
            TriggerAction::Program(p) if !p.is_scalar() => Err(DeviceError::BadRequest(
                "trigger programs must produce a scalar".into(),
            )),
            TriggerAction::Program(p) => Ok(typecheck_program(schema, p)?),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct TriggerRegistry {
    next_id: u64,
    active: BTreeMap<u64, TriggerSpec>,
    /// Container of every trigger ever registered, so log records stay attributable.
    owners: BTreeMap<u64, u64>,
}

impl TriggerRegistry {
    pub(crate) fn decode(bytes: &[u8]) -> Result<Self, DeviceError> {
        if bytes.is_empty() {
            return Ok(Self::default());
        }
        let bad = |m: &str| DeviceError::Storage(format!("triggers.ndp: {m}"));
        if bytes.len() < 4 {
            return Err(bad("too short"));
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        if crc32(body).to_le_bytes() != crc {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader::new(body);
        let next_id = r.u64()?;
        let mut reg = Self {
            next_id,
            ..Self::default()
        };
        for _ in 0..r.u32()? {
            let id = r.u64()?;
            reg.owners.insert(id, r.u64()?);
        }
        for _ in 0..r.u32()? {
            let id = r.u64()?;
            reg.active.insert(id, TriggerSpec::decode_from(&mut r)?);
        }
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(reg)
    }

    pub(crate) fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.put_u64(self.next_id);
        out.put_u32(self.owners.len() as u32);
        for (id, owner) in &self.owners {
            out.put_u64(*id);
            out.put_u64(*owner);
        }
        out.put_u32(self.active.len() as u32);
        for (id, spec) in &self.active {
            out.put_u64(*id);
            spec.encode_into(&mut out);
        }
        let crc = crc32(&out);
        out.put_u32(crc);
        out
    }

    /// Returns the registry with `spec` added and the id it was given;
    /// `self` is left unchanged until the caller has persisted the result.
    pub(crate) fn with_added(&self, spec: TriggerSpec) -> (Self, u64) {
        let mut next = self.clone();
        next.next_id = next.next_id.max(1);
        let id = next.next_id;
        next.next_id += 1;
        next.owners.insert(id, spec.container_id);
        next.active.insert(id, spec);
        (next, id)
    }

    pub(crate) fn without(&self, id: u64) -> Result<Self, DeviceError> {
        let mut next = self.clone();
        next.active.remove(&id).ok_or(DeviceError::NoSuchTrigger(id))?;
        Ok(next)
    }

    pub(crate) fn list(&self) -> Vec<TriggerRegistration> {
        self.active
            .iter()
            .map(|(id, spec)| TriggerRegistration {
                trigger_id: *id,
                spec: spec.clone(),
            })
            .collect()
    }

    pub(crate) fn owner(&self, trigger_id: u64) -> Option<u64> {
        self.owners.get(&trigger_id).copied()
    }

    fn matching(&self, container: u64, event: TriggerEvent) -> Vec<(u64, &TriggerSpec)> {
        self.active
            .iter()
            .filter(|(_, s)| s.enabled && s.container_id == container && s.event == event)
            .map(|(id, s)| (*id, s))
            .collect()
    }
}

/// Outcome of firing one event batch.
#[derive(Debug, Default)]
pub(crate) struct Fired {
    pub records: Vec<TriggerRecord>,
    /// Number of (trigger, item) matches that ran an action.
    pub fires: u64,
}

/// Evaluates every enabled trigger of `container` for `event` against the
/// affected items.
///
/// Predicates and program actions see the affected images as they were
/// before any trigger action ran; mutation actions then rewrite `affected`
/// in trigger-id order. Triggers are processed by id, and within a mutation
/// trigger records follow ascending item index.
pub(crate) fn fire(
    registry: &TriggerRegistry,
    schema: &ItemSchema,
    container: u64,
    event: TriggerEvent,
    seq: u64,
    affected: &mut [(u64, Item)],
) -> Result<Fired, DeviceError> {
    let triggers = registry.matching(container, event);
    let mut fired = Fired::default();
    if triggers.is_empty() || affected.is_empty() {
        return Ok(fired);
    }
    let images: Vec<Item> = affected.iter().map(|(_, item)| item.clone()).collect();
    for (id, spec) in triggers {
        let hits: Vec<usize> = images
            .iter()
            .enumerate()
            .filter(|(_, item)| eval_predicate(item, &spec.predicate))
            .map(|(pos, _)| pos)
            .collect();
        if hits.is_empty() {
            continue;
        }
        fired.fires += hits.len() as u64;
        match &spec.action {
            TriggerAction::Mutation(m) => {
                for pos in hits {
                    let (index, item) = &mut affected[pos];
                    *item = eval_mutation(schema, item, m)?;
                    fired.records.push(TriggerRecord {
                        trigger_id: id,
                        seq,
                        event,
                        payload: TriggerPayload::Index(*index),
                    });
                }
            }
            TriggerAction::Program(p) => {
                let scalar = eval_scalar(*p, hits.iter().map(|pos| &images[*pos]))?;
                fired.records.push(TriggerRecord {
                    trigger_id: id,
                    seq,
                    event,
                    payload: TriggerPayload::Scalar(scalar),
                });
            }
        }
    }
    Ok(fired)
}
