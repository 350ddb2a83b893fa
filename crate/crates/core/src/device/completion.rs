//! Completion records, result handles and trigger-log records, with their
//! byte encodings (shared by the wire and by traffic accounting).

use crate::codec::{crc32, Put, Reader};
use crate::expr::{decode_literal, encode_literal, Literal};
use crate::item::{decode_item_from, encode_values_into, Item, ItemSchema, Value};
use crate::volume::FreezeToken;

use super::{DeviceError, ErrorCode, OpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HandleKind {
    /// Ascending item indices into a live container or a frozen range.
    IndexSet,
    /// A device-side copy of items in result order.
    Materialized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HandleSource {
    Live { container: u64, generation: u64 },
    Token { token: u64, container: u64 },
}

/// Device-resident result reference; item bytes stay on the device until READ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResultHandle {
    pub handle_id: u64,
    pub kind: HandleKind,
    pub source: HandleSource,
    pub cardinality: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TriggerEvent {
    OnAppend = 1,
    OnSet = 2,
    OnDelete = 3,
}

impl TriggerEvent {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(TriggerEvent::OnAppend),
            2 => Some(TriggerEvent::OnSet),
            3 => Some(TriggerEvent::OnDelete),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TriggerPayload {
    /// Program action: scalar over the matched affected items.
    Scalar(Value),
    /// Mutation action: index of the rewritten item.
    Index(u64),
}

/// One `trigger_log.ndp` record:
/// `u32 len | u64 trigger_id | u64 seq | u8 event | payload | u32 crc`, where
/// `len` and the CRC cover `trigger_id..payload`. The payload is a u64 index
/// (exactly 8 bytes) or a tagged literal (never 8 bytes for numeric scalars).
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerRecord {
    pub trigger_id: u64,
    pub seq: u64,
    pub event: TriggerEvent,
    pub payload: TriggerPayload,
}

impl TriggerRecord {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let mut body = Vec::with_capacity(32);
        body.put_u64(self.trigger_id);
        body.put_u64(self.seq);
        body.put_u8(self.event as u8);
        match &self.payload {
            TriggerPayload::Index(i) => body.put_u64(*i),
            TriggerPayload::Scalar(v) => encode_literal(
                &Literal::from_value(v).expect("program scalars are never bytes"),
                &mut body,
            ),
        }
        out.put_u32(body.len() as u32);
        out.extend_from_slice(&body);
        out.put_u32(crc32(&body));
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DeviceError> {
        let bad = |m: &str| DeviceError::Storage(format!("trigger record: {m}"));
        let len = r.u32()? as usize;
        let body = r.take(len)?;
        if r.u32()? != crc32(body) {
            return Err(bad("checksum mismatch"));
        }
        let mut b = Reader::new(body);
        let trigger_id = b.u64()?;
        let seq = b.u64()?;
        let event = TriggerEvent::from_u8(b.u8()?).ok_or_else(|| bad("bad event tag"))?;
        let payload = if b.remaining() == 8 {
            TriggerPayload::Index(b.u64()?)
        } else {
            let lit = decode_literal(&mut b).map_err(|e| bad(&e.to_string()))?;
            if !b.is_empty() {
                return Err(bad("trailing bytes"));
            }
            TriggerPayload::Scalar(lit.to_value())
        };
        Ok(Self {
            trigger_id,
            seq,
            event,
            payload,
        })
    }

    /// Parses a whole log; stops at the first damaged record.
    pub fn parse_log(bytes: &[u8]) -> Vec<TriggerRecord> {
        let mut r = Reader::new(bytes);
        let mut out = Vec::new();
        while !r.is_empty() {
            match Self::decode_from(&mut r) {
                Ok(rec) => out.push(rec),
                Err(_) => break,
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpResult {
    Unit,
    Handle(ResultHandle),
    Items {
        schema: ItemSchema,
        items: Vec<(u64, Item)>,
    },
    Count(u64),
    Scalar(Value),
    Container(u64),
    Token(FreezeToken),
    Appended {
        first_index: u64,
        generation: u64,
    },
    TriggerRecords(Vec<TriggerRecord>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpMetrics {
    pub items_scanned: u64,
    pub items_matched: u64,
    /// Encoded size of this completion record: the bytes it costs to return it.
    pub host_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRecord {
    pub seq: u64,
    pub status: Result<OpResult, OpError>,
    pub metrics: OpMetrics,
}

const R_UNIT: u8 = 0;
const R_HANDLE: u8 = 1;
const R_ITEMS: u8 = 2;
const R_COUNT: u8 = 3;
const R_SCALAR: u8 = 4;
const R_CONTAINER: u8 = 5;
const R_TOKEN: u8 = 6;
const R_APPENDED: u8 = 7;
const R_TRIGGERS: u8 = 8;

impl OpResult {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            OpResult::Unit => out.put_u8(R_UNIT),
            OpResult::Handle(h) => {
                out.put_u8(R_HANDLE);
                out.put_u64(h.handle_id);
                out.put_u8(match h.kind {
                    HandleKind::IndexSet => 0,
                    HandleKind::Materialized => 1,
                });
                match h.source {
                    HandleSource::Live { container, generation } => {
                        out.put_u8(0);
                        out.put_u64(container);
                        out.put_u64(generation);
                    }
                    HandleSource::Token { token, container } => {
                        out.put_u8(1);
                        out.put_u64(token);
                        out.put_u64(container);
                    }
                }
                out.put_u64(h.cardinality);
            }
            OpResult::Items { schema, items } => {
                out.put_u8(R_ITEMS);
                out.put_bytes32(&schema.encode());
                out.put_u32(items.len() as u32);
                for (index, item) in items {
                    out.put_u64(*index);
                    encode_values_into(item, out);
                }
            }
            OpResult::Count(n) => {
                out.put_u8(R_COUNT);
                out.put_u64(*n);
            }
            OpResult::Scalar(v) => {
                out.put_u8(R_SCALAR);
                encode_literal(
                    &Literal::from_value(v).expect("program scalars are never bytes"),
                    out,
                );
            }
            OpResult::Container(id) => {
                out.put_u8(R_CONTAINER);
                out.put_u64(*id);
            }
            OpResult::Token(t) => {
                out.put_u8(R_TOKEN);
                out.put_u64(t.token_id);
                out.put_u64(t.container_id);
                out.put_u64(t.lo);
                out.put_u64(t.hi);
                out.put_u64(t.generation_at_freeze);
            }
            OpResult::Appended { first_index, generation } => {
                out.put_u8(R_APPENDED);
                out.put_u64(*first_index);
                out.put_u64(*generation);
            }
            OpResult::TriggerRecords(records) => {
                out.put_u8(R_TRIGGERS);
                out.put_u32(records.len() as u32);
                for rec in records {
                    rec.encode_into(out);
                }
            }
        }
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DeviceError> {
        Ok(match r.u8()? {
            R_UNIT => OpResult::Unit,
            R_HANDLE => {
                let handle_id = r.u64()?;
                let kind = match r.u8()? {
                    0 => HandleKind::IndexSet,
                    1 => HandleKind::Materialized,
                    k => return Err(DeviceError::BadRequest(format!("bad handle kind {k}"))),
                };
                let source = match r.u8()? {
                    0 => HandleSource::Live {
                        container: r.u64()?,
                        generation: r.u64()?,
                    },
                    1 => HandleSource::Token {
                        token: r.u64()?,
                        container: r.u64()?,
                    },
                    k => return Err(DeviceError::BadRequest(format!("bad handle source {k}"))),
                };
                OpResult::Handle(ResultHandle {
                    handle_id,
                    kind,
                    source,
                    cardinality: r.u64()?,
                })
            }
            R_ITEMS => {
                let schema = ItemSchema::decode(r.bytes32()?)?;
                let n = r.u32()? as usize;
                let mut items = Vec::with_capacity(r.capacity_hint(n, 9));
                for _ in 0..n {
                    let index = r.u64()?;
                    items.push((index, decode_item_from(&schema, r)?));
                }
                OpResult::Items { schema, items }
            }
            R_COUNT => OpResult::Count(r.u64()?),
            R_SCALAR => OpResult::Scalar(decode_literal(r)?.to_value()),
            R_CONTAINER => OpResult::Container(r.u64()?),
            R_TOKEN => OpResult::Token(FreezeToken {
                token_id: r.u64()?,
                container_id: r.u64()?,
                lo: r.u64()?,
                hi: r.u64()?,
                generation_at_freeze: r.u64()?,
            }),
            R_APPENDED => OpResult::Appended {
                first_index: r.u64()?,
                generation: r.u64()?,
            },
            R_TRIGGERS => {
                let n = r.u32()? as usize;
                let mut records = Vec::with_capacity(r.capacity_hint(n, 29));
                for _ in 0..n {
                    records.push(TriggerRecord::decode_from(r)?);
                }
                OpResult::TriggerRecords(records)
            }
            k => return Err(DeviceError::BadRequest(format!("bad result kind {k}"))),
        })
    }
}

impl CompletionRecord {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u64(self.seq);
        match &self.status {
            Ok(result) => {
                out.put_u8(0);
                result.encode_into(out);
            }
            Err(e) => {
                out.put_u8(1);
                out.put_u16(e.code as u16);
                let msg = e.message.as_bytes();
                out.put_bytes16(&msg[..msg.len().min(u16::MAX as usize)]);
            }
        }
        out.put_u64(self.metrics.items_scanned);
        out.put_u64(self.metrics.items_matched);
        out.put_u64(self.metrics.host_bytes);
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    pub fn encoded_len(&self) -> usize {
        self.encode().len()
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DeviceError> {
        let seq = r.u64()?;
        let status = match r.u8()? {
            0 => Ok(OpResult::decode_from(r)?),
            1 => {
                let code = ErrorCode::from_u16(r.u16()?);
                let message = String::from_utf8_lossy(r.bytes16()?).into_owned();
                Err(OpError { code, message })
            }
            k => return Err(DeviceError::BadRequest(format!("bad completion status {k}"))),
        };
        Ok(Self {
            seq,
            status,
            metrics: OpMetrics {
                items_scanned: r.u64()?,
                items_matched: r.u64()?,
                host_bytes: r.u64()?,
            },
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DeviceError> {
        let mut r = Reader::new(bytes);
        let rec = Self::decode_from(&mut r)?;
        if !r.is_empty() {
            return Err(DeviceError::BadRequest("trailing bytes in completion".into()));
        }
        Ok(rec)
    }

    pub fn result(&self) -> Result<&OpResult, &OpError> {
        self.status.as_ref()
    }

    pub fn into_result(self) -> Result<OpResult, OpError> {
        self.status
    }
}
