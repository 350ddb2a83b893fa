//! Device requests and their payload encoding.
//!
//! A request travels as `msg_type` plus a body; the same bytes are stored in
//! the delayed journal (prefixed by the one-byte message type).

use crate::codec::{Put, Reader};
use crate::expr::{
    decode_mutation, decode_predicate, decode_program, encode_mutation_bytes, encode_predicate,
    encode_program_bytes, Mutation, Predicate, Program,
};
use crate::item::{decode_item_from, encode_values_into, Item, ItemSchema};
use crate::wire::MsgType;

use super::DeviceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Container(u64),
    Token(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReadSource {
    /// Positions `[offset, offset + count)` of a result set.
    Handle { handle: u64, offset: u64, count: u64 },
    /// Live items with index in `[lo, hi)`: the classic byte-moving path.
    Range { container: u64, lo: u64, hi: u64 },
    /// Trigger-log records, optionally only those of one container's triggers.
    TriggerLog { container: Option<u64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Get {
        target: Target,
        pred: Predicate,
    },
    Read(ReadSource),
    Write {
        handle: u64,
        dest: String,
    },
    Set {
        container: u64,
        pred: Predicate,
        mutation: Mutation,
    },
    Execute {
        program: Program,
        targets: Vec<u64>,
    },
    Freeze {
        container: u64,
        range: Option<(u64, u64)>,
    },
    Unfreeze {
        token: u64,
    },
    /// Items travel with their schema so the payload is self-describing.
    Append {
        container: u64,
        schema: ItemSchema,
        items: Vec<Item>,
    },
    Delete {
        container: u64,
        indices: Vec<u64>,
    },
}

impl Request {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Request::Get { .. } => MsgType::Get,
            Request::Read(_) => MsgType::Read,
            Request::Write { .. } => MsgType::Write,
            Request::Set { .. } => MsgType::Set,
            Request::Execute { .. } => MsgType::Execute,
            Request::Freeze { .. } => MsgType::Freeze,
            Request::Unfreeze { .. } => MsgType::Unfreeze,
            Request::Append { .. } => MsgType::Append,
            Request::Delete { .. } => MsgType::Delete,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Request::Get { .. } => "GET",
            Request::Read(_) => "READ",
            Request::Write { .. } => "WRITE",
            Request::Set { .. } => "SET",
            Request::Execute { .. } => "EXECUTE",
            Request::Freeze { .. } => "FREEZE",
            Request::Unfreeze { .. } => "UNFREEZE",
            Request::Append { .. } => "APPEND",
            Request::Delete { .. } => "DELETE",
        }
    }

    /// Only batch work with no waiting consumer may go through the journal.
    pub fn is_delayable(&self) -> bool {
        matches!(
            self,
            Request::Set { .. } | Request::Execute { .. } | Request::Append { .. } | Request::Delete { .. }
        )
    }

    pub fn mutates(&self) -> bool {
        matches!(
            self,
            Request::Set { .. } | Request::Append { .. } | Request::Delete { .. } | Request::Write { .. }
        )
    }

    pub fn encode_body(&self, out: &mut Vec<u8>) {
        match self {
            Request::Get { target, pred } => {
                match target {
                    Target::Container(id) => {
                        out.put_u8(0);
                        out.put_u64(*id);
                    }
                    Target::Token(t) => {
                        out.put_u8(1);
                        out.put_u64(*t);
                    }
                }
                out.extend(encode_predicate(pred));
            }
            Request::Read(src) => match src {
                ReadSource::Handle { handle, offset, count } => {
                    out.put_u8(0);
                    out.put_u64(*handle);
                    out.put_u64(*offset);
                    out.put_u64(*count);
                }
                ReadSource::Range { container, lo, hi } => {
                    out.put_u8(1);
                    out.put_u64(*container);
                    out.put_u64(*lo);
                    out.put_u64(*hi);
                }
                ReadSource::TriggerLog { container } => {
                    out.put_u8(2);
                    out.put_u64(container.unwrap_or(0));
                }
            },
            Request::Write { handle, dest } => {
                out.put_u64(*handle);
                out.put_bytes16(dest.as_bytes());
            }
            Request::Set { container, pred, mutation } => {
                out.put_u64(*container);
                out.put_bytes32(&encode_predicate(pred));
                out.extend(encode_mutation_bytes(mutation));
            }
            Request::Execute { program, targets } => {
                out.put_u16(targets.len() as u16);
                for t in targets {
                    out.put_u64(*t);
                }
                out.extend(encode_program_bytes(program));
            }
            Request::Freeze { container, range } => {
                out.put_u64(*container);
                match range {
                    Some((lo, hi)) => {
                        out.put_u8(1);
                        out.put_u64(*lo);
                        out.put_u64(*hi);
                    }
                    None => out.put_u8(0),
                }
            }
            Request::Unfreeze { token } => out.put_u64(*token),
            Request::Append { container, schema, items } => {
                out.put_u64(*container);
                out.put_bytes32(&schema.encode());
                out.put_u32(items.len() as u32);
                for item in items {
                    encode_values_into(item, out);
                }
            }
            Request::Delete { container, indices } => {
                out.put_u64(*container);
                out.put_u32(indices.len() as u32);
                for i in indices {
                    out.put_u64(*i);
                }
            }
        }
    }

    pub fn body(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_body(&mut out);
        out
    }

    /// `msg_type` byte followed by the body: the journal representation.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.msg_type() as u8];
        self.encode_body(&mut out);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DeviceError> {
        let (&tag, body) = bytes
            .split_first()
            .ok_or_else(|| DeviceError::BadRequest("empty request".into()))?;
        let ty = MsgType::from_u8(tag)
            .ok_or_else(|| DeviceError::BadRequest(format!("unknown message type {tag:#04x}")))?;
        Self::decode_body(ty, body)
    }

    pub fn decode_body(ty: MsgType, body: &[u8]) -> Result<Self, DeviceError> {
        let mut r = Reader::new(body);
        let req = match ty {
            MsgType::Get => {
                let target = match r.u8()? {
                    0 => Target::Container(r.u64()?),
                    1 => Target::Token(r.u64()?),
                    k => return Err(DeviceError::BadRequest(format!("bad GET target kind {k}"))),
                };
                let pred = decode_predicate(r.rest())?;
                Request::Get { target, pred }
            }
            MsgType::Read => Request::Read(match r.u8()? {
                0 => ReadSource::Handle {
                    handle: r.u64()?,
                    offset: r.u64()?,
                    count: r.u64()?,
                },
                1 => ReadSource::Range {
                    container: r.u64()?,
                    lo: r.u64()?,
                    hi: r.u64()?,
                },
                2 => ReadSource::TriggerLog {
                    container: Some(r.u64()?).filter(|c| *c != 0),
                },
                k => return Err(DeviceError::BadRequest(format!("bad READ source kind {k}"))),
            }),
            MsgType::Write => Request::Write {
                handle: r.u64()?,
                dest: String::from_utf8(r.bytes16()?.to_vec())
                    .map_err(|_| DeviceError::BadRequest("container name is not UTF-8".into()))?,
            },
            MsgType::Set => {
                let container = r.u64()?;
                let pred = decode_predicate(r.bytes32()?)?;
                let mutation = decode_mutation(r.rest())?;
                Request::Set { container, pred, mutation }
            }
            MsgType::Execute => {
                let n = r.u16()? as usize;
                let mut targets = Vec::with_capacity(r.capacity_hint(n, 8));
                for _ in 0..n {
                    targets.push(r.u64()?);
                }
                let program = decode_program(r.rest())?;
                Request::Execute { program, targets }
            }
            MsgType::Freeze => {
                let container = r.u64()?;
                let range = match r.u8()? {
                    0 => None,
                    1 => Some((r.u64()?, r.u64()?)),
                    k => return Err(DeviceError::BadRequest(format!("bad FREEZE range flag {k}"))),
                };
                Request::Freeze { container, range }
            }
            MsgType::Unfreeze => Request::Unfreeze { token: r.u64()? },
            MsgType::Append => {
                let container = r.u64()?;
                let schema = ItemSchema::decode(r.bytes32()?)?;
                let n = r.u32()? as usize;
                let mut items = Vec::with_capacity(r.capacity_hint(n, 1));
                for _ in 0..n {
                    items.push(decode_item_from(&schema, &mut r)?);
                }
                Request::Append { container, schema, items }
            }
            MsgType::Delete => {
                let container = r.u64()?;
                let n = r.u32()? as usize;
                let mut indices = Vec::with_capacity(r.capacity_hint(n, 8));
                for _ in 0..n {
                    indices.push(r.u64()?);
                }
                Request::Delete { container, indices }
            }
            other => {
                return Err(DeviceError::BadRequest(format!("{other} is not a device request")))
            }
        };
        if !r.is_empty() {
            return Err(DeviceError::BadRequest("trailing bytes in request".into()));
        }
        Ok(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{CmpOp, Expr, SortDir};
    use crate::item::Value;

    fn samples() -> Vec<Request> {
        let schema = ItemSchema::parse_spec("city:utf8(16),temp:f64,alert:bool").unwrap();
        let pred = Predicate(Expr::cmp(CmpOp::Gt, Expr::field(1), Expr::f64(20.0)));
        vec![
            Request::Get { target: Target::Container(1), pred: pred.clone() },
            Request::Get { target: Target::Token(4), pred: pred.clone() },
            Request::Read(ReadSource::Handle { handle: 2, offset: 0, count: 10 }),
            Request::Read(ReadSource::Range { container: 1, lo: 3, hi: 9 }),
            Request::Read(ReadSource::TriggerLog { container: None }),
            Request::Read(ReadSource::TriggerLog { container: Some(3) }),
            Request::Write { handle: 2, dest: "out".into() },
            Request::Set {
                container: 1,
                pred,
                mutation: crate::expr::Mutation::assign(2, Expr::bool(true)),
            },
            Request::Execute { program: Program::SortBy(1, SortDir::Desc), targets: vec![1, 2] },
            Request::Freeze { container: 1, range: None },
            Request::Freeze { container: 1, range: Some((2, 4)) },
            Request::Unfreeze { token: 7 },
            Request::Append {
                container: 1,
                items: vec![Item::new(vec![
                    Value::Utf8("SF".into()),
                    Value::F64(12.0),
                    Value::Bool(false),
                ])],
                schema,
            },
            Request::Delete { container: 1, indices: vec![2, 5] },
        ]
    }

    #[test]
    fn round_trip() {
        for req in samples() {
            let bytes = req.encode();
            assert_eq!(bytes[0], req.msg_type() as u8);
            assert_eq!(Request::decode(&bytes).unwrap(), req);
        }
    }

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        for req in samples() {
            let bytes = req.encode();
            for cut in 1..bytes.len() {
                assert!(Request::decode(&bytes[..cut]).is_err(), "{req:?} cut at {cut}");
            }
            let mut long = bytes.clone();
            long.push(0);
            assert!(Request::decode(&long).is_err());
        }
    }

    #[test]
    fn delayable_policy() {
        let names: Vec<_> = samples().iter().filter(|r| r.is_delayable()).map(|r| r.name()).collect();
        assert_eq!(names, ["SET", "EXECUTE", "APPEND", "DELETE"]);
    }
}
