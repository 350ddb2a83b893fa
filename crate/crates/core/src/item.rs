//! Typed item schemas and the positional binary encoding of items.
//!
//! A container holds a homogeneous sequence of items, so the schema is stored
//! once (in the catalog, or alongside a wire batch) and item bytes carry no
//! field tags. All integers are little-endian; `Utf8`/`Bytes` values carry a
//! `u32` length prefix regardless of their declared maximum.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::codec::{Put, Reader, Truncated};

pub const MAX_FIELDS: usize = 256;
pub const MAX_NAME_LEN: usize = 64;
pub const MAX_VAR_LEN: u32 = 65536;

const TAG_U64: u8 = 0x01;
const TAG_I64: u8 = 0x02;
const TAG_F64: u8 = 0x03;
const TAG_BOOL: u8 = 0x04;
const TAG_UTF8: u8 = 0x05;
const TAG_BYTES: u8 = 0x06;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldType {
    U64,
    I64,
    F64,
    Bool,
    Utf8(u32),
    Bytes(u32),
}

/// Field type with the length bound erased; what the expression typechecker compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    U64,
    I64,
    F64,
    Bool,
    Utf8,
    Bytes,
}

impl Kind {
    pub fn is_numeric(self) -> bool {
        matches!(self, Kind::U64 | Kind::I64 | Kind::F64)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::U64 => "u64",
            Kind::I64 => "i64",
            Kind::F64 => "f64",
            Kind::Bool => "bool",
            Kind::Utf8 => "utf8",
            Kind::Bytes => "bytes",
        })
    }
}

impl FieldType {
    pub fn kind(self) -> Kind {
        match self {
            FieldType::U64 => Kind::U64,
            FieldType::I64 => Kind::I64,
            FieldType::F64 => Kind::F64,
            FieldType::Bool => Kind::Bool,
            FieldType::Utf8(_) => Kind::Utf8,
            FieldType::Bytes(_) => Kind::Bytes,
        }
    }

    /// Encoded width for fixed-size types.
    pub fn fixed_width(self) -> Option<usize> {
        match self {
            FieldType::U64 | FieldType::I64 | FieldType::F64 => Some(8),
            FieldType::Bool => Some(1),
            FieldType::Utf8(_) | FieldType::Bytes(_) => None,
        }
    }

    fn tag(self) -> u8 {
        match self {
            FieldType::U64 => TAG_U64,
            FieldType::I64 => TAG_I64,
            FieldType::F64 => TAG_F64,
            FieldType::Bool => TAG_BOOL,
            FieldType::Utf8(_) => TAG_UTF8,
            FieldType::Bytes(_) => TAG_BYTES,
        }
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldType::Utf8(n) => write!(f, "utf8({n})"),
            FieldType::Bytes(n) => write!(f, "bytes({n})"),
            other => write!(f, "{}", other.kind()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Field {
    pub name: String,
    pub ty: FieldType,
}

impl Field {
    pub fn new(name: impl Into<String>, ty: FieldType) -> Self {
        Self { name: name.into(), ty }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("schema has no fields")]
    NoFields,
    #[error("schema has {0} fields, limit is {MAX_FIELDS}")]
    TooManyFields(usize),
    #[error("field name is empty")]
    EmptyName,
    #[error("field name {0:?} exceeds {MAX_NAME_LEN} bytes")]
    NameTooLong(String),
    #[error("field name {0:?} is not ASCII")]
    NonAsciiName(String),
    #[error("duplicate field name {0:?}")]
    DuplicateName(String),
    #[error("field {field:?} has max_len {max_len}, must be in 1..={MAX_VAR_LEN}")]
    BadMaxLen { field: String, max_len: u32 },
    #[error("bad schema spec: {0}")]
    BadSpec(String),
}

/// Ordered, validated field layout shared by every item of a container.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ItemSchema {
    fields: Vec<Field>,
}

impl ItemSchema {
    pub fn new(fields: Vec<Field>) -> Result<Self, SchemaError> {
        if fields.is_empty() {
            return Err(SchemaError::NoFields);
        }
        if fields.len() > MAX_FIELDS {
            return Err(SchemaError::TooManyFields(fields.len()));
        }
        for (i, field) in fields.iter().enumerate() {
            if field.name.is_empty() {
                return Err(SchemaError::EmptyName);
            }
            if !field.name.is_ascii() {
                return Err(SchemaError::NonAsciiName(field.name.clone()));
            }
            if field.name.len() > MAX_NAME_LEN {
                return Err(SchemaError::NameTooLong(field.name.clone()));
            }
            if fields[..i].iter().any(|f| f.name == field.name) {
                return Err(SchemaError::DuplicateName(field.name.clone()));
            }
            if let FieldType::Utf8(max_len) | FieldType::Bytes(max_len) = field.ty {
                if max_len == 0 || max_len > MAX_VAR_LEN {
                    return Err(SchemaError::BadMaxLen {
                        field: field.name.clone(),
                        max_len,
                    });
                }
            }
        }
        Ok(Self { fields })
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, index: usize) -> Option<&Field> {
        self.fields.get(index)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    /// Encoded item length when every field is fixed-size.
    pub fn fixed_width(&self) -> Option<usize> {
        self.fields.iter().map(|f| f.ty.fixed_width()).sum()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.fields.len() * 8);
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u16(self.fields.len() as u16);
        for field in &self.fields {
            out.put_u8(field.name.len() as u8);
            out.extend_from_slice(field.name.as_bytes());
            out.put_u8(field.ty.tag());
            if let FieldType::Utf8(n) | FieldType::Bytes(n) = field.ty {
                out.put_u32(n);
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let schema = Self::decode_from(&mut r)?;
        if !r.is_empty() {
            return Err(DecodeError::TrailingBytes);
        }
        Ok(schema)
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let count = r.u16()? as usize;
        let mut fields = Vec::with_capacity(r.capacity_hint(count, 3));
        for _ in 0..count {
            let name_len = r.u8()? as usize;
            let name = r.take(name_len)?;
            let name = String::from_utf8(name.to_vec()).map_err(|_| {
                DecodeError::InvalidSchema(SchemaError::NonAsciiName(
                    String::from_utf8_lossy(name).into_owned(),
                ))
            })?;
            let ty = match r.u8()? {
                TAG_U64 => FieldType::U64,
                TAG_I64 => FieldType::I64,
                TAG_F64 => FieldType::F64,
                TAG_BOOL => FieldType::Bool,
                TAG_UTF8 => FieldType::Utf8(r.u32()?),
                TAG_BYTES => FieldType::Bytes(r.u32()?),
                tag => return Err(DecodeError::BadTypeTag(tag)),
            };
            if fields.iter().any(|f: &Field| f.name == name) {
                return Err(DecodeError::DuplicateName(name));
            }
            fields.push(Field { name, ty });
        }
        Self::new(fields).map_err(DecodeError::InvalidSchema)
    }

    /// Parses the textual form `name:type[(len)],...`, e.g.
    /// `city:utf8(16),temp:f64,alert:bool`.
    pub fn parse_spec(spec: &str) -> Result<Self, SchemaError> {
        let bad = |msg: String| SchemaError::BadSpec(msg);
        let mut fields = Vec::new();
        for part in spec.split(',') {
            let part = part.trim();
            let (name, ty) = part
                .split_once(':')
                .ok_or_else(|| bad(format!("expected name:type, got {part:?}")))?;
            let ty = ty.trim().to_ascii_lowercase();
            let (base, len) = match ty.split_once('(') {
                Some((base, rest)) => {
                    let digits = rest
                        .strip_suffix(')')
                        .ok_or_else(|| bad(format!("unclosed length in {part:?}")))?;
                    let len: u32 = digits
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("bad length in {part:?}")))?;
                    (base.trim().to_string(), Some(len))
                }
                None => (ty.clone(), None),
            };
            let ty = match (base.as_str(), len) {
                ("u64", None) => FieldType::U64,
                ("i64", None) => FieldType::I64,
                ("f64", None) => FieldType::F64,
                ("bool", None) => FieldType::Bool,
                ("utf8", Some(n)) => FieldType::Utf8(n),
                ("bytes", Some(n)) => FieldType::Bytes(n),
                ("utf8" | "bytes", None) => {
                    return Err(bad(format!("{base} needs a length in {part:?}")))
                }
                _ => return Err(bad(format!("unknown type in {part:?}"))),
            };
            fields.push(Field::new(name.trim(), ty));
        }
        Self::new(fields)
    }
}

impl FromStr for ItemSchema {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_spec(s)
    }
}

impl fmt::Display for ItemSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, field) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", field.name, field.ty)?;
        }
        Ok(())
    }
}

/// One typed value. Equality on `F64` is bitwise, so stored items compare
/// exactly (NaN payloads included); predicate evaluation uses IEEE rules instead.
#[derive(Debug, Clone)]
pub enum Value {
    U64(u64),
    I64(i64),
    F64(f64),
    Bool(bool),
    Utf8(String),
    Bytes(Vec<u8>),
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::U64(a), Value::U64(b)) => a == b,
            (Value::I64(a), Value::I64(b)) => a == b,
            (Value::F64(a), Value::F64(b)) => a.to_bits() == b.to_bits(),
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Utf8(a), Value::Utf8(b)) => a == b,
            (Value::Bytes(a), Value::Bytes(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl std::hash::Hash for Value {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Value::U64(v) => v.hash(state),
            Value::I64(v) => v.hash(state),
            Value::F64(v) => v.to_bits().hash(state),
            Value::Bool(v) => v.hash(state),
            Value::Utf8(v) => v.hash(state),
            Value::Bytes(v) => v.hash(state),
        }
    }
}

impl Value {
    pub fn kind(&self) -> Kind {
        match self {
            Value::U64(_) => Kind::U64,
            Value::I64(_) => Kind::I64,
            Value::F64(_) => Kind::F64,
            Value::Bool(_) => Kind::Bool,
            Value::Utf8(_) => Kind::Utf8,
            Value::Bytes(_) => Kind::Bytes,
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            Value::U64(_) | Value::I64(_) | Value::F64(_) => 8,
            Value::Bool(_) => 1,
            Value::Utf8(s) => 4 + s.len(),
            Value::Bytes(b) => 4 + b.len(),
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Value::U64(v) => out.put_u64(*v),
            Value::I64(v) => out.put_i64(*v),
            Value::F64(v) => out.put_f64(*v),
            Value::Bool(v) => out.put_u8(*v as u8),
            Value::Utf8(s) => out.put_bytes32(s.as_bytes()),
            Value::Bytes(b) => out.put_bytes32(b),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::U64(v) => write!(f, "{v}"),
            Value::I64(v) => write!(f, "{v}"),
            Value::F64(v) => write!(f, "{v:?}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Utf8(s) => write!(f, "{s:?}"),
            Value::Bytes(b) => {
                f.write_str("0x")?;
                b.iter().try_for_each(|byte| write!(f, "{byte:02x}"))
            }
        }
    }
}

/// One record, positionally matching an [`ItemSchema`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Item {
    values: Vec<Value>,
}

impl Item {
    pub fn new(values: Vec<Value>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn get(&self, index: usize) -> Option<&Value> {
        self.values.get(index)
    }

    pub fn set(&mut self, index: usize, value: Value) {
        self.values[index] = value;
    }

    pub fn into_values(self) -> Vec<Value> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn encoded_len(&self) -> usize {
        self.values.iter().map(Value::encoded_len).sum()
    }
}

impl From<Vec<Value>> for Item {
    fn from(values: Vec<Value>) -> Self {
        Self::new(values)
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

// `InvalidUtf8` has no validation counterpart: `Value::Utf8` holds a `String`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("item has {found} values, schema has {expected} fields")]
    ArityMismatch { expected: usize, found: usize },
    #[error("type mismatch in field {field:?}")]
    TypeMismatch { field: String },
    #[error("value in field {field:?} exceeds its maximum length")]
    LengthExceeded { field: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("input truncated")]
    Truncated,
    #[error("trailing bytes after encoded value")]
    TrailingBytes,
    #[error("value in field {field:?} exceeds its maximum length")]
    LengthExceeded { field: String },
    #[error("field {field:?} holds invalid UTF-8")]
    InvalidUtf8 { field: String },
    #[error("field {field:?} holds a bool byte other than 0 or 1")]
    BadBool { field: String },
    #[error("unknown field type tag {0:#04x}")]
    BadTypeTag(u8),
    #[error("duplicate field name {0:?}")]
    DuplicateName(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(SchemaError),
}

impl From<Truncated> for DecodeError {
    fn from(_: Truncated) -> Self {
        DecodeError::Truncated
    }
}

pub fn validate_item(schema: &ItemSchema, item: &Item) -> Result<(), ValidationError> {
    if item.len() != schema.len() {
        return Err(ValidationError::ArityMismatch {
            expected: schema.len(),
            found: item.len(),
        });
    }
    for (field, value) in schema.fields().iter().zip(item.values()) {
        if field.ty.kind() != value.kind() {
            return Err(ValidationError::TypeMismatch {
                field: field.name.clone(),
            });
        }
        let len = match value {
            Value::Utf8(s) => s.len(),
            Value::Bytes(b) => b.len(),
            _ => continue,
        };
        if let FieldType::Utf8(max) | FieldType::Bytes(max) = field.ty {
            if len > max as usize {
                return Err(ValidationError::LengthExceeded {
                    field: field.name.clone(),
                });
            }
        }
    }
    Ok(())
}

pub fn encode_item(schema: &ItemSchema, item: &Item) -> Result<Vec<u8>, ValidationError> {
    validate_item(schema, item)?;
    let mut out = Vec::with_capacity(item.encoded_len());
    encode_values_into(item, &mut out);
    Ok(out)
}

/// Appends the encoding of an already-validated item.
pub(crate) fn encode_values_into(item: &Item, out: &mut Vec<u8>) {
    for value in item.values() {
        value.encode_into(out);
    }
}

pub fn decode_item(schema: &ItemSchema, bytes: &[u8]) -> Result<Item, DecodeError> {
    let mut r = Reader::new(bytes);
    let item = decode_item_from(schema, &mut r)?;
    if !r.is_empty() {
        return Err(DecodeError::TrailingBytes);
    }
    Ok(item)
}

pub fn decode_item_from(schema: &ItemSchema, r: &mut Reader<'_>) -> Result<Item, DecodeError> {
    let mut values = Vec::with_capacity(schema.len());
    for field in schema.fields() {
        let value = match field.ty {
            FieldType::U64 => Value::U64(r.u64()?),
            FieldType::I64 => Value::I64(r.i64()?),
            FieldType::F64 => Value::F64(r.f64()?),
            FieldType::Bool => match r.u8()? {
                0 => Value::Bool(false),
                1 => Value::Bool(true),
                _ => {
                    return Err(DecodeError::BadBool {
                        field: field.name.clone(),
                    })
                }
            },
            FieldType::Utf8(max) | FieldType::Bytes(max) => {
                let len = r.u32()?;
                if len > max {
                    return Err(DecodeError::LengthExceeded {
                        field: field.name.clone(),
                    });
                }
                let raw = r.take(len as usize)?;
                if matches!(field.ty, FieldType::Utf8(_)) {
                    let s = std::str::from_utf8(raw).map_err(|_| DecodeError::InvalidUtf8 {
                        field: field.name.clone(),
                    })?;
                    Value::Utf8(s.to_owned())
                } else {
                    Value::Bytes(raw.to_vec())
                }
            }
        };
        values.push(value);
    }
    Ok(Item::new(values))
}
