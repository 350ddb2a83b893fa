//! CSV ingestion. The header row must name the schema's fields in order;
//! rows are parsed and appended in batches of [`INGEST_BATCH`], so a bad row
//! rejects its whole batch while earlier batches stay committed.

use std::io::Read;

use thiserror::Error;

use crate::device::Notify;
use crate::host::{DcFile, HostError, HostFs, Mode};
use crate::item::{FieldType, Item, ItemSchema, Value};

pub const INGEST_BATCH: usize = 1000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}, column {column}: {message} ({committed} rows committed before this batch)")]
    Parse {
        line: u64,
        column: usize,
        message: String,
        committed: u64,
    },
    #[error("CSV header does not match the schema: {0}")]
    SchemaMismatch(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Host(#[from] HostError),
}

/// Parses one CSV cell as a value of `ty`. Bytes are hex, with or without `0x`.
pub fn parse_value(ty: FieldType, text: &str) -> Result<Value, String> {
    let t = text.trim();
    match ty {
        FieldType::U64 => t.parse().map(Value::U64).map_err(|e| format!("{t:?} is not a u64: {e}")),
        FieldType::I64 => t.parse().map(Value::I64).map_err(|e| format!("{t:?} is not an i64: {e}")),
        FieldType::F64 => t.parse().map(Value::F64).map_err(|e| format!("{t:?} is not an f64: {e}")),
        FieldType::Bool => match t.to_ascii_lowercase().as_str() {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("{t:?} is not a bool")),
        },
        FieldType::Utf8(max) => {
            if text.len() > max as usize {
                Err(format!("text of {} bytes exceeds utf8({max})", text.len()))
            } else {
                Ok(Value::Utf8(text.to_string()))
            }
        }
        FieldType::Bytes(max) => {
            let hex = t.strip_prefix("0x").unwrap_or(t);
            if !hex.len().is_multiple_of(2) {
                return Err("hex needs an even number of digits".into());
            }
            let bytes = (0..hex.len())
                .step_by(2)
                .map(|i| u8::from_str_radix(&hex[i..i + 2], 16))
                .collect::<Result<Vec<u8>, _>>()
                .map_err(|_| format!("{t:?} is not hex"))?;
            if bytes.len() > max as usize {
                return Err(format!("{} bytes exceed bytes({max})", bytes.len()));
            }
            Ok(Value::Bytes(bytes))
        }
    }
}

fn check_header(schema: &ItemSchema, header: &csv::StringRecord) -> Result<(), IngestError> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let expected: Vec<&str> = schema.fields().iter().map(|f| f.name.as_str()).collect();
    if names != expected {
        return Err(IngestError::SchemaMismatch(format!(
            "expected columns {expected:?}, found {names:?}"
        )));
    }
    Ok(())
}

/// Parses and appends every row of `input` to `file`; returns the row count.
pub fn ingest_csv(host: &HostFs, file: &DcFile, input: impl Read) -> Result<u64, IngestError> {
    let schema = file.schema().clone();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    check_header(&schema, reader.headers()?)?;
    let mut committed = 0u64;
    let mut batch = Vec::with_capacity(INGEST_BATCH);
    let mut records = reader.records();
    loop {
        let next = records.next();
        let end = next.is_none();
        if let Some(record) = next {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != schema.len() {
                return Err(IngestError::Parse {
                    line,
                    column: record.len().min(schema.len()) + 1,
                    message: format!("expected {} columns, found {}", schema.len(), record.len()),
                    committed,
                });
            }
            let values = schema
                .fields()
                .iter()
                .zip(record.iter())
                .enumerate()
                .map(|(col, (field, cell))| {
                    parse_value(field.ty, cell).map_err(|message| IngestError::Parse {
                        line,
                        column: col + 1,
                        message,
                        committed,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            batch.push(Item::new(values));
        }
        if batch.len() == INGEST_BATCH || (end && !batch.is_empty()) {
            let n = batch.len() as u64;
            host.dc_append(file, std::mem::take(&mut batch), Mode::Sync(Notify::Interrupt))?;
            committed += n;
        }
        if end {
            return Ok(committed);
        }
    }
}
