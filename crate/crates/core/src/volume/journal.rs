//! Delayed-request journal (`journal.ndp`) and its processed watermark (`journal.mark`).
//!
//! Record: `u32 len | u64 seq | body | u32 crc`, where `len` counts `seq + body`
//! and the CRC-32 covers the same bytes. A torn or corrupt tail is cut off on open.

use std::fs::{File, OpenOptions};
use std::io::Read;
use std::os::unix::fs::FileExt;
use std::path::Path;

use crate::codec::{crc32, Put, Reader};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalRecord {
    pub seq: u64,
    pub body: Vec<u8>,
}

pub(crate) fn encode_record(seq: u64, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + body.len());
    out.put_u32(8 + body.len() as u32);
    let start = out.len();
    out.put_u64(seq);
    out.extend_from_slice(body);
    let crc = crc32(&out[start..]);
    out.put_u32(crc);
    out
}

/// Parses records until the first incomplete or corrupt one; returns them and
/// the byte length of the valid prefix.
pub(crate) fn parse_records(bytes: &[u8]) -> (Vec<JournalRecord>, usize) {
    let mut records = Vec::new();
    let mut r = Reader::new(bytes);
    let mut valid = 0;
    loop {
        let Ok(len) = r.u32() else { break };
        let len = len as usize;
        if len < 8 {
            break;
        }
        let Ok(content) = r.take(len) else { break };
        let Ok(crc) = r.u32() else { break };
        if crc32(content) != crc {
            break;
        }
        let seq = u64::from_le_bytes(content[..8].try_into().expect("8 bytes"));
        records.push(JournalRecord {
            seq,
            body: content[8..].to_vec(),
        });
        valid = r.position();
    }
    (records, valid)
}

pub(crate) struct Journal {
    file: File,
    len: u64,
    records: Vec<JournalRecord>,
}

impl Journal {
    pub(crate) fn create(path: &Path) -> std::io::Result<()> {
        File::create(path).map(|_| ())
    }

    pub(crate) fn open(path: &Path) -> std::io::Result<Self> {
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (records, valid) = parse_records(&bytes);
        if valid < bytes.len() {
            file.set_len(valid as u64)?;
        }
        Ok(Self {
            file,
            len: valid as u64,
            records,
        })
    }

    pub(crate) fn records(&self) -> &[JournalRecord] {
        &self.records
    }

    pub(crate) fn last_seq(&self) -> Option<u64> {
        self.records.last().map(|r| r.seq)
    }

    /// Writes `bytes[..upto]` of an encoded record without registering it,
    /// leaving a torn tail.
    pub(crate) fn write_partial(&mut self, encoded: &[u8], upto: usize) -> std::io::Result<()> {
        self.file.write_all_at(&encoded[..upto], self.len)
    }

    pub(crate) fn append(&mut self, seq: u64, body: &[u8], sync: bool) -> std::io::Result<()> {
        let encoded = encode_record(seq, body);
        self.file.write_all_at(&encoded, self.len)?;
        if sync {
            self.file.sync_data()?;
        }
        self.len += encoded.len() as u64;
        self.records.push(JournalRecord {
            seq,
            body: body.to_vec(),
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_layout() {
        let rec = encode_record(7, &[0xAA, 0xBB]);
        assert_eq!(&rec[..4], &10u32.to_le_bytes());
        assert_eq!(&rec[4..12], &7u64.to_le_bytes());
        assert_eq!(&rec[12..14], &[0xAA, 0xBB]);
        assert_eq!(&rec[14..], &crc32(&rec[4..14]).to_le_bytes());
    }

    #[test]
    fn torn_tail_is_ignored() {
        let mut bytes = encode_record(1, b"one");
        bytes.extend(encode_record(2, b"two"));
        let full = bytes.len();
        let third = encode_record(3, b"three");
        bytes.extend_from_slice(&third[..5]);
        let (records, valid) = parse_records(&bytes);
        assert_eq!(records.len(), 2);
        assert_eq!(valid, full);

        let mut corrupt = bytes[..full].to_vec();
        let last = corrupt.len() - 1;
        corrupt[last] ^= 1;
        let (records, _) = parse_records(&corrupt);
        assert_eq!(records.len(), 1);
    }

    #[test]
    fn reopen_truncates_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.ndp");
        Journal::create(&path).unwrap();
        let mut j = Journal::open(&path).unwrap();
        j.append(1, b"a", false).unwrap();
        let torn = encode_record(2, b"bbbb");
        j.write_partial(&torn, 6).unwrap();
        drop(j);
        let mut j = Journal::open(&path).unwrap();
        assert_eq!(j.records().len(), 1);
        j.append(2, b"c", false).unwrap();
        drop(j);
        let j = Journal::open(&path).unwrap();
        assert_eq!(j.records().iter().map(|r| r.seq).collect::<Vec<_>>(), [1, 2]);
    }
}
