//! Superblock and catalog file formats.

use crate::codec::{crc32, Put, Reader};
use crate::item::ItemSchema;

pub(crate) const MAGIC: &[u8; 8] = b"NDPVOL01";
pub(crate) const VERSION: u32 = 1;
pub(crate) const SUPERBLOCK_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Superblock {
    pub next_container_id: u64,
    /// Upper bound of the reserved request-seq block; the next process
    /// lifetime starts allocating here.
    pub next_request_seq: u64,
}

pub(crate) enum SuperblockError {
    NotAVolume,
    BadVersion(u32),
}

impl Superblock {
    pub(crate) fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SUPERBLOCK_LEN);
        out.extend_from_slice(MAGIC);
        out.put_u32(VERSION);
        out.put_u64(self.next_container_id);
        out.put_u64(self.next_request_seq);
        out
    }

    pub(crate) fn decode(bytes: &[u8]) -> Result<Self, SuperblockError> {
        if bytes.len() != SUPERBLOCK_LEN || &bytes[..8] != MAGIC {
            return Err(SuperblockError::NotAVolume);
        }
        let mut r = Reader::new(&bytes[8..]);
        let version = r.u32().map_err(|_| SuperblockError::NotAVolume)?;
        if version != VERSION {
            return Err(SuperblockError::BadVersion(version));
        }
        Ok(Self {
            next_container_id: r.u64().map_err(|_| SuperblockError::NotAVolume)?,
            next_request_seq: r.u64().map_err(|_| SuperblockError::NotAVolume)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct CatalogEntry {
    pub id: u64,
    pub name: String,
    pub schema: ItemSchema,
    pub item_count: u64,
    pub generation: u64,
    /// Committed length of the container's data log; bytes past it are uncommitted.
    pub dat_len: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct Catalog {
    /// Highest journal seq whose effects this catalog already contains.
    pub journal_applied: u64,
    pub entries: Vec<CatalogEntry>,
}

impl Catalog {
    pub(crate) fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.put_u64(self.journal_applied);
        out.put_u32(self.entries.len() as u32);
        for e in &self.entries {
            out.put_u64(e.id);
            out.put_bytes16(e.name.as_bytes());
            out.put_bytes32(&e.schema.encode());
            out.put_u64(e.item_count);
            out.put_u64(e.generation);
            out.put_u64(e.dat_len);
        }
        let crc = crc32(&out);
        out.put_u32(crc);
        out
    }

    pub(crate) fn decode(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < 4 {
            return Err("catalog too short".into());
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        if crc32(body).to_le_bytes() != crc {
            return Err("catalog checksum mismatch".into());
        }
        let mut r = Reader::new(body);
        let trunc = |_| "catalog truncated".to_string();
        let journal_applied = r.u64().map_err(trunc)?;
        let count = r.u32().map_err(trunc)? as usize;
        let mut entries = Vec::with_capacity(r.capacity_hint(count, 40));
        for _ in 0..count {
            let id = r.u64().map_err(trunc)?;
            let name = String::from_utf8(r.bytes16().map_err(trunc)?.to_vec())
                .map_err(|_| "container name is not UTF-8".to_string())?;
            let schema = ItemSchema::decode(r.bytes32().map_err(trunc)?)
                .map_err(|e| format!("schema of {name:?}: {e}"))?;
            entries.push(CatalogEntry {
                id,
                name,
                schema,
                item_count: r.u64().map_err(trunc)?,
                generation: r.u64().map_err(trunc)?,
                dat_len: r.u64().map_err(trunc)?,
            });
        }
        if !r.is_empty() {
            return Err("trailing bytes in catalog".into());
        }
        Ok(Self {
            journal_applied,
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn superblock_layout() {
        let sb = Superblock {
            next_container_id: 3,
            next_request_seq: 1024,
        };
        let bytes = sb.encode();
        assert_eq!(bytes.len(), SUPERBLOCK_LEN);
        assert_eq!(&bytes[..8], b"NDPVOL01");
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert!(Superblock::decode(&bytes).is_ok_and(|d| d == sb));
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert!(matches!(Superblock::decode(&bad), Err(SuperblockError::NotAVolume)));
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(matches!(Superblock::decode(&v2), Err(SuperblockError::BadVersion(2))));
    }

    #[test]
    fn catalog_round_trip_and_checksum() {
        let cat = Catalog {
            journal_applied: 9,
            entries: vec![CatalogEntry {
                id: 1,
                name: "weather".into(),
                schema: ItemSchema::parse_spec("city:utf8(16),temp:f64").unwrap(),
                item_count: 6,
                generation: 2,
                dat_len: 300,
            }],
        };
        let bytes = cat.encode();
        assert_eq!(Catalog::decode(&bytes).unwrap(), cat);
        let mut bad = bytes;
        bad[10] ^= 1;
        assert!(Catalog::decode(&bad).is_err());
    }
}
