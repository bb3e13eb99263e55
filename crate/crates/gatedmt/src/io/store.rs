//! Binary store of cached vision encodings, keyed by image id.
//!
//! Layout (all integers little-endian):
//!   magic "VSTR" | u32 version | u32 e | u64 count
//!   index: count x (u32 id_len | id bytes | u64 payload offset)
//!   payload: count x e x f32 rows
//!   u64 FNV-1a checksum over all preceding bytes

use crate::error::{Error, Result};
use crate::io::{fnv1a, put_string, put_u32, put_u64, ByteReader};
use crate::model::VisionEncodingSet;
use std::collections::BTreeMap;
use std::path::Path;

const MAGIC: &[u8; 4] = b"VSTR";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VisionEncodingStore {
    dim: usize,
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
    rows: Vec<Vec<f64>>,
}

impl VisionEncodingStore {
    pub fn new(dim: usize) -> Self {
        VisionEncodingStore { dim, ..Default::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn insert(&mut self, id: &str, encoding: Vec<f64>) -> Result<()> {
        if encoding.len() != self.dim {
            return Err(Error::data(format!(
                "encoding for {id:?} has length {}, store dimension is {}",
                encoding.len(),
                self.dim
            )));
        }
        if self.index.contains_key(id) {
            return Err(Error::data(format!("duplicate image id {id:?}")));
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        // round through f32 so in-memory values match what a save/load yields
        self.rows.push(encoding.iter().map(|&x| x as f32 as f64).collect());
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&[f64]> {
        let idx = self
            .index
            .get(id)
            .ok_or_else(|| Error::data(format!("image id {id:?} not in vision store")))?;
        Ok(&self.rows[*idx])
    }

    /// Gather the encodings for a record's image-id list.
    pub fn encoding_set(&self, ids: &[String]) -> Result<VisionEncodingSet> {
        let mut set = VisionEncodingSet::empty(self.dim);
        for id in ids {
            set.push(self.get(id)?.to_vec())?;
        }
        Ok(set)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, self.dim as u32);
        put_u64(&mut out, self.ids.len() as u64);
        for (i, id) in self.ids.iter().enumerate() {
            put_string(&mut out, id);
            put_u64(&mut out, (i * self.dim * 4) as u64);
        }
        for row in &self.rows {
            for &x in row {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        let sum = fnv1a(&out);
        put_u64(&mut out, sum);
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Decode a serialized store; `origin` prefixes error messages.
    pub fn from_bytes(buf: &[u8], origin: &str) -> Result<VisionEncodingStore> {
        if buf.len() < 8 {
            return Err(Error::data(format!("{origin}: not a vision store")));
        }
        let (body, tail) = buf.split_at(buf.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        if fnv1a(body) != stored {
            return Err(Error::data(format!(
                "{origin}: checksum mismatch, file is corrupt"
            )));
        }
        let mut r = ByteReader::new(body);
        if r.take(4)? != MAGIC {
            return Err(Error::data(format!("{origin}: bad magic")));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::data(format!(
                "{origin}: unsupported vision store version {version}"
            )));
        }
        let dim = r.u32()? as usize;
        let count = r.u64()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let id = r.string()?;
            let off = r.u64()? as usize;
            entries.push((id, off));
        }
        let payload_start = r.pos();
        let payload_len = body.len() - payload_start;
        if Some(payload_len) != count.checked_mul(dim).and_then(|n| n.checked_mul(4)) {
            return Err(Error::data(format!(
                "{origin}: payload is {payload_len} bytes, expected {count}x{dim}x4"
            )));
        }
        let mut store = VisionEncodingStore::new(dim);
        for (id, off) in entries {
            if off.checked_add(dim * 4).is_none_or(|end| end > payload_len) {
                return Err(Error::data(format!(
                    "{origin}: offset {off} for {id:?} out of payload range"
                )));
            }
            let mut rr = ByteReader::new(&body[payload_start + off..]);
            let mut row = Vec::with_capacity(dim);
            for _ in 0..dim {
                row.push(rr.f32()? as f64);
            }
            store.insert(&id, row)?;
        }
        Ok(store)
    }

    pub fn read(path: &Path) -> Result<VisionEncodingStore> {
        let buf = std::fs::read(path)?;
        Self::from_bytes(&buf, &path.display().to_string())
    }
}
