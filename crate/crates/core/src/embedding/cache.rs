//! Binary embedding cache.
//!
//! Layout: the magic bytes `EMB1`, a little-endian `u32` dimension, then
//! records of `[u16 id length][id bytes, UTF-8][dim x f32 little-endian]`
//! until end of file. Records are written in ascending id order so the file
//! content does not depend on insertion order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{EmbeddingError, EmbeddingVector};

pub const CACHE_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    dim: usize,
    entries: BTreeMap<String, EmbeddingVector>,
}

impl EmbeddingCache {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingCache { dim, entries: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Inserts or replaces an entry. The vector must match the cache dim.
    pub fn insert(&mut self, id: impl Into<String>, vector: EmbeddingVector) -> Result<(), EmbeddingError> {
        let id = id.into();
        if vector.dim() != self.dim {
            return Err(EmbeddingError::DimensionMismatch { expected: self.dim, found: vector.dim() });
        }
        if id.len() > u16::MAX as usize {
            return Err(EmbeddingError::IdTooLong(id));
        }
        self.entries.insert(id, vector);
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let record = |id: &str| 2 + id.len() + 4 * self.dim;
        let mut out = Vec::with_capacity(8 + self.entries.keys().map(|k| record(k)).sum::<usize>());
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (id, vector) in &self.entries {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in vector.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let bad = |msg: String| EmbeddingError::CacheFormat(msg);
        if bytes.len() < 8 || &bytes[..4] != CACHE_MAGIC {
            return Err(bad("wrong magic".into()));
        }
        let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(bad("zero dimension".into()));
        }
        let mut cache = EmbeddingCache::new(dim);
        let mut pos = 8;
        while pos < bytes.len() {
            let rest = &bytes[pos..];
            if rest.len() < 2 {
                return Err(bad(format!("trailing garbage at byte {pos}")));
            }
            let id_len = u16::from_le_bytes([rest[0], rest[1]]) as usize;
            let need = 2 + id_len + 4 * dim;
            if rest.len() < need {
                return Err(bad(format!("truncated record at byte {pos}")));
            }
            let id = std::str::from_utf8(&rest[2..2 + id_len])
                .map_err(|_| bad(format!("id at byte {pos} is not UTF-8")))?
                .to_string();
            let values: Vec<f32> =
                rest[2 + id_len..need].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            let vector = EmbeddingVector::new(values).map_err(|e| bad(format!("entry `{id}`: {e}")))?;
            if cache.contains(&id) {
                return Err(bad(format!("duplicate id `{id}`")));
            }
            cache.insert(id, vector)?;
            pos += need;
        }
        Ok(cache)
    }

    pub fn read_from(path: &Path) -> Result<Self, EmbeddingError> {
        let bytes = fs::read(path).map_err(|source| EmbeddingError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }

    /// Writes the cache through a temporary sibling file and a rename.
    pub fn write_to(&self, path: &Path) -> Result<(), EmbeddingError> {
        let io = |source| EmbeddingError::Io { path: path.to_path_buf(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }
}
