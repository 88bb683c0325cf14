use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::relation::EmbeddingVector;

/// Hex SHA-256 of `model_id`, a NUL separator and `text`.
pub fn content_hash(model_id: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(model_id.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    h.finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Content-addressed store of embedding vectors.
///
/// Entries are appended in insertion order; `index` maps a content hash to
/// the entry's position. All entries share one dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingCache {
    dim: Option<usize>,
    entries: Vec<EmbeddingVector>,
    index: BTreeMap<String, usize>,
}

impl EmbeddingCache {
    pub fn get(&self, hash: &str) -> Option<&EmbeddingVector> {
        self.index.get(hash).map(|i| &self.entries[*i])
    }

    /// Idempotent: a second put under the same hash keeps the first vector.
    /// Returns whether a new entry was created.
    pub fn put(&mut self, hash: &str, vector: EmbeddingVector) -> Result<bool> {
        if self.index.contains_key(hash) {
            return Ok(false);
        }
        match self.dim {
            Some(d) if d != vector.dim() => {
                return Err(Error::Storage(format!(
                    "embedding cache holds dimension {d}, got {}",
                    vector.dim()
                )))
            }
            _ => self.dim = Some(vector.dim()),
        }
        self.index.insert(hash.to_string(), self.entries.len());
        self.entries.push(vector);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index(&self) -> &BTreeMap<String, usize> {
        &self.index
    }

    /// `u32` little-endian dimension, then every entry's floats, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.dim.unwrap_or(0);
        let mut out = Vec::with_capacity(4 + self.entries.len() * dim * 4);
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        for e in &self.entries {
            for v in e.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], index: BTreeMap<String, usize>) -> Result<EmbeddingCache> {
        if bytes.len() < 4 {
            return Err(Error::Storage("embedding cache file is truncated".into()));
        }
        let dim = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
        let body = &bytes[4..];
        let entries: Vec<EmbeddingVector> = if dim == 0 {
            Vec::new()
        } else {
            if !body.len().is_multiple_of(dim * 4) {
                return Err(Error::Storage("embedding cache body is not a whole number of entries".into()));
            }
            body.chunks_exact(dim * 4)
                .map(|entry| {
                    EmbeddingVector::new(
                        entry
                            .chunks_exact(4)
                            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                            .collect(),
                    )
                })
                .collect()
        };
        if index.values().any(|i| *i >= entries.len()) || index.len() != entries.len() {
            return Err(Error::Storage("embedding cache index does not match vectors".into()));
        }
        Ok(EmbeddingCache {
            dim: (dim > 0).then_some(dim),
            entries,
            index,
        })
    }
}
