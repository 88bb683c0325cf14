//! Data directory: registered documents and their chunk store, relational
//! tables, and the content-addressed embedding cache.
//!
//! Layout:
//!
//! ```text
//! <data dir>/
//!   manifest.json        registered tables, files, directories, cache index
//!   chunks/<doc>.txt     concatenated chunk texts of one document
//!   chunks/<doc>.idx     JSON offset index for the .txt file
//!   tables/<name>.jsonl  one JSON array per row
//!   embcache/vectors.bin u32 LE dimension, then dimension f32 LE per entry
//! ```
//!
//! Writes go to a temporary file that is then renamed into place.

mod catalog;
mod chunk;
mod embcache;

pub use catalog::{
    Catalog, CatalogManifest, DirectoryEntry, DocumentEntry, SourceStats, TableEntry,
};
pub use catalog::schema_from_defs;
pub use chunk::{chunk_document, reconstruct, token_estimate, Chunk, ChunkParams, CHARS_PER_TOKEN};
pub use embcache::{content_hash, EmbeddingCache};

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
