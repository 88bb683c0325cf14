use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::chunk::{chunk_document, Chunk, ChunkParams};
use super::embcache::{content_hash, EmbeddingCache};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::relation::{Column, DataType, EmbeddingVector, Relation, Row, Schema, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub columns: Vec<Column>,
    pub data_path: String,
    pub row_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentEntry {
    pub path: String,
    pub content_hash: String,
    pub params: ChunkParams,
    pub chunk_count: usize,
    pub char_count: usize,
    /// Chunk store key, relative to `chunks/`.
    pub store_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryEntry {
    pub path: String,
    pub params: ChunkParams,
    /// Member file names, sorted; each is also a document `<dir>/<file>`.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogManifest {
    pub tables: BTreeMap<String, TableEntry>,
    pub files: BTreeMap<String, DocumentEntry>,
    pub directories: BTreeMap<String, DirectoryEntry>,
    /// Documents that belong to a directory, keyed `<dir>/<file>`.
    pub members: BTreeMap<String, DocumentEntry>,
    pub embedding_index: BTreeMap<String, usize>,
}

/// Size figures the optimizer uses for cardinality and token estimates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SourceStats {
    /// Chunks for documents, rows for tables.
    pub rows: usize,
    pub documents: usize,
    pub total_chars: usize,
}

impl SourceStats {
    pub fn avg_row_chars(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.total_chars as f64 / self.rows as f64
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ChunkIndexEntry {
    chunk_id: usize,
    char_start: usize,
    byte_offset: usize,
    byte_len: usize,
    token_estimate: usize,
}

/// Registered sources, tables and the embedding cache.
///
/// A catalog opened on a directory persists every mutation; an in-memory
/// catalog behaves identically but writes nothing. The embedding cache is
/// behind a mutex so operators can fill it through a shared reference.
#[derive(Debug)]
pub struct Catalog {
    root: Option<PathBuf>,
    manifest: CatalogManifest,
    chunks: BTreeMap<String, Vec<Chunk>>,
    tables: BTreeMap<String, Relation>,
    embcache: Mutex<EmbeddingCache>,
}

const MANIFEST: &str = "manifest.json";
const VECTORS: &str = "embcache/vectors.bin";

impl Catalog {
    pub fn in_memory() -> Catalog {
        Catalog {
            root: None,
            manifest: CatalogManifest::default(),
            chunks: BTreeMap::new(),
            tables: BTreeMap::new(),
            embcache: Mutex::new(EmbeddingCache::default()),
        }
    }

    /// Opens (or initialises) the data directory at `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Catalog> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let manifest_path = root.join(MANIFEST);
        if !manifest_path.exists() {
            let mut cat = Catalog::in_memory();
            cat.root = Some(root);
            cat.save_manifest()?;
            return Ok(cat);
        }
        let manifest: CatalogManifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
        let mut chunks = BTreeMap::new();
        for (doc_id, entry) in manifest.files.iter().chain(manifest.members.iter()) {
            let loaded = load_chunks(&root, doc_id, entry)?;
            if loaded.len() != entry.chunk_count {
                return Err(Error::Storage(format!(
                    "chunk store for '{doc_id}' has {} chunks, manifest says {}",
                    loaded.len(),
                    entry.chunk_count
                )));
            }
            chunks.insert(doc_id.clone(), loaded);
        }
        let mut tables = BTreeMap::new();
        for (name, entry) in &manifest.tables {
            tables.insert(name.clone(), load_table(&root, entry)?);
        }
        let vectors = root.join(VECTORS);
        let embcache = if vectors.exists() {
            EmbeddingCache::from_bytes(&fs::read(&vectors)?, manifest.embedding_index.clone())?
        } else {
            EmbeddingCache::default()
        };
        Ok(Catalog {
            root: Some(root),
            manifest,
            chunks,
            tables,
            embcache: Mutex::new(embcache),
        })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn manifest(&self) -> &CatalogManifest {
        &self.manifest
    }

    fn save_manifest(&self) -> Result<()> {
        if let Some(root) = &self.root {
            let bytes = serde_json::to_vec_pretty(&self.manifest)?;
            write_atomic(&root.join(MANIFEST), &bytes)?;
        }
        Ok(())
    }

    /// Writes the embedding cache and its index. Does nothing when no entry
    /// was added since the last flush.
    pub fn flush_embeddings(&mut self) -> Result<()> {
        let cache = self.embcache.get_mut().expect("embedding cache lock poisoned");
        if cache.index() == &self.manifest.embedding_index {
            return Ok(());
        }
        self.manifest.embedding_index = cache.index().clone();
        if let Some(root) = &self.root {
            write_atomic(&root.join(VECTORS), &cache.to_bytes())?;
        }
        self.save_manifest()
    }

    pub fn embedding_get(&self, hash: &str) -> Option<EmbeddingVector> {
        self.embcache.lock().expect("embedding cache lock poisoned").get(hash).cloned()
    }

    pub fn embedding_put(&self, hash: &str, vector: EmbeddingVector) -> Result<bool> {
        self.embcache.lock().expect("embedding cache lock poisoned").put(hash, vector)
    }

    pub fn embedding_count(&self) -> usize {
        self.embcache.lock().expect("embedding cache lock poisoned").len()
    }

    fn name_taken(&self, name: &str) -> bool {
        self.manifest.files.contains_key(name) || self.manifest.directories.contains_key(name)
    }

    /// Registers one UTF-8 text file and chunks it. Registering the same name
    /// again with identical path and contents is a no-op; anything else
    /// under an existing name is rejected.
    pub fn register_file(&mut self, name: &str, path: impl AsRef<Path>, params: ChunkParams) -> Result<usize> {
        params.validate()?;
        let path = path.as_ref();
        let text = read_text(path)?;
        let hash = content_hash("file", &text);
        if let Some(existing) = self.manifest.files.get(name) {
            if existing.path == path_string(path) && existing.content_hash == hash && existing.params == params {
                return Ok(existing.chunk_count);
            }
            return Err(Error::Storage(format!(
                "file '{name}' is already registered; its source differs, use refresh to re-index it"
            )));
        }
        if self.name_taken(name) {
            return Err(Error::Storage(format!("name '{name}' is already registered")));
        }
        let entry = self.index_document(name, path, &text, params)?;
        let count = entry.chunk_count;
        self.manifest.files.insert(name.to_string(), entry);
        self.save_manifest()?;
        Ok(count)
    }

    /// Registers every regular file directly inside `path`, in name order.
    /// Returns the number of files.
    pub fn register_directory(&mut self, name: &str, path: impl AsRef<Path>, params: ChunkParams) -> Result<usize> {
        params.validate()?;
        let path = path.as_ref();
        let listing = list_files(path)?;
        if let Some(existing) = self.manifest.directories.get(name) {
            let unchanged = existing.path == path_string(path)
                && existing.params == params
                && existing.files == listing.iter().map(|(f, _)| f.clone()).collect::<Vec<_>>()
                && listing.iter().all(|(f, p)| {
                    let doc = format!("{name}/{f}");
                    read_text(p)
                        .map(|t| self.manifest.members.get(&doc).is_some_and(|e| e.content_hash == content_hash("file", &t)))
                        .unwrap_or(false)
                });
            if unchanged {
                return Ok(existing.files.len());
            }
            return Err(Error::Storage(format!(
                "directory '{name}' is already registered and its contents changed; use refresh to re-index it"
            )));
        }
        if self.name_taken(name) {
            return Err(Error::Storage(format!("name '{name}' is already registered")));
        }
        self.index_directory(name, path, &listing, params)?;
        self.save_manifest()?;
        Ok(listing.len())
    }

    fn index_directory(&mut self, name: &str, path: &Path, listing: &[(String, PathBuf)], params: ChunkParams) -> Result<()> {
        let mut files = Vec::new();
        for (file, p) in listing {
            let doc = format!("{name}/{file}");
            let text = read_text(p)?;
            let entry = self.index_document(&doc, p, &text, params)?;
            self.manifest.members.insert(doc, entry);
            files.push(file.clone());
        }
        self.manifest.directories.insert(
            name.to_string(),
            DirectoryEntry {
                path: path_string(path),
                params,
                files,
            },
        );
        Ok(())
    }

    /// Re-reads a registered file or directory from its original path.
    pub fn refresh(&mut self, name: &str) -> Result<usize> {
        if let Some(entry) = self.manifest.files.get(name).cloned() {
            self.drop_document(name, &entry)?;
            let text = read_text(Path::new(&entry.path))?;
            let fresh = self.index_document(name, Path::new(&entry.path), &text, entry.params)?;
            let count = fresh.chunk_count;
            self.manifest.files.insert(name.to_string(), fresh);
            self.save_manifest()?;
            return Ok(count);
        }
        if let Some(entry) = self.manifest.directories.remove(name) {
            for f in &entry.files {
                let doc = format!("{name}/{f}");
                if let Some(e) = self.manifest.members.remove(&doc) {
                    self.drop_document(&doc, &e)?;
                }
            }
            let listing = list_files(Path::new(&entry.path))?;
            self.index_directory(name, Path::new(&entry.path), &listing, entry.params)?;
            self.save_manifest()?;
            return Ok(listing.len());
        }
        Err(Error::Storage(format!("'{name}' is not a registered file or directory")))
    }

    fn drop_document(&mut self, doc_id: &str, entry: &DocumentEntry) -> Result<()> {
        self.chunks.remove(doc_id);
        if let Some(root) = &self.root {
            for ext in ["txt", "idx"] {
                let p = root.join("chunks").join(format!("{}.{ext}", entry.store_key));
                if p.exists() {
                    fs::remove_file(p)?;
                }
            }
        }
        Ok(())
    }

    fn index_document(&mut self, doc_id: &str, path: &Path, text: &str, params: ChunkParams) -> Result<DocumentEntry> {
        let chunks = chunk_document(doc_id, text, params)?;
        let store_key = content_hash("doc", doc_id)[..16].to_string();
        if let Some(root) = &self.root {
            let mut body = String::new();
            let mut index = Vec::with_capacity(chunks.len());
            for c in &chunks {
                index.push(ChunkIndexEntry {
                    chunk_id: c.chunk_id,
                    char_start: c.char_start,
                    byte_offset: body.len(),
                    byte_len: c.text.len(),
                    token_estimate: c.token_estimate,
                });
                body.push_str(&c.text);
            }
            let dir = root.join("chunks");
            write_atomic(&dir.join(format!("{store_key}.txt")), body.as_bytes())?;
            write_atomic(&dir.join(format!("{store_key}.idx")), &serde_json::to_vec(&index)?)?;
        }
        let entry = DocumentEntry {
            path: path_string(path),
            content_hash: content_hash("file", text),
            params,
            chunk_count: chunks.len(),
            char_count: text.chars().count(),
            store_key,
        };
        self.chunks.insert(doc_id.to_string(), chunks);
        Ok(entry)
    }

    pub fn has_file(&self, name: &str) -> bool {
        self.manifest.files.contains_key(name)
    }

    pub fn has_directory(&self, name: &str) -> bool {
        self.manifest.directories.contains_key(name)
    }

    pub fn has_table(&self, name: &str) -> bool {
        self.tables.contains_key(name)
    }

    /// Chunks of a registered file, in chunk order.
    pub fn file_chunks(&self, name: &str) -> Result<&[Chunk]> {
        if !self.manifest.files.contains_key(name) {
            return Err(Error::Storage(format!("file '{name}' is not registered")));
        }
        Ok(self.chunks.get(name).map(Vec::as_slice).unwrap_or(&[]))
    }

    /// `(file name, chunks)` for each member of a directory, by file name.
    pub fn directory_chunks(&self, name: &str) -> Result<Vec<(&str, &[Chunk])>> {
        let entry = self
            .manifest
            .directories
            .get(name)
            .ok_or_else(|| Error::Storage(format!("directory '{name}' is not registered")))?;
        Ok(entry
            .files
            .iter()
            .map(|f| {
                let doc = format!("{name}/{f}");
                (f.as_str(), self.chunks.get(&doc).map(Vec::as_slice).unwrap_or(&[]))
            })
            .collect())
    }

    pub fn file_stats(&self, name: &str) -> Result<SourceStats> {
        let e = self
            .manifest
            .files
            .get(name)
            .ok_or_else(|| Error::Storage(format!("file '{name}' is not registered")))?;
        Ok(doc_stats(self.chunks.get(name).map(Vec::as_slice).unwrap_or(&[]), e.char_count > 0))
    }

    pub fn directory_stats(&self, name: &str) -> Result<SourceStats> {
        let mut s = SourceStats::default();
        for (_, chunks) in self.directory_chunks(name)? {
            let d = doc_stats(chunks, true);
            s.rows += d.rows;
            s.total_chars += d.total_chars;
            s.documents += 1;
        }
        Ok(s)
    }

    pub fn table_stats(&self, name: &str) -> Result<SourceStats> {
        let rel = self.scan_table(name)?;
        let total_chars = rel
            .rows()
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v.render().chars().count())
            .sum();
        Ok(SourceStats {
            rows: rel.len(),
            documents: 0,
            total_chars,
        })
    }

    pub fn create_table(&mut self, name: &str, schema: Schema) -> Result<()> {
        if self.tables.contains_key(name) {
            return Err(Error::Storage(format!("table '{name}' already exists")));
        }
        if schema.is_empty() {
            return Err(Error::Storage(format!("table '{name}' needs at least one column")));
        }
        let entry = TableEntry {
            columns: schema.columns().to_vec(),
            data_path: format!("tables/{name}.jsonl"),
            row_count: 0,
        };
        self.write_table(&entry, &[])?;
        self.tables.insert(name.to_string(), Relation::empty(schema));
        self.manifest.tables.insert(name.to_string(), entry);
        self.save_manifest()
    }

    /// Appends rows after checking arity and cell types against the table.
    pub fn insert_rows(&mut self, name: &str, rows: Vec<Row>) -> Result<usize> {
        let current = self
            .tables
            .get(name)
            .ok_or_else(|| Error::Storage(format!("table '{name}' does not exist")))?;
        let n = rows.len();
        let mut all = current.rows().to_vec();
        all.extend(rows);
        let updated = Relation::new(current.schema().clone(), all)
            .map_err(|e| Error::Storage(format!("insert into '{name}': {e}")))?;
        let mut entry = self.manifest.tables[name].clone();
        entry.row_count = updated.len();
        self.write_table(&entry, updated.rows())?;
        self.tables.insert(name.to_string(), updated);
        self.manifest.tables.insert(name.to_string(), entry);
        self.save_manifest()?;
        Ok(n)
    }

    pub fn scan_table(&self, name: &str) -> Result<Relation> {
        self.tables
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Storage(format!("table '{name}' does not exist")))
    }

    pub fn table_schema(&self, name: &str) -> Result<&Schema> {
        self.tables
            .get(name)
            .map(Relation::schema)
            .ok_or_else(|| Error::Storage(format!("table '{name}' does not exist")))
    }

    fn write_table(&self, entry: &TableEntry, rows: &[Row]) -> Result<()> {
        if let Some(root) = &self.root {
            let mut out = String::new();
            for r in rows {
                let cells: Vec<serde_json::Value> = r.iter().map(Value::to_json).collect();
                out.push_str(&serde_json::to_string(&cells)?);
                out.push('\n');
            }
            write_atomic(&root.join(&entry.data_path), out.as_bytes())?;
        }
        Ok(())
    }
}

fn doc_stats(chunks: &[Chunk], nonempty: bool) -> SourceStats {
    SourceStats {
        rows: chunks.len(),
        documents: usize::from(nonempty),
        total_chars: chunks.iter().map(|c| c.text.chars().count()).sum(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Storage(format!("cannot read '{}': {e}", path.display())))?;
    String::from_utf8(bytes).map_err(|_| Error::Storage(format!("'{}' is not UTF-8 text", path.display())))
}

fn path_string(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

fn list_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::Storage(format!("cannot read directory '{}': {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            out.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn load_chunks(root: &Path, doc_id: &str, entry: &DocumentEntry) -> Result<Vec<Chunk>> {
    let dir = root.join("chunks");
    let txt = dir.join(format!("{}.txt", entry.store_key));
    if entry.chunk_count == 0 && !txt.exists() {
        return Ok(Vec::new());
    }
    let body = fs::read_to_string(&txt)?;
    let index: Vec<ChunkIndexEntry> = serde_json::from_slice(&fs::read(dir.join(format!("{}.idx", entry.store_key)))?)?;
    index
        .into_iter()
        .map(|i| {
            let text = body
                .get(i.byte_offset..i.byte_offset + i.byte_len)
                .ok_or_else(|| Error::Storage(format!("chunk index for '{doc_id}' is out of range")))?;
            Ok(Chunk {
                doc_id: doc_id.to_string(),
                chunk_id: i.chunk_id,
                char_start: i.char_start,
                text: text.to_string(),
                token_estimate: i.token_estimate,
            })
        })
        .collect()
}

fn load_table(root: &Path, entry: &TableEntry) -> Result<Relation> {
    let schema = Schema::new(entry.columns.clone())?;
    let path = root.join(&entry.data_path);
    let text = if path.exists() { fs::read_to_string(&path)? } else { String::new() };
    let mut rows = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let cells: Vec<serde_json::Value> = serde_json::from_str(line)?;
        if cells.len() != schema.len() {
            return Err(Error::Storage(format!("{}: row arity mismatch", entry.data_path)));
        }
        let row = cells
            .iter()
            .zip(schema.columns())
            .map(|(c, col)| Value::from_json(c, col.data_type))
            .collect::<Result<Row>>()?;
        rows.push(row);
    }
    Relation::new(schema, rows)
}

/// Schema for `CREATE TABLE` column definitions.
pub fn schema_from_defs(columns: &[(String, String)]) -> Result<Schema> {
    let cols = columns
        .iter()
        .map(|(n, t)| {
            DataType::parse(t)
                .map(|ty| Column::new(n.clone(), ty))
                .ok_or_else(|| Error::Storage(format!("unknown column type '{t}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Schema::new(cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn file_registration_and_reopen() {
        let src = tempfile::tempdir().unwrap();
        let data = tempfile::tempdir().unwrap();
        let words: String = (0..1000).map(|i| format!("w{:02} ", i % 100)).collect();
        let p = write(src.path(), "doc.txt", &words);
        let empty = write(src.path(), "empty.txt", "");
        let mut cat = Catalog::open(data.path()).unwrap();
        assert_eq!(cat.register_file("doc", &p, ChunkParams::default()).unwrap(), 3);
        assert_eq!(cat.register_file("empty", &empty, ChunkParams::default()).unwrap(), 0);
        // idempotent for unchanged sources
        assert_eq!(cat.register_file("doc", &p, ChunkParams::default()).unwrap(), 3);
        let before = fs::read(data.path().join(MANIFEST)).unwrap();
        let chunks = cat.file_chunks("doc").unwrap().to_vec();
        drop(cat);
        let cat = Catalog::open(data.path()).unwrap();
        assert_eq!(fs::read(data.path().join(MANIFEST)).unwrap(), before);
        assert_eq!(cat.file_chunks("doc").unwrap(), chunks.as_slice());
        assert!(cat.file_chunks("empty").unwrap().is_empty());
    }

    #[test]
    fn changed_source_needs_refresh() {
        let src = tempfile::tempdir().unwrap();
        let p = write(src.path(), "a.txt", "one two");
        let mut cat = Catalog::in_memory();
        cat.register_file("a", &p, ChunkParams::default()).unwrap();
        write(src.path(), "a.txt", "one two three");
        let err = cat.register_file("a", &p, ChunkParams::default()).unwrap_err();
        assert!(err.to_string().contains("refresh"));
        assert_eq!(cat.refresh("a").unwrap(), 1);
        assert_eq!(cat.file_chunks("a").unwrap()[0].text, "one two three");
    }

    #[test]
    fn bad_chunk_params() {
        let src = tempfile::tempdir().unwrap();
        let p = write(src.path(), "a.txt", "x");
        let mut cat = Catalog::in_memory();
        let params = ChunkParams {
            chunk_size: 512,
            overlap: 512,
        };
        assert!(cat.register_file("a", &p, params).is_err());
        assert!(cat.register_file("b", src.path().join("missing.txt"), ChunkParams::default()).is_err());
    }

    #[test]
    fn directory_registration() {
        let src = tempfile::tempdir().unwrap();
        write(src.path(), "b.txt", "second file");
        write(src.path(), "a.txt", "first file");
        fs::create_dir(src.path().join("nested")).unwrap();
        write(&src.path().join("nested"), "c.txt", "ignored");
        let mut cat = Catalog::in_memory();
        assert_eq!(cat.register_directory("d", src.path(), ChunkParams::default()).unwrap(), 2);
        let docs = cat.directory_chunks("d").unwrap();
        assert_eq!(docs.iter().map(|(f, _)| *f).collect::<Vec<_>>(), vec!["a.txt", "b.txt"]);
        assert_eq!(cat.directory_stats("d").unwrap().rows, 2);

        assert_eq!(cat.register_directory("d", src.path(), ChunkParams::default()).unwrap(), 2);
        write(src.path(), "a.txt", "first file, edited");
        assert!(cat.register_directory("d", src.path(), ChunkParams::default()).is_err());
        cat.refresh("d").unwrap();
        assert_eq!(cat.directory_chunks("d").unwrap()[0].1[0].text, "first file, edited");

        let empty = tempfile::tempdir().unwrap();
        assert_eq!(cat.register_directory("e", empty.path(), ChunkParams::default()).unwrap(), 0);
    }

    #[test]
    fn tables_persist_in_insertion_order() {
        let data = tempfile::tempdir().unwrap();
        let schema = schema_from_defs(&[("id".into(), "INT".into()), ("name".into(), "TEXT".into())]).unwrap();
        let mut cat = Catalog::open(data.path()).unwrap();
        cat.create_table("t", schema.clone()).unwrap();
        assert!(cat.scan_table("t").unwrap().is_empty());
        let rows: Vec<Row> = (0..3)
            .map(|i| vec![Value::number(i as f64).unwrap(), Value::text(format!("n{i}"))])
            .collect();
        cat.insert_rows("t", rows.clone()).unwrap();
        assert!(cat.insert_rows("t", vec![vec![Value::text("bad"), Value::text("x")]]).is_err());
        assert!(cat.insert_rows("t", vec![vec![Value::Null]]).is_err());
        drop(cat);
        let cat = Catalog::open(data.path()).unwrap();
        assert_eq!(cat.scan_table("t").unwrap(), Relation::new(schema, rows).unwrap());
    }

    #[test]
    fn embedding_cache_persists() {
        let data = tempfile::tempdir().unwrap();
        let mut cat = Catalog::open(data.path()).unwrap();
        let v = EmbeddingVector::new(vec![0.25, 0.5]);
        assert!(cat.embedding_put("h1", v.clone()).unwrap());
        assert!(!cat.embedding_put("h1", v.clone()).unwrap());
        cat.flush_embeddings().unwrap();
        drop(cat);
        let cat = Catalog::open(data.path()).unwrap();
        assert_eq!(cat.embedding_get("h1"), Some(v));
        assert_eq!(cat.embedding_get("h2"), None);
        assert_eq!(cat.embedding_count(), 1);
    }
}
