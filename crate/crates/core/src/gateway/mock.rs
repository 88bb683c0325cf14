use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{count_tokens, Backend, ModelRequest, ModelResponse, ModelSpec};
use crate::error::{Error, Result};
use crate::relation::EmbeddingVector;

pub const EMBEDDING_DIM: usize = 64;

/// Lower-cases and collapses whitespace.
pub fn normalize_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Canned responses keyed by `task:payload`.
///
/// On disk: one UTF-8 file per fixture holding the key line, a blank line
/// and the response body. Files in a subdirectory named after a model
/// override the shared set for that model only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureStore {
    shared: BTreeMap<String, String>,
    per_model: BTreeMap<String, BTreeMap<String, String>>,
}

impl FixtureStore {
    pub fn insert(&mut self, model: Option<&str>, key: &str, response: &str) {
        let map = match model {
            Some(m) => self.per_model.entry(m.to_string()).or_default(),
            None => &mut self.shared,
        };
        map.insert(normalize_key(key), response.to_string());
    }

    pub fn len(&self) -> usize {
        self.shared.len() + self.per_model.values().map(BTreeMap::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, model: &str, key: &str) -> Option<&str> {
        let key = normalize_key(key);
        self.per_model
            .get(model)
            .and_then(|m| m.get(&key))
            .or_else(|| self.shared.get(&key))
            .map(String::as_str)
    }

    /// Shared entries, for inspection.
    pub fn shared(&self) -> &BTreeMap<String, String> {
        &self.shared
    }

    fn parse_file(text: &str) -> Result<(String, String)> {
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        let (key, rest) = text
            .split_once('\n')
            .ok_or_else(|| Error::ModelConfig("fixture file has no key line".into()))?;
        let body = rest
            .strip_prefix('\n')
            .or_else(|| rest.strip_prefix("\r\n"))
            .ok_or_else(|| Error::ModelConfig("fixture key line must be followed by a blank line".into()))?;
        let body = body.strip_suffix('\n').unwrap_or(body);
        Ok((key.trim_end_matches('\r').to_string(), body.to_string()))
    }

    fn load_flat(dir: &Path, into: &mut BTreeMap<String, String>, subdirs: &mut Vec<(String, std::path::PathBuf)>) -> Result<()> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let path = e.path();
            if path.is_dir() {
                subdirs.push((e.file_name().to_string_lossy().into_owned(), path));
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let (key, body) = FixtureStore::parse_file(&text)
                .map_err(|err| Error::ModelConfig(format!("{}: {err}", path.display())))?;
            into.insert(normalize_key(&key), body);
        }
        Ok(())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<FixtureStore> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::ModelConfig(format!("fixture directory {} not found", dir.display())));
        }
        let mut store = FixtureStore::default();
        let mut subdirs = Vec::new();
        FixtureStore::load_flat(dir, &mut store.shared, &mut subdirs)?;
        for (model, path) in subdirs {
            let mut ignored = Vec::new();
            let map = store.per_model.entry(model).or_default();
            FixtureStore::load_flat(&path, map, &mut ignored)?;
        }
        Ok(store)
    }

    /// File name for a key: task prefix plus a hash of the key.
    pub fn file_name(key: &str) -> String {
        let key = normalize_key(key);
        let task: String = key
            .split(':')
            .next()
            .unwrap_or("fixture")
            .chars()
            .filter(|c| c.is_ascii_alphanumeric() || *c == '_')
            .collect();
        let digest = Sha256::digest(key.as_bytes());
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        format!("{task}_{hex}.txt")
    }

    /// Writes every entry as one file; existing files are left alone.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let write = |d: &Path, map: &BTreeMap<String, String>| -> Result<()> {
            std::fs::create_dir_all(d)?;
            for (k, v) in map {
                std::fs::write(d.join(FixtureStore::file_name(k)), format!("{k}\n\n{v}\n"))?;
            }
            Ok(())
        };
        write(dir, &self.shared)?;
        for (m, map) in &self.per_model {
            write(&dir.join(m), map)?;
        }
        Ok(())
    }
}

/// Deterministic backend answering from a [`FixtureStore`].
#[derive(Debug, Clone)]
pub struct MockBackend {
    store: FixtureStore,
}

impl MockBackend {
    pub fn new(store: FixtureStore) -> MockBackend {
        MockBackend { store }
    }

    pub fn store(&self) -> &FixtureStore {
        &self.store
    }

    fn key(task: &str, instruction: &str, payload: &str) -> String {
        if instruction.trim().is_empty() {
            format!("{task}:{payload}")
        } else {
            format!("{task}:{instruction} | {payload}")
        }
    }

    /// Candidate keys for one answer, most specific first.
    pub fn candidate_keys(req: &ModelRequest, item: Option<&str>) -> Vec<String> {
        match item {
            Some(item) => vec![
                MockBackend::key(&req.task, &req.instruction, item),
                format!("{}:{item}", req.task),
            ],
            None => {
                let mut keys = Vec::new();
                if !req.items.is_empty() {
                    keys.push(MockBackend::key(&req.task, &req.instruction, &req.items.join(" || ")));
                }
                keys.push(format!("{}:{}", req.task, req.instruction));
                keys
            }
        }
    }

    fn answer(&self, model: &str, keys: &[String]) -> Result<String> {
        keys.iter()
            .find_map(|k| self.store.lookup(model, k))
            .map(str::to_string)
            .ok_or_else(|| Error::Model(format!("no fixture for key '{}'", normalize_key(&keys[0]))))
    }
}

impl Backend for MockBackend {
    fn complete(&self, model: &ModelSpec, req: &ModelRequest) -> Result<ModelResponse> {
        let text = if req.per_item {
            let mut parts = Vec::with_capacity(req.items.len());
            for item in &req.items {
                parts.push(self.answer(&model.id, &MockBackend::candidate_keys(req, Some(item)))?);
            }
            parts.join("\n")
        } else {
            self.answer(&model.id, &MockBackend::candidate_keys(req, None))?
        };
        let prompt = format!("{}\n{}", req.system_context, req.user_prompt());
        Ok(ModelResponse {
            t_input: count_tokens(&prompt),
            t_output: count_tokens(&text),
            text,
            model_id: model.id.clone(),
            latency_ms: 0,
        })
    }

    fn embed(&self, _model: &ModelSpec, texts: &[String]) -> Result<(Vec<EmbeddingVector>, u64)> {
        let tokens = texts.iter().map(|t| count_tokens(t)).sum();
        Ok((texts.iter().map(|t| mock_embedding(t)).collect(), tokens))
    }
}

/// Feature-hashed embedding: each lower-cased word contributes a Gaussian
/// vector seeded by its hash, and the sum is L2-normalised. Texts sharing
/// words are therefore similar; equal word multisets embed identically.
pub fn mock_embedding(text: &str) -> EmbeddingVector {
    let lower = text.to_lowercase();
    let mut words: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    if words.is_empty() {
        words.push(lower.as_str());
    }
    let mut acc = vec![0f64; EMBEDDING_DIM];
    for w in words {
        let digest = Sha256::digest(w.as_bytes());
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in acc.iter_mut() {
            let x: f64 = StandardNormal.sample(&mut rng);
            *a += x;
        }
    }
    EmbeddingVector::normalized(acc.into_iter().map(|v| v as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_format_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = FixtureStore::default();
        s.insert(None, "classify:Attention is  all you need", "Area: Transformers");
        s.insert(Some("llm-validator"), "judge:a <=> b", "no\n");
        s.write_dir(dir.path()).unwrap();
        let back = FixtureStore::load_dir(dir.path()).unwrap();
        assert_eq!(back.lookup("llm-small", "classify:attention is all you need"), Some("Area: Transformers"));
        assert_eq!(back.lookup("llm-validator", "judge:a <=> b"), Some("no\n"));
        assert_eq!(back.lookup("llm-small", "judge:a <=> b"), None);
    }

    #[test]
    fn malformed_fixture_file() {
        assert!(FixtureStore::parse_file("key only").is_err());
        assert!(FixtureStore::parse_file("key\nbody").is_err());
        assert_eq!(
            FixtureStore::parse_file("k\n\nline1\nline2\n").unwrap(),
            ("k".to_string(), "line1\nline2".to_string())
        );
    }

    #[test]
    fn embedding_case_and_spacing_insensitive() {
        assert_eq!(mock_embedding("Reinforcement Learning"), mock_embedding("reinforcement   learning"));
        assert_ne!(mock_embedding("graphs"), mock_embedding("diffusion"));
        assert_eq!(mock_embedding("").dim(), EMBEDDING_DIM);
    }
}
