//! Session configuration: a flat `key = value` file with dotted section
//! prefixes, overridden by command-line flags.
//!
//! ```text
//! data_dir = ./data
//! backend = mock
//! fixtures = ./fixtures/mock
//! lambda = 0.5
//! model.llm-small.role = completion
//! model.llm-small.price_input = 0.0000005
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use semsql::cost::CostMatrix;
use semsql::exec::RowErrorPolicy;
use semsql::gateway::{Backend, FixtureStore, Gateway, HttpBackend, MockBackend, ModelRole, ModelRoster, ModelSpec};
use semsql::storage::{Catalog, ChunkParams};
use semsql::{Session, SessionOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    Http,
}

impl BackendKind {
    pub fn parse(s: &str) -> anyhow::Result<BackendKind> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "http" => Ok(BackendKind::Http),
            other => bail!("unknown backend '{other}' (expected mock or http)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Table,
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> anyhow::Result<OutputFormat> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => bail!("unknown format '{other}' (expected table, csv or json)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub data_dir: Option<PathBuf>,
    pub backend: BackendKind,
    /// Mock fixture directory; `None` means an empty store.
    pub fixtures: Option<PathBuf>,
    pub roster: ModelRoster,
    pub lambda: f64,
    pub chi_weight: f64,
    pub format: OutputFormat,
    pub chunk: ChunkParams,
    pub row_error_policy: RowErrorPolicy,
    pub max_inflight: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            data_dir: None,
            backend: BackendKind::Mock,
            fixtures: None,
            roster: ModelRoster::default_roster(),
            lambda: 0.0,
            chi_weight: semsql::cost::OptimizerConfig::default().chi_weight,
            format: OutputFormat::Table,
            chunk: ChunkParams::default(),
            row_error_policy: RowErrorPolicy::SkipAndWarn,
            max_inflight: 4,
        }
    }
}

fn number(key: &str, v: &str) -> anyhow::Result<f64> {
    v.parse::<f64>().map_err(|_| anyhow!("'{key}' expects a number, got '{v}'"))
}

fn resolve(base: &Path, v: &str) -> PathBuf {
    let p = PathBuf::from(v);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

#[derive(Default)]
struct ModelDraft {
    role: Option<ModelRole>,
    values: BTreeMap<String, String>,
}

impl SessionConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> anyhow::Result<SessionConfig> {
        let mut cfg = SessionConfig::default();
        let mut models: BTreeMap<String, ModelDraft> = BTreeMap::new();
        let mut order: Vec<String> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected `key = value`", n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let ctx = || format!("config line {}", n + 1);
            match key {
                "data_dir" => cfg.data_dir = Some(resolve(base, value)),
                "backend" => cfg.backend = BackendKind::parse(value).with_context(ctx)?,
                "fixtures" => cfg.fixtures = Some(resolve(base, value)),
                "lambda" => cfg.lambda = number(key, value).with_context(ctx)?,
                "chi_weight" => cfg.chi_weight = number(key, value).with_context(ctx)?,
                "format" => cfg.format = OutputFormat::parse(value).with_context(ctx)?,
                "chunk_size" => cfg.chunk.chunk_size = number(key, value).with_context(ctx)? as usize,
                "chunk_overlap" => cfg.chunk.overlap = number(key, value).with_context(ctx)? as usize,
                "max_inflight" => cfg.max_inflight = number(key, value).with_context(ctx)? as usize,
                "row_error_policy" => {
                    cfg.row_error_policy = RowErrorPolicy::parse(value)
                        .ok_or_else(|| anyhow!("{}: unknown row error policy '{value}'", ctx()))?
                }
                _ => {
                    let rest = key
                        .strip_prefix("model.")
                        .ok_or_else(|| anyhow!("{}: unknown key '{key}'", ctx()))?;
                    let (id, field) = rest
                        .rsplit_once('.')
                        .ok_or_else(|| anyhow!("{}: expected model.<id>.<field>", ctx()))?;
                    if !models.contains_key(id) {
                        order.push(id.to_string());
                    }
                    let draft = models.entry(id.to_string()).or_default();
                    if field == "role" {
                        draft.role = Some(ModelRole::parse(value).ok_or_else(|| anyhow!("{}: unknown role '{value}'", ctx()))?);
                    } else {
                        draft.values.insert(field.to_string(), value.to_string());
                    }
                }
            }
        }
        if !order.is_empty() {
            let mut specs = Vec::new();
            for id in order {
                specs.push(build_model(&id, models.remove(&id).expect("drafted"))?);
            }
            cfg.roster = ModelRoster::new(specs)?;
        }
        cfg.chunk.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<SessionConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        SessionConfig::parse(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if let Some(f) = &self.fixtures {
            if self.backend == BackendKind::Mock && !f.is_dir() {
                bail!("fixture directory {} does not exist", f.display());
            }
        }
        if self.backend == BackendKind::Http {
            for m in self.roster.models() {
                if m.endpoint.is_none() {
                    bail!("model '{}' has no endpoint for the http backend", m.id);
                }
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            bail!("lambda must be finite and non-negative");
        }
        Ok(())
    }

    pub fn open_session(&self) -> anyhow::Result<Session> {
        self.validate()?;
        let catalog = match &self.data_dir {
            Some(d) => Catalog::open(d).with_context(|| format!("opening data directory {}", d.display()))?,
            None => Catalog::in_memory(),
        };
        let backend: Box<dyn Backend> = match self.backend {
            BackendKind::Mock => {
                let store = match &self.fixtures {
                    Some(f) => FixtureStore::load_dir(f)?,
                    None => FixtureStore::default(),
                };
                Box::new(MockBackend::new(store))
            }
            BackendKind::Http => Box::new(HttpBackend::new()),
        };
        self.session_with(catalog, backend)
    }

    /// A session over an explicit catalog and backend.
    pub fn session_with(&self, catalog: Catalog, backend: Box<dyn Backend>) -> anyhow::Result<Session> {
        let gateway = Gateway::new(backend, self.roster.clone()).with_max_inflight(self.max_inflight);
        let mut options = SessionOptions::default();
        options.optimizer.lambda = self.lambda;
        options.optimizer.chi_weight = self.chi_weight;
        options.optimizer.validate()?;
        options.exec.row_error_policy = self.row_error_policy;
        Ok(Session::new(catalog, gateway, options)?)
    }
}

fn build_model(id: &str, d: ModelDraft) -> anyhow::Result<ModelSpec> {
    let role = d.role.ok_or_else(|| anyhow!("model '{id}' has no role"))?;
    let get = |k: &str| -> anyhow::Result<f64> {
        let v = d.values.get(k).ok_or_else(|| anyhow!("model '{id}' is missing {k}"))?;
        number(&format!("model.{id}.{k}"), v)
    };
    let prior = CostMatrix::new(get("accuracy_input")?, get("accuracy_output")?, get("price_input")?, get("price_output")?)?;
    let mut spec = ModelSpec::new(id, role, prior);
    for (k, v) in &d.values {
        match k.as_str() {
            "accuracy_input" | "accuracy_output" | "price_input" | "price_output" => {}
            "endpoint" => spec.endpoint = Some(v.clone()),
            "api_model" => spec.api_model = Some(v.clone()),
            "api_key_env" => spec.api_key_env = Some(v.clone()),
            "timeout_ms" => spec.timeout_ms = number(k, v)? as u64,
            other => bail!("unknown model field '{other}' for '{id}'"),
        }
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_keys_and_models() {
        let text = "# demo\nbackend = mock\nlambda = 0.25\nformat = csv\n\
            model.a.role = completion\nmodel.a.price_input = 0.001\nmodel.a.price_output = 0.002\n\
            model.a.accuracy_input = 0.0005\nmodel.a.accuracy_output = 0.001\n\
            model.e.role = embedding\nmodel.e.price_input = 0\nmodel.e.price_output = 0\n\
            model.e.accuracy_input = 1\nmodel.e.accuracy_output = 1\ndata_dir = d\n";
        let cfg = SessionConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.lambda, 0.25);
        assert_eq!(cfg.format, OutputFormat::Csv);
        assert_eq!(cfg.data_dir, Some(PathBuf::from("/base/d")));
        assert_eq!(cfg.roster.completion_ids(), vec!["a".to_string()]);
        assert_eq!(cfg.roster.get("a").unwrap().prior.c_output, 0.002);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(SessionConfig::parse("nonsense", Path::new(".")).is_err());
        assert!(SessionConfig::parse("colour = red", Path::new(".")).is_err());
        assert!(SessionConfig::parse("backend = carrier-pigeon", Path::new(".")).is_err());
        assert!(SessionConfig::parse("model.a.price_input = 1", Path::new(".")).is_err());
        assert!(SessionConfig::parse("chunk_overlap = 512", Path::new(".")).is_err());
    }
}
