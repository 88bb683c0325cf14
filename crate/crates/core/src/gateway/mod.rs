//! Uniform access to completion and embedding models.
//!
//! Every call goes through [`Gateway`], which checks the model roster,
//! fans requests out to the backend with bounded concurrency, and records
//! exact token usage in the [`UsageLedger`] and the replay log used by
//! calibration. Two backends exist: a deterministic fixture-driven
//! [`MockBackend`] and an [`HttpBackend`] speaking the chat-completions wire
//! format.

mod http;
mod mock;

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use http::HttpBackend;
pub use mock::{mock_embedding, normalize_key, FixtureStore, MockBackend, EMBEDDING_DIM};

use crate::cost::{CostMatrix, TokenVector};
use crate::error::{Error, Result};
use crate::relation::EmbeddingVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Completion,
    Embedding,
    SchemaInference,
    Judge,
}

impl RequestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::Completion => "completion",
            RequestKind::Embedding => "embedding",
            RequestKind::SchemaInference => "schema_inference",
            RequestKind::Judge => "judge",
        }
    }
}

/// One model call.
///
/// `task` names the operator's job (`extract`, `classify`, `judge`, ...) and
/// namespaces fixture keys. With `per_item` set, the answer holds one
/// independent response per item in item order, so backends may answer
/// items separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub model_id: String,
    pub kind: RequestKind,
    pub task: String,
    pub system_context: String,
    pub instruction: String,
    pub items: Vec<String>,
    pub per_item: bool,
    pub max_output_tokens: u32,
}

impl ModelRequest {
    /// The user message sent to a chat model.
    pub fn user_prompt(&self) -> String {
        let mut out = self.instruction.clone();
        if !self.items.is_empty() {
            out.push_str("\n\nInput:");
            for (i, item) in self.items.iter().enumerate() {
                out.push_str(&format!("\n{}. {item}", i + 1));
            }
        }
        if let Some(f) = format_hint(&self.task) {
            out.push_str("\n\n");
            out.push_str(f);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.instruction.trim().is_empty() && self.items.is_empty() {
            return Err(Error::Model("request has an empty prompt".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(Error::Model("max_output_tokens must be positive".into()));
        }
        if self.system_context.trim().is_empty() {
            return Err(Error::Model("request carries no statement context".into()));
        }
        Ok(())
    }
}

fn format_hint(task: &str) -> Option<&'static str> {
    Some(match task {
        "extract" => "Answer with one JSON object per line, one line per extracted row, using exactly the listed fields.",
        "synthesize" => "Answer with a single concise value, or one JSON object if several fields are listed.",
        "infer_schema" => "Answer with a short snake_case column name only.",
        "judge" => "Answer yes or no for each input, one answer per line.",
        "classify" | "normalize" | "map" => "Answer with one short value per input, one per line, in input order.",
        "label" => "Answer with a short name for the group.",
        "code" => "Answer only with assignment lines `column := expression` in the engine's expression language, optionally preceded by `explode lines(text) as line`.",
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub text: String,
    pub t_input: u64,
    pub t_output: u64,
    pub model_id: String,
    pub latency_ms: u64,
}

impl ModelResponse {
    pub fn tokens(&self) -> TokenVector {
        TokenVector::new(self.t_input, self.t_output)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Completion,
    Embedding,
    Validator,
}

impl ModelRole {
    pub fn parse(s: &str) -> Option<ModelRole> {
        match s {
            "completion" => Some(ModelRole::Completion),
            "embedding" => Some(ModelRole::Embedding),
            "validator" => Some(ModelRole::Validator),
            _ => None,
        }
    }
}

/// A configured model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub id: String,
    pub role: ModelRole,
    /// Prices and accuracy priors A0.
    pub prior: CostMatrix,
    /// Chat-completions or embeddings URL (HTTP backend only).
    pub endpoint: Option<String>,
    /// Provider-side model name; defaults to `id`.
    pub api_model: Option<String>,
    /// Environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
}

impl ModelSpec {
    pub fn new(id: &str, role: ModelRole, prior: CostMatrix) -> ModelSpec {
        ModelSpec {
            id: id.to_string(),
            role,
            prior,
            endpoint: None,
            api_model: None,
            api_key_env: None,
            timeout_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRoster {
    models: Vec<ModelSpec>,
}

impl ModelRoster {
    pub fn new(models: Vec<ModelSpec>) -> Result<ModelRoster> {
        for (i, m) in models.iter().enumerate() {
            m.prior.validate()?;
            if models[..i].iter().any(|o| o.id == m.id) {
                return Err(Error::ModelConfig(format!("model '{}' configured twice", m.id)));
            }
        }
        let r = ModelRoster { models };
        if r.completion_ids().is_empty() {
            return Err(Error::ModelConfig("no completion model configured".into()));
        }
        if r.embedding_id().is_none() {
            return Err(Error::ModelConfig("no embedding model configured".into()));
        }
        Ok(r)
    }

    /// Two completion models of different size, one embedding model and
    /// one validator. Prices are per token.
    pub fn default_roster() -> ModelRoster {
        let m = |a_in, a_out, c_in, c_out| CostMatrix::new(a_in, a_out, c_in, c_out).expect("valid default");
        ModelRoster::new(vec![
            ModelSpec::new("llm-small", ModelRole::Completion, m(0.0004, 0.0008, 0.000_000_5, 0.000_001_5)),
            ModelSpec::new("llm-large", ModelRole::Completion, m(0.001, 0.002, 0.000_005, 0.000_015)),
            ModelSpec::new("embed-small", ModelRole::Embedding, m(0.0005, 0.0005, 0.000_000_02, 0.0)),
            ModelSpec::new("llm-validator", ModelRole::Validator, m(0.001, 0.002, 0.000_003, 0.000_012)),
        ])
        .expect("default roster is valid")
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    pub fn get(&self, id: &str) -> Result<&ModelSpec> {
        self.models
            .iter()
            .find(|m| m.id == id)
            .ok_or_else(|| Error::ModelConfig(format!("model '{id}' is not configured")))
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut ModelSpec> {
        self.models.iter_mut().find(|m| m.id == id)
    }

    /// Completion models in roster order.
    pub fn completion_ids(&self) -> Vec<String> {
        self.models
            .iter()
            .filter(|m| m.role == ModelRole::Completion)
            .map(|m| m.id.clone())
            .collect()
    }

    pub fn embedding_id(&self) -> Option<&str> {
        self.models.iter().find(|m| m.role == ModelRole::Embedding).map(|m| m.id.as_str())
    }

    pub fn validator_id(&self) -> Option<&str> {
        self.models.iter().find(|m| m.role == ModelRole::Validator).map(|m| m.id.as_str())
    }
}

/// A model backend. Implementations must be safe to call concurrently.
pub trait Backend: Send + Sync {
    fn complete(&self, model: &ModelSpec, req: &ModelRequest) -> Result<ModelResponse>;
    /// Returns one vector per text and the input token count.
    fn embed(&self, model: &ModelSpec, texts: &[String]) -> Result<(Vec<EmbeddingVector>, u64)>;
}

/// Where a call originated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub query_id: String,
    pub operator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub query_id: String,
    pub operator: String,
    pub model_id: String,
    pub kind: RequestKind,
    pub task: String,
    pub t_input: u64,
    pub t_output: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UsageLedger {
    entries: Vec<LedgerEntry>,
}

impl UsageLedger {
    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total_cost(&self) -> f64 {
        self.entries.iter().map(|e| e.cost).sum()
    }

    pub fn total_tokens(&self) -> TokenVector {
        self.entries
            .iter()
            .fold(TokenVector::default(), |acc, e| acc + TokenVector::new(e.t_input, e.t_output))
    }

    pub fn for_query(&self, query_id: &str) -> UsageLedger {
        UsageLedger {
            entries: self.entries.iter().filter(|e| e.query_id == query_id).cloned().collect(),
        }
    }

    pub fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    /// Deterministic text form: one line per entry, then the totals.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{} {} {} {}:{} in={} out={} cost={:.8}\n",
                e.query_id,
                e.operator,
                e.model_id,
                e.kind.as_str(),
                e.task,
                e.t_input,
                e.t_output,
                e.cost
            ));
        }
        let t = self.total_tokens();
        out.push_str(&format!(
            "total requests={} in={} out={} cost={:.8}\n",
            self.entries.len(),
            t.t_input,
            t.t_output,
            self.total_cost()
        ));
        out
    }
}

/// Appends one entry priced with the model's matrix.
pub fn record_usage(
    ledger: &mut UsageLedger,
    site: &CallSite,
    request: &ModelRequest,
    response: &ModelResponse,
    matrix: &CostMatrix,
) {
    ledger.push(LedgerEntry {
        query_id: site.query_id.clone(),
        operator: site.operator.clone(),
        model_id: response.model_id.clone(),
        kind: request.kind,
        task: request.task.clone(),
        t_input: response.t_input,
        t_output: response.t_output,
        cost: matrix.price(response.tokens()),
    });
}

/// A completion request and its answer, kept for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub operator: String,
    pub request: ModelRequest,
    pub response: String,
}

#[derive(Debug, Clone, Default)]
struct ExchangeLog {
    retention: usize,
    queries: VecDeque<(String, Vec<Exchange>)>,
}

impl ExchangeLog {
    fn push(&mut self, query_id: &str, ex: Exchange) {
        match self.queries.back_mut() {
            Some((q, list)) if q == query_id => list.push(ex),
            _ => {
                if let Some((_, list)) = self.queries.iter_mut().find(|(q, _)| q == query_id) {
                    list.push(ex);
                    return;
                }
                self.queries.push_back((query_id.to_string(), vec![ex]));
                while self.queries.len() > self.retention {
                    self.queries.pop_front();
                }
            }
        }
    }
}

/// Shared entry point for all model traffic.
pub struct Gateway {
    backend: Box<dyn Backend>,
    roster: ModelRoster,
    max_inflight: usize,
    ledger: Mutex<UsageLedger>,
    log: Mutex<ExchangeLog>,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>, roster: ModelRoster) -> Gateway {
        Gateway {
            backend,
            roster,
            max_inflight: 4,
            ledger: Mutex::new(UsageLedger::default()),
            log: Mutex::new(ExchangeLog {
                retention: 100,
                queries: VecDeque::new(),
            }),
        }
    }

    pub fn with_max_inflight(mut self, n: usize) -> Gateway {
        self.max_inflight = n.max(1);
        self
    }

    pub fn with_log_retention(self, n: usize) -> Gateway {
        self.log.lock().expect("log lock").retention = n.max(1);
        self
    }

    pub fn roster(&self) -> &ModelRoster {
        &self.roster
    }

    pub fn max_inflight(&self) -> usize {
        self.max_inflight
    }

    pub fn ledger(&self) -> UsageLedger {
        self.ledger.lock().expect("ledger lock").clone()
    }

    /// Logged exchanges of one query, oldest first.
    pub fn exchanges(&self, query_id: &str) -> Option<Vec<Exchange>> {
        let log = self.log.lock().expect("log lock");
        log.queries.iter().find(|(q, _)| q == query_id).map(|(_, l)| l.clone())
    }

    fn call(&self, req: &ModelRequest) -> Result<ModelResponse> {
        req.validate()?;
        let spec = self.roster.get(&req.model_id)?;
        if spec.role == ModelRole::Embedding {
            return Err(Error::ModelConfig(format!("'{}' is an embedding model", spec.id)));
        }
        let start = Instant::now();
        let mut resp = self.backend.complete(spec, req)?;
        if resp.latency_ms == 0 {
            resp.latency_ms = start.elapsed().as_millis() as u64;
        }
        Ok(resp)
    }

    fn account(&self, site: &CallSite, req: &ModelRequest, resp: &ModelResponse) -> Result<()> {
        let spec = self.roster.get(&req.model_id)?;
        record_usage(&mut self.ledger.lock().expect("ledger lock"), site, req, resp, &spec.prior);
        self.log.lock().expect("log lock").push(
            &site.query_id,
            Exchange {
                operator: site.operator.clone(),
                request: req.clone(),
                response: resp.text.clone(),
            },
        );
        Ok(())
    }

    pub fn complete(&self, site: &CallSite, req: ModelRequest) -> Result<ModelResponse> {
        let resp = self.call(&req)?;
        self.account(site, &req, &resp)?;
        Ok(resp)
    }

    /// Issues requests with at most `max_inflight` in flight. Results, ledger
    /// entries and log entries keep input order.
    pub fn complete_all(&self, site: &CallSite, reqs: Vec<ModelRequest>) -> Vec<Result<ModelResponse>> {
        let mut results: Vec<Result<ModelResponse>> = Vec::with_capacity(reqs.len());
        for window in reqs.chunks(self.max_inflight) {
            let answers: Vec<Result<ModelResponse>> = if window.len() == 1 {
                vec![self.call(&window[0])]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = window.iter().map(|r| s.spawn(move || self.call(r))).collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().unwrap_or_else(|_| Err(Error::Model("model call panicked".into()))))
                        .collect()
                })
            };
            for (req, ans) in window.iter().zip(answers) {
                let ans = ans.and_then(|resp| {
                    self.account(site, req, &resp)?;
                    Ok(resp)
                });
                results.push(ans);
            }
        }
        results
    }

    /// Embeds texts with an embedding model; one backend call.
    pub fn embed(&self, site: &CallSite, model_id: &str, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::Model("embed needs at least one text".into()));
        }
        let spec = self.roster.get(model_id)?;
        if spec.role != ModelRole::Embedding {
            return Err(Error::ModelConfig(format!("'{model_id}' is not an embedding model")));
        }
        let (vectors, t_input) = self.backend.embed(spec, texts)?;
        if vectors.len() != texts.len() {
            return Err(Error::Model(format!(
                "embedding backend returned {} vectors for {} texts",
                vectors.len(),
                texts.len()
            )));
        }
        let t = TokenVector::new(t_input, 0);
        self.ledger.lock().expect("ledger lock").push(LedgerEntry {
            query_id: site.query_id.clone(),
            operator: site.operator.clone(),
            model_id: model_id.to_string(),
            kind: RequestKind::Embedding,
            task: "embed".into(),
            t_input,
            t_output: 0,
            cost: spec.prior.price(t),
        });
        Ok(vectors)
    }
}

/// ceil(chars / 4), the token count the mock reports.
pub fn count_tokens(text: &str) -> u64 {
    text.chars().count().div_ceil(4) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gateway(entries: &[(&str, &str)]) -> Gateway {
        let mut store = FixtureStore::default();
        for (k, v) in entries {
            store.insert(None, k, v);
        }
        Gateway::new(Box::new(MockBackend::new(store)), ModelRoster::default_roster())
    }

    fn site() -> CallSite {
        CallSite {
            query_id: "q1".into(),
            operator: "0:Test".into(),
        }
    }

    fn req(task: &str, instruction: &str, items: &[&str], per_item: bool) -> ModelRequest {
        ModelRequest {
            model_id: "llm-small".into(),
            kind: RequestKind::Completion,
            task: task.into(),
            system_context: "ctx".into(),
            instruction: instruction.into(),
            items: items.iter().map(|s| s.to_string()).collect(),
            per_item,
            max_output_tokens: 64,
        }
    }

    #[test]
    fn mock_is_deterministic_and_counts_tokens() {
        let g = gateway(&[("classify:attention is all you need", "Area: Transformers")]);
        let r = req("classify", "Area of publications", &["Attention  Is All You Need"], true);
        let a = g.complete(&site(), r.clone()).unwrap();
        let b = g.complete(&site(), r.clone()).unwrap();
        assert_eq!(a.text, "Area: Transformers");
        assert_eq!(a.text, b.text);
        assert_eq!(a.t_output, count_tokens("Area: Transformers"));
        let prompt = format!("{}\n{}", r.system_context, r.user_prompt());
        assert_eq!(a.t_input, count_tokens(&prompt));
        assert_eq!(g.ledger().entries().len(), 2);
    }

    #[test]
    fn unconfigured_model_is_a_config_error() {
        let g = gateway(&[]);
        let mut r = req("judge", "x", &["a"], true);
        r.model_id = "nope".into();
        assert!(matches!(g.complete(&site(), r), Err(Error::ModelConfig(_))));
    }

    #[test]
    fn fixture_miss_is_an_error() {
        let g = gateway(&[]);
        let e = g.complete(&site(), req("judge", "x", &["a"], true)).unwrap_err();
        assert!(e.to_string().contains("judge:"));
    }

    #[test]
    fn requests_without_context_are_refused() {
        let g = gateway(&[("judge:a", "yes")]);
        let mut r = req("judge", "", &["a"], true);
        r.system_context.clear();
        assert!(g.complete(&site(), r).is_err());
    }

    #[test]
    fn concurrent_results_keep_input_order() {
        let entries: Vec<(String, String)> = (0..10).map(|i| (format!("map:v{i}"), format!("r{i}"))).collect();
        let refs: Vec<(&str, &str)> = entries.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let g = gateway(&refs);
        let reqs: Vec<ModelRequest> = (0..10).map(|i| req("map", "", &[&format!("v{i}")], true)).collect();
        let out: Vec<String> = g.complete_all(&site(), reqs).into_iter().map(|r| r.unwrap().text).collect();
        assert_eq!(out, (0..10).map(|i| format!("r{i}")).collect::<Vec<_>>());
        let tasks: Vec<u64> = g.ledger().entries().iter().map(|e| e.t_output).collect();
        assert_eq!(tasks.len(), 10);
    }

    #[test]
    fn ledger_arithmetic() {
        let mut l = UsageLedger::default();
        assert_eq!(l.total_cost(), 0.0);
        let m = CostMatrix::new(1.0, 1.0, 0.001, 0.002).unwrap();
        let r = req("judge", "x", &[], false);
        let resp = ModelResponse {
            text: String::new(),
            t_input: 100,
            t_output: 50,
            model_id: "llm-small".into(),
            latency_ms: 0,
        };
        record_usage(&mut l, &site(), &r, &resp, &m);
        assert!((l.entries()[0].cost - 0.2).abs() < 1e-12);
        record_usage(&mut l, &site(), &r, &resp, &m);
        record_usage(&mut l, &site(), &r, &resp, &m);
        let sum: f64 = l.entries().iter().map(|e| e.cost).sum();
        assert_eq!(l.total_cost(), sum);
        assert_eq!(l.total_tokens(), TokenVector::new(300, 150));
    }

    #[test]
    fn embeddings_are_unit_and_repeatable() {
        let g = gateway(&[]);
        let v = g.embed(&site(), "embed-small", &["x".into(), "x".into()]).unwrap();
        assert_eq!(v[0], v[1]);
        assert!((v[0].norm() - 1.0).abs() < 1e-6);
        let d = g.embed(&site(), "embed-small", &["deep learning".into()]).unwrap();
        assert!((crate::cosine_similarity(&d[0], &d[0]).unwrap() - 1.0).abs() < 1e-9);
        assert!(g.embed(&site(), "llm-small", &["x".into()]).is_err());
    }

    #[test]
    fn log_retention_drops_oldest() {
        let g = gateway(&[("judge:a", "yes")]).with_log_retention(2);
        for q in ["q1", "q2", "q3"] {
            let s = CallSite {
                query_id: q.into(),
                operator: "op".into(),
            };
            g.complete(&s, req("judge", "", &["a"], true)).unwrap();
        }
        assert!(g.exchanges("q1").is_none());
        assert_eq!(g.exchanges("q3").unwrap().len(), 1);
    }
}
