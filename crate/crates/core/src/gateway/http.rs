use std::time::{Duration, Instant};

use serde_json::{json, Value as Json};

use super::{Backend, ModelRequest, ModelResponse, ModelSpec};
use crate::error::{Error, Result};
use crate::relation::EmbeddingVector;

const RETRIES: u32 = 2;

/// Chat-completions / embeddings client.
///
/// Each model carries its own endpoint URL; the API key is read from the
/// environment variable named by the model, never from configuration.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    backoff: Duration,
}

impl Default for HttpBackend {
    fn default() -> Self {
        HttpBackend {
            backoff: Duration::from_millis(250),
        }
    }
}

enum Failure {
    Retry(String),
    Fatal(Error),
}

impl HttpBackend {
    pub fn new() -> HttpBackend {
        HttpBackend::default()
    }

    pub fn with_backoff(backoff: Duration) -> HttpBackend {
        HttpBackend { backoff }
    }

    fn post_once(&self, model: &ModelSpec, url: &str, body: &Json) -> std::result::Result<Json, Failure> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(model.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(var) = &model.api_key_env {
            let key = std::env::var(var)
                .map_err(|_| Failure::Fatal(Error::ModelConfig(format!("environment variable {var} is not set"))))?;
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send(body.to_string()) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => return Err(Failure::Retry(format!("timeout ({t})"))),
            Err(ureq::Error::Io(e)) if e.kind() == std::io::ErrorKind::TimedOut => {
                return Err(Failure::Retry(format!("timeout ({e})")))
            }
            Err(e) => return Err(Failure::Fatal(Error::Model(format!("transport error: {e}")))),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retry(format!("reading body: {e}")))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| Failure::Fatal(Error::Model(format!("malformed response body: {e}")))),
            500..=599 => Err(Failure::Retry(format!("HTTP {status}"))),
            _ => Err(Failure::Fatal(Error::Model(format!("HTTP {status}: {}", text.trim())))),
        }
    }

    /// POST with up to two retries and exponential backoff on timeouts and
    /// 5xx responses.
    fn post(&self, model: &ModelSpec, body: &Json) -> Result<Json> {
        let url = model
            .endpoint
            .as_deref()
            .ok_or_else(|| Error::ModelConfig(format!("model '{}' has no endpoint", model.id)))?;
        let mut last = String::new();
        for attempt in 0..=RETRIES {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.post_once(model, url, body) {
                Ok(j) => return Ok(j),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(msg)) => last = msg,
            }
        }
        Err(Error::Model(format!("{url}: giving up after {} attempts: {last}", RETRIES + 1)))
    }
}

fn usage(j: &Json, field: &str) -> Result<u64> {
    j.pointer(&format!("/usage/{field}"))
        .and_then(Json::as_u64)
        .ok_or_else(|| Error::Model(format!("response lacks usage.{field}")))
}

impl Backend for HttpBackend {
    fn complete(&self, model: &ModelSpec, req: &ModelRequest) -> Result<ModelResponse> {
        let body = json!({
            "model": model.api_model.as_deref().unwrap_or(&model.id),
            "messages": [
                {"role": "system", "content": req.system_context},
                {"role": "user", "content": req.user_prompt()},
            ],
            "max_tokens": req.max_output_tokens,
        });
        let start = Instant::now();
        let j = self.post(model, &body)?;
        let text = j
            .pointer("/choices/0/message/content")
            .and_then(Json::as_str)
            .ok_or_else(|| Error::Model("response lacks choices[0].message.content".into()))?
            .to_string();
        Ok(ModelResponse {
            text,
            t_input: usage(&j, "prompt_tokens")?,
            t_output: usage(&j, "completion_tokens")?,
            model_id: model.id.clone(),
            latency_ms: start.elapsed().as_millis().max(1) as u64,
        })
    }

    fn embed(&self, model: &ModelSpec, texts: &[String]) -> Result<(Vec<EmbeddingVector>, u64)> {
        let body = json!({
            "model": model.api_model.as_deref().unwrap_or(&model.id),
            "input": texts,
        });
        let j = self.post(model, &body)?;
        let data = j
            .get("data")
            .and_then(Json::as_array)
            .ok_or_else(|| Error::Model("embedding response lacks data".into()))?;
        let mut out = Vec::with_capacity(data.len());
        for d in data {
            let v: Vec<f32> = d
                .get("embedding")
                .and_then(Json::as_array)
                .ok_or_else(|| Error::Model("embedding entry lacks a vector".into()))?
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32))
                .collect::<Option<_>>()
                .ok_or_else(|| Error::Model("embedding vector has non-numeric entries".into()))?;
            out.push(EmbeddingVector::new(v));
        }
        Ok((out, usage(&j, "prompt_tokens")?))
    }
}
