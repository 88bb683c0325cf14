//! Feedback-driven refinement of accuracy coefficients.
//!
//! Each record carries a score f in [0, 1]. Applying it moves a model's
//! accuracy entries toward `f · A0` by an exponential moving average,
//! `A' = (1 − α)·A + α·f·A0`, so a sustained score f has the fixed point
//! `f · A0`. Prices are never touched.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::gateway::{CallSite, Exchange, Gateway, ModelRole, ModelRoster, RequestKind};
use crate::relation::cosine_similarity;

pub const DEFAULT_ALPHA: f64 = 0.3;
pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.2;
/// Generative answers agree when their embeddings are at least this close.
pub const AGREEMENT_COSINE: f64 = 0.9;

const RECORDS_FILE: &str = "calibration.jsonl";
const COEFFICIENTS_FILE: &str = "coefficients.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    User,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub query_id: String,
    pub model_id: String,
    /// Operator name, e.g. `SemanticTransform`.
    pub operator: String,
    pub feedback: FeedbackKind,
    pub score: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

fn check_score(score: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::Calibration(format!("score must lie in [0, 1], got {score}")));
    }
    Ok(())
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Strips the `<id>:` prefix of a ledger operator tag.
fn operator_kind(tag: &str) -> &str {
    tag.split_once(':').map_or(tag, |(_, name)| name)
}

/// Applies `records` in order to the accuracy entries of `current`.
pub fn update_matrix(current: &CostMatrix, prior: &CostMatrix, records: &[CalibrationRecord], alpha: f64) -> CostMatrix {
    let mut m = *current;
    for r in records {
        m.a_input = (1.0 - alpha) * m.a_input + alpha * r.score * prior.a_input;
        m.a_output = (1.0 - alpha) * m.a_output + alpha * r.score * prior.a_output;
    }
    m
}

/// Outcome of one model-based cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub sampled: usize,
    pub agreement: f64,
    pub rule_score: f64,
    /// `0.5 · agreement + 0.5 · rule_score`.
    pub score: f64,
    pub records: Vec<CalibrationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibrator {
    pub alpha: f64,
    records: Vec<CalibrationRecord>,
    /// Current (A_input, A_output) of models that received feedback.
    coefficients: BTreeMap<String, (f64, f64)>,
}

impl Default for Calibrator {
    fn default() -> Self {
        Calibrator::new(DEFAULT_ALPHA)
    }
}

#[derive(Serialize, Deserialize)]
struct Coefficient {
    a_input: f64,
    a_output: f64,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Calibrator {
    pub fn new(alpha: f64) -> Calibrator {
        Calibrator {
            alpha,
            records: Vec::new(),
            coefficients: BTreeMap::new(),
        }
    }

    pub fn records(&self) -> &[CalibrationRecord] {
        &self.records
    }

    /// The model's matrix with calibrated accuracy entries, if any.
    pub fn matrix(&self, model: &str, prior: &CostMatrix) -> CostMatrix {
        let mut m = *prior;
        if let Some((ai, ao)) = self.coefficients.get(model) {
            m.a_input = *ai;
            m.a_output = *ao;
        }
        m
    }

    /// Calibrated matrices for every model of the roster.
    pub fn matrices(&self, roster: &ModelRoster) -> BTreeMap<String, CostMatrix> {
        roster
            .models()
            .iter()
            .map(|m| (m.id.clone(), self.matrix(&m.id, &m.prior)))
            .collect()
    }

    /// Appends records and folds them into the coefficients.
    pub fn apply(&mut self, roster: &ModelRoster, records: Vec<CalibrationRecord>) -> Result<()> {
        for r in &records {
            check_score(r.score)?;
            let prior = roster.get(&r.model_id)?.prior;
            let current = self.matrix(&r.model_id, &prior);
            let next = update_matrix(&current, &prior, std::slice::from_ref(r), self.alpha);
            self.coefficients.insert(r.model_id.clone(), (next.a_input, next.a_output));
        }
        self.records.extend(records);
        Ok(())
    }

    /// One user record per (operator, model) pair in `served`, which holds
    /// ledger operator tags and model ids of the query. Empty `served`
    /// yields no records.
    pub fn user_feedback(
        &mut self,
        roster: &ModelRoster,
        query_id: &str,
        score: f64,
        served: &[(String, String)],
    ) -> Result<Vec<CalibrationRecord>> {
        check_score(score)?;
        let mut seen: Vec<(String, String)> = Vec::new();
        for (op, model) in served {
            if !seen.iter().any(|(o, m)| o == op && m == model) {
                seen.push((op.clone(), model.clone()));
            }
        }
        let ts = now();
        let records: Vec<CalibrationRecord> = seen
            .into_iter()
            .map(|(op, model)| CalibrationRecord {
                query_id: query_id.to_string(),
                model_id: model,
                operator: operator_kind(&op).to_string(),
                feedback: FeedbackKind::User,
                score,
                timestamp: ts,
            })
            .collect();
        self.apply(roster, records.clone())?;
        Ok(records)
    }

    /// Replays a seeded sample of the query's completions on `validator`
    /// and scores the originals. Returns `None` when the query made no
    /// completion requests.
    pub fn cross_validate(
        &mut self,
        gateway: &Gateway,
        query_id: &str,
        validator: &str,
        sample_fraction: f64,
        seed: u64,
    ) -> Result<Option<CrossValidation>> {
        let spec = gateway
            .roster()
            .get(validator)
            .map_err(|_| Error::Calibration(format!("validator '{validator}' is not configured")))?;
        if spec.role == ModelRole::Embedding {
            return Err(Error::Calibration(format!("validator '{validator}' cannot answer completions")));
        }
        if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
            return Err(Error::Calibration(format!("sample fraction must lie in (0, 1], got {sample_fraction}")));
        }
        // a query without completions leaves no log entry; callers check
        // that the query itself is known
        let log = gateway.exchanges(query_id).unwrap_or_default();
        if log.is_empty() {
            return Ok(None);
        }
        let k = ((sample_fraction * log.len() as f64).ceil() as usize).clamp(1, log.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks = rand::seq::index::sample(&mut rng, log.len(), k).into_vec();
        picks.sort_unstable();
        let embed_model = gateway.roster().embedding_id().map(str::to_string);
        let mut agree = 0usize;
        let mut rules = 0usize;
        let mut pairs: Vec<(String, String)> = Vec::new();
        for i in &picks {
            let ex = &log[*i];
            let site = CallSite {
                query_id: format!("calibrate:{query_id}"),
                operator: ex.operator.clone(),
            };
            let mut req = ex.request.clone();
            req.model_id = validator.to_string();
            let answer = gateway.complete(&site, req)?.text;
            if agrees(gateway, &site, embed_model.as_deref(), ex, &answer)? {
                agree += 1;
            }
            if passes_rules(ex) {
                rules += 1;
            }
            let pair = (ex.operator.clone(), ex.request.model_id.clone());
            if !pairs.contains(&pair) {
                pairs.push(pair);
            }
        }
        let agreement = agree as f64 / k as f64;
        let rule_score = rules as f64 / k as f64;
        let score = 0.5 * agreement + 0.5 * rule_score;
        let ts = now();
        let records: Vec<CalibrationRecord> = pairs
            .into_iter()
            .map(|(op, model)| CalibrationRecord {
                query_id: query_id.to_string(),
                model_id: model,
                operator: operator_kind(&op).to_string(),
                feedback: FeedbackKind::Model,
                score,
                timestamp: ts,
            })
            .collect();
        self.apply(gateway.roster(), records.clone())?;
        Ok(Some(CrossValidation {
            sampled: k,
            agreement,
            rule_score,
            score,
            records,
        }))
    }

    /// Loads state from `dir`; missing files mean no calibration yet.
    pub fn load(dir: &Path, alpha: f64) -> Result<Calibrator> {
        let mut c = Calibrator::new(alpha);
        let records = dir.join(RECORDS_FILE);
        if records.exists() {
            for (n, line) in fs::read_to_string(&records)?.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let r: CalibrationRecord = serde_json::from_str(line)
                    .map_err(|e| Error::Calibration(format!("{}:{}: {e}", records.display(), n + 1)))?;
                c.records.push(r);
            }
        }
        let coeffs = dir.join(COEFFICIENTS_FILE);
        if coeffs.exists() {
            let map: BTreeMap<String, Coefficient> = serde_json::from_str(&fs::read_to_string(&coeffs)?)
                .map_err(|e| Error::Calibration(format!("{}: {e}", coeffs.display())))?;
            c.coefficients = map.into_iter().map(|(k, v)| (k, (v.a_input, v.a_output))).collect();
        }
        Ok(c)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut lines = String::new();
        for r in &self.records {
            lines.push_str(&serde_json::to_string(r).map_err(|e| Error::Calibration(e.to_string()))?);
            lines.push('\n');
        }
        write_atomic(&dir.join(RECORDS_FILE), lines.as_bytes())?;
        let map: BTreeMap<&String, Coefficient> = self
            .coefficients
            .iter()
            .map(|(k, (a, b))| (k, Coefficient { a_input: *a, a_output: *b }))
            .collect();
        let json = serde_json::to_string_pretty(&map).map_err(|e| Error::Calibration(e.to_string()))?;
        write_atomic(&dir.join(COEFFICIENTS_FILE), json.as_bytes())
    }
}

fn yes_no_lines(text: &str) -> Vec<Option<bool>> {
    text.lines()
        .map(|l| l.trim().to_ascii_lowercase())
        .filter(|l| !l.is_empty())
        .map(|l| {
            if l.starts_with("yes") {
                Some(true)
            } else if l.starts_with("no") {
                Some(false)
            } else {
                None
            }
        })
        .collect()
}

/// Judges must agree exactly; generative answers by embedding cosine.
fn agrees(gateway: &Gateway, site: &CallSite, embed_model: Option<&str>, ex: &Exchange, answer: &str) -> Result<bool> {
    if ex.request.kind == RequestKind::Judge {
        return Ok(yes_no_lines(&ex.response) == yes_no_lines(answer));
    }
    if ex.response.trim() == answer.trim() {
        return Ok(true);
    }
    if ex.response.trim().is_empty() || answer.trim().is_empty() {
        return Ok(false);
    }
    let model = embed_model.ok_or_else(|| Error::Calibration("no embedding model to compare answers".into()))?;
    let v = gateway.embed(site, model, &[ex.response.clone(), answer.to_string()])?;
    Ok(cosine_similarity(&v[0], &v[1])? >= AGREEMENT_COSINE)
}

/// Built-in rules: nonempty, parses into the task's shape, and per-item
/// answers match the item count.
pub fn passes_rules(ex: &Exchange) -> bool {
    let lines: Vec<&str> = ex.response.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.is_empty() {
        // an extraction may legitimately find nothing
        return ex.request.task == "extract";
    }
    let per_item_count_ok = !ex.request.per_item || ex.request.task == "extract" || lines.len() == ex.request.items.len();
    per_item_count_ok
        && match ex.request.task.as_str() {
            "extract" => lines
                .iter()
                .all(|l| matches!(serde_json::from_str::<serde_json::Value>(l), Ok(serde_json::Value::Object(_)))),
            "judge" => yes_no_lines(&ex.response).iter().all(Option::is_some),
            "label" | "infer_schema" => lines.len() == 1,
            // column names are not logged, so only the line shapes are checked
            "code" => lines
                .iter()
                .filter(|l| !l.starts_with("```") && !l.starts_with('#') && !l.starts_with("--"))
                .all(|l| l.contains(":=") || l.starts_with("explode")),
            _ => true,
        }
}
