//! Regenerates the mock fixture set from the corpus truth tables.
//!
//! An oracle answers every model request the engine issues while running a
//! script, with every candidate plan of every query executed, and the
//! answers are stored under the keys the mock backend looks up. Answers
//! depend only on the truth tables, never on the plan, so all plans of a
//! query see consistent model behaviour.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context};
use semsql::error::Result as CoreResult;
use semsql::gateway::{count_tokens, mock_embedding, Backend, FixtureStore, MockBackend, ModelRequest, ModelResponse, ModelSpec};
use semsql::relation::EmbeddingVector;
use semsql::sql::ast::Statement;
use semsql::storage::Catalog;

use crate::config::SessionConfig;
use crate::shell::{split, Control, Shell};

const MATCH_PROMPT: &str = "Decide whether the two sides of each pair refer to the same thing.";

#[derive(Debug, Clone)]
struct Paper {
    title: String,
    area: String,
}

/// Ground truth: titles with their areas, and area keywords.
#[derive(Debug, Clone, Default)]
pub struct Truth {
    papers: Vec<Paper>,
    /// (lower-case keyword, canonical area)
    keywords: Vec<(String, String)>,
}

impl Truth {
    /// Reads `areas.csv` (file,title,area; the file column is informative) and `keywords.csv`
    /// (keyword,area).
    pub fn load(dir: &Path) -> anyhow::Result<Truth> {
        let mut t = Truth::default();
        let mut r = csv::Reader::from_path(dir.join("areas.csv")).context("reading areas.csv")?;
        for rec in r.records() {
            let rec = rec?;
            t.papers.push(Paper {
                title: rec[1].to_string(),
                area: rec[2].to_string(),
            });
        }
        let mut r = csv::Reader::from_path(dir.join("keywords.csv")).context("reading keywords.csv")?;
        for rec in r.records() {
            let rec = rec?;
            t.keywords.push((rec[0].to_lowercase(), rec[1].to_string()));
        }
        if t.papers.is_empty() || t.keywords.is_empty() {
            bail!("truth tables in {} are empty", dir.display());
        }
        Ok(t)
    }

    /// Papers whose title occurs in `text`, in order of appearance.
    fn papers_in(&self, text: &str) -> Vec<&Paper> {
        let mut found: Vec<(usize, &Paper)> = self
            .papers
            .iter()
            .filter_map(|p| text.find(&p.title).map(|i| (i, p)))
            .collect();
        found.sort_by_key(|(i, _)| *i);
        found.into_iter().map(|(_, p)| p).collect()
    }

    fn keyword_of(&self, text: &str) -> Option<&(String, String)> {
        let lower = text.to_lowercase();
        self.keywords.iter().find(|(k, _)| lower.contains(k.as_str()))
    }

    /// Canonical area of a title, an area name or free text.
    fn canonical(&self, text: &str) -> Option<String> {
        if let Some(p) = self.papers_in(text).first() {
            return self.keyword_of(&p.area).map(|(_, a)| a.clone());
        }
        self.keyword_of(text).map(|(_, a)| a.clone())
    }

    /// Area as the document's own file spells it, or the canonical one.
    fn area_of(&self, text: &str) -> Option<String> {
        match self.papers_in(text).first() {
            Some(p) => Some(p.area.clone()),
            None => self.canonical(text),
        }
    }

    fn is_lowercase_file(&self, text: &str) -> bool {
        self.papers_in(text).first().is_some_and(|p| p.area == p.area.to_lowercase())
    }
}

/// `(field, prompt)` pairs from `- field: prompt` instruction lines.
fn listed_fields(instruction: &str) -> Vec<(String, String)> {
    instruction
        .lines()
        .filter_map(|l| l.strip_prefix("- "))
        .filter_map(|l| l.split_once(": ").map(|(f, p)| (f.trim().to_string(), p.trim().to_lowercase())))
        .collect()
}

fn field_value(truth: &Truth, p: &Paper, prompt: &str) -> serde_json::Value {
    if prompt.contains("title") {
        serde_json::Value::String(p.title.clone())
    } else if prompt.contains("area") || prompt.contains("topic") {
        serde_json::Value::String(truth.area_of(&p.title).unwrap_or_default())
    } else {
        serde_json::Value::Null
    }
}

fn snake(text: &str) -> String {
    let words: Vec<String> = text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .take(3)
        .map(str::to_lowercase)
        .collect();
    words.join("_")
}

/// Counts per area in order of first appearance: `A: 2; B: 1`.
fn area_counts(truth: &Truth, papers: &[&Paper]) -> String {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for p in papers {
        let a = truth.area_of(&p.title).unwrap_or_default();
        match counts.iter_mut().find(|(x, _)| *x == a) {
            Some((_, n)) => *n += 1,
            None => counts.push((a, 1)),
        }
    }
    counts.iter().map(|(a, n)| format!("{a}: {n}")).collect::<Vec<_>>().join("; ")
}

/// The program a careful model would write for a transform.
fn program(truth: &Truth, instruction: &str, items: &[String]) -> String {
    let columns: Vec<String> = instruction
        .split_once('(')
        .and_then(|(_, r)| r.split_once(')'))
        .map(|(c, _)| c.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
        .unwrap_or_default();
    let extract = instruction.contains("Each line of the text");
    let pick = |want: &str| {
        columns
            .iter()
            .find(|c| c.rsplit('.').next() == Some(want))
            .or_else(|| columns.iter().find(|c| c.contains(want)))
            .or_else(|| columns.first())
            .cloned()
            .unwrap_or_else(|| "text".into())
    };
    let lower_file = items.iter().any(|i| truth.is_lowercase_file(i));
    let mut lines = Vec::new();
    let source = if extract {
        lines.push(format!("explode lines({}) as line", pick("text")));
        "line".to_string()
    } else {
        pick("title")
    };
    let source_area = if extract { "line".to_string() } else { pick("area") };
    for (field, prompt) in listed_fields(instruction) {
        if prompt.contains("title") {
            lines.push(format!("{field} := trim({source})"));
        } else if prompt.contains("area") || prompt.contains("topic") {
            let mut expr = "NULL".to_string();
            for (k, a) in truth.keywords.iter().rev() {
                expr = format!("if(contains(lower({source_area}), '{k}'), '{a}', {expr})");
            }
            if lower_file {
                expr = format!("lower({expr})");
            }
            lines.push(format!("{field} := {expr}"));
        } else {
            lines.push(format!("{field} := {source}"));
        }
    }
    lines.join("\n")
}

/// The oracle's answer to one item (per-item requests) or one request.
pub fn answer(truth: &Truth, req: &ModelRequest, item: Option<&str>) -> String {
    let instr = req.instruction.as_str();
    let text = item.map(str::to_string).unwrap_or_else(|| req.items.join("\n"));
    match req.task.as_str() {
        "infer_schema" => {
            let l = instr.to_lowercase();
            if l.contains("area") && l.contains("count") {
                "area_counts".into()
            } else if l.contains("count") {
                "publication_count".into()
            } else if l.contains("area") {
                "technical_area".into()
            } else if l.contains("title") {
                "title".into()
            } else {
                snake(instr)
            }
        }
        "extract" => {
            let fields = listed_fields(instr);
            truth
                .papers_in(&text)
                .into_iter()
                .map(|p| {
                    let obj: serde_json::Map<String, serde_json::Value> =
                        fields.iter().map(|(f, pr)| (f.clone(), field_value(truth, p, pr))).collect();
                    serde_json::Value::Object(obj).to_string()
                })
                .collect::<Vec<_>>()
                .join("\n")
        }
        "synthesize" => {
            let papers = truth.papers_in(&text);
            let fields = listed_fields(instr);
            if fields.is_empty() {
                return area_counts(truth, &papers);
            }
            let obj: serde_json::Map<String, serde_json::Value> = fields
                .iter()
                .map(|(f, pr)| {
                    let v = if pr.contains("count") || pr.contains("number") {
                        serde_json::Value::String(papers.len().to_string())
                    } else {
                        serde_json::Value::String(area_counts(truth, &papers))
                    };
                    (f.clone(), v)
                })
                .collect();
            serde_json::Value::Object(obj).to_string()
        }
        "classify" | "map" => {
            let l = instr.to_lowercase();
            if l.contains("count") || l.contains("area") || l.contains("topic") || l.contains("group") {
                truth.area_of(&text).unwrap_or_else(|| "Other".into())
            } else if l.contains("title") {
                truth.papers_in(&text).first().map(|p| p.title.clone()).unwrap_or_else(|| text.trim().to_string())
            } else {
                truth.area_of(&text).unwrap_or_else(|| "Other".into())
            }
        }
        "normalize" => text.trim().to_lowercase(),
        "judge" => {
            let yes = if instr == MATCH_PROMPT {
                let (l, r) = text.split_once(" <=> ").unwrap_or((text.as_str(), ""));
                l.trim().eq_ignore_ascii_case(r.trim())
            } else {
                match truth.keyword_of(instr) {
                    Some((_, area)) => truth.canonical(&text).as_deref() == Some(area.as_str()),
                    None => false,
                }
            };
            if yes { "yes" } else { "no" }.into()
        }
        "label" => {
            let mut votes: Vec<(String, usize)> = Vec::new();
            for m in &req.items {
                let a = truth.canonical(m).unwrap_or_else(|| m.clone());
                match votes.iter_mut().find(|(x, _)| *x == a) {
                    Some((_, n)) => *n += 1,
                    None => votes.push((a, 1)),
                }
            }
            // Stable: first of the most common.
            let best = votes.iter().map(|(_, n)| *n).max().unwrap_or(0);
            votes.into_iter().find(|(_, n)| *n == best).map(|(a, _)| a).unwrap_or_default()
        }
        "code" => program(truth, instr, &req.items),
        _ => String::new(),
    }
}

/// Backend that answers with the oracle and records every answer under
/// the key the mock backend looks up first.
pub struct RecordingBackend {
    truth: Truth,
    store: Arc<Mutex<FixtureStore>>,
}

impl RecordingBackend {
    pub fn new(truth: Truth, store: Arc<Mutex<FixtureStore>>) -> RecordingBackend {
        RecordingBackend { truth, store }
    }
}

impl Backend for RecordingBackend {
    fn complete(&self, model: &ModelSpec, req: &ModelRequest) -> CoreResult<ModelResponse> {
        let mut store = self.store.lock().expect("store lock");
        let text = if req.per_item {
            let mut parts = Vec::with_capacity(req.items.len());
            for item in &req.items {
                let a = answer(&self.truth, req, Some(item));
                store.insert(None, &MockBackend::candidate_keys(req, Some(item))[0], &a);
                parts.push(a);
            }
            parts.join("\n")
        } else {
            let a = answer(&self.truth, req, None);
            store.insert(None, &MockBackend::candidate_keys(req, None)[0], &a);
            a
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

    fn embed(&self, _model: &ModelSpec, texts: &[String]) -> CoreResult<(Vec<EmbeddingVector>, u64)> {
        let tokens = texts.iter().map(|t| count_tokens(t)).sum();
        Ok((texts.iter().map(|t| mock_embedding(t)).collect(), tokens))
    }
}

#[derive(Debug, Default)]
pub struct GenReport {
    pub queries: usize,
    pub plans_run: usize,
    pub fixtures: usize,
    /// Queries whose candidate plans disagreed, with the plan ids.
    pub disagreements: Vec<String>,
}

fn select_text(piece_text: &str) -> Option<&str> {
    let t = piece_text.trim_start();
    let body = t
        .strip_prefix("\\explain")
        .or_else(|| t.strip_prefix("\\analyze"))
        .unwrap_or(if t.starts_with('\\') { "" } else { piece_text });
    match semsql::sql::parse(body) {
        Ok(Statement::Select(_)) => Some(body),
        _ => None,
    }
}

/// Runs every script with every candidate plan and writes the recorded
/// answers to `out_dir`, replacing what was there.
pub fn generate(scripts: &[PathBuf], truth_dir: &Path, out_dir: &Path, config: &SessionConfig) -> anyhow::Result<GenReport> {
    let truth = Truth::load(truth_dir)?;
    let store = Arc::new(Mutex::new(FixtureStore::default()));
    let mut report = GenReport::default();
    for script in scripts {
        let text = std::fs::read_to_string(script).with_context(|| format!("reading {}", script.display()))?;
        let backend = Box::new(RecordingBackend::new(truth.clone(), store.clone()));
        let session = config.session_with(Catalog::in_memory(), backend)?;
        let mut shell = Shell::new(session, config.format, config.chunk, std::io::sink(), std::io::sink());
        shell.base_dir = script.parent().map(Path::to_path_buf).unwrap_or_default();
        let (pieces, _) = split(&text);
        for p in &pieces {
            if let Some(sql) = select_text(&p.text) {
                let prepared = shell.session.prepare(sql).map_err(|e| anyhow::anyhow!("{}: {e}", script.display()))?;
                report.queries += 1;
                let mut first: Option<(String, semsql::relation::Relation)> = None;
                for (plan, cost) in prepared.selection.plans.iter().zip(&prepared.selection.costs) {
                    let r = shell
                        .session
                        .run_plan(plan.clone(), cost.clone().ok(), &prepared.context)
                        .map_err(|e| anyhow::anyhow!("{}: plan {}: {e}", script.display(), plan.plan_id()))?;
                    report.plans_run += 1;
                    let visible = r.relation.visible();
                    match &first {
                        None => first = Some((plan.plan_id(), visible)),
                        Some((id, rel)) if rel != &visible => {
                            report.disagreements.push(format!("{}: {id} vs {}", sql.trim(), plan.plan_id()));
                        }
                        Some(_) => {}
                    }
                }
            }
            let flow = shell
                .run_piece(p)
                .map_err(|e| anyhow::anyhow!("{} line {}: {e}", script.display(), p.line))?;
            if flow == Control::Quit {
                break;
            }
        }
        // Cross-validation replays reuse the shared answers.
        if let (Some(qid), Some(v)) = (
            shell.session.last_query_id().map(str::to_string),
            shell.session.gateway().roster().validator_id().map(str::to_string),
        ) {
            shell.session.calibrate(&qid, &v)?;
        }
    }
    let store = store.lock().expect("store lock").clone();
    report.fixtures = store.len();
    if out_dir.exists() {
        for e in std::fs::read_dir(out_dir)? {
            let path = e?.path();
            if path.is_file() && path.extension().is_some_and(|x| x == "txt") {
                std::fs::remove_file(path)?;
            }
        }
    }
    store.write_dir(out_dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> Truth {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/truth");
        Truth::load(&dir).unwrap()
    }

    #[test]
    fn canonical_areas() {
        let t = truth();
        assert_eq!(t.canonical("Scalable Graph Neural Message Passing").as_deref(), Some("Graph Neural Networks"));
        assert_eq!(t.canonical("diffusion models").as_deref(), Some("Diffusion Models"));
        assert_eq!(t.area_of("Tool Use by Language Agents").as_deref(), Some("large language models"));
        assert_eq!(t.canonical("cooking"), None);
    }

    #[test]
    fn program_matches_oracle_on_every_title() {
        let t = truth();
        let instr = "Write a program that computes these fields from the input columns (title):\n- area: research area";
        for p in &t.papers {
            let prog = program(&t, instr, std::slice::from_ref(&p.title));
            let parsed = semsql::exec::code::Program::parse(&prog, &["title".to_string()]).unwrap();
            let row = [("title".to_string(), semsql::relation::Value::text(p.title.clone()))].into_iter().collect();
            let out = parsed.run(&row).unwrap();
            assert_eq!(out[0]["area"], semsql::relation::Value::text(p.area.clone()), "{}", p.title);
        }
    }
}
