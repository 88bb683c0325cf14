//! End-to-end runs through a session with a scripted backend that records
//! every request it sees.

use std::sync::{Arc, Mutex};

use semsql::gateway::{count_tokens, Backend, Gateway, ModelRequest, ModelResponse, ModelRole, ModelRoster, ModelSpec};
use semsql::storage::Catalog;
use semsql::{EmbeddingVector, Relation, Session, SessionOptions, StatementOutcome, Value};

const TITLES: [&str; 4] = [
    "Message passing on sparse graph structures",
    "Score based diffusion for audio",
    "Graph transformers at scale",
    "Federated averaging with stragglers",
];
const FILTER: &str = r#"SELECT title FROM papers WHERE PROMPT("Is this paper about graph learning?")"#;

struct Scripted {
    /// The validator answers the opposite of the served models.
    contrarian: bool,
    seen: Arc<Mutex<Vec<ModelRequest>>>,
}

impl Backend for Scripted {
    fn complete(&self, model: &ModelSpec, req: &ModelRequest) -> semsql::Result<ModelResponse> {
        self.seen.lock().unwrap().push(req.clone());
        let flip = self.contrarian && model.role == ModelRole::Validator;
        let text = match req.task.as_str() {
            "judge" => req
                .items
                .iter()
                .map(|i| if i.to_lowercase().contains("graph") != flip { "yes" } else { "no" })
                .collect::<Vec<_>>()
                .join("\n"),
            other => panic!("unexpected task {other}"),
        };
        Ok(ModelResponse {
            t_input: count_tokens(&req.system_context) + count_tokens(&req.user_prompt()),
            t_output: count_tokens(&text),
            text,
            model_id: model.id.clone(),
            latency_ms: 0,
        })
    }

    fn embed(&self, _: &ModelSpec, texts: &[String]) -> semsql::Result<(Vec<EmbeddingVector>, u64)> {
        let v = texts.iter().map(|t| semsql::gateway::mock_embedding(t)).collect();
        Ok((v, texts.iter().map(|t| count_tokens(t)).sum()))
    }
}

fn session(contrarian: bool) -> (Session, Arc<Mutex<Vec<ModelRequest>>>) {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let backend = Scripted {
        contrarian,
        seen: seen.clone(),
    };
    let gateway = Gateway::new(Box::new(backend), ModelRoster::default_roster());
    let mut s = Session::new(Catalog::in_memory(), gateway, SessionOptions::default()).unwrap();
    s.execute("CREATE TABLE papers (title TEXT)").unwrap();
    let values: Vec<String> = TITLES.iter().map(|t| format!("('{t}')")).collect();
    s.execute(&format!("INSERT INTO papers VALUES {}", values.join(", "))).unwrap();
    (s, seen)
}

fn query(s: &mut Session, sql: &str) -> Box<semsql::QueryResult> {
    match s.execute(sql).unwrap() {
        StatementOutcome::Query(r) => r,
        other => panic!("expected rows, got {other:?}"),
    }
}

fn texts(rel: &Relation) -> Vec<String> {
    rel.rows()
        .iter()
        .map(|r| match &r[0] {
            Value::Text(t) => t.clone(),
            v => panic!("not text: {v:?}"),
        })
        .collect()
}

#[test]
fn semantic_filter_keeps_judged_rows() {
    let (mut s, _) = session(false);
    let r = query(&mut s, FILTER);
    assert_eq!(texts(&r.relation.visible()), vec![TITLES[0].to_string(), TITLES[2].to_string()]);
}

#[test]
fn every_completion_carries_the_statement_digest() {
    let (mut s, seen) = session(false);
    query(&mut s, FILTER);
    let seen = seen.lock().unwrap();
    assert!(!seen.is_empty());
    for req in seen.iter() {
        assert!(req.system_context.contains("Is this paper about graph learning?"), "{}", req.system_context);
        assert!(req.system_context.contains("papers"), "{}", req.system_context);
    }
}

#[test]
fn estimated_tokens_within_three_times_actual() {
    let (mut s, _) = session(false);
    let r = query(&mut s, FILTER);
    let mut est = 0u64;
    let mut stack = vec![&r.plan];
    while let Some(p) = stack.pop() {
        est += p.ann.usage.iter().map(|(_, t)| t.t_input + t.t_output).sum::<u64>();
        stack.extend(p.children.iter());
    }
    let used = r.metrics.ledger.total_tokens();
    let actual = used.t_input + used.t_output;
    assert!(actual > 0 && est > 0);
    let ratio = est as f64 / actual as f64;
    assert!((1.0 / 3.0..=3.0).contains(&ratio), "estimate {est} vs actual {actual}");
}

#[test]
fn agreeing_validator_scores_one() {
    let (mut s, _) = session(false);
    let qid = query(&mut s, FILTER).query_id.clone();
    let cv = s.calibrate(&qid, "llm-validator").unwrap().expect("query used a model");
    assert_eq!(cv.agreement, 1.0);
    assert_eq!(cv.rule_score, 1.0);
    assert_eq!(cv.score, 1.0);
    assert!(!cv.records.is_empty());
}

#[test]
fn contrarian_validator_scores_half() {
    let (mut s, _) = session(true);
    let qid = query(&mut s, FILTER).query_id.clone();
    let cv = s.calibrate(&qid, "llm-validator").unwrap().expect("query used a model");
    assert_eq!(cv.agreement, 0.0);
    assert_eq!(cv.score, 0.5);
    let served = &cv.records[0].model_id;
    let prior = s.gateway().roster().get(served).unwrap().prior;
    let now = s.calibrator().matrix(served, &prior);
    assert!(now.a_input < prior.a_input);
}

#[test]
fn classic_query_yields_no_feedback_records() {
    let (mut s, seen) = session(false);
    let qid = query(&mut s, "SELECT title FROM papers").query_id.clone();
    assert!(seen.lock().unwrap().is_empty());
    assert!(s.feedback(&qid, 0.2).unwrap().is_empty());
    assert!(s.calibrate(&qid, "llm-validator").unwrap().is_none());
}

#[test]
fn unknown_query_id_is_an_error() {
    let (mut s, _) = session(false);
    assert!(s.feedback("q99", 0.5).is_err());
}

#[test]
fn per_statement_lambda_overrides_session_default() {
    let (mut s, _) = session(false);
    let cheap = query(&mut s, FILTER).plan.plan_id();
    let opts = semsql::QueryOptions {
        lambda: Some(1e6),
        ..Default::default()
    };
    let StatementOutcome::Query(r) = s.execute_with(FILTER, &opts).unwrap() else {
        panic!("expected rows");
    };
    assert!(cheap.contains("model=llm-small"), "{cheap}");
    assert!(r.plan.plan_id().contains("model=llm-large"), "{}", r.plan.plan_id());
    assert_eq!(s.options.optimizer.lambda, 0.0);
    assert_eq!(texts(&r.relation.visible()), vec![TITLES[0].to_string(), TITLES[2].to_string()]);
}
