//! Model-backed operators: transforms, generated code, judges and
//! clustering.

use std::collections::BTreeMap;

use serde_json::Value as Json;

use super::code::Program;
use super::{cluster, col, text_of, Executor};
use crate::error::{Error, Result};
use crate::gateway::{CallSite, ModelRequest, RequestKind};
use crate::physical::TransformTask;
use crate::plan::{ScalarExpr, TransformMode, TransformSpec};
use crate::relation::{Relation, Row, Schema, Value};

/// Instruction for value normalisation ahead of an exact join.
pub const NORMALIZE_PROMPT: &str = "Rewrite each value into its canonical form: lower case, singular, without abbreviations.";
pub const MATCH_PROMPT: &str = "Decide whether the two sides of each pair refer to the same thing.";
/// Sample rows shown to the model when it writes a program.
pub const CODE_SAMPLE_ROWS: usize = 3;

/// Drops a leading `Label:` style prefix that models add to short answers.
pub(crate) fn strip_label_prefix(answer: &str) -> String {
    let a = answer.trim().trim_matches('"').trim();
    if let Some((head, rest)) = a.split_once(':') {
        let head = head.trim();
        if !rest.trim().is_empty() && !head.is_empty() && !head.contains(' ') && head.chars().all(char::is_alphabetic) {
            return rest.trim().trim_matches('"').trim().to_string();
        }
    }
    a.to_string()
}

/// Lower snake_case column name from a model answer.
pub(crate) fn sanitize_field(answer: &str) -> Option<String> {
    let first = answer.lines().map(str::trim).find(|l| !l.is_empty())?;
    let first = strip_label_prefix(first.trim_matches('`'));
    let mut out = String::new();
    for c in first.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let out = out.trim_matches('_').to_string();
    match out.chars().next() {
        None => None,
        Some(c) if c.is_ascii_digit() => Some(format!("c_{out}")),
        Some(_) => Some(out),
    }
}

fn parse_yes_no(line: &str) -> Option<bool> {
    let l = strip_label_prefix(line).to_ascii_lowercase();
    let l = l.trim_end_matches('.');
    match l {
        _ if l.starts_with("yes") || l == "true" => Some(true),
        _ if l.starts_with("no") || l == "false" => Some(false),
        _ => None,
    }
}

fn answer_lines(text: &str) -> Vec<&str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("```"))
        .collect()
}

fn json_to_value(v: Option<&Json>) -> Value {
    match v {
        None | Some(Json::Null) => Value::Null,
        Some(Json::String(s)) => Value::text(s.trim()),
        Some(other) => Value::text(other.to_string()),
    }
}

/// Renders a row for judge prompts as `name: value; ...` over visible
/// columns.
pub(crate) fn render_row(schema: &Schema, row: &Row) -> String {
    schema
        .visible_indices()
        .into_iter()
        .map(|i| format!("{}: {}", schema.columns()[i].name, text_of(&row[i])))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Replaces the semantic subterms of `e`, in visit order, with literals.
fn substitute(e: &ScalarExpr, values: &mut impl Iterator<Item = Value>) -> ScalarExpr {
    match e {
        ScalarExpr::Prompt(_) | ScalarExpr::SemMatch { .. } => {
            ScalarExpr::Literal(values.next().unwrap_or(Value::Null))
        }
        ScalarExpr::Binary { op, left, right } => {
            let left = Box::new(substitute(left, values));
            let right = Box::new(substitute(right, values));
            ScalarExpr::Binary { op: *op, left, right }
        }
        ScalarExpr::Not(x) => ScalarExpr::Not(Box::new(substitute(x, values))),
        ScalarExpr::Negate(x) => ScalarExpr::Negate(Box::new(substitute(x, values))),
        ScalarExpr::IsNull { expr, negated } => ScalarExpr::IsNull {
            expr: Box::new(substitute(expr, values)),
            negated: *negated,
        },
        ScalarExpr::Function { name, args } => ScalarExpr::Function {
            name: name.clone(),
            args: args.iter().map(|a| substitute(a, values)).collect(),
        },
        other => other.clone(),
    }
}

fn semantic_terms(e: &ScalarExpr) -> Vec<ScalarExpr> {
    let mut out = Vec::new();
    collect_terms(e, &mut out);
    out
}

// same order as `substitute`
fn collect_terms(e: &ScalarExpr, out: &mut Vec<ScalarExpr>) {
    match e {
        ScalarExpr::Prompt(_) | ScalarExpr::SemMatch { .. } => out.push(e.clone()),
        ScalarExpr::Binary { left, right, .. } => {
            collect_terms(left, out);
            collect_terms(right, out);
        }
        ScalarExpr::Not(x) | ScalarExpr::Negate(x) => collect_terms(x, out),
        ScalarExpr::IsNull { expr, .. } => collect_terms(expr, out),
        ScalarExpr::Function { args, .. } => args.iter().for_each(|a| collect_terms(a, out)),
        _ => {}
    }
}

impl Executor<'_> {
    fn request(&self, model: &str, kind: RequestKind, task: &str, instruction: String, items: Vec<String>, per_item: bool) -> ModelRequest {
        ModelRequest {
            model_id: model.to_string(),
            kind,
            task: task.to_string(),
            system_context: self.context.clone(),
            instruction,
            items,
            per_item,
            max_output_tokens: self.config.max_output_tokens,
        }
    }

    /// Sends every request and fails on the first model error.
    fn send_all(&self, site: &CallSite, reqs: Vec<ModelRequest>) -> Result<Vec<String>> {
        if reqs.is_empty() {
            return Ok(vec![]);
        }
        self.gateway
            .complete_all(site, reqs)
            .into_iter()
            .map(|r| r.map(|r| r.text))
            .collect()
    }

    /// One answer line per item, batched. A batch whose answer has the
    /// wrong line count is a row error for all of its items.
    fn per_item(
        &mut self,
        id: usize,
        site: &CallSite,
        model: &str,
        kind: RequestKind,
        task: &str,
        instruction: &str,
        items: &[String],
        batch: usize,
    ) -> Result<Vec<Option<String>>> {
        let batch = batch.max(1);
        let reqs = items
            .chunks(batch)
            .map(|c| self.request(model, kind, task, instruction.to_string(), c.to_vec(), true))
            .collect();
        let answers = self.send_all(site, reqs)?;
        let mut out = Vec::with_capacity(items.len());
        for (chunk, text) in items.chunks(batch).zip(answers) {
            let lines = answer_lines(&text);
            if lines.len() == chunk.len() {
                out.extend(lines.into_iter().map(|l| Some(l.to_string())));
            } else {
                self.row_error(
                    id,
                    format!("{task} answer has {} lines for {} inputs", lines.len(), chunk.len()),
                )?;
                out.extend(std::iter::repeat_n(None, chunk.len()));
            }
        }
        Ok(out)
    }

    /// Field name of every spec column, inferring missing ones.
    fn resolve_fields(&mut self, site: &CallSite, spec: &TransformSpec, model: &str) -> Result<Vec<String>> {
        let mut fields = Vec::with_capacity(spec.columns.len());
        for c in &spec.columns {
            let f = match &c.field {
                Some(f) => f.clone(),
                None => {
                    let req = self.request(model, RequestKind::SchemaInference, "infer_schema", c.prompt.clone(), vec![], false);
                    let text = self.gateway.complete(site, req)?.text;
                    let f = sanitize_field(&text)
                        .ok_or_else(|| Error::Exec(format!("schema inference gave no usable name: '{}'", text.trim())))?;
                    self.renames.insert(c.name.clone(), f.clone());
                    f
                }
            };
            fields.push(f);
        }
        Ok(fields)
    }

    fn input_texts(&self, input: &Relation, spec: &TransformSpec) -> Result<Vec<String>> {
        match &spec.input {
            Some(c) => {
                let idx = col(input.schema(), c)?;
                Ok(input.rows().iter().map(|r| text_of(&r[idx])).collect())
            }
            None => Ok(input.rows().iter().map(|r| render_row(input.schema(), r)).collect()),
        }
    }

    fn check_contract(schema: &Schema, spec: &TransformSpec, input: &Relation) -> Result<()> {
        let expected = spec.output_schema(input.schema())?;
        if &expected != schema {
            return Err(Error::Exec("transform output schema differs from the plan".into()));
        }
        Ok(())
    }

    pub(super) fn transform(
        &mut self,
        id: usize,
        schema: &Schema,
        input: Relation,
        spec: &TransformSpec,
        task: TransformTask,
        model: &str,
    ) -> Result<Relation> {
        Self::check_contract(schema, spec, &input)?;
        let site = self.site(id, &self.metrics[id].name.clone());
        let fields = self.resolve_fields(&site, spec, model)?;
        let texts = self.input_texts(&input, spec)?;
        let batch = self.config.transform_batch;
        match task {
            TransformTask::Extract => {
                let mut instruction = String::from("Extract one row per item described in the text, with these fields:");
                for (c, f) in spec.columns.iter().zip(&fields) {
                    instruction.push_str(&format!("\n- {f}: {}", c.prompt));
                }
                let reqs = texts
                    .chunks(batch.max(1))
                    .map(|c| self.request(model, RequestKind::Completion, "extract", instruction.clone(), c.to_vec(), true))
                    .collect();
                let mut rows = Vec::new();
                for text in self.send_all(&site, reqs)? {
                    for line in answer_lines(&text) {
                        match serde_json::from_str::<Json>(line) {
                            Ok(Json::Object(obj)) => {
                                rows.push(fields.iter().map(|f| json_to_value(obj.get(f))).collect());
                            }
                            _ => self.row_error(id, format!("malformed extraction line '{line}'"))?,
                        }
                    }
                }
                Relation::new(schema.clone(), rows)
            }
            TransformTask::Synthesize => {
                if texts.is_empty() {
                    return Ok(Relation::empty(schema.clone()));
                }
                let instruction = if spec.columns.len() == 1 {
                    format!("Using the input texts, answer: {}", spec.columns[0].prompt)
                } else {
                    let mut s = String::from("Using the input texts, provide these fields:");
                    for (c, f) in spec.columns.iter().zip(&fields) {
                        s.push_str(&format!("\n- {f}: {}", c.prompt));
                    }
                    s
                };
                let req = self.request(model, RequestKind::Completion, "synthesize", instruction, texts, false);
                let text = self.gateway.complete(&site, req)?.text;
                let row: Row = if fields.len() == 1 {
                    vec![Value::text(text.trim())]
                } else {
                    match serde_json::from_str::<Json>(text.trim()) {
                        Ok(Json::Object(obj)) => fields.iter().map(|f| json_to_value(obj.get(f))).collect(),
                        _ => {
                            self.row_error(id, "synthesis answer is not a JSON object".into())?;
                            return Ok(Relation::empty(schema.clone()));
                        }
                    }
                };
                Relation::new(schema.clone(), vec![row])
            }
            TransformTask::Map | TransformTask::Classify | TransformTask::Normalize => {
                let mut answers: Vec<Vec<Option<String>>> = Vec::new();
                for c in &spec.columns {
                    let instruction = if task == TransformTask::Normalize { NORMALIZE_PROMPT.to_string() } else { c.prompt.clone() };
                    let mut a = self.per_item(id, &site, model, RequestKind::Completion, task.as_str(), &instruction, &texts, batch)?;
                    if task == TransformTask::Classify {
                        a.iter_mut().flatten().for_each(|s| *s = strip_label_prefix(s));
                    }
                    answers.push(a);
                }
                let mut rows = Vec::with_capacity(input.len());
                'rows: for (i, row) in input.rows().iter().enumerate() {
                    let mut vals = Vec::with_capacity(spec.columns.len());
                    for a in &answers {
                        match &a[i] {
                            Some(s) => vals.push(Value::text(s.clone())),
                            None => continue 'rows,
                        }
                    }
                    rows.push(merge_map(schema, row, spec, vals));
                }
                Relation::new(schema.clone(), rows)
            }
        }
    }

    pub(super) fn code(&mut self, id: usize, schema: &Schema, input: Relation, spec: &TransformSpec, model: &str) -> Result<Relation> {
        Self::check_contract(schema, spec, &input)?;
        if spec.mode == TransformMode::Synthesize {
            return Err(Error::Exec("generated code cannot synthesize".into()));
        }
        if input.is_empty() {
            return Ok(Relation::empty(schema.clone()));
        }
        let site = self.site(id, &self.metrics[id].name.clone());
        let fields = self.resolve_fields(&site, spec, model)?;
        let known: Vec<String> = input.schema().columns().iter().filter(|c| !c.hidden).map(|c| c.name.clone()).collect();
        let mut instruction = format!(
            "Write a program that computes these fields from the input columns ({}):",
            known.join(", ")
        );
        for (c, f) in spec.columns.iter().zip(&fields) {
            instruction.push_str(&format!("\n- {f}: {}", c.prompt));
        }
        if spec.mode == TransformMode::Extract {
            instruction.push_str("\nEach line of the text describes at most one output row.");
        }
        let sample: Vec<String> = input
            .rows()
            .iter()
            .take(CODE_SAMPLE_ROWS)
            .map(|r| render_row(input.schema(), r))
            .collect();
        let req = self.request(model, RequestKind::Completion, "code", instruction, sample, false);
        let text = self.gateway.complete(&site, req)?.text;
        let program = Program::parse(&text, &known)
            .map_err(|e| Error::Exec(format!("{e}; generated program was:\n{}", text.trim())))?;
        for f in &fields {
            if !program.assignments.iter().any(|(t, _)| t.eq_ignore_ascii_case(f)) {
                return Err(Error::Exec(format!("generated program never assigns '{f}'")));
            }
        }
        let mut rows = Vec::new();
        for row in input.rows() {
            let env: BTreeMap<String, Value> = input
                .schema()
                .columns()
                .iter()
                .zip(row)
                .map(|(c, v)| (c.name.clone(), v.clone()))
                .collect();
            let outputs = match program.run(&env) {
                Ok(o) => o,
                Err(e) => {
                    self.row_error(id, format!("generated program failed: {e}"))?;
                    continue;
                }
            };
            for out in outputs {
                let vals: Vec<Value> = fields
                    .iter()
                    .map(|f| {
                        let v = out.iter().find(|(k, _)| k.eq_ignore_ascii_case(f)).map(|(_, v)| v.clone()).unwrap_or(Value::Null);
                        match v {
                            Value::Null | Value::Text(_) => v,
                            other => Value::text(other.render()),
                        }
                    })
                    .collect();
                // extraction programs signal "no row on this line" with NULLs
                if spec.mode == TransformMode::Extract {
                    if vals.iter().all(Value::is_null) {
                        continue;
                    }
                    rows.push(vals);
                } else {
                    rows.push(merge_map(schema, row, spec, vals));
                }
            }
        }
        Relation::new(schema.clone(), rows)
    }

    /// Evaluates each semantic term of `predicate` through a judge, then
    /// the predicate itself.
    pub(super) fn semantic_filter(
        &mut self,
        id: usize,
        schema: &Schema,
        input: Relation,
        predicate: &ScalarExpr,
        model: &str,
        batch: usize,
    ) -> Result<Relation> {
        let site = self.site(id, &self.metrics[id].name.clone());
        let terms = semantic_terms(predicate);
        let mut verdicts: Vec<Vec<Option<bool>>> = Vec::new();
        for t in &terms {
            let (instruction, items) = match t {
                ScalarExpr::Prompt(p) => (p.clone(), input.rows().iter().map(|r| render_row(input.schema(), r)).collect::<Vec<_>>()),
                ScalarExpr::SemMatch { left, right, .. } => {
                    let mut items = Vec::with_capacity(input.len());
                    for r in input.rows() {
                        let l = text_of(&left.eval(input.schema(), r)?);
                        let rr = text_of(&right.eval(input.schema(), r)?);
                        items.push(format!("{l} <=> {rr}"));
                    }
                    (MATCH_PROMPT.to_string(), items)
                }
                _ => unreachable!("only semantic terms are collected"),
            };
            verdicts.push(self.judge(id, &site, model, &instruction, &items, batch)?);
        }
        let mut rows = Vec::new();
        'rows: for (i, row) in input.rows().iter().enumerate() {
            let mut vals = Vec::with_capacity(terms.len());
            for v in &verdicts {
                match v[i] {
                    Some(b) => vals.push(Value::Boolean(b)),
                    None => continue 'rows,
                }
            }
            let e = substitute(predicate, &mut vals.into_iter());
            if e.eval(input.schema(), row)?.truthy() == Some(true) {
                rows.push(row.clone());
            }
        }
        Relation::new(schema.clone(), rows)
    }

    fn judge(&mut self, id: usize, site: &CallSite, model: &str, instruction: &str, items: &[String], batch: usize) -> Result<Vec<Option<bool>>> {
        let answers = self.per_item(id, site, model, RequestKind::Judge, "judge", instruction, items, batch)?;
        let mut out = Vec::with_capacity(answers.len());
        for a in answers {
            match a.as_deref().map(parse_yes_no) {
                Some(Some(b)) => out.push(Some(b)),
                Some(None) => {
                    self.row_error(id, format!("judge answer '{}' is neither yes nor no", a.unwrap_or_default()))?;
                    out.push(None);
                }
                None => out.push(None),
            }
        }
        Ok(out)
    }

    /// Judges every (left, right) pair; output order is (left, right).
    #[allow(clippy::too_many_arguments)]
    pub(super) fn semantic_join(
        &mut self,
        id: usize,
        schema: &Schema,
        l: Relation,
        r: Relation,
        left: &str,
        right: &str,
        model: &str,
        batch: usize,
    ) -> Result<Relation> {
        let site = self.site(id, &self.metrics[id].name.clone());
        let li = col(l.schema(), left)?;
        let ri = col(r.schema(), right)?;
        let mut items = Vec::with_capacity(l.len() * r.len());
        for a in l.rows() {
            for b in r.rows() {
                items.push(format!("{} <=> {}", text_of(&a[li]), text_of(&b[ri])));
            }
        }
        let verdicts = self.judge(id, &site, model, MATCH_PROMPT, &items, batch)?;
        let mut rows = Vec::new();
        for (n, v) in verdicts.into_iter().enumerate() {
            if v == Some(true) {
                rows.push(super::concat(&l.rows()[n / r.len()], &r.rows()[n % r.len()]));
            }
        }
        Relation::new(schema.clone(), rows)
    }

    /// Clusters the embedded `target` values and names each cluster.
    #[allow(clippy::too_many_arguments)]
    pub(super) fn cluster(
        &mut self,
        id: usize,
        schema: &Schema,
        input: Relation,
        target: &str,
        prompt: &str,
        k: Option<u32>,
        out: &str,
        model: &str,
        embed_model: &str,
    ) -> Result<Relation> {
        let site = self.site(id, &self.metrics[id].name.clone());
        if input.is_empty() {
            return Ok(Relation::empty(schema.clone()));
        }
        let ti = col(input.schema(), target)?;
        let values: Vec<String> = input.rows().iter().map(|r| text_of(&r[ti])).collect();
        let vecs = self.embed_texts(&site, embed_model, &values)?;
        let points: Vec<Vec<f64>> = vecs.iter().map(|v| v.values().iter().map(|x| *x as f64).collect()).collect();
        let c = match k {
            Some(k) => cluster::kmeans(&points, k as usize, self.config.seed, self.config.kmeans_restarts),
            None => cluster::auto_kmeans(&points, self.config.seed, self.config.kmeans_restarts),
        };
        let mut reqs = Vec::with_capacity(c.k);
        for g in 0..c.k {
            let mut members: Vec<String> = Vec::new();
            for (v, a) in values.iter().zip(&c.assignment) {
                if *a == g && !members.contains(v) {
                    members.push(v.clone());
                }
            }
            reqs.push(self.request(model, RequestKind::Completion, "label", prompt.to_string(), members, false));
        }
        let labels: Vec<Value> = self
            .send_all(&site, reqs)?
            .iter()
            .map(|t| Value::text(strip_label_prefix(answer_lines(t).first().copied().unwrap_or_default())))
            .collect();
        let label_idx = schema.index_of(out);
        let mut rows = Vec::with_capacity(input.len());
        for (row, a) in input.rows().iter().zip(&c.assignment) {
            let mut row = row.clone();
            match (label_idx, input.schema().index_of(out)) {
                (_, Some(i)) => row[i] = labels[*a].clone(),
                (Some(_), None) => row.push(labels[*a].clone()),
                (None, None) => return Err(Error::Exec(format!("cluster output '{out}' is not in the plan schema"))),
            }
            rows.push(row);
        }
        Relation::new(schema.clone(), rows)
    }
}

/// Input row with Map outputs written in place or appended, in schema
/// order.
fn merge_map(output: &Schema, row: &Row, spec: &TransformSpec, vals: Vec<Value>) -> Row {
    let mut out = row.clone();
    out.resize(output.len(), Value::Null);
    for (c, v) in spec.columns.iter().zip(vals) {
        let i = output.index_of(&c.name).expect("output schema holds every spec column");
        out[i] = v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_prefixes_are_stripped() {
        assert_eq!(strip_label_prefix("Area: Computer Vision"), "Computer Vision");
        assert_eq!(strip_label_prefix("\"Robotics\""), "Robotics");
        assert_eq!(strip_label_prefix("Ratio 3:1"), "Ratio 3:1");
        assert_eq!(strip_label_prefix("Label:"), "Label:");
    }

    #[test]
    fn inferred_names_are_snake_case() {
        assert_eq!(sanitize_field("Research Area").as_deref(), Some("research_area"));
        assert_eq!(sanitize_field("`paper_title`\n").as_deref(), Some("paper_title"));
        assert_eq!(sanitize_field("Column: Year-Published").as_deref(), Some("year_published"));
        assert_eq!(sanitize_field("2024 rank").as_deref(), Some("c_2024_rank"));
        assert_eq!(sanitize_field("  \n ?? "), None);
    }

    #[test]
    fn yes_no_parsing() {
        assert_eq!(parse_yes_no("Yes."), Some(true));
        assert_eq!(parse_yes_no("no"), Some(false));
        assert_eq!(parse_yes_no("Answer: yes"), Some(true));
        assert_eq!(parse_yes_no("maybe"), None);
    }

    #[test]
    fn substitution_follows_visit_order() {
        let e = ScalarExpr::Binary {
            op: crate::sql::ast::BinaryOp::And,
            left: Box::new(ScalarExpr::Prompt("a".into())),
            right: Box::new(ScalarExpr::Not(Box::new(ScalarExpr::Prompt("b".into())))),
        };
        assert_eq!(semantic_terms(&e), vec![ScalarExpr::Prompt("a".into()), ScalarExpr::Prompt("b".into())]);
        let s = substitute(&e, &mut vec![Value::Boolean(true), Value::Boolean(false)].into_iter());
        assert_eq!(s.eval_with(&|_| None).unwrap(), Value::Boolean(true));
    }
}
