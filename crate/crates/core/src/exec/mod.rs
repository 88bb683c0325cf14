//! Materialising executor for physical plans.
//!
//! Operators run bottom-up, each producing a full [`Relation`] whose schema
//! is the node's declared schema. Model calls go through the [`Gateway`]
//! tagged with `<operator id>:<name>`, where ids number the plan nodes in
//! pre-order; per-operator token actuals are read back from the ledger.

pub mod cluster;
pub mod code;
mod semantic;
pub mod vector;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::time::Instant;

use crate::cost::TokenVector;
use crate::error::{Error, Result};
use crate::gateway::{CallSite, Gateway, UsageLedger};
use crate::physical::{embedding_column, PhysicalOp, PhysicalPlan, VectorJoinKind};
use crate::plan::{AggFunc, Aggregate, PromptContext, ScalarExpr};
use crate::relation::{EmbeddingVector, Relation, Row, Schema, Value};
use crate::storage::Catalog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowErrorPolicy {
    /// Drop the offending row and record a warning.
    #[default]
    SkipAndWarn,
    Abort,
}

impl RowErrorPolicy {
    pub fn parse(s: &str) -> Option<RowErrorPolicy> {
        match s.to_ascii_lowercase().as_str() {
            "skip" | "skip-and-warn" | "skip_and_warn" => Some(RowErrorPolicy::SkipAndWarn),
            "abort" => Some(RowErrorPolicy::Abort),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecConfig {
    /// Texts per extraction or per-row transform request.
    pub transform_batch: usize,
    pub row_error_policy: RowErrorPolicy,
    /// Seeds LSH planes, the sorted-merge axis and k-means.
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub max_output_tokens: u32,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            transform_batch: 8,
            row_error_policy: RowErrorPolicy::SkipAndWarn,
            seed: 7,
            kmeans_restarts: 10,
            max_output_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMetrics {
    pub id: usize,
    pub depth: usize,
    pub name: String,
    pub args: String,
    pub rows_out: usize,
    pub tokens: TokenVector,
    pub requests: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionMetrics {
    pub plan_id: String,
    pub wall_time_ms: f64,
    /// Pre-order, one entry per plan node.
    pub operators: Vec<OperatorMetrics>,
    pub warnings: Vec<String>,
    /// The query's share of the gateway ledger.
    pub ledger: UsageLedger,
}

impl ExecutionMetrics {
    /// EXPLAIN ANALYZE text. Timing is optional so that output can be
    /// compared byte for byte.
    pub fn render(&self, timing: bool) -> String {
        let mut out = String::new();
        for m in &self.operators {
            let _ = write!(out, "{:indent$}{}", "", m.name, indent = m.depth * 2);
            if !m.args.is_empty() {
                let _ = write!(out, " [{}]", m.args);
            }
            let _ = write!(out, "  rows={}", m.rows_out);
            if m.requests > 0 {
                let _ = write!(out, " calls={} tokens={}/{}", m.requests, m.tokens.t_input, m.tokens.t_output);
            }
            if timing {
                let _ = write!(out, " time={:.2}ms", m.wall_ms);
            }
            out.push('\n');
        }
        let total = self.ledger.total_tokens();
        let _ = writeln!(
            out,
            "total: tokens={}/{} cost={:.8}",
            total.t_input,
            total.t_output,
            self.ledger.total_cost()
        );
        if timing {
            let _ = writeln!(out, "wall time: {:.2}ms", self.wall_time_ms);
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

pub(crate) struct Executor<'a> {
    gateway: &'a Gateway,
    catalog: &'a Catalog,
    config: &'a ExecConfig,
    context: String,
    query_id: String,
    plan_id: String,
    warnings: Vec<String>,
    /// Internal name of an inferred column → inferred field name.
    renames: BTreeMap<String, String>,
    metrics: Vec<OperatorMetrics>,
}

/// Executes `plan`; hidden columns are stripped and inferred columns
/// renamed in the returned relation.
pub fn execute(
    plan: &PhysicalPlan,
    ctx: &PromptContext,
    gateway: &Gateway,
    catalog: &Catalog,
    query_id: &str,
    config: &ExecConfig,
) -> Result<(Relation, ExecutionMetrics)> {
    let start = Instant::now();
    let mut ex = Executor {
        gateway,
        catalog,
        config,
        context: ctx.digest(),
        query_id: query_id.to_string(),
        plan_id: plan.plan_id(),
        warnings: Vec::new(),
        renames: BTreeMap::new(),
        metrics: Vec::new(),
    };
    let rel = ex.run(plan, 0)?;
    let result = ex.finish(rel)?;
    let ledger = gateway.ledger().for_query(query_id);
    for m in ex.metrics.iter_mut() {
        let tag = format!("{}:{}", m.id, m.name);
        for e in ledger.entries().iter().filter(|e| e.operator == tag) {
            m.tokens += TokenVector::new(e.t_input, e.t_output);
            m.requests += 1;
        }
    }
    if let Some(root) = ex.metrics.first() {
        if root.rows_out != result.len() {
            return Err(Error::Exec("root row count disagrees with the result".into()));
        }
    }
    let metrics = ExecutionMetrics {
        plan_id: ex.plan_id,
        wall_time_ms: start.elapsed().as_secs_f64() * 1000.0,
        operators: ex.metrics,
        warnings: ex.warnings,
        ledger,
    };
    Ok((result, metrics))
}

pub(crate) fn text_of(v: &Value) -> String {
    match v {
        Value::Text(s) => s.clone(),
        Value::Null => String::new(),
        other => other.render(),
    }
}

fn col(schema: &Schema, name: &str) -> Result<usize> {
    schema
        .index_of(name)
        .ok_or_else(|| Error::Exec(format!("column '{name}' is missing from the operator input")))
}

fn embedding_at(row: &Row, idx: usize) -> Result<EmbeddingVector> {
    row[idx]
        .as_embedding()
        .cloned()
        .ok_or_else(|| Error::Exec("hidden embedding column holds no vector".into()))
}

/// Type-tagged grouping and join key; NULL never matches.
fn key_of(values: &[&Value]) -> Option<String> {
    let mut k = String::new();
    for v in values {
        match v {
            Value::Null => return None,
            Value::Text(s) => {
                let _ = write!(k, "t{}:{s}|", s.len());
            }
            Value::Number(n) => {
                let _ = write!(k, "n{n}|");
            }
            Value::Boolean(b) => {
                let _ = write!(k, "b{b}|");
            }
            Value::Embedding(_) => return None,
        }
    }
    Some(k)
}

fn concat(l: &Row, r: &Row) -> Row {
    let mut out = l.clone();
    out.extend(r.iter().cloned());
    out
}

impl Executor<'_> {
    fn site(&self, id: usize, name: &str) -> CallSite {
        CallSite {
            query_id: self.query_id.clone(),
            operator: format!("{id}:{name}"),
        }
    }

    fn warn(&mut self, msg: String) {
        self.warnings.push(msg);
    }

    /// Applies the row-error policy.
    fn row_error(&mut self, id: usize, msg: String) -> Result<()> {
        match self.config.row_error_policy {
            RowErrorPolicy::SkipAndWarn => {
                let name = self.metrics[id].name.clone();
                self.warn(format!("{id}:{name}: {msg}; row skipped"));
                Ok(())
            }
            RowErrorPolicy::Abort => Err(Error::Exec(msg)),
        }
    }

    fn run(&mut self, plan: &PhysicalPlan, depth: usize) -> Result<Relation> {
        let id = self.metrics.len();
        self.metrics.push(OperatorMetrics {
            id,
            depth,
            name: plan.op.name().to_string(),
            args: plan.op.args(),
            rows_out: 0,
            tokens: TokenVector::default(),
            requests: 0,
            wall_ms: 0.0,
        });
        let mut inputs = Vec::with_capacity(plan.children.len());
        for c in &plan.children {
            inputs.push(self.run(c, depth + 1)?);
        }
        let start = Instant::now();
        let rel = self.op(id, plan, inputs).map_err(|e| match e {
            e @ Error::Operator { .. } => e,
            e => Error::Operator {
                operator: format!("{id}:{}", plan.op.name()),
                plan_id: self.plan_id.clone(),
                source: Box::new(e),
            },
        })?;
        let m = &mut self.metrics[id];
        m.rows_out = rel.len();
        m.wall_ms = start.elapsed().as_secs_f64() * 1000.0;
        Ok(rel)
    }

    fn op(&mut self, id: usize, plan: &PhysicalPlan, mut inputs: Vec<Relation>) -> Result<Relation> {
        let schema = plan.schema.clone();
        let mut take = || inputs.remove(0);
        match &plan.op {
            PhysicalOp::TableScan { table, .. } => {
                let rel = self.catalog.scan_table(table)?;
                Relation::new(schema, rel.into_rows())
            }
            PhysicalOp::FileScan { file, .. } => Relation::new(schema, self.file_rows(file)?),
            PhysicalOp::DirectoryScan { directory, .. } => Relation::new(schema, self.directory_rows(directory)?),
            PhysicalOp::SemanticScan { source, spec, model, .. } => {
                let input = self.source_relation(source, spec.input.as_deref())?;
                let task = crate::physical::TransformTask::for_mode(spec.mode);
                self.transform(id, &schema, input, spec, task, model)
            }
            PhysicalOp::EmbeddingScan { columns, model } => {
                let input = take();
                let site = self.site(id, plan.op.name());
                let mut rows: Vec<Row> = input.rows().to_vec();
                for c in columns {
                    let idx = col(input.schema(), c)?;
                    let texts: Vec<String> = input.rows().iter().map(|r| text_of(&r[idx])).collect();
                    let vecs = self.embed_texts(&site, model, &texts)?;
                    for (row, v) in rows.iter_mut().zip(vecs) {
                        row.push(Value::Embedding(v));
                    }
                }
                Relation::new(schema, rows)
            }
            PhysicalOp::SemanticTransform { spec, task, model } => {
                let input = take();
                self.transform(id, &schema, input, spec, *task, model)
            }
            PhysicalOp::CodeExecution { spec, model } => {
                let input = take();
                self.code(id, &schema, input, spec, model)
            }
            PhysicalOp::TopKBySimilarity { column, query, k, model } => {
                let input = take();
                if input.is_empty() || *k == 0 {
                    return Ok(Relation::empty(schema));
                }
                let idx = col(input.schema(), &embedding_column(column))?;
                let vecs = input.rows().iter().map(|r| embedding_at(r, idx)).collect::<Result<Vec<_>>>()?;
                let site = self.site(id, plan.op.name());
                let q = self.embed_texts(&site, model, std::slice::from_ref(query))?.remove(0);
                let keep = vector::top_k(&vecs, &q, *k);
                let rows = keep.into_iter().map(|i| input.rows()[i].clone()).collect();
                Relation::new(schema, rows)
            }
            PhysicalOp::VectorJoin {
                kind,
                left,
                right,
                threshold,
            } => {
                let l = take();
                let r = take();
                let li = col(l.schema(), &embedding_column(left))?;
                let ri = col(r.schema(), &embedding_column(right))?;
                let lv = l.rows().iter().map(|x| embedding_at(x, li)).collect::<Result<Vec<_>>>()?;
                let rv = r.rows().iter().map(|x| embedding_at(x, ri)).collect::<Result<Vec<_>>>()?;
                let pairs = match kind {
                    VectorJoinKind::NestedLoop => vector::nested_loop(&lv, &rv, *threshold),
                    VectorJoinKind::Hash => vector::lsh_join(&lv, &rv, *threshold, self.config.seed),
                    VectorJoinKind::SortedMerge => vector::sorted_merge_join(&lv, &rv, *threshold, self.config.seed),
                };
                let rows = pairs.into_iter().map(|(i, j)| concat(&l.rows()[i], &r.rows()[j])).collect();
                Relation::new(schema, rows)
            }
            PhysicalOp::SemanticJoin {
                left,
                right,
                model,
                batch,
                ..
            } => {
                let l = take();
                let r = take();
                self.semantic_join(id, &schema, l, r, left, right, model, *batch)
            }
            PhysicalOp::HashJoinExact {
                left_keys,
                right_keys,
                residual,
            } => {
                let l = take();
                let r = take();
                let lk = left_keys.iter().map(|k| col(l.schema(), k)).collect::<Result<Vec<_>>>()?;
                let rk = right_keys.iter().map(|k| col(r.schema(), k)).collect::<Result<Vec<_>>>()?;
                let mut table: HashMap<String, Vec<usize>> = HashMap::new();
                for (j, row) in r.rows().iter().enumerate() {
                    if let Some(k) = key_of(&rk.iter().map(|i| &row[*i]).collect::<Vec<_>>()) {
                        table.entry(k).or_default().push(j);
                    }
                }
                let mut rows = Vec::new();
                for lrow in l.rows() {
                    let Some(k) = key_of(&lk.iter().map(|i| &lrow[*i]).collect::<Vec<_>>()) else {
                        continue;
                    };
                    for j in table.get(&k).into_iter().flatten() {
                        let joined = concat(lrow, &r.rows()[*j]);
                        if let Some(res) = residual {
                            if res.eval(&schema, &joined)?.truthy() != Some(true) {
                                continue;
                            }
                        }
                        rows.push(joined);
                    }
                }
                Relation::new(schema, rows)
            }
            PhysicalOp::NestedLoopJoinExact { predicate } => {
                let l = take();
                let r = take();
                let mut rows = Vec::new();
                for lrow in l.rows() {
                    for rrow in r.rows() {
                        let joined = concat(lrow, rrow);
                        if predicate.eval(&schema, &joined)?.truthy() == Some(true) {
                            rows.push(joined);
                        }
                    }
                }
                Relation::new(schema, rows)
            }
            PhysicalOp::SemanticCluster {
                target,
                prompt,
                k,
                out,
                model,
                embed_model,
            } => {
                let input = take();
                self.cluster(id, &schema, input, target, prompt, *k, out, model, embed_model)
            }
            PhysicalOp::HashAggregate { keys, aggregates } => aggregate(&schema, take(), keys, aggregates),
            PhysicalOp::Sort { keys } => {
                let input = take();
                let idx = keys.iter().map(|k| col(input.schema(), k)).collect::<Result<Vec<_>>>()?;
                let mut rows = input.into_rows();
                rows.sort_by(|a, b| {
                    idx.iter()
                        .map(|i| a[*i].total_cmp(&b[*i]))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                Relation::new(schema, rows)
            }
            PhysicalOp::SemanticFilter {
                predicate,
                model,
                batch,
            } => {
                let input = take();
                self.semantic_filter(id, &schema, input, predicate, model, *batch)
            }
            PhysicalOp::SimilarityFilter {
                left,
                right,
                threshold,
                model,
            } => {
                let input = take();
                let site = self.site(id, plan.op.name());
                let mut operand = |e: &ScalarExpr| -> Result<Vec<EmbeddingVector>> {
                    match e {
                        ScalarExpr::Column(c) => {
                            let idx = col(input.schema(), &embedding_column(c))?;
                            input.rows().iter().map(|r| embedding_at(r, idx)).collect()
                        }
                        ScalarExpr::Literal(v) if !input.is_empty() => {
                            let v = self.embed_texts(&site, model, &[text_of(v)])?.remove(0);
                            Ok(vec![v; input.len()])
                        }
                        ScalarExpr::Literal(_) => Ok(vec![]),
                        other => Err(Error::Exec(format!("cannot embed operand {other}"))),
                    }
                };
                let a = operand(left)?;
                let b = operand(right)?;
                let mut rows = Vec::new();
                for ((row, x), y) in input.rows().iter().zip(&a).zip(&b) {
                    if crate::relation::cosine_similarity(x, y)? >= *threshold - 1e-9 {
                        rows.push(row.clone());
                    }
                }
                Relation::new(schema, rows)
            }
            PhysicalOp::FilterExec { predicate } => {
                let input = take();
                let mut rows = Vec::new();
                for row in input.rows() {
                    if predicate.eval(input.schema(), row)?.truthy() == Some(true) {
                        rows.push(row.clone());
                    }
                }
                Relation::new(schema, rows)
            }
            PhysicalOp::ProjectExec { items } => {
                let input = take();
                let mut rows = Vec::with_capacity(input.len());
                for row in input.rows() {
                    let mut out = Vec::with_capacity(items.len());
                    for it in items {
                        out.push(it.expr.eval(input.schema(), row)?);
                    }
                    rows.push(out);
                }
                Relation::new(schema, rows)
            }
        }
    }

    fn file_rows(&self, file: &str) -> Result<Vec<Row>> {
        Ok(self
            .catalog
            .file_chunks(file)?
            .iter()
            .map(|c| vec![Value::Number(c.chunk_id as f64), Value::text(c.text.clone())])
            .collect())
    }

    fn directory_rows(&self, directory: &str) -> Result<Vec<Row>> {
        let mut rows = Vec::new();
        for (doc, chunks) in self.catalog.directory_chunks(directory)? {
            for c in chunks {
                rows.push(vec![
                    Value::text(doc),
                    Value::Number(c.chunk_id as f64),
                    Value::text(c.text.clone()),
                ]);
            }
        }
        Ok(rows)
    }

    /// Raw chunks of a source, with column names qualified like `input`.
    fn source_relation(&self, source: &crate::plan::ScanSource, input: Option<&str>) -> Result<Relation> {
        use crate::relation::{Column, DataType};
        let prefix = input
            .and_then(|i| i.strip_suffix("text"))
            .unwrap_or_default()
            .to_string();
        let name = |n: &str| format!("{prefix}{n}");
        match source {
            crate::plan::ScanSource::File { name: f } => {
                let schema = Schema::new(vec![
                    Column::new(name("chunk_id"), DataType::Number),
                    Column::new(name("text"), DataType::Text),
                ])?;
                Relation::new(schema, self.file_rows(f)?)
            }
            crate::plan::ScanSource::Directory { name: d } => {
                let schema = Schema::new(vec![
                    Column::new(name("doc_id"), DataType::Text),
                    Column::new(name("chunk_id"), DataType::Number),
                    Column::new(name("text"), DataType::Text),
                ])?;
                Relation::new(schema, self.directory_rows(d)?)
            }
            crate::plan::ScanSource::Table { name: t, .. } => self.catalog.scan_table(t),
        }
    }

    /// Embeds texts through the content-addressed cache: only distinct
    /// misses reach the model, in one call.
    fn embed_texts(&mut self, site: &CallSite, model: &str, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        use crate::storage::content_hash;
        let hashes: Vec<String> = texts.iter().map(|t| content_hash(model, t)).collect();
        let mut misses: Vec<String> = Vec::new();
        let mut miss_hashes: Vec<&String> = Vec::new();
        for (t, h) in texts.iter().zip(&hashes) {
            if self.catalog.embedding_get(h).is_none() && !miss_hashes.contains(&h) {
                misses.push(t.clone());
                miss_hashes.push(h);
            }
        }
        if !misses.is_empty() {
            let vecs = self.gateway.embed(site, model, &misses)?;
            for (h, v) in miss_hashes.iter().zip(vecs) {
                self.catalog.embedding_put(h, v)?;
            }
        }
        hashes
            .iter()
            .map(|h| {
                self.catalog
                    .embedding_get(h)
                    .ok_or_else(|| Error::Exec("embedding cache lost an entry".into()))
            })
            .collect()
    }

    /// Strips hidden columns and applies inferred names.
    fn finish(&self, rel: Relation) -> Result<Relation> {
        use crate::relation::Column;
        let visible = rel.visible();
        if self.renames.is_empty() {
            return Ok(visible);
        }
        let mut taken: Vec<String> = Vec::new();
        let mut cols = Vec::new();
        for c in visible.schema().columns() {
            let wanted = self.renames.get(&c.name).cloned().unwrap_or_else(|| c.name.clone());
            let mut name = wanted.clone();
            let mut n = 2;
            while taken.iter().any(|t| t.eq_ignore_ascii_case(&name))
                || (name != c.name
                    && visible
                        .schema()
                        .columns()
                        .iter()
                        .any(|o| o.name.eq_ignore_ascii_case(&name) && !self.renames.contains_key(&o.name)))
            {
                name = format!("{wanted}_{n}");
                n += 1;
            }
            taken.push(name.clone());
            cols.push(Column::new(name, c.data_type));
        }
        Relation::new(Schema::new(cols)?, visible.into_rows())
    }
}

fn aggregate(schema: &Schema, input: Relation, keys: &[String], aggs: &[Aggregate]) -> Result<Relation> {
    let key_idx = keys.iter().map(|k| col(input.schema(), k)).collect::<Result<Vec<_>>>()?;
    let arg_idx = aggs
        .iter()
        .map(|a| a.arg.as_ref().map(|c| col(input.schema(), c)).transpose())
        .collect::<Result<Vec<_>>>()?;
    // groups in first-appearance order; NULL keys form their own group
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (Row, Vec<usize>)> = HashMap::new();
    for (i, row) in input.rows().iter().enumerate() {
        let vals: Vec<&Value> = key_idx.iter().map(|k| &row[*k]).collect();
        let k = key_of(&vals).unwrap_or_else(|| format!("null:{}", vals.iter().map(|v| v.render()).collect::<Vec<_>>().join("|")));
        let e = groups.entry(k.clone()).or_insert_with(|| {
            order.push(k);
            (vals.iter().map(|v| (*v).clone()).collect(), Vec::new())
        });
        e.1.push(i);
    }
    if keys.is_empty() && order.is_empty() {
        order.push(String::new());
        groups.insert(String::new(), (vec![], vec![]));
    }
    let mut rows = Vec::with_capacity(order.len());
    for k in &order {
        let (key_vals, members) = &groups[k];
        let mut row = key_vals.clone();
        for (a, idx) in aggs.iter().zip(&arg_idx) {
            let vals: Vec<&Value> = match idx {
                Some(i) => members.iter().map(|m| &input.rows()[*m][*i]).filter(|v| !v.is_null()).collect(),
                None => vec![],
            };
            let v = match (a.func, idx) {
                (AggFunc::Count, None) => Value::Number(members.len() as f64),
                (AggFunc::Count, Some(_)) => Value::Number(vals.len() as f64),
                (_, None) => return Err(Error::Exec(format!("{}() needs a column", a.func.as_str()))),
                (AggFunc::Sum | AggFunc::Avg, Some(_)) => {
                    if vals.is_empty() {
                        Value::Null
                    } else {
                        let mut s = 0.0;
                        for v in &vals {
                            s += v
                                .as_number()
                                .ok_or_else(|| Error::Exec(format!("{}() over non-numeric value", a.func.as_str())))?;
                        }
                        if a.func == AggFunc::Avg {
                            s /= vals.len() as f64;
                        }
                        Value::number(s)?
                    }
                }
                (AggFunc::Min, Some(_)) => vals.iter().min_by(|x, y| x.total_cmp(y)).map(|v| (*v).clone()).unwrap_or(Value::Null),
                (AggFunc::Max, Some(_)) => vals.iter().max_by(|x, y| x.total_cmp(y)).map(|v| (*v).clone()).unwrap_or(Value::Null),
            };
            row.push(v);
        }
        rows.push(row);
    }
    Relation::new(schema.clone(), rows)
}
