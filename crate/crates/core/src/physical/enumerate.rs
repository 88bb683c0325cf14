use std::collections::{BTreeMap, VecDeque};

use super::*;
use crate::error::{Error, Result};
use crate::plan::{GroupKey, LogicalNode, LogicalPlan, TransformColumn, TransformMode};
use crate::relation::{Column, DataType};
use crate::sql::ast::{BinaryOp, MatchMethod};

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub max_plans: usize,
    /// Completion models offered to every semantic operator.
    pub completion_models: Vec<String>,
    pub embedding_model: String,
    /// Retrieval depth of the RAG path.
    pub topk: usize,
    pub judge_batch: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            max_plans: 64,
            completion_models: vec!["llm-small".into(), "llm-large".into()],
            embedding_model: "embed-small".into(),
            topk: 8,
            judge_batch: 16,
        }
    }
}

const NORMALIZE_PROMPT: &str = "Rewrite the value into a canonical form so that values naming the same concept are spelled identically";

/// Plan id with model choices masked; plans sharing a shape differ only in
/// which model serves each operator.
fn shape_of(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    let mut rest = id;
    while let Some(i) = rest.find("model=") {
        out.push_str(&rest[..i + 6]);
        out.push('*');
        rest = &rest[i + 6..];
        let end = rest.find([',', '}', ';', ')']).unwrap_or(rest.len());
        rest = &rest[end..];
    }
    out.push_str(rest);
    out
}

/// Drops duplicate plans and keeps at most `max`, taking plans round-robin
/// across shapes so the cap removes model variants before it removes
/// strategies. Deterministic; the result is ordered by plan id.
fn prune(plans: Vec<PhysicalPlan>, max: usize) -> Vec<PhysicalPlan> {
    let mut keyed: Vec<(String, PhysicalPlan)> = plans.into_iter().map(|p| (p.plan_id(), p)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    if keyed.len() > max {
        let mut groups: BTreeMap<String, VecDeque<(String, PhysicalPlan)>> = BTreeMap::new();
        for (id, p) in keyed {
            groups.entry(shape_of(&id)).or_default().push_back((id, p));
        }
        let mut kept = Vec::with_capacity(max);
        while kept.len() < max {
            for g in groups.values_mut() {
                if kept.len() < max {
                    if let Some(x) = g.pop_front() {
                        kept.push(x);
                    }
                }
            }
        }
        kept.sort_by(|a, b| a.0.cmp(&b.0));
        keyed = kept;
    }
    keyed.into_iter().map(|(_, p)| p).collect()
}

fn embedding_scan(child: PhysicalPlan, columns: &[String], model: &str) -> Result<PhysicalPlan> {
    let mut schema = child.schema.clone();
    let mut cols = Vec::new();
    for c in columns {
        let name = embedding_column(c);
        if schema.index_of(&name).is_none() {
            schema = schema.with_column(Column::hidden(name, DataType::Embedding))?;
            cols.push(c.clone());
        }
    }
    if cols.is_empty() {
        return Ok(child);
    }
    Ok(PhysicalPlan::new(
        PhysicalOp::EmbeddingScan {
            columns: cols,
            model: model.to_string(),
        },
        vec![child],
        schema,
    ))
}

fn classic_scan(node: &LogicalPlan) -> Result<PhysicalPlan> {
    let LogicalNode::Scan { source, stats, .. } = &node.node else {
        return Err(Error::Plan("expected a scan".into()));
    };
    let op = match source {
        ScanSource::Table { name, .. } => PhysicalOp::TableScan {
            table: name.clone(),
            stats: *stats,
        },
        ScanSource::File { name } => PhysicalOp::FileScan {
            file: name.clone(),
            stats: *stats,
        },
        ScanSource::Directory { name } => PhysicalOp::DirectoryScan {
            directory: name.clone(),
            stats: *stats,
        },
    };
    Ok(PhysicalPlan::new(op, vec![], node.schema.clone()))
}

struct Enumerator<'a> {
    cfg: &'a PlannerConfig,
}

impl Enumerator<'_> {
    fn node(&self, l: &LogicalPlan) -> Result<Vec<PhysicalPlan>> {
        let plans = match &l.node {
            LogicalNode::Scan { source, .. } => {
                let scan = classic_scan(l)?;
                if source.is_unstructured() {
                    let text = l
                        .schema
                        .columns()
                        .iter()
                        .find(|c| c.name == "text" || c.name.ends_with(".text"))
                        .map(|c| c.name.clone())
                        .ok_or_else(|| Error::Plan("unstructured scan without text column".into()))?;
                    let emb = embedding_scan(scan.clone(), &[text], &self.cfg.embedding_model)?;
                    vec![scan, emb]
                } else {
                    vec![scan]
                }
            }
            LogicalNode::Transform(spec) => self.transform(l, spec)?,
            LogicalNode::Join { predicate } => {
                let left = self.node(&l.children[0])?;
                let right = self.node(&l.children[1])?;
                let mut out = Vec::new();
                for a in &left {
                    for b in &right {
                        out.extend(self.join(predicate, a, b)?);
                    }
                }
                out
            }
            LogicalNode::Filter { predicate, semantic } => {
                let mut out = Vec::new();
                for c in self.node(&l.children[0])? {
                    if *semantic {
                        out.extend(self.semantic_filter(predicate, c)?);
                    } else {
                        let schema = c.schema.clone();
                        out.push(PhysicalPlan::new(
                            PhysicalOp::FilterExec {
                                predicate: predicate.clone(),
                            },
                            vec![c],
                            schema,
                        ));
                    }
                }
                out
            }
            LogicalNode::Group { keys, aggregates } => {
                let mut out = Vec::new();
                for c in self.node(&l.children[0])? {
                    out.extend(self.group(l, keys, aggregates, c)?);
                }
                out
            }
            LogicalNode::Project { items } => self
                .node(&l.children[0])?
                .into_iter()
                .map(|c| PhysicalPlan::new(PhysicalOp::ProjectExec { items: items.clone() }, vec![c], l.schema.clone()))
                .collect(),
        };
        if plans.is_empty() {
            return Err(Error::Plan(format!("no physical alternative for {}", l.node.name())));
        }
        Ok(prune(plans, self.cfg.max_plans))
    }

    fn transform(&self, l: &LogicalPlan, spec: &TransformSpec) -> Result<Vec<PhysicalPlan>> {
        let child = &l.children[0];
        let task = TransformTask::for_mode(spec.mode);
        let codegen = spec.is_declared() && spec.mode != TransformMode::Synthesize;
        let mut out = Vec::new();
        let unstructured = match &child.node {
            LogicalNode::Scan { source, stats, .. } if source.is_unstructured() => Some((source, stats)),
            _ => None,
        };
        if let Some((source, stats)) = unstructured {
            let scan = classic_scan(child)?;
            for m in &self.cfg.completion_models {
                out.push(PhysicalPlan::new(
                    PhysicalOp::SemanticScan {
                        source: source.clone(),
                        stats: *stats,
                        spec: spec.clone(),
                        model: m.clone(),
                    },
                    vec![],
                    l.schema.clone(),
                ));
                out.push(PhysicalPlan::new(
                    PhysicalOp::SemanticTransform {
                        spec: spec.clone(),
                        task,
                        model: m.clone(),
                    },
                    vec![scan.clone()],
                    l.schema.clone(),
                ));
                if codegen {
                    out.push(PhysicalPlan::new(
                        PhysicalOp::CodeExecution {
                            spec: spec.clone(),
                            model: m.clone(),
                        },
                        vec![scan.clone()],
                        l.schema.clone(),
                    ));
                }
                if spec.mode == TransformMode::Synthesize {
                    let text = spec
                        .input
                        .clone()
                        .ok_or_else(|| Error::Plan("synthesis needs an input column".into()))?;
                    let emb = embedding_scan(scan.clone(), std::slice::from_ref(&text), &self.cfg.embedding_model)?;
                    let schema = emb.schema.clone();
                    let query = spec.columns.iter().map(|c| c.prompt.as_str()).collect::<Vec<_>>().join(" ");
                    let topk = PhysicalPlan::new(
                        PhysicalOp::TopKBySimilarity {
                            column: text,
                            query,
                            k: self.cfg.topk,
                            model: self.cfg.embedding_model.clone(),
                        },
                        vec![emb],
                        schema,
                    );
                    out.push(PhysicalPlan::new(
                        PhysicalOp::SemanticTransform {
                            spec: spec.clone(),
                            task,
                            model: m.clone(),
                        },
                        vec![topk],
                        l.schema.clone(),
                    ));
                }
            }
            return Ok(out);
        }
        for c in self.node(child)? {
            let schema = spec.output_schema(&c.schema)?;
            for m in &self.cfg.completion_models {
                out.push(PhysicalPlan::new(
                    PhysicalOp::SemanticTransform {
                        spec: spec.clone(),
                        task,
                        model: m.clone(),
                    },
                    vec![c.clone()],
                    schema.clone(),
                ));
                if codegen {
                    out.push(PhysicalPlan::new(
                        PhysicalOp::CodeExecution {
                            spec: spec.clone(),
                            model: m.clone(),
                        },
                        vec![c.clone()],
                        schema.clone(),
                    ));
                }
            }
        }
        Ok(out)
    }

    fn join(&self, predicate: &ScalarExpr, left: &PhysicalPlan, right: &PhysicalPlan) -> Result<Vec<PhysicalPlan>> {
        let mut out = Vec::new();
        if let ScalarExpr::SemMatch { method, threshold, .. } = predicate {
            let (lcol, rcol) = match_columns(predicate, left, right)?;
            if *method != Some(MatchMethod::Llm) {
                let l = embedding_scan(left.clone(), std::slice::from_ref(&lcol), &self.cfg.embedding_model)?;
                let r = embedding_scan(right.clone(), std::slice::from_ref(&rcol), &self.cfg.embedding_model)?;
                let schema = l.schema.join(&r.schema)?;
                for kind in [VectorJoinKind::NestedLoop, VectorJoinKind::Hash, VectorJoinKind::SortedMerge] {
                    out.push(PhysicalPlan::new(
                        PhysicalOp::VectorJoin {
                            kind,
                            left: lcol.clone(),
                            right: rcol.clone(),
                            threshold: *threshold,
                        },
                        vec![l.clone(), r.clone()],
                        schema.clone(),
                    ));
                }
            }
            if *method != Some(MatchMethod::Vector) {
                let schema = left.schema.join(&right.schema)?;
                for m in &self.cfg.completion_models {
                    out.push(PhysicalPlan::new(
                        PhysicalOp::SemanticJoin {
                            left: lcol.clone(),
                            right: rcol.clone(),
                            predicate: predicate.clone(),
                            model: m.clone(),
                            batch: self.cfg.judge_batch,
                        },
                        vec![left.clone(), right.clone()],
                        schema.clone(),
                    ));
                    out.push(rewrite_join_via_transform(predicate, left.clone(), right.clone(), m)?);
                }
            }
            return Ok(out);
        }
        if predicate.is_semantic() {
            return Err(Error::Plan(format!("unsupported semantic join condition {predicate}")));
        }
        let schema = left.schema.join(&right.schema)?;
        let (lk, rk, rest) = equi_keys(predicate, left, right);
        if !lk.is_empty() {
            out.push(PhysicalPlan::new(
                PhysicalOp::HashJoinExact {
                    left_keys: lk,
                    right_keys: rk,
                    residual: ScalarExpr::and_all(rest),
                },
                vec![left.clone(), right.clone()],
                schema.clone(),
            ));
        }
        out.push(PhysicalPlan::new(
            PhysicalOp::NestedLoopJoinExact {
                predicate: predicate.clone(),
            },
            vec![left.clone(), right.clone()],
            schema,
        ));
        Ok(out)
    }

    fn semantic_filter(&self, predicate: &ScalarExpr, child: PhysicalPlan) -> Result<Vec<PhysicalPlan>> {
        let mut out = Vec::new();
        let method = match predicate {
            ScalarExpr::SemMatch { method, .. } => *method,
            _ => None,
        };
        if method != Some(MatchMethod::Vector) || !matches!(predicate, ScalarExpr::SemMatch { .. }) {
            for m in &self.cfg.completion_models {
                out.push(PhysicalPlan::new(
                    PhysicalOp::SemanticFilter {
                        predicate: predicate.clone(),
                        model: m.clone(),
                        batch: self.cfg.judge_batch,
                    },
                    vec![child.clone()],
                    child.schema.clone(),
                ));
            }
        }
        if let ScalarExpr::SemMatch {
            left,
            right,
            threshold,
            method,
        } = predicate
        {
            let operand = |e: &ScalarExpr| matches!(e, ScalarExpr::Column(_) | ScalarExpr::Literal(crate::Value::Text(_)));
            if *method != Some(MatchMethod::Llm) && operand(left) && operand(right) {
                let cols: Vec<String> = [left, right].iter().filter_map(|e| e.as_column().map(str::to_string)).collect();
                let emb = embedding_scan(child.clone(), &cols, &self.cfg.embedding_model)?;
                let schema = emb.schema.clone();
                out.push(PhysicalPlan::new(
                    PhysicalOp::SimilarityFilter {
                        left: (**left).clone(),
                        right: (**right).clone(),
                        threshold: *threshold,
                        model: self.cfg.embedding_model.clone(),
                    },
                    vec![emb],
                    schema,
                ));
            }
        }
        if out.is_empty() {
            return Err(Error::Plan(format!("no physical operator for semantic predicate {predicate}")));
        }
        Ok(out)
    }

    fn group(
        &self,
        l: &LogicalPlan,
        keys: &[GroupKey],
        aggregates: &[Aggregate],
        child: PhysicalPlan,
    ) -> Result<Vec<PhysicalPlan>> {
        let mut partial = vec![child];
        for key in keys {
            let GroupKey::Semantic { target, prompt, k, out } = key else {
                continue;
            };
            let mut next = Vec::new();
            for p in &partial {
                let label_schema = |s: &Schema| -> Result<Schema> {
                    match s.index_of(out) {
                        Some(_) => Ok(s.clone()),
                        None => s.with_column(Column::new(out.clone(), DataType::Text)),
                    }
                };
                let schema = label_schema(&p.schema)?;
                for m in &self.cfg.completion_models {
                    next.push(PhysicalPlan::new(
                        PhysicalOp::SemanticCluster {
                            target: target.clone(),
                            prompt: prompt.clone(),
                            k: *k,
                            out: out.clone(),
                            model: m.clone(),
                            embed_model: self.cfg.embedding_model.clone(),
                        },
                        vec![p.clone()],
                        schema.clone(),
                    ));
                    let spec = TransformSpec {
                        mode: TransformMode::Map,
                        columns: vec![TransformColumn {
                            name: out.clone(),
                            field: Some(out.clone()),
                            prompt: prompt.clone(),
                            hidden: false,
                        }],
                        input: Some(target.clone()),
                    };
                    next.push(PhysicalPlan::new(
                        PhysicalOp::SemanticTransform {
                            spec,
                            task: TransformTask::Classify,
                            model: m.clone(),
                        },
                        vec![p.clone()],
                        schema.clone(),
                    ));
                }
            }
            partial = prune(next, self.cfg.max_plans);
        }
        let key_names: Vec<String> = keys.iter().map(|k| k.output_name().to_string()).collect();
        Ok(partial
            .into_iter()
            .map(|p| {
                PhysicalPlan::new(
                    PhysicalOp::HashAggregate {
                        keys: key_names.clone(),
                        aggregates: aggregates.to_vec(),
                    },
                    vec![p],
                    l.schema.clone(),
                )
            })
            .collect())
    }
}

/// Orients the columns of a SEM_MATCH join condition as (left, right).
fn match_columns(predicate: &ScalarExpr, left: &PhysicalPlan, right: &PhysicalPlan) -> Result<(String, String)> {
    let ScalarExpr::SemMatch { left: a, right: b, .. } = predicate else {
        return Err(Error::Plan("expected SEM_MATCH".into()));
    };
    let (Some(a), Some(b)) = (a.as_column(), b.as_column()) else {
        return Err(Error::Plan("a SEM_MATCH join condition must compare two columns".into()));
    };
    let has = |p: &PhysicalPlan, c: &str| p.schema.index_of(c).is_some();
    if has(left, a) && has(right, b) {
        Ok((a.to_string(), b.to_string()))
    } else if has(left, b) && has(right, a) {
        Ok((b.to_string(), a.to_string()))
    } else {
        Err(Error::Plan("a SEM_MATCH join condition needs one column from each side".into()))
    }
}

/// Splits `l = r` conjuncts that compare one column of each side.
fn equi_keys(predicate: &ScalarExpr, left: &PhysicalPlan, right: &PhysicalPlan) -> (Vec<String>, Vec<String>, Vec<ScalarExpr>) {
    let (mut lk, mut rk, mut rest) = (Vec::new(), Vec::new(), Vec::new());
    for c in predicate.clone().conjuncts() {
        if let ScalarExpr::Binary {
            op: BinaryOp::Eq,
            left: a,
            right: b,
        } = &c
        {
            if let (Some(a), Some(b)) = (a.as_column(), b.as_column()) {
                let (la, rb) = (left.schema.index_of(a).is_some(), right.schema.index_of(b).is_some());
                let (lb, ra) = (left.schema.index_of(b).is_some(), right.schema.index_of(a).is_some());
                if la && rb {
                    lk.push(a.to_string());
                    rk.push(b.to_string());
                    continue;
                } else if lb && ra {
                    lk.push(b.to_string());
                    rk.push(a.to_string());
                    continue;
                }
            }
        }
        rest.push(c);
    }
    (lk, rk, rest)
}

/// Plan A style join: both sides are normalised by a SemanticTransform into
/// a hidden canonical column, then joined exactly.
pub fn rewrite_join_via_transform(
    predicate: &ScalarExpr,
    left: PhysicalPlan,
    right: PhysicalPlan,
    model: &str,
) -> Result<PhysicalPlan> {
    let (lcol, rcol) = match_columns(predicate, &left, &right)?;
    let normalize = |child: PhysicalPlan, col: &str| -> Result<PhysicalPlan> {
        let spec = TransformSpec {
            mode: TransformMode::Map,
            columns: vec![TransformColumn {
                name: normalized_column(col),
                field: Some("canonical".into()),
                prompt: NORMALIZE_PROMPT.into(),
                hidden: true,
            }],
            input: Some(col.to_string()),
        };
        let schema = spec.output_schema(&child.schema)?;
        Ok(PhysicalPlan::new(
            PhysicalOp::SemanticTransform {
                spec,
                task: TransformTask::Normalize,
                model: model.to_string(),
            },
            vec![child],
            schema,
        ))
    };
    let l = normalize(left, &lcol)?;
    let r = normalize(right, &rcol)?;
    let schema = l.schema.join(&r.schema)?;
    Ok(PhysicalPlan::new(
        PhysicalOp::HashJoinExact {
            left_keys: vec![normalized_column(&lcol)],
            right_keys: vec![normalized_column(&rcol)],
            residual: None,
        },
        vec![l, r],
        schema,
    ))
}

/// All physical realisations of a logical plan, ordered by plan id, at
/// most `max_plans` of them.
pub fn enumerate_plans(logical: &LogicalPlan, cfg: &PlannerConfig) -> Result<Vec<PhysicalPlan>> {
    if cfg.completion_models.is_empty() {
        return Err(Error::Plan("no completion models to plan with".into()));
    }
    Enumerator { cfg }.node(logical)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{bind, build_logical_plan};
    use crate::sql::parse;
    use crate::storage::{Catalog, ChunkParams};

    const SCENARIO_2: &str = r#"SELECT t24.area, count(*) AS count FROM
  TABULAR(PROMPT("research area") AS area, PROMPT("title") AS title FROM FILE("a.txt")) AS t24
  JOIN TABULAR(PROMPT("research area") AS area FROM FILE("b.txt")) AS t23
  ON SEM_MATCH(t24.area, t23.area, 0.9)
GROUP BY t24.area"#;

    fn plans(sql: &str, max: usize) -> Vec<PhysicalPlan> {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "Attention Is All You Need\n").unwrap();
        let mut cat = Catalog::in_memory();
        cat.register_file("a.txt", dir.path().join("a.txt"), ChunkParams::default()).unwrap();
        cat.register_file("b.txt", dir.path().join("a.txt"), ChunkParams::default()).unwrap();
        let schema = crate::storage::schema_from_defs(&[("a".into(), "INT".into()), ("b".into(), "INT".into())]).unwrap();
        cat.create_table("t", schema.clone()).unwrap();
        cat.create_table("u", schema).unwrap();
        let b = bind(&parse(sql).unwrap(), sql, &cat).unwrap();
        let l = build_logical_plan(&b).unwrap();
        let cfg = PlannerConfig {
            max_plans: max,
            ..PlannerConfig::default()
        };
        enumerate_plans(&l, &cfg).unwrap()
    }

    #[test]
    fn scenario_two_has_both_figure_shapes() {
        let all = plans(SCENARIO_2, 10_000);
        // 6 realisations per TABULAR branch, 3 vector joins + 2 x (judge, rewrite).
        assert_eq!(all.len(), 6 * 6 * 7);
        let plan_a = all.iter().any(|p| p.contains("HashJoinExact") && p.contains("SemanticTransform"));
        let plan_b = all.iter().any(|p| p.contains("EmbeddingScan") && p.contains("HashJoinVec"));
        assert!(plan_a && plan_b);
        let capped = plans(SCENARIO_2, 64);
        assert_eq!(capped.len(), 64);
        let ids: Vec<String> = capped.iter().map(PhysicalPlan::plan_id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(ids, sorted);
        let shapes: std::collections::BTreeSet<String> = all.iter().map(|p| shape_of(&p.plan_id())).collect();
        let kept: std::collections::BTreeSet<String> = capped.iter().map(|p| shape_of(&p.plan_id())).collect();
        assert!(shapes.len() <= 64);
        assert_eq!(kept, shapes);
        assert!(capped.iter().any(|p| p.contains("HashJoinVec")));
    }

    #[test]
    fn shape_masks_model_names_only() {
        assert_eq!(
            shape_of("A{x,model=llm-small}(B{model=m2})"),
            "A{x,model=*}(B{model=*})"
        );
        assert_eq!(shape_of("FileScan{f}"), "FileScan{f}");
    }

    #[test]
    fn statement_a_has_whole_file_and_rag_plans() {
        let sql = r#"SELECT PROMPT("Analyze technical areas") FROM FILE("a.txt")"#;
        let all = plans(sql, 64);
        assert!(all.iter().any(|p| p.contains("TopKBySimilarity")));
        assert!(all.iter().any(|p| !p.contains("TopKBySimilarity") && !p.contains("EmbeddingScan")));
        assert!(!all.iter().any(|p| p.contains("CodeExecution")));
    }

    #[test]
    fn classic_plans_only_for_classic_queries() {
        let all = plans("SELECT t.a, u.b FROM t JOIN u ON t.a = u.a WHERE t.b > 1", 64);
        let names: Vec<&str> = all.iter().map(|p| p.children[0].children[0].op.name()).collect();
        assert_eq!(names, vec!["HashJoinExact", "NestedLoopJoinExact"]);
        assert!(all.iter().all(|p| p.nodes().iter().all(|n| !n.op.is_semantic())));
        assert_eq!(plans("SELECT a FROM t", 64).len(), 1);
    }

    #[test]
    fn unstructured_scans_have_alternatives() {
        assert!(plans(r#"SELECT text FROM FILE("a.txt")"#, 64).len() >= 2);
    }

    #[test]
    fn semantic_group_offers_cluster_and_classify() {
        let sql = r#"SELECT count(area), SEM_GROUP(title, "Area", 5) AS area FROM TABULAR(PROMPT("t") AS title FROM FILE("a.txt")) GROUP BY area"#;
        let all = plans(sql, 1000);
        assert!(all.iter().any(|p| p.contains("SemanticCluster")));
        assert!(all.iter().any(|p| p.nodes().iter().any(|n| matches!(
            n.op,
            PhysicalOp::SemanticTransform {
                task: TransformTask::Classify,
                ..
            }
        ))));
        assert_eq!(all.len(), 6 * 4);
    }

    #[test]
    fn match_method_restricts_alternatives() {
        let sql = r#"SELECT title FROM TABULAR(PROMPT("t") AS title FROM FILE("a.txt")) WHERE SEM_MATCH(title, "x", 0.5, vector)"#;
        assert!(plans(sql, 1000).iter().all(|p| !p.contains("SemanticFilter")));
        let sql = r#"SELECT title FROM TABULAR(PROMPT("t") AS title FROM FILE("a.txt")) WHERE SEM_MATCH(title, "x", 0.5, llm)"#;
        assert!(plans(sql, 1000).iter().all(|p| !p.contains("SimilarityFilter")));
    }

    #[test]
    fn every_schema_keeps_the_logical_visible_columns() {
        let all = plans(SCENARIO_2, 10_000);
        for p in &all {
            let visible: Vec<&str> = p
                .schema
                .columns()
                .iter()
                .filter(|c| !c.hidden)
                .map(|c| c.name.as_str())
                .collect();
            assert_eq!(visible, vec!["area", "count"], "{}", p.plan_id());
        }
    }
}
