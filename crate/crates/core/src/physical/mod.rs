//! Physical operators and plan enumeration.
//!
//! Each logical node expands into one or more physical realisations (model
//! backed or classic), and the Cartesian product of per-node choices forms
//! the candidate set handed to the optimizer. Plans are identified by a
//! canonical `plan_id` string, which also breaks cost ties.

mod enumerate;

use std::fmt::Write as _;

pub use enumerate::{enumerate_plans, rewrite_join_via_transform, PlannerConfig};

use crate::cost::{Gamma, TokenVector};
use crate::plan::{Aggregate, ProjectItem, ScalarExpr, ScanSource, TransformSpec};
use crate::relation::Schema;
use crate::storage::SourceStats;

/// What a SemanticTransform asks the model to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformTask {
    Extract,
    Synthesize,
    Map,
    /// Assigns each value a group label.
    Classify,
    /// Rewrites each value into a canonical spelling.
    Normalize,
}

impl TransformTask {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformTask::Extract => "extract",
            TransformTask::Synthesize => "synthesize",
            TransformTask::Map => "map",
            TransformTask::Classify => "classify",
            TransformTask::Normalize => "normalize",
        }
    }

    pub fn for_mode(mode: crate::plan::TransformMode) -> TransformTask {
        match mode {
            crate::plan::TransformMode::Extract => TransformTask::Extract,
            crate::plan::TransformMode::Synthesize => TransformTask::Synthesize,
            crate::plan::TransformMode::Map => TransformTask::Map,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VectorJoinKind {
    NestedLoop,
    Hash,
    SortedMerge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhysicalOp {
    TableScan {
        table: String,
        stats: SourceStats,
    },
    FileScan {
        file: String,
        stats: SourceStats,
    },
    DirectoryScan {
        directory: String,
        stats: SourceStats,
    },
    /// Reads chunks and transforms them in one operator.
    SemanticScan {
        source: ScanSource,
        stats: SourceStats,
        spec: TransformSpec,
        model: String,
    },
    /// Appends a hidden `__emb_<col>` vector column per text column.
    EmbeddingScan {
        columns: Vec<String>,
        model: String,
    },
    SemanticTransform {
        spec: TransformSpec,
        task: TransformTask,
        model: String,
    },
    CodeExecution {
        spec: TransformSpec,
        model: String,
    },
    /// Keeps the k rows most similar to `query`, in input order.
    TopKBySimilarity {
        column: String,
        query: String,
        k: usize,
        model: String,
    },
    VectorJoin {
        kind: VectorJoinKind,
        left: String,
        right: String,
        threshold: f64,
    },
    SemanticJoin {
        left: String,
        right: String,
        predicate: ScalarExpr,
        model: String,
        batch: usize,
    },
    HashJoinExact {
        left_keys: Vec<String>,
        right_keys: Vec<String>,
        residual: Option<ScalarExpr>,
    },
    NestedLoopJoinExact {
        predicate: ScalarExpr,
    },
    /// Embeds `target`, clusters with k-means and names every cluster; the
    /// label lands in `out`.
    SemanticCluster {
        target: String,
        prompt: String,
        k: Option<u32>,
        out: String,
        model: String,
        embed_model: String,
    },
    HashAggregate {
        keys: Vec<String>,
        aggregates: Vec<Aggregate>,
    },
    Sort {
        keys: Vec<String>,
    },
    SemanticFilter {
        predicate: ScalarExpr,
        model: String,
        batch: usize,
    },
    /// SEM_MATCH evaluated on embeddings of its operands.
    SimilarityFilter {
        left: ScalarExpr,
        right: ScalarExpr,
        threshold: f64,
        model: String,
    },
    FilterExec {
        predicate: ScalarExpr,
    },
    ProjectExec {
        items: Vec<ProjectItem>,
    },
}

/// Name of the hidden vector column for a text column.
pub fn embedding_column(column: &str) -> String {
    format!("__emb_{column}")
}

/// Name of the hidden canonical-form column used by the join rewrite.
pub fn normalized_column(column: &str) -> String {
    format!("__norm_{column}")
}

fn fmt_threshold(t: f64) -> String {
    crate::relation::format_number(t)
}

impl PhysicalOp {
    pub fn name(&self) -> &'static str {
        match self {
            PhysicalOp::TableScan { .. } => "TableScan",
            PhysicalOp::FileScan { .. } => "FileScan",
            PhysicalOp::DirectoryScan { .. } => "DirectoryScan",
            PhysicalOp::SemanticScan { .. } => "SemanticScan",
            PhysicalOp::EmbeddingScan { .. } => "EmbeddingScan",
            PhysicalOp::SemanticTransform { .. } => "SemanticTransform",
            PhysicalOp::CodeExecution { .. } => "CodeExecution",
            PhysicalOp::TopKBySimilarity { .. } => "TopKBySimilarity",
            PhysicalOp::VectorJoin {
                kind: VectorJoinKind::NestedLoop,
                ..
            } => "NestedLoopJoinVec",
            PhysicalOp::VectorJoin {
                kind: VectorJoinKind::Hash, ..
            } => "HashJoinVec",
            PhysicalOp::VectorJoin {
                kind: VectorJoinKind::SortedMerge,
                ..
            } => "SortedMergeJoinVec",
            PhysicalOp::SemanticJoin { .. } => "SemanticJoin",
            PhysicalOp::HashJoinExact { .. } => "HashJoinExact",
            PhysicalOp::NestedLoopJoinExact { .. } => "NestedLoopJoinExact",
            PhysicalOp::SemanticCluster { .. } => "SemanticCluster",
            PhysicalOp::HashAggregate { .. } => "HashAggregate",
            PhysicalOp::Sort { .. } => "Sort",
            PhysicalOp::SemanticFilter { .. } => "SemanticFilter",
            PhysicalOp::SimilarityFilter { .. } => "SimilarityFilter",
            PhysicalOp::FilterExec { .. } => "FilterExec",
            PhysicalOp::ProjectExec { .. } => "ProjectExec",
        }
    }

    /// Completion models this operator calls.
    pub fn completion_model(&self) -> Option<&str> {
        match self {
            PhysicalOp::SemanticScan { model, .. }
            | PhysicalOp::SemanticTransform { model, .. }
            | PhysicalOp::CodeExecution { model, .. }
            | PhysicalOp::SemanticJoin { model, .. }
            | PhysicalOp::SemanticCluster { model, .. }
            | PhysicalOp::SemanticFilter { model, .. } => Some(model),
            _ => None,
        }
    }

    /// Embedding model this operator calls.
    pub fn embedding_model(&self) -> Option<&str> {
        match self {
            PhysicalOp::EmbeddingScan { model, .. }
            | PhysicalOp::TopKBySimilarity { model, .. }
            | PhysicalOp::SimilarityFilter { model, .. } => Some(model),
            PhysicalOp::SemanticCluster { embed_model, .. } => Some(embed_model),
            _ => None,
        }
    }

    pub fn is_semantic(&self) -> bool {
        self.completion_model().is_some() || self.embedding_model().is_some()
    }

    /// Deterministic argument list used in plan ids and EXPLAIN.
    pub fn args(&self) -> String {
        let cols = |spec: &TransformSpec| {
            spec.columns
                .iter()
                .map(|c| c.name.clone())
                .collect::<Vec<_>>()
                .join(";")
        };
        match self {
            PhysicalOp::TableScan { table, .. } => table.clone(),
            PhysicalOp::FileScan { file, .. } => file.clone(),
            PhysicalOp::DirectoryScan { directory, .. } => directory.clone(),
            PhysicalOp::SemanticScan { source, spec, model, .. } => format!(
                "{},{},cols={},model={model}",
                source.name(),
                spec.mode.as_str(),
                cols(spec)
            ),
            PhysicalOp::EmbeddingScan { columns, model } => format!("cols={},model={model}", columns.join(";")),
            PhysicalOp::SemanticTransform { spec, task, model } => {
                format!("{},cols={},model={model}", task.as_str(), cols(spec))
            }
            PhysicalOp::CodeExecution { spec, model } => format!("cols={},model={model}", cols(spec)),
            PhysicalOp::TopKBySimilarity { column, k, .. } => format!("col={column},k={k}"),
            PhysicalOp::VectorJoin {
                left, right, threshold, ..
            } => format!("{left}~{right},thr={}", fmt_threshold(*threshold)),
            PhysicalOp::SemanticJoin { left, right, model, .. } => format!("{left}~{right},model={model}"),
            PhysicalOp::HashJoinExact {
                left_keys,
                right_keys,
                residual,
            } => {
                let keys: Vec<String> = left_keys.iter().zip(right_keys).map(|(l, r)| format!("{l}={r}")).collect();
                match residual {
                    Some(r) => format!("{},residual={r}", keys.join(";")),
                    None => keys.join(";"),
                }
            }
            PhysicalOp::NestedLoopJoinExact { predicate } => predicate.to_string(),
            PhysicalOp::SemanticCluster { target, out, k, model, .. } => format!(
                "{target}->{out},k={},model={model}",
                k.map(|k| k.to_string()).unwrap_or_else(|| "auto".into())
            ),
            PhysicalOp::HashAggregate { keys, aggregates } => {
                let a: Vec<String> = aggregates
                    .iter()
                    .map(|a| format!("{}({})", a.func.as_str(), a.arg.as_deref().unwrap_or("*")))
                    .collect();
                format!("keys={},aggs={}", keys.join(";"), a.join(";"))
            }
            PhysicalOp::Sort { keys } => keys.join(";"),
            PhysicalOp::SemanticFilter { predicate, model, .. } => format!("{predicate},model={model}"),
            PhysicalOp::SimilarityFilter {
                left, right, threshold, ..
            } => format!("{left}~{right},thr={}", fmt_threshold(*threshold)),
            PhysicalOp::FilterExec { predicate } => predicate.to_string(),
            PhysicalOp::ProjectExec { items } => items.iter().map(|i| i.name.clone()).collect::<Vec<_>>().join(";"),
        }
    }
}

/// Optimizer output attached to every node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotation {
    /// Estimated output rows.
    pub rows: f64,
    /// Estimated average characters per output row (visible columns).
    pub row_chars: f64,
    /// Estimated token use per model.
    pub usage: Vec<(String, TokenVector)>,
    /// Γ summed over `usage`.
    pub gamma: Option<Gamma>,
    /// Unweighted χ.
    pub chi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalPlan {
    pub op: PhysicalOp,
    pub children: Vec<PhysicalPlan>,
    /// Output schema including hidden columns.
    pub schema: Schema,
    pub ann: Annotation,
}

impl PhysicalPlan {
    pub fn new(op: PhysicalOp, children: Vec<PhysicalPlan>, schema: Schema) -> PhysicalPlan {
        PhysicalPlan {
            op,
            children,
            schema,
            ann: Annotation::default(),
        }
    }

    /// Canonical serialisation: `Name{args}(child,child)`.
    pub fn plan_id(&self) -> String {
        let mut s = String::new();
        self.write_id(&mut s);
        s
    }

    fn write_id(&self, s: &mut String) {
        s.push_str(self.op.name());
        let args = self.op.args();
        if !args.is_empty() {
            let _ = write!(s, "{{{args}}}");
        }
        if !self.children.is_empty() {
            s.push('(');
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                c.write_id(s);
            }
            s.push(')');
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(PhysicalPlan::node_count).sum::<usize>()
    }

    /// Pre-order traversal.
    pub fn nodes(&self) -> Vec<&PhysicalPlan> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.nodes());
        }
        out
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes().iter().any(|n| n.op.name() == name)
    }

    /// Indented tree, one node per line with its annotations.
    pub fn explain(&self) -> String {
        let mut out = String::new();
        self.explain_into(&mut out, 0);
        out
    }

    fn explain_into(&self, out: &mut String, depth: usize) {
        let _ = write!(out, "{:indent$}{}", "", self.op.name(), indent = depth * 2);
        let args = self.op.args();
        if !args.is_empty() {
            let _ = write!(out, " [{args}]");
        }
        let _ = write!(out, "  rows~{}", crate::relation::format_number(self.ann.rows.round()));
        for (m, t) in &self.ann.usage {
            let _ = write!(out, " tokens[{m}]={}/{}", t.t_input, t.t_output);
        }
        if let Some(g) = &self.ann.gamma {
            let _ = write!(out, " gamma={:.6}", g.total());
        }
        if self.ann.chi > 0.0 {
            let _ = write!(out, " chi={}", crate::relation::format_number(self.ann.chi));
        }
        out.push('\n');
        for c in &self.children {
            c.explain_into(out, depth + 1);
        }
    }
}
