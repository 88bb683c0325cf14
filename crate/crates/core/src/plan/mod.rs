//! Binding and logical planning.
//!
//! A placement-valid statement is bound against the catalog ([`bind`]),
//! lowered into an algorithm-agnostic operator tree ([`build_logical_plan`])
//! and summarised into the statement-wide [`PromptContext`] that every model
//! request later carries.

pub(crate) mod bind;
mod expr;

use std::fmt;

pub use bind::{bind, BoundItem, BoundSelect, BoundSource, SourceKind};
pub use expr::{ScalarExpr, SCALAR_FUNCTIONS};

use crate::relation::{Column, DataType, Schema};
use crate::sql::Clause;
use crate::storage::SourceStats;

/// How a Transform reshapes its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformMode {
    /// Each text row yields zero or more structured rows.
    Extract,
    /// All input rows are condensed into a single row.
    Synthesize,
    /// Each row gains one value per column; input columns are kept.
    Map,
}

impl TransformMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformMode::Extract => "extract",
            TransformMode::Synthesize => "synthesize",
            TransformMode::Map => "map",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformColumn {
    /// Internal column name in the plan.
    pub name: String,
    /// Field name used in prompts and model output; `None` until inferred.
    pub field: Option<String>,
    pub prompt: String,
    pub hidden: bool,
}

/// Output contract of a Transform.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub mode: TransformMode,
    pub columns: Vec<TransformColumn>,
    /// Column holding the text to transform; `None` means the whole row.
    pub input: Option<String>,
}

impl TransformSpec {
    pub fn is_inferred(&self) -> bool {
        self.columns.iter().any(|c| c.field.is_none())
    }

    pub fn is_declared(&self) -> bool {
        !self.is_inferred()
    }

    /// Output schema given the input schema. A Map column that already
    /// exists in the input replaces it in place.
    pub fn output_schema(&self, input: &Schema) -> crate::Result<Schema> {
        let mut cols: Vec<Column> = match self.mode {
            TransformMode::Map => input.columns().to_vec(),
            _ => Vec::new(),
        };
        for c in &self.columns {
            let col = if c.hidden {
                Column::hidden(c.name.clone(), DataType::Text)
            } else {
                Column::new(c.name.clone(), DataType::Text)
            };
            match cols.iter().position(|o| o.name.eq_ignore_ascii_case(&c.name)) {
                Some(i) if self.mode == TransformMode::Map => cols[i] = col,
                _ => cols.push(col),
            }
        }
        Schema::new(cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScanSource {
    Table { name: String, schema: Schema },
    File { name: String },
    Directory { name: String },
}

impl ScanSource {
    pub fn name(&self) -> &str {
        match self {
            ScanSource::Table { name, .. } | ScanSource::File { name } | ScanSource::Directory { name } => name,
        }
    }

    pub fn is_unstructured(&self) -> bool {
        !matches!(self, ScanSource::Table { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupKey {
    Column {
        column: String,
    },
    /// Grouping realised by a model: rows are grouped by a label derived
    /// from `target`. When `out == target` the label replaces the value.
    Semantic {
        target: String,
        prompt: String,
        k: Option<u32>,
        out: String,
    },
}

impl GroupKey {
    pub fn output_name(&self) -> &str {
        match self {
            GroupKey::Column { column } => column,
            GroupKey::Semantic { out, .. } => out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn parse(name: &str) -> Option<AggFunc> {
        Some(match name.to_ascii_lowercase().as_str() {
            "count" => AggFunc::Count,
            "sum" => AggFunc::Sum,
            "avg" => AggFunc::Avg,
            "min" => AggFunc::Min,
            "max" => AggFunc::Max,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub func: AggFunc,
    /// `None` for `count(*)` and `count(<literal>)`.
    pub arg: Option<String>,
    pub out: String,
    pub hidden: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectItem {
    pub expr: ScalarExpr,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogicalNode {
    Scan { source: ScanSource, stats: SourceStats, qualifier: Option<String> },
    Transform(TransformSpec),
    Join { predicate: ScalarExpr },
    Group { keys: Vec<GroupKey>, aggregates: Vec<Aggregate> },
    Filter { predicate: ScalarExpr, semantic: bool },
    Project { items: Vec<ProjectItem> },
}

impl LogicalNode {
    pub fn name(&self) -> &'static str {
        match self {
            LogicalNode::Scan { .. } => "Scan",
            LogicalNode::Transform(_) => "Transform",
            LogicalNode::Join { .. } => "Join",
            LogicalNode::Group { .. } => "Group",
            LogicalNode::Filter { .. } => "Filter",
            LogicalNode::Project { .. } => "Project",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogicalPlan {
    pub node: LogicalNode,
    pub children: Vec<LogicalPlan>,
    /// Output schema of this node.
    pub schema: Schema,
}

impl LogicalPlan {
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(LogicalPlan::node_count).sum::<usize>()
    }

    /// Node names in pre-order.
    pub fn shape(&self) -> Vec<&'static str> {
        let mut out = vec![self.node.name()];
        for c in &self.children {
            out.extend(c.shape());
        }
        out
    }

    /// Number of prompt-bearing attributes: transform column prompts,
    /// semantic group keys and semantic predicate parts.
    pub fn semantic_attribute_count(&self) -> usize {
        let own = match &self.node {
            LogicalNode::Transform(t) => t.columns.len(),
            LogicalNode::Group { keys, .. } => keys.iter().filter(|k| matches!(k, GroupKey::Semantic { .. })).count(),
            LogicalNode::Join { predicate } | LogicalNode::Filter { predicate, .. } => {
                let mut n = 0;
                predicate.visit(&mut |e| {
                    if matches!(e, ScalarExpr::Prompt(_) | ScalarExpr::SemMatch { .. }) {
                        n += 1;
                    }
                });
                n
            }
            LogicalNode::Scan { .. } | LogicalNode::Project { .. } => 0,
        };
        own + self.children.iter().map(LogicalPlan::semantic_attribute_count).sum::<usize>()
    }

    pub fn has_semantic(&self) -> bool {
        self.semantic_attribute_count() > 0
    }

    fn fmt_indent(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        write!(f, "{:indent$}{}", "", self.node.name(), indent = depth * 2)?;
        match &self.node {
            LogicalNode::Scan { source, .. } => write!(f, " {}", source.name())?,
            LogicalNode::Transform(t) => {
                let cols: Vec<&str> = t.columns.iter().map(|c| c.name.as_str()).collect();
                write!(f, " {} [{}]", t.mode.as_str(), cols.join(", "))?
            }
            LogicalNode::Join { predicate } | LogicalNode::Filter { predicate, .. } => write!(f, " {predicate}")?,
            LogicalNode::Group { keys, aggregates } => {
                let k: Vec<&str> = keys.iter().map(GroupKey::output_name).collect();
                let a: Vec<&str> = aggregates.iter().map(|a| a.out.as_str()).collect();
                write!(f, " keys [{}] aggregates [{}]", k.join(", "), a.join(", "))?
            }
            LogicalNode::Project { items } => {
                let n: Vec<&str> = items.iter().map(|i| i.name.as_str()).collect();
                write!(f, " [{}]", n.join(", "))?
            }
        }
        writeln!(f)?;
        for c in &self.children {
            c.fmt_indent(f, depth + 1)?;
        }
        Ok(())
    }
}

impl fmt::Display for LogicalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_indent(f, 0)
    }
}

/// Every prompt-bearing literal of a statement, in source order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PromptContext {
    pub statement_text: String,
    pub prompt_literals: Vec<(Clause, String)>,
    pub source_descriptors: Vec<String>,
}

impl PromptContext {
    /// The text sent as system context with every completion request.
    pub fn digest(&self) -> String {
        let mut out = String::from("You are the semantic operator of a SQL engine.\nStatement: ");
        out.push_str(&self.statement_text.split_whitespace().collect::<Vec<_>>().join(" "));
        if !self.prompt_literals.is_empty() {
            out.push_str("\nPrompts:");
            for (clause, text) in &self.prompt_literals {
                out.push_str(&format!("\n- {}: {text}", clause.as_str()));
            }
        }
        if !self.source_descriptors.is_empty() {
            out.push_str("\nSources: ");
            out.push_str(&self.source_descriptors.join(", "));
        }
        out
    }
}

pub use bind::{assemble_prompt_context, build_logical_plan};
