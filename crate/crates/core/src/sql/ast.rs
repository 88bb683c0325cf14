//! Parse tree for the extended dialect.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Select(Select),
    CreateTable(CreateTable),
    Insert(Insert),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreateTable {
    pub name: String,
    pub columns: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Insert {
    pub table: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Expr>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Select {
    pub items: Vec<SelectItem>,
    pub from: Option<TableRef>,
    pub joins: Vec<Join>,
    pub where_clause: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRef {
    pub source: Source,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub table: TableRef,
    pub on: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Named(String),
    File(FileSource),
    Directory(DirectorySource),
    Tabular(TabularSource),
    /// Any other expression written where a source was expected; kept so that
    /// placement validation can report it instead of failing the parse.
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileSource {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectorySource {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnstructuredSource {
    File(FileSource),
    Directory(DirectorySource),
}

impl UnstructuredSource {
    pub fn name(&self) -> &str {
        match self {
            UnstructuredSource::File(f) => &f.name,
            UnstructuredSource::Directory(d) => &d.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularColumn {
    pub prompt: PromptExpr,
    pub alias: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularSource {
    pub columns: Vec<TabularColumn>,
    pub inner: UnstructuredSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptExpr {
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchMethod {
    Vector,
    Llm,
}

impl MatchMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMethod::Vector => "vector",
            MatchMethod::Llm => "llm",
        }
    }
}

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct SemMatchExpr {
    pub left: Box<Expr>,
    pub right: Box<Expr>,
    pub threshold: Option<f64>,
    pub method: Option<MatchMethod>,
}

impl SemMatchExpr {
    pub fn effective_threshold(&self) -> f64 {
        self.threshold.unwrap_or(DEFAULT_MATCH_THRESHOLD)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemGroupExpr {
    pub target: Box<Expr>,
    pub prompt: String,
    pub group_count: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRef {
    pub qualifier: Option<String>,
    pub name: String,
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{q}.{}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(f64),
    String(String),
    Boolean(bool),
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Plus,
    Minus,
    Multiply,
    Divide,
    Modulo,
    Concat,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        use BinaryOp::*;
        match self {
            Or => "OR",
            And => "AND",
            Eq => "=",
            NotEq => "<>",
            Lt => "<",
            LtEq => "<=",
            Gt => ">",
            GtEq => ">=",
            Plus => "+",
            Minus => "-",
            Multiply => "*",
            Divide => "/",
            Modulo => "%",
            Concat => "||",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        use BinaryOp::*;
        match self {
            Or => 1,
            And => 2,
            Eq | NotEq | Lt | LtEq | Gt | GtEq => 4,
            Plus | Minus | Concat => 5,
            Multiply | Divide | Modulo => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    Negate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(ColumnRef),
    Literal(Literal),
    Binary {
        op: BinaryOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Unary {
        op: UnaryOp,
        expr: Box<Expr>,
    },
    IsNull {
        expr: Box<Expr>,
        negated: bool,
    },
    /// Function call; `args` is empty and `star` set for `count(*)`.
    Function {
        name: String,
        args: Vec<Expr>,
        star: bool,
    },
    Prompt(PromptExpr),
    SemMatch(SemMatchExpr),
    SemGroup(SemGroupExpr),
    File(FileSource),
    Directory(DirectorySource),
    Tabular(Box<TabularSource>),
}

pub const AGGREGATES: [&str; 5] = ["count", "sum", "avg", "min", "max"];

impl Expr {
    pub fn is_aggregate_call(&self) -> bool {
        matches!(self, Expr::Function { name, .. } if AGGREGATES.contains(&name.to_ascii_lowercase().as_str()))
    }

    /// Visits this expression and all sub-expressions, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Binary { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
            Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } => expr.walk(f),
            Expr::Function { args, .. } => args.iter().for_each(|a| a.walk(f)),
            Expr::SemMatch(m) => {
                m.left.walk(f);
                m.right.walk(f);
            }
            Expr::SemGroup(g) => g.target.walk(f),
            Expr::Column(_)
            | Expr::Literal(_)
            | Expr::Prompt(_)
            | Expr::File(_)
            | Expr::Directory(_)
            | Expr::Tabular(_) => {}
        }
    }

    pub fn contains_semantic(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e, Expr::Prompt(_) | Expr::SemMatch(_) | Expr::SemGroup(_)) {
                found = true;
            }
        });
        found
    }

    pub fn contains_aggregate(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if e.is_aggregate_call() {
                found = true;
            }
        });
        found
    }
}
