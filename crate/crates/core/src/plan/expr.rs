use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::relation::{Schema, Value};
use crate::sql::ast::{BinaryOp, MatchMethod};

/// A bound scalar expression. Columns are referenced by their name in the
/// input schema of the node that evaluates the expression.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarExpr {
    Column(String),
    Literal(Value),
    Binary {
        op: BinaryOp,
        left: Box<ScalarExpr>,
        right: Box<ScalarExpr>,
    },
    Not(Box<ScalarExpr>),
    Negate(Box<ScalarExpr>),
    IsNull {
        expr: Box<ScalarExpr>,
        negated: bool,
    },
    Function {
        name: String,
        args: Vec<ScalarExpr>,
    },
    Prompt(String),
    SemMatch {
        left: Box<ScalarExpr>,
        right: Box<ScalarExpr>,
        threshold: f64,
        method: Option<MatchMethod>,
    },
}

pub const SCALAR_FUNCTIONS: [&str; 12] = [
    "lower",
    "upper",
    "trim",
    "length",
    "substr",
    "concat",
    "contains",
    "starts_with",
    "coalesce",
    "abs",
    "round",
    "if",
];

impl ScalarExpr {
    pub fn column(name: impl Into<String>) -> ScalarExpr {
        ScalarExpr::Column(name.into())
    }

    pub fn as_column(&self) -> Option<&str> {
        match self {
            ScalarExpr::Column(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_semantic(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e, ScalarExpr::Prompt(_) | ScalarExpr::SemMatch { .. }) {
                found = true;
            }
        });
        found
    }

    pub fn visit(&self, f: &mut dyn FnMut(&ScalarExpr)) {
        f(self);
        match self {
            ScalarExpr::Binary { left, right, .. } | ScalarExpr::SemMatch { left, right, .. } => {
                left.visit(f);
                right.visit(f);
            }
            ScalarExpr::Not(e) | ScalarExpr::Negate(e) | ScalarExpr::IsNull { expr: e, .. } => e.visit(f),
            ScalarExpr::Function { args, .. } => args.iter().for_each(|a| a.visit(f)),
            ScalarExpr::Column(_) | ScalarExpr::Literal(_) | ScalarExpr::Prompt(_) => {}
        }
    }

    pub fn columns(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let ScalarExpr::Column(c) = e {
                if !out.contains(c) {
                    out.push(c.clone());
                }
            }
        });
        out
    }

    /// Splits a conjunction into its conjuncts.
    pub fn conjuncts(self) -> Vec<ScalarExpr> {
        match self {
            ScalarExpr::Binary {
                op: BinaryOp::And,
                left,
                right,
            } => {
                let mut out = left.conjuncts();
                out.extend(right.conjuncts());
                out
            }
            other => vec![other],
        }
    }

    pub fn and_all(mut parts: Vec<ScalarExpr>) -> Option<ScalarExpr> {
        let first = if parts.is_empty() { return None } else { parts.remove(0) };
        Some(parts.into_iter().fold(first, |acc, p| ScalarExpr::Binary {
            op: BinaryOp::And,
            left: Box::new(acc),
            right: Box::new(p),
        }))
    }

    /// Evaluates a classic expression against one row. Semantic parts are
    /// an error here; they are realised by dedicated operators.
    pub fn eval(&self, schema: &Schema, row: &[Value]) -> Result<Value> {
        self.eval_with(&|name| schema.index_of(name).map(|i| row[i].clone()))
    }

    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<Value>) -> Result<Value> {
        match self {
            ScalarExpr::Column(c) => lookup(c).ok_or_else(|| Error::Exec(format!("unknown column '{c}'"))),
            ScalarExpr::Literal(v) => Ok(v.clone()),
            ScalarExpr::Binary { op, left, right } => {
                let l = left.eval_with(lookup)?;
                match op {
                    BinaryOp::And => {
                        if l.truthy() == Some(false) {
                            return Ok(Value::Boolean(false));
                        }
                        let r = right.eval_with(lookup)?;
                        logic_and(&l, &r)
                    }
                    BinaryOp::Or => {
                        if l.truthy() == Some(true) {
                            return Ok(Value::Boolean(true));
                        }
                        let r = right.eval_with(lookup)?;
                        logic_or(&l, &r)
                    }
                    _ => binary(*op, &l, &right.eval_with(lookup)?),
                }
            }
            ScalarExpr::Not(e) => match e.eval_with(lookup)? {
                Value::Null => Ok(Value::Null),
                Value::Boolean(b) => Ok(Value::Boolean(!b)),
                other => Err(Error::Exec(format!("NOT applied to {}", type_name(&other)))),
            },
            ScalarExpr::Negate(e) => match e.eval_with(lookup)? {
                Value::Null => Ok(Value::Null),
                Value::Number(n) => Value::number(-n),
                other => Err(Error::Exec(format!("cannot negate {}", type_name(&other)))),
            },
            ScalarExpr::IsNull { expr, negated } => {
                let v = expr.eval_with(lookup)?;
                Ok(Value::Boolean(v.is_null() != *negated))
            }
            ScalarExpr::Function { name, args } => {
                if name == "if" {
                    if args.len() != 3 {
                        return Err(Error::Exec("if() takes 3 arguments".into()));
                    }
                    return match args[0].eval_with(lookup)?.truthy() {
                        Some(true) => args[1].eval_with(lookup),
                        _ => args[2].eval_with(lookup),
                    };
                }
                let vals = args.iter().map(|a| a.eval_with(lookup)).collect::<Result<Vec<_>>>()?;
                call(name, &vals)
            }
            ScalarExpr::Prompt(_) | ScalarExpr::SemMatch { .. } => Err(Error::Exec(
                "semantic predicate reached the classic evaluator".into(),
            )),
        }
    }
}

fn type_name(v: &Value) -> &'static str {
    v.data_type().map(|t| t.name()).unwrap_or("NULL")
}

fn logic_and(l: &Value, r: &Value) -> Result<Value> {
    match (l.truthy(), r.truthy()) {
        (Some(false), _) | (_, Some(false)) => Ok(Value::Boolean(false)),
        (Some(true), Some(true)) => Ok(Value::Boolean(true)),
        _ if (l.is_null() || l.truthy().is_some()) && (r.is_null() || r.truthy().is_some()) => Ok(Value::Null),
        _ => Err(Error::Exec("AND expects booleans".into())),
    }
}

fn logic_or(l: &Value, r: &Value) -> Result<Value> {
    match (l.truthy(), r.truthy()) {
        (Some(true), _) | (_, Some(true)) => Ok(Value::Boolean(true)),
        (Some(false), Some(false)) => Ok(Value::Boolean(false)),
        _ if (l.is_null() || l.truthy().is_some()) && (r.is_null() || r.truthy().is_some()) => Ok(Value::Null),
        _ => Err(Error::Exec("OR expects booleans".into())),
    }
}

fn binary(op: BinaryOp, l: &Value, r: &Value) -> Result<Value> {
    use BinaryOp::*;
    if l.is_null() || r.is_null() {
        return Ok(Value::Null);
    }
    match op {
        Eq | NotEq | Lt | LtEq | Gt | GtEq => {
            let ord = compare(l, r)?;
            let b = match op {
                Eq => ord == Ordering::Equal,
                NotEq => ord != Ordering::Equal,
                Lt => ord == Ordering::Less,
                LtEq => ord != Ordering::Greater,
                Gt => ord == Ordering::Greater,
                _ => ord != Ordering::Less,
            };
            Ok(Value::Boolean(b))
        }
        Concat => Ok(Value::text(format!("{}{}", l.render(), r.render()))),
        Plus | Minus | Multiply | Divide | Modulo => {
            let (a, b) = match (l.as_number(), r.as_number()) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::Exec(format!(
                        "arithmetic on {} and {}",
                        type_name(l),
                        type_name(r)
                    )))
                }
            };
            if matches!(op, Divide | Modulo) && b == 0.0 {
                return Err(Error::Exec("division by zero".into()));
            }
            let v = match op {
                Plus => a + b,
                Minus => a - b,
                Multiply => a * b,
                Divide => a / b,
                _ => a % b,
            };
            if !v.is_finite() {
                return Err(Error::Exec("arithmetic overflow".into()));
            }
            Value::number(v)
        }
        And | Or => unreachable!("handled by the caller"),
    }
}

fn compare(l: &Value, r: &Value) -> Result<Ordering> {
    match (l, r) {
        (Value::Number(_), Value::Number(_)) | (Value::Text(_), Value::Text(_)) | (Value::Boolean(_), Value::Boolean(_)) => {
            Ok(l.total_cmp(r))
        }
        _ => Err(Error::Exec(format!("cannot compare {} with {}", type_name(l), type_name(r)))),
    }
}

fn text_arg<'v>(name: &str, v: &'v Value) -> Result<Option<&'v str>> {
    match v {
        Value::Null => Ok(None),
        Value::Text(s) => Ok(Some(s)),
        other => Err(Error::Exec(format!("{name}() expects text, got {}", type_name(other)))),
    }
}

fn arity(name: &str, args: &[Value], n: usize) -> Result<()> {
    if args.len() != n {
        return Err(Error::Exec(format!("{name}() takes {n} argument(s), got {}", args.len())));
    }
    Ok(())
}

fn call(name: &str, args: &[Value]) -> Result<Value> {
    match name {
        "lower" | "upper" | "trim" => {
            arity(name, args, 1)?;
            Ok(match text_arg(name, &args[0])? {
                None => Value::Null,
                Some(s) => Value::text(match name {
                    "lower" => s.to_lowercase(),
                    "upper" => s.to_uppercase(),
                    _ => s.trim().to_string(),
                }),
            })
        }
        "length" => {
            arity(name, args, 1)?;
            match text_arg(name, &args[0])? {
                None => Ok(Value::Null),
                Some(s) => Value::number(s.chars().count() as f64),
            }
        }
        "substr" => {
            if args.len() != 2 && args.len() != 3 {
                return Err(Error::Exec("substr() takes 2 or 3 arguments".into()));
            }
            let Some(s) = text_arg(name, &args[0])? else {
                return Ok(Value::Null);
            };
            let start = args[1].as_number().ok_or_else(|| Error::Exec("substr() start must be a number".into()))?;
            let skip = (start.max(1.0) as usize) - 1;
            let it = s.chars().skip(skip);
            Ok(Value::text(match args.get(2) {
                Some(len) => {
                    let n = len.as_number().ok_or_else(|| Error::Exec("substr() length must be a number".into()))?;
                    it.take(n.max(0.0) as usize).collect::<String>()
                }
                None => it.collect::<String>(),
            }))
        }
        "concat" => Ok(Value::text(args.iter().filter(|v| !v.is_null()).map(Value::render).collect::<String>())),
        "contains" | "starts_with" => {
            arity(name, args, 2)?;
            match (text_arg(name, &args[0])?, text_arg(name, &args[1])?) {
                (Some(a), Some(b)) => Ok(Value::Boolean(if name == "contains" { a.contains(b) } else { a.starts_with(b) })),
                _ => Ok(Value::Null),
            }
        }
        "coalesce" => Ok(args.iter().find(|v| !v.is_null()).cloned().unwrap_or(Value::Null)),
        "abs" | "round" => {
            arity(name, args, 1)?;
            match &args[0] {
                Value::Null => Ok(Value::Null),
                Value::Number(n) => Value::number(if name == "abs" { n.abs() } else { n.round() }),
                other => Err(Error::Exec(format!("{name}() expects a number, got {}", type_name(other)))),
            }
        }
        other => Err(Error::Exec(format!("unknown function '{other}'"))),
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarExpr::Column(c) => f.write_str(c),
            ScalarExpr::Literal(Value::Text(s)) => write!(f, "\"{}\"", s.replace('"', "\"\"")),
            ScalarExpr::Literal(v) => f.write_str(&v.render()),
            ScalarExpr::Binary { op, left, right } => write!(f, "({left} {} {right})", op.symbol()),
            ScalarExpr::Not(e) => write!(f, "NOT {e}"),
            ScalarExpr::Negate(e) => write!(f, "-{e}"),
            ScalarExpr::IsNull { expr, negated } => {
                write!(f, "{expr} IS {}NULL", if *negated { "NOT " } else { "" })
            }
            ScalarExpr::Function { name, args } => {
                let a: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                write!(f, "{name}({})", a.join(", "))
            }
            ScalarExpr::Prompt(p) => write!(f, "PROMPT(\"{p}\")"),
            ScalarExpr::SemMatch {
                left,
                right,
                threshold,
                method,
            } => {
                write!(f, "SEM_MATCH({left}, {right}, {threshold}")?;
                if let Some(m) = method {
                    write!(f, ", {}", m.as_str())?;
                }
                f.write_str(")")
            }
        }
    }
}
