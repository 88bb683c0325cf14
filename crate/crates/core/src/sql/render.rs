use super::ast::*;
use super::token::Keyword;
use crate::relation::format_number;

/// Canonical SQL text for a statement: upper-case keywords, double-quoted
/// strings, minimal parentheses. Parsing the output yields an equal AST.
pub fn render(stmt: &Statement) -> String {
    let mut out = String::new();
    match stmt {
        Statement::Select(s) => render_select(s, &mut out),
        Statement::CreateTable(c) => {
            out.push_str("CREATE TABLE ");
            out.push_str(&ident(&c.name));
            out.push_str(" (");
            let cols: Vec<String> = c
                .columns
                .iter()
                .map(|(n, t)| format!("{} {}", ident(n), t.to_ascii_uppercase()))
                .collect();
            out.push_str(&cols.join(", "));
            out.push(')');
        }
        Statement::Insert(i) => {
            out.push_str("INSERT INTO ");
            out.push_str(&ident(&i.table));
            if !i.columns.is_empty() {
                let cols: Vec<String> = i.columns.iter().map(|c| ident(c)).collect();
                out.push_str(&format!(" ({})", cols.join(", ")));
            }
            out.push_str(" VALUES ");
            let rows: Vec<String> = i
                .rows
                .iter()
                .map(|r| {
                    let cells: Vec<String> = r.iter().map(expr).collect();
                    format!("({})", cells.join(", "))
                })
                .collect();
            out.push_str(&rows.join(", "));
        }
    }
    out.push(';');
    out
}

/// Canonical text of a single expression.
pub fn render_expr(e: &Expr) -> String {
    expr(e)
}

fn render_select(s: &Select, out: &mut String) {
    out.push_str("SELECT ");
    let items: Vec<String> = s
        .items
        .iter()
        .map(|item| match item {
            SelectItem::Wildcard => "*".to_string(),
            SelectItem::Expr { expr: e, alias } => match alias {
                Some(a) => format!("{} AS {}", expr(e), ident(a)),
                None => expr(e),
            },
        })
        .collect();
    out.push_str(&items.join(", "));
    if let Some(from) = &s.from {
        out.push_str(" FROM ");
        out.push_str(&table_ref(from));
    }
    for j in &s.joins {
        out.push_str(" JOIN ");
        out.push_str(&table_ref(&j.table));
        out.push_str(" ON ");
        out.push_str(&expr(&j.on));
    }
    if let Some(w) = &s.where_clause {
        out.push_str(" WHERE ");
        out.push_str(&expr(w));
    }
    if !s.group_by.is_empty() {
        let keys: Vec<String> = s.group_by.iter().map(expr).collect();
        out.push_str(" GROUP BY ");
        out.push_str(&keys.join(", "));
    }
    if let Some(h) = &s.having {
        out.push_str(" HAVING ");
        out.push_str(&expr(h));
    }
}

fn table_ref(t: &TableRef) -> String {
    let src = match &t.source {
        Source::Named(n) => ident(n),
        Source::File(f) => file(f),
        Source::Directory(d) => directory(d),
        Source::Tabular(t) => tabular(t),
        Source::Expr(e) => expr(e),
    };
    match &t.alias {
        Some(a) => format!("{src} AS {}", ident(a)),
        None => src,
    }
}

fn file(f: &FileSource) -> String {
    format!("FILE({})", string(&f.name))
}

fn directory(d: &DirectorySource) -> String {
    format!("DIRECTORY({})", string(&d.name))
}

fn tabular(t: &TabularSource) -> String {
    let cols: Vec<String> = t
        .columns
        .iter()
        .map(|c| format!("PROMPT({}) AS {}", string(&c.prompt.text), ident(&c.alias)))
        .collect();
    let inner = match &t.inner {
        UnstructuredSource::File(f) => file(f),
        UnstructuredSource::Directory(d) => directory(d),
    };
    format!("TABULAR({} FROM {inner})", cols.join(", "))
}

fn string(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn ident(s: &str) -> String {
    let plain = s
        .chars()
        .next()
        .is_some_and(|c| c.is_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_alphanumeric() || c == '_')
        && Keyword::lookup(s).is_none();
    if plain {
        s.to_string()
    } else {
        format!("`{}`", s.replace('`', "``"))
    }
}

const ATOM: u8 = 10;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Unary {
            op: UnaryOp::Not, ..
        } => 3,
        Expr::Unary {
            op: UnaryOp::Negate,
            ..
        } => 7,
        Expr::IsNull { .. } => 4,
        Expr::Literal(Literal::Number(n)) if n.is_sign_negative() => 7,
        _ => ATOM,
    }
}

fn wrap(e: &Expr, min: u8) -> String {
    if precedence(e) < min {
        format!("({})", expr(e))
    } else {
        expr(e)
    }
}

fn expr(e: &Expr) -> String {
    match e {
        Expr::Column(c) => match &c.qualifier {
            Some(q) => format!("{}.{}", ident(q), ident(&c.name)),
            None => ident(&c.name),
        },
        Expr::Literal(l) => match l {
            Literal::Number(n) => format_number(*n),
            Literal::String(s) => string(s),
            Literal::Boolean(true) => "TRUE".into(),
            Literal::Boolean(false) => "FALSE".into(),
            Literal::Null => "NULL".into(),
        },
        Expr::Binary { op, left, right } => {
            let p = op.precedence();
            format!("{} {} {}", wrap(left, p), op.symbol(), wrap(right, p + 1))
        }
        Expr::Unary {
            op: UnaryOp::Not,
            expr: inner,
        } => format!("NOT {}", wrap(inner, 3)),
        Expr::Unary {
            op: UnaryOp::Negate,
            expr: inner,
        } => format!("-{}", wrap(inner, ATOM)),
        Expr::IsNull {
            expr: inner,
            negated,
        } => format!(
            "{} IS {}NULL",
            wrap(inner, 4),
            if *negated { "NOT " } else { "" }
        ),
        Expr::Function { name, args, star } => {
            if *star {
                format!("{name}(*)")
            } else {
                let a: Vec<String> = args.iter().map(expr).collect();
                format!("{name}({})", a.join(", "))
            }
        }
        Expr::Prompt(p) => format!("PROMPT({})", string(&p.text)),
        Expr::SemMatch(m) => {
            let mut parts = vec![expr(&m.left), expr(&m.right)];
            if m.threshold.is_some() || m.method.is_some() {
                parts.push(format_number(m.effective_threshold()));
            }
            if let Some(method) = m.method {
                parts.push(method.as_str().to_string());
            }
            format!("SEM_MATCH({})", parts.join(", "))
        }
        Expr::SemGroup(g) => {
            let mut parts = vec![expr(&g.target), string(&g.prompt)];
            if let Some(k) = g.group_count {
                parts.push(k.to_string());
            }
            format!("SEM_GROUP({})", parts.join(", "))
        }
        Expr::File(f) => file(f),
        Expr::Directory(d) => directory(d),
        Expr::Tabular(t) => tabular(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse;

    fn roundtrip(s: &str) {
        let ast = parse(s).unwrap();
        let text = render(&ast);
        let again = parse(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
        assert_eq!(ast, again, "{text}");
    }

    #[test]
    fn keywords_are_upper_cased() {
        let ast = parse("select a from t where a > 1 group by a").unwrap();
        assert_eq!(render(&ast), "SELECT a FROM t WHERE a > 1 GROUP BY a;");
    }

    #[test]
    fn embedded_quotes_survive() {
        roundtrip(r#"SELECT PROMPT("say ""hello"" to 'them'") FROM FILE("a ""b"".txt")"#);
        roundtrip("SELECT 'it''s' AS `select`");
    }

    #[test]
    fn operator_nesting() {
        roundtrip("SELECT a - (b - c), (a - b) - c, -(a * b), - 5 * 2, NOT (a OR b), (NOT a) = b FROM t");
        roundtrip("SELECT a FROM t WHERE (a = b) IS NULL AND c IS NOT NULL");
        roundtrip("SELECT a FROM t WHERE a = (b IS NULL)");
    }

    #[test]
    fn extended_tokens() {
        roundtrip(
            r#"SELECT l.area, count(*) FROM TABULAR(PROMPT("area") AS area, PROMPT("t") AS title FROM FILE("x")) AS l
               JOIN TABULAR(PROMPT("area") area FROM DIRECTORY("d")) r ON SEM_MATCH(l.area, r.area, 0.9, llm)
               GROUP BY l.area HAVING SEM_MATCH(l.area, "ml")"#,
        );
    }
}
