//! Clause placement rules for the six extended tokens.
//!
//! | token     | allowed clauses                    |
//! |-----------|------------------------------------|
//! | PROMPT    | SELECT, WHERE, GROUP BY (extension)|
//! | SEM_MATCH | JOIN ON, WHERE, HAVING             |
//! | SEM_GROUP | SELECT, GROUP BY                   |
//! | TABULAR   | FROM                               |
//! | FILE      | FROM                               |
//! | DIRECTORY | FROM                               |
//!
//! `PROMPT` inside `GROUP BY` is accepted so that a prompt can define the
//! grouping semantics of an implicit-schema query. Prompts that name the
//! columns of a `TABULAR` source are part of that source and always valid.

use std::fmt;

use super::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SemanticToken {
    Prompt,
    SemMatch,
    SemGroup,
    Tabular,
    File,
    Directory,
}

impl SemanticToken {
    pub const ALL: [SemanticToken; 6] = [
        SemanticToken::Prompt,
        SemanticToken::SemMatch,
        SemanticToken::SemGroup,
        SemanticToken::Tabular,
        SemanticToken::File,
        SemanticToken::Directory,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticToken::Prompt => "PROMPT",
            SemanticToken::SemMatch => "SEM_MATCH",
            SemanticToken::SemGroup => "SEM_GROUP",
            SemanticToken::Tabular => "TABULAR",
            SemanticToken::File => "FILE",
            SemanticToken::Directory => "DIRECTORY",
        }
    }

    /// Whether the token may appear in `clause`.
    pub fn allowed_in(self, clause: Clause) -> bool {
        use Clause::*;
        match self {
            SemanticToken::Prompt => matches!(clause, Select | Where | GroupBy),
            SemanticToken::SemMatch => matches!(clause, JoinOn | Where | Having),
            SemanticToken::SemGroup => matches!(clause, Select | GroupBy),
            SemanticToken::Tabular | SemanticToken::File | SemanticToken::Directory => {
                matches!(clause, From)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Clause {
    Select,
    From,
    Where,
    JoinOn,
    GroupBy,
    Having,
    Values,
}

impl Clause {
    pub const QUERY_CLAUSES: [Clause; 6] = [
        Clause::Select,
        Clause::From,
        Clause::Where,
        Clause::JoinOn,
        Clause::GroupBy,
        Clause::Having,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Clause::Select => "SELECT",
            Clause::From => "FROM",
            Clause::Where => "WHERE",
            Clause::JoinOn => "JOIN ON",
            Clause::GroupBy => "GROUP BY",
            Clause::Having => "HAVING",
            Clause::Values => "VALUES",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub token: SemanticToken,
    pub clause: Clause,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} is not allowed in {}",
            self.token.as_str(),
            self.clause.as_str()
        )
    }
}

/// Returns every placement violation in the statement; empty means valid.
pub fn validate_placement(stmt: &Statement) -> Vec<Violation> {
    let mut out = Vec::new();
    match stmt {
        Statement::Select(s) => check_select(s, &mut out),
        Statement::Insert(ins) => {
            for row in &ins.rows {
                for e in row {
                    check_expr(e, Clause::Values, &mut out);
                }
            }
        }
        Statement::CreateTable(_) => {}
    }
    out
}

fn check_select(s: &Select, out: &mut Vec<Violation>) {
    for item in &s.items {
        if let SelectItem::Expr { expr, .. } = item {
            check_expr(expr, Clause::Select, out);
        }
    }
    if let Some(from) = &s.from {
        check_source(&from.source, out);
    }
    for j in &s.joins {
        check_source(&j.table.source, out);
        check_expr(&j.on, Clause::JoinOn, out);
    }
    if let Some(w) = &s.where_clause {
        check_expr(w, Clause::Where, out);
    }
    for g in &s.group_by {
        check_expr(g, Clause::GroupBy, out);
    }
    if let Some(h) = &s.having {
        check_expr(h, Clause::Having, out);
    }
}

fn check_source(source: &Source, out: &mut Vec<Violation>) {
    // FILE / DIRECTORY / TABULAR sources (and TABULAR's column prompts) are
    // valid by construction; anything else found here is checked as FROM.
    if let Source::Expr(e) = source {
        check_expr(e, Clause::From, out);
    }
}

fn token_of(e: &Expr) -> Option<SemanticToken> {
    Some(match e {
        Expr::Prompt(_) => SemanticToken::Prompt,
        Expr::SemMatch(_) => SemanticToken::SemMatch,
        Expr::SemGroup(_) => SemanticToken::SemGroup,
        Expr::Tabular(_) => SemanticToken::Tabular,
        Expr::File(_) => SemanticToken::File,
        Expr::Directory(_) => SemanticToken::Directory,
        _ => return None,
    })
}

fn check_expr(e: &Expr, clause: Clause, out: &mut Vec<Violation>) {
    e.walk(&mut |sub| {
        if let Some(token) = token_of(sub) {
            if !token.allowed_in(clause) {
                out.push(Violation { token, clause });
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse;

    #[test]
    fn file_outside_from_is_a_violation() {
        let v = validate_placement(&parse("SELECT FILE(\"x.txt\")").unwrap());
        assert_eq!(
            v,
            vec![Violation {
                token: SemanticToken::File,
                clause: Clause::Select
            }]
        );
    }

    #[test]
    fn prompt_in_group_by_is_accepted() {
        let v = validate_placement(
            &parse(
                r#"SELECT PROMPT("Analyze technical areas"), count(1)
                   FROM FILE("neurips_2024.txt")
                   GROUP BY PROMPT("Count the numbers of publications in each area")"#,
            )
            .unwrap(),
        );
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn tabular_column_prompts_are_not_violations() {
        let v = validate_placement(
            &parse(r#"SELECT title FROM TABULAR(PROMPT("t") AS title FROM FILE("f"))"#).unwrap(),
        );
        assert!(v.is_empty());
    }

    #[test]
    fn sem_match_in_select_is_a_violation() {
        let v = validate_placement(&parse("SELECT SEM_MATCH(a, 'b') FROM t").unwrap());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].token, SemanticToken::SemMatch);
        assert_eq!(v[0].to_string(), "SEM_MATCH is not allowed in SELECT");
    }
}
