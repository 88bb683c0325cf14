use super::ast::*;
use super::token::{tokenize, Keyword, Token, TokenKind};
use crate::error::{Error, Result};

const MAX_DEPTH: usize = 128;

/// Tokenizes and parses one statement. A trailing semicolon is optional.
pub fn parse(text: &str) -> Result<Statement> {
    let tokens = tokenize(text)?;
    parse_tokens(&tokens)
}

/// Alias of [`parse`] kept for call sites that read better with it.
pub fn parse_statement(text: &str) -> Result<Statement> {
    parse(text)
}

pub fn parse_tokens(tokens: &[Token]) -> Result<Statement> {
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
    };
    let stmt = p.statement()?;
    p.eat(&TokenKind::Semicolon);
    if let Some(t) = p.peek_token() {
        return Err(Error::syntax(
            t.line,
            t.column,
            format!("unexpected {} after end of statement", describe(&t.kind)),
        ));
    }
    Ok(stmt)
}

/// Parses a standalone scalar expression, as used by generated programs.
pub fn parse_expression(text: &str) -> Result<Expr> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens: &tokens,
        pos: 0,
        depth: 0,
    };
    let e = p.expr()?;
    if let Some(t) = p.peek_token() {
        return Err(Error::syntax(
            t.line,
            t.column,
            format!("unexpected {} after expression", describe(&t.kind)),
        ));
    }
    Ok(e)
}

fn describe(kind: &TokenKind) -> String {
    match kind {
        TokenKind::Keyword(k) => format!("keyword {}", k.as_str()),
        TokenKind::Ident(s) | TokenKind::QuotedIdent(s) => format!("identifier '{s}'"),
        TokenKind::String(s) => format!("string \"{s}\""),
        TokenKind::Number(n) => format!("number {n}"),
        other => format!("'{}'", symbol(other)),
    }
}

fn symbol(kind: &TokenKind) -> &'static str {
    match kind {
        TokenKind::Comma => ",",
        TokenKind::LParen => "(",
        TokenKind::RParen => ")",
        TokenKind::Semicolon => ";",
        TokenKind::Dot => ".",
        TokenKind::Star => "*",
        TokenKind::Plus => "+",
        TokenKind::Minus => "-",
        TokenKind::Slash => "/",
        TokenKind::Percent => "%",
        TokenKind::Concat => "||",
        TokenKind::Eq => "=",
        TokenKind::NotEq => "<>",
        TokenKind::Lt => "<",
        TokenKind::LtEq => "<=",
        TokenKind::Gt => ">",
        TokenKind::GtEq => ">=",
        _ => "?",
    }
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn peek_token(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn peek(&self) -> Option<&'a TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, offset: usize) -> Option<&'a TokenKind> {
        self.tokens.get(self.pos + offset).map(|t| &t.kind)
    }


    fn error_here(&self, message: impl Into<String>) -> Error {
        match self.peek_token() {
            Some(t) => Error::syntax(t.line, t.column, message),
            None => {
                let (line, column) = self
                    .tokens
                    .last()
                    .map(|t| (t.line, t.column + 1))
                    .unwrap_or((1, 1));
                Error::syntax(line, column, message)
            }
        }
    }

    fn unexpected(&self, expected: &str) -> Error {
        match self.peek() {
            Some(k) => self.error_here(format!("expected {expected}, found {}", describe(k))),
            None => self.error_here(format!("expected {expected}, found end of input")),
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, kw: Keyword) -> bool {
        self.eat(&TokenKind::Keyword(kw))
    }

    fn expect(&mut self, kind: TokenKind) -> Result<()> {
        if self.eat(&kind) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{}'", symbol(&kind))))
        }
    }

    fn expect_keyword(&mut self, kw: Keyword) -> Result<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.unexpected(kw.as_str()))
        }
    }

    fn identifier(&mut self) -> Result<String> {
        match self.peek() {
            Some(TokenKind::Ident(s)) | Some(TokenKind::QuotedIdent(s)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn string_literal(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(TokenKind::String(s)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn statement(&mut self) -> Result<Statement> {
        match self.peek() {
            Some(TokenKind::Keyword(Keyword::Select)) => Ok(Statement::Select(self.select()?)),
            Some(TokenKind::Keyword(Keyword::Create)) => self.create_table(),
            Some(TokenKind::Keyword(Keyword::Insert)) => self.insert(),
            _ => Err(self.unexpected("SELECT, CREATE TABLE or INSERT")),
        }
    }

    fn create_table(&mut self) -> Result<Statement> {
        self.expect_keyword(Keyword::Create)?;
        self.expect_keyword(Keyword::Table)?;
        let name = self.identifier()?;
        self.expect(TokenKind::LParen)?;
        let mut columns = Vec::new();
        loop {
            let col = self.identifier()?;
            let ty = self.identifier()?;
            columns.push((col, ty));
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        self.expect(TokenKind::RParen)?;
        Ok(Statement::CreateTable(CreateTable { name, columns }))
    }

    fn insert(&mut self) -> Result<Statement> {
        self.expect_keyword(Keyword::Insert)?;
        self.expect_keyword(Keyword::Into)?;
        let table = self.identifier()?;
        let mut columns = Vec::new();
        if self.eat(&TokenKind::LParen) {
            loop {
                columns.push(self.identifier()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(TokenKind::RParen)?;
        }
        self.expect_keyword(Keyword::Values)?;
        let mut rows = Vec::new();
        loop {
            self.expect(TokenKind::LParen)?;
            let mut row = Vec::new();
            loop {
                row.push(self.expr()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(TokenKind::RParen)?;
            rows.push(row);
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        Ok(Statement::Insert(Insert {
            table,
            columns,
            rows,
        }))
    }

    fn select(&mut self) -> Result<Select> {
        self.expect_keyword(Keyword::Select)?;
        let mut select = Select::default();
        loop {
            select.items.push(self.select_item()?);
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        if self.eat_keyword(Keyword::From) {
            select.from = Some(self.table_ref()?);
            loop {
                if self.eat_keyword(Keyword::Inner) {
                    self.expect_keyword(Keyword::Join)?;
                } else if !self.eat_keyword(Keyword::Join) {
                    break;
                }
                let table = self.table_ref()?;
                self.expect_keyword(Keyword::On)?;
                let on = self.expr()?;
                select.joins.push(Join { table, on });
            }
        }
        if self.eat_keyword(Keyword::Where) {
            select.where_clause = Some(self.expr()?);
        }
        if self.eat_keyword(Keyword::Group) {
            self.expect_keyword(Keyword::By)?;
            loop {
                select.group_by.push(self.expr()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        if self.eat_keyword(Keyword::Having) {
            select.having = Some(self.expr()?);
        }
        Ok(select)
    }

    fn optional_alias(&mut self) -> Result<Option<String>> {
        if self.eat_keyword(Keyword::As) {
            return Ok(Some(self.identifier()?));
        }
        match self.peek() {
            Some(TokenKind::Ident(s)) | Some(TokenKind::QuotedIdent(s)) => {
                self.pos += 1;
                Ok(Some(s.clone()))
            }
            _ => Ok(None),
        }
    }

    fn select_item(&mut self) -> Result<SelectItem> {
        if self.eat(&TokenKind::Star) {
            return Ok(SelectItem::Wildcard);
        }
        let expr = self.expr()?;
        let alias = self.optional_alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn table_ref(&mut self) -> Result<TableRef> {
        let source = match self.peek() {
            Some(TokenKind::Keyword(Keyword::File)) => Source::File(self.file_source()?),
            Some(TokenKind::Keyword(Keyword::Directory)) => {
                Source::Directory(self.directory_source()?)
            }
            Some(TokenKind::Keyword(Keyword::Tabular)) => Source::Tabular(self.tabular()?),
            Some(TokenKind::Ident(_)) | Some(TokenKind::QuotedIdent(_)) => {
                Source::Named(self.identifier()?)
            }
            Some(TokenKind::Keyword(Keyword::Prompt))
            | Some(TokenKind::Keyword(Keyword::SemMatch))
            | Some(TokenKind::Keyword(Keyword::SemGroup)) => Source::Expr(self.primary()?),
            _ => return Err(self.unexpected("table, FILE, DIRECTORY or TABULAR source")),
        };
        let alias = self.optional_alias()?;
        Ok(TableRef { source, alias })
    }

    fn file_source(&mut self) -> Result<FileSource> {
        self.expect_keyword(Keyword::File)?;
        self.expect(TokenKind::LParen)?;
        let name = self.string_literal("file name string")?;
        self.expect(TokenKind::RParen)?;
        Ok(FileSource { name })
    }

    fn directory_source(&mut self) -> Result<DirectorySource> {
        self.expect_keyword(Keyword::Directory)?;
        self.expect(TokenKind::LParen)?;
        let name = self.string_literal("directory name string")?;
        self.expect(TokenKind::RParen)?;
        Ok(DirectorySource { name })
    }

    fn prompt(&mut self) -> Result<PromptExpr> {
        self.expect_keyword(Keyword::Prompt)?;
        self.expect(TokenKind::LParen)?;
        let at = self.peek_token().map(|t| (t.line, t.column));
        let text = self.string_literal("prompt string")?;
        if text.trim().is_empty() {
            let (line, col) = at.unwrap_or((1, 1));
            return Err(Error::syntax(line, col, "PROMPT text must not be empty"));
        }
        self.expect(TokenKind::RParen)?;
        Ok(PromptExpr { text })
    }

    fn tabular(&mut self) -> Result<TabularSource> {
        self.expect_keyword(Keyword::Tabular)?;
        self.expect(TokenKind::LParen)?;
        let mut columns = Vec::new();
        loop {
            let prompt = self.prompt()?;
            self.eat_keyword(Keyword::As);
            let alias = self.identifier()?;
            columns.push(TabularColumn { prompt, alias });
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        self.expect_keyword(Keyword::From)?;
        let inner = match self.peek() {
            Some(TokenKind::Keyword(Keyword::File)) => UnstructuredSource::File(self.file_source()?),
            Some(TokenKind::Keyword(Keyword::Directory)) => {
                UnstructuredSource::Directory(self.directory_source()?)
            }
            _ => return Err(self.unexpected("FILE or DIRECTORY inside TABULAR")),
        };
        self.expect(TokenKind::RParen)?;
        Ok(TabularSource { columns, inner })
    }

    fn expr(&mut self) -> Result<Expr> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error_here("expression nested too deeply"));
        }
        let e = self.binary(0);
        self.depth -= 1;
        e
    }

    fn peek_binary_op(&self) -> Option<BinaryOp> {
        Some(match self.peek()? {
            TokenKind::Keyword(Keyword::Or) => BinaryOp::Or,
            TokenKind::Keyword(Keyword::And) => BinaryOp::And,
            TokenKind::Eq => BinaryOp::Eq,
            TokenKind::NotEq => BinaryOp::NotEq,
            TokenKind::Lt => BinaryOp::Lt,
            TokenKind::LtEq => BinaryOp::LtEq,
            TokenKind::Gt => BinaryOp::Gt,
            TokenKind::GtEq => BinaryOp::GtEq,
            TokenKind::Plus => BinaryOp::Plus,
            TokenKind::Minus => BinaryOp::Minus,
            TokenKind::Concat => BinaryOp::Concat,
            TokenKind::Star => BinaryOp::Multiply,
            TokenKind::Slash => BinaryOp::Divide,
            TokenKind::Percent => BinaryOp::Modulo,
            _ => return None,
        })
    }

    /// Precedence climbing; NOT binds between AND and comparisons.
    fn binary(&mut self, min_prec: u8) -> Result<Expr> {
        let mut left = self.unary(min_prec)?;
        loop {
            if self.peek() == Some(&TokenKind::Keyword(Keyword::Is)) && min_prec <= 4 {
                self.pos += 1;
                let negated = self.eat_keyword(Keyword::Not);
                self.expect_keyword(Keyword::Null)?;
                left = Expr::IsNull {
                    expr: Box::new(left),
                    negated,
                };
                continue;
            }
            let Some(op) = self.peek_binary_op() else {
                break;
            };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let right = self.binary(prec + 1)?;
            left = Expr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn unary(&mut self, min_prec: u8) -> Result<Expr> {
        if min_prec <= 3 && self.eat_keyword(Keyword::Not) {
            self.depth += 1;
            if self.depth > MAX_DEPTH {
                return Err(self.error_here("expression nested too deeply"));
            }
            let inner = self.binary(3);
            self.depth -= 1;
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                expr: Box::new(inner?),
            });
        }
        if self.eat(&TokenKind::Minus) {
            self.depth += 1;
            if self.depth > MAX_DEPTH {
                return Err(self.error_here("expression nested too deeply"));
            }
            let inner = self.binary(7);
            self.depth -= 1;
            let inner = inner?;
            if let Expr::Literal(Literal::Number(n)) = inner {
                return Ok(Expr::Literal(Literal::Number(-n)));
            }
            return Ok(Expr::Unary {
                op: UnaryOp::Negate,
                expr: Box::new(inner),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        let Some(kind) = self.peek() else {
            return Err(self.unexpected("expression"));
        };
        match kind {
            TokenKind::Number(n) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Number(*n)))
            }
            TokenKind::String(s) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::String(s.clone())))
            }
            TokenKind::Keyword(Keyword::True) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Boolean(true)))
            }
            TokenKind::Keyword(Keyword::False) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Boolean(false)))
            }
            TokenKind::Keyword(Keyword::Null) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Null))
            }
            TokenKind::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            TokenKind::Keyword(Keyword::Prompt) => Ok(Expr::Prompt(self.prompt()?)),
            TokenKind::Keyword(Keyword::SemMatch) => self.sem_match(),
            TokenKind::Keyword(Keyword::SemGroup) => self.sem_group(),
            TokenKind::Keyword(Keyword::File) => Ok(Expr::File(self.file_source()?)),
            TokenKind::Keyword(Keyword::Directory) => {
                Ok(Expr::Directory(self.directory_source()?))
            }
            TokenKind::Keyword(Keyword::Tabular) => Ok(Expr::Tabular(Box::new(self.tabular()?))),
            TokenKind::Ident(_) | TokenKind::QuotedIdent(_) => {
                let quoted = matches!(kind, TokenKind::QuotedIdent(_));
                let name = self.identifier()?;
                if !quoted && self.peek() == Some(&TokenKind::LParen) {
                    return self.function_call(name);
                }
                if self.eat(&TokenKind::Dot) {
                    let column = self.identifier()?;
                    return Ok(Expr::Column(ColumnRef {
                        qualifier: Some(name),
                        name: column,
                    }));
                }
                Ok(Expr::Column(ColumnRef {
                    qualifier: None,
                    name,
                }))
            }
            _ => Err(self.unexpected("expression")),
        }
    }

    fn function_call(&mut self, name: String) -> Result<Expr> {
        self.expect(TokenKind::LParen)?;
        let name = name.to_ascii_lowercase();
        if self.peek() == Some(&TokenKind::Star) && self.peek_at(1) == Some(&TokenKind::RParen) {
            self.pos += 2;
            return Ok(Expr::Function {
                name,
                args: Vec::new(),
                star: true,
            });
        }
        let mut args = Vec::new();
        if !self.eat(&TokenKind::RParen) {
            loop {
                args.push(self.expr()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(TokenKind::RParen)?;
        }
        Ok(Expr::Function {
            name,
            args,
            star: false,
        })
    }

    fn sem_match(&mut self) -> Result<Expr> {
        self.expect_keyword(Keyword::SemMatch)?;
        self.expect(TokenKind::LParen)?;
        let left = self.expr()?;
        self.expect(TokenKind::Comma)?;
        let right = self.expr()?;
        let mut threshold = None;
        let mut method = None;
        if self.eat(&TokenKind::Comma) {
            match self.peek() {
                Some(TokenKind::Number(n)) => {
                    if !(0.0..=1.0).contains(n) {
                        return Err(self.error_here("SEM_MATCH threshold must be within [0, 1]"));
                    }
                    threshold = Some(*n);
                    self.pos += 1;
                }
                _ => return Err(self.unexpected("numeric SEM_MATCH threshold")),
            }
            if self.eat(&TokenKind::Comma) {
                let word = match self.peek() {
                    Some(TokenKind::Ident(s)) | Some(TokenKind::String(s)) => s.to_ascii_lowercase(),
                    _ => return Err(self.unexpected("SEM_MATCH method (vector or llm)")),
                };
                method = Some(match word.as_str() {
                    "vector" => MatchMethod::Vector,
                    "llm" => MatchMethod::Llm,
                    _ => {
                        return Err(
                            self.error_here(format!("unknown SEM_MATCH method '{word}'"))
                        )
                    }
                });
                self.pos += 1;
            }
        }
        self.expect(TokenKind::RParen)?;
        Ok(Expr::SemMatch(SemMatchExpr {
            left: Box::new(left),
            right: Box::new(right),
            threshold,
            method,
        }))
    }

    fn sem_group(&mut self) -> Result<Expr> {
        self.expect_keyword(Keyword::SemGroup)?;
        self.expect(TokenKind::LParen)?;
        let target = self.expr()?;
        self.expect(TokenKind::Comma)?;
        let prompt = self.string_literal("SEM_GROUP prompt string")?;
        if prompt.trim().is_empty() {
            return Err(self.error_here("SEM_GROUP prompt must not be empty"));
        }
        let mut group_count = None;
        if self.eat(&TokenKind::Comma) {
            match self.peek() {
                Some(TokenKind::Number(n)) if n.fract() == 0.0 && *n >= 1.0 && *n <= u32::MAX as f64 => {
                    group_count = Some(*n as u32);
                    self.pos += 1;
                }
                _ => return Err(self.unexpected("positive integer group count")),
            }
        }
        self.expect(TokenKind::RParen)?;
        Ok(Expr::SemGroup(SemGroupExpr {
            target: Box::new(target),
            prompt,
            group_count,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const STATEMENT_A: &str = r#"-- Statement a: simple query scenario
SELECT PROMPT("Analyze technical areas and count the number of publications in each area.")
FROM FILE("neurips_2024.txt");"#;

    pub(crate) const STATEMENT_C: &str = r#"SELECT count(area), SEM_GROUP(title, "Area of publications", 5) /* 5 is optional, which means divided into five groups */ as area
FROM TABULAR(PROMPT("title of the paper") as title FROM FILE("neurips_2024.txt"))
GROUP BY area;"#;

    fn select(s: &str) -> Select {
        match parse(s).unwrap() {
            Statement::Select(sel) => sel,
            other => panic!("not a select: {other:?}"),
        }
    }

    #[test]
    fn statement_a_shape() {
        let s = select(STATEMENT_A);
        assert_eq!(s.items.len(), 1);
        assert!(matches!(
            &s.items[0],
            SelectItem::Expr { expr: Expr::Prompt(p), alias: None } if p.text.starts_with("Analyze technical areas")
        ));
        assert_eq!(
            s.from.unwrap().source,
            Source::File(FileSource {
                name: "neurips_2024.txt".into()
            })
        );
    }

    #[test]
    fn statement_c_shape() {
        let s = select(STATEMENT_C);
        assert_eq!(s.items.len(), 2);
        match &s.items[0] {
            SelectItem::Expr {
                expr: Expr::Function { name, args, .. },
                alias: None,
            } => {
                assert_eq!(name, "count");
                assert_eq!(
                    args[0],
                    Expr::Column(ColumnRef {
                        qualifier: None,
                        name: "area".into()
                    })
                );
            }
            other => panic!("{other:?}"),
        }
        match &s.items[1] {
            SelectItem::Expr {
                expr: Expr::SemGroup(g),
                alias: Some(a),
            } => {
                assert_eq!(a, "area");
                assert_eq!(g.prompt, "Area of publications");
                assert_eq!(g.group_count, Some(5));
            }
            other => panic!("{other:?}"),
        }
        match s.from.unwrap().source {
            Source::Tabular(t) => {
                assert_eq!(t.columns.len(), 1);
                assert_eq!(t.columns[0].alias, "title");
                assert_eq!(t.columns[0].prompt.text, "title of the paper");
                assert_eq!(t.inner.name(), "neurips_2024.txt");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(s.group_by.len(), 1);
    }

    #[test]
    fn plain_select_star() {
        let s = select("SELECT * FROM t;");
        assert_eq!(s.items, vec![SelectItem::Wildcard]);
        assert_eq!(s.from.unwrap().source, Source::Named("t".into()));
    }

    #[test]
    fn semicolon_is_optional_but_one_statement_only() {
        assert!(parse("SELECT a FROM t").is_ok());
        assert!(parse("SELECT a FROM t; SELECT b FROM t").is_err());
    }

    #[test]
    fn sem_match_parameters() {
        let s = select("SELECT a FROM t WHERE SEM_MATCH(a, 'x', 0.5, vector)");
        match s.where_clause.unwrap() {
            Expr::SemMatch(m) => {
                assert_eq!(m.threshold, Some(0.5));
                assert_eq!(m.method, Some(MatchMethod::Vector));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse("SELECT a FROM t WHERE SEM_MATCH(a, 'x', 1.5)").is_err());
        assert!(parse("SELECT a FROM t WHERE SEM_MATCH(a, 'x', 0.5, magic)").is_err());
    }

    #[test]
    fn sem_group_count_must_be_positive() {
        assert!(parse("SELECT SEM_GROUP(a, 'p', 0) FROM t").is_err());
        assert!(parse("SELECT SEM_GROUP(a, 'p', 2.5) FROM t").is_err());
    }

    #[test]
    fn empty_prompt_rejected() {
        assert!(parse("SELECT PROMPT(\"  \") FROM t").is_err());
    }

    #[test]
    fn misplaced_file_parses_for_later_validation() {
        let s = select("SELECT FILE(\"x.txt\")");
        assert!(matches!(
            &s.items[0],
            SelectItem::Expr {
                expr: Expr::File(_),
                ..
            }
        ));
    }

    #[test]
    fn precedence() {
        let s = select("SELECT a FROM t WHERE a = 1 OR b = 2 AND NOT c = 3");
        match s.where_clause.unwrap() {
            Expr::Binary { op: BinaryOp::Or, right, .. } => match *right {
                Expr::Binary {
                    op: BinaryOp::And,
                    right,
                    ..
                } => assert!(matches!(*right, Expr::Unary { op: UnaryOp::Not, .. })),
                other => panic!("{other:?}"),
            },
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_is_positioned() {
        match parse("SELECT a\nFROM t\nWHERE (") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position.line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let s = format!("SELECT {}1{}", "(".repeat(5000), ")".repeat(5000));
        assert!(parse(&s).is_err());
        let s = format!("SELECT {}1", "NOT ".repeat(5000));
        assert!(parse(&s).is_err());
        let s = format!("SELECT {}1", "- ".repeat(5000));
        assert!(parse(&s).is_err());
    }

    #[test]
    fn create_and_insert() {
        assert!(matches!(
            parse("CREATE TABLE papers (title TEXT, year NUMBER)").unwrap(),
            Statement::CreateTable(CreateTable { ref columns, .. }) if columns.len() == 2
        ));
        match parse("INSERT INTO papers VALUES ('a', 2023), ('b', 2024)").unwrap() {
            Statement::Insert(i) => assert_eq!(i.rows.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
