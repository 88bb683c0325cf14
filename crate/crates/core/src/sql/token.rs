use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    Select,
    From,
    Where,
    Group,
    By,
    Having,
    Join,
    Inner,
    On,
    As,
    And,
    Or,
    Not,
    Is,
    Null,
    True,
    False,
    Create,
    Table,
    Insert,
    Into,
    Values,
    Prompt,
    SemMatch,
    SemGroup,
    Tabular,
    File,
    Directory,
}

impl Keyword {
    pub fn lookup(word: &str) -> Option<Keyword> {
        use Keyword::*;
        Some(match word.to_ascii_uppercase().as_str() {
            "SELECT" => Select,
            "FROM" => From,
            "WHERE" => Where,
            "GROUP" => Group,
            "BY" => By,
            "HAVING" => Having,
            "JOIN" => Join,
            "INNER" => Inner,
            "ON" => On,
            "AS" => As,
            "AND" => And,
            "OR" => Or,
            "NOT" => Not,
            "IS" => Is,
            "NULL" => Null,
            "TRUE" => True,
            "FALSE" => False,
            "CREATE" => Create,
            "TABLE" => Table,
            "INSERT" => Insert,
            "INTO" => Into,
            "VALUES" => Values,
            "PROMPT" => Prompt,
            "SEM_MATCH" => SemMatch,
            "SEM_GROUP" => SemGroup,
            "TABULAR" => Tabular,
            "FILE" => File,
            "DIRECTORY" => Directory,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        use Keyword::*;
        match self {
            Select => "SELECT",
            From => "FROM",
            Where => "WHERE",
            Group => "GROUP",
            By => "BY",
            Having => "HAVING",
            Join => "JOIN",
            Inner => "INNER",
            On => "ON",
            As => "AS",
            And => "AND",
            Or => "OR",
            Not => "NOT",
            Is => "IS",
            Null => "NULL",
            True => "TRUE",
            False => "FALSE",
            Create => "CREATE",
            Table => "TABLE",
            Insert => "INSERT",
            Into => "INTO",
            Values => "VALUES",
            Prompt => "PROMPT",
            SemMatch => "SEM_MATCH",
            SemGroup => "SEM_GROUP",
            Tabular => "TABULAR",
            File => "FILE",
            Directory => "DIRECTORY",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident(String),
    /// Backtick-quoted identifier.
    QuotedIdent(String),
    /// Single- or double-quoted string literal, quotes unescaped.
    String(String),
    Number(f64),
    Comma,
    LParen,
    RParen,
    Semicolon,
    Dot,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Concat,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
}

/// Splits `text` into tokens, dropping whitespace and comments.
pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    // advance over chars[i..j], tracking line/column
    fn advance(chars: &[char], from: usize, to: usize, line: &mut usize, col: &mut usize) {
        for c in &chars[from..to] {
            if *c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        }
    }

    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        if c.is_whitespace() {
            advance(&chars, i, i + 1, &mut line, &mut col);
            i += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            let mut j = i;
            while j < chars.len() && chars[j] != '\n' {
                j += 1;
            }
            advance(&chars, i, j, &mut line, &mut col);
            i = j;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let mut j = i + 2;
            loop {
                if j + 1 >= chars.len() {
                    return Err(Error::syntax(start_line, start_col, "unterminated comment"));
                }
                if chars[j] == '*' && chars[j + 1] == '/' {
                    j += 2;
                    break;
                }
                j += 1;
            }
            advance(&chars, i, j, &mut line, &mut col);
            i = j;
            continue;
        }
        let push = |tokens: &mut Vec<Token>, kind| {
            tokens.push(Token {
                kind,
                line: start_line,
                column: start_col,
            })
        };
        if c == '\'' || c == '"' || c == '`' {
            let quote = c;
            let mut j = i + 1;
            let mut value = String::new();
            loop {
                if j >= chars.len() {
                    let what = if quote == '`' { "identifier" } else { "string" };
                    return Err(Error::syntax(
                        start_line,
                        start_col,
                        format!("unterminated {what}"),
                    ));
                }
                if chars[j] == quote {
                    if chars.get(j + 1) == Some(&quote) {
                        value.push(quote);
                        j += 2;
                        continue;
                    }
                    j += 1;
                    break;
                }
                value.push(chars[j]);
                j += 1;
            }
            advance(&chars, i, j, &mut line, &mut col);
            i = j;
            let kind = if quote == '`' {
                TokenKind::QuotedIdent(value)
            } else {
                TokenKind::String(value)
            };
            push(&mut tokens, kind);
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if j < chars.len() && chars[j] == '.' {
                j += 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let text: String = chars[i..j].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| Error::syntax(start_line, start_col, format!("bad number '{text}'")))?;
            advance(&chars, i, j, &mut line, &mut col);
            i = j;
            push(&mut tokens, TokenKind::Number(value));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            advance(&chars, i, j, &mut line, &mut col);
            i = j;
            let kind = match Keyword::lookup(&word) {
                Some(k) => TokenKind::Keyword(k),
                None => TokenKind::Ident(word),
            };
            push(&mut tokens, kind);
            continue;
        }
        let two: Option<char> = chars.get(i + 1).copied();
        let (kind, width) = match (c, two) {
            ('<', Some('=')) => (TokenKind::LtEq, 2),
            ('>', Some('=')) => (TokenKind::GtEq, 2),
            ('<', Some('>')) => (TokenKind::NotEq, 2),
            ('!', Some('=')) => (TokenKind::NotEq, 2),
            ('|', Some('|')) => (TokenKind::Concat, 2),
            ('=', _) => (TokenKind::Eq, 1),
            ('<', _) => (TokenKind::Lt, 1),
            ('>', _) => (TokenKind::Gt, 1),
            (',', _) => (TokenKind::Comma, 1),
            ('(', _) => (TokenKind::LParen, 1),
            (')', _) => (TokenKind::RParen, 1),
            (';', _) => (TokenKind::Semicolon, 1),
            ('.', _) => (TokenKind::Dot, 1),
            ('*', _) => (TokenKind::Star, 1),
            ('+', _) => (TokenKind::Plus, 1),
            ('-', _) => (TokenKind::Minus, 1),
            ('/', _) => (TokenKind::Slash, 1),
            ('%', _) => (TokenKind::Percent, 1),
            _ => {
                return Err(Error::syntax(
                    start_line,
                    start_col,
                    format!("unexpected character '{c}'"),
                ))
            }
        };
        advance(&chars, i, i + width, &mut line, &mut col);
        i += width;
        push(&mut tokens, kind);
    }
    Ok(tokens)
}
