//! Statement splitting, meta-commands and result rendering shared by the
//! REPL and the batch runner.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use semsql::error::{Error, Position};
use semsql::relation::Relation;
use semsql::storage::ChunkParams;
use semsql::{QueryResult, Session, StatementOutcome};

use crate::config::OutputFormat;

/// One unit of input: a SQL statement or a meta-command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub text: String,
    pub meta: bool,
    /// 1-based position of the piece's first character in the script.
    pub line: usize,
    pub column: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Lex {
    Code,
    Single,
    Double,
    LineComment,
    BlockComment,
}

/// Meta-commands whose argument is a statement running to `;`.
const STATEMENT_META: [&str; 2] = ["\\explain", "\\analyze"];

/// Splits input into complete pieces and returns the unterminated tail.
///
/// SQL statements end at a `;` outside quotes and comments. A meta-command
/// starts with `\` at the beginning of a piece and ends at the end of its
/// line, except `\explain` and `\analyze`, which end like statements.
/// Pieces holding only whitespace and comments are dropped.
pub fn split(text: &str) -> (Vec<Piece>, String) {
    let chars: Vec<char> = text.chars().collect();
    let mut pieces = Vec::new();
    let (mut line, mut column) = (1usize, 1usize);
    let mut lex = Lex::Code;
    let mut start = 0usize;
    let mut start_pos = (1usize, 1usize);
    // Position of the first significant character of the current piece.
    let mut first: Option<(usize, usize, usize)> = None;
    let mut meta_line_end = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        let mut advance = 1;
        let mut end_here = false;
        match lex {
            Lex::Code => {
                if c == '-' && next == Some('-') {
                    lex = Lex::LineComment;
                    advance = 2;
                } else if c == '/' && next == Some('*') {
                    lex = Lex::BlockComment;
                    advance = 2;
                } else if c == '\n' && meta_line_end {
                    end_here = true;
                } else if !c.is_whitespace() {
                    if first.is_none() {
                        first = Some((i, line, column));
                        if c == '\\' {
                            let word: String = chars[i..].iter().take_while(|c| !c.is_whitespace()).collect();
                            meta_line_end = !STATEMENT_META.contains(&word.as_str());
                        }
                    }
                    match c {
                        '\'' => lex = Lex::Single,
                        '"' => lex = Lex::Double,
                        ';' if !meta_line_end => end_here = true,
                        _ => {}
                    }
                }
            }
            Lex::Single if c == '\'' => lex = Lex::Code,
            Lex::Double if c == '"' => lex = Lex::Code,
            Lex::LineComment if c == '\n' => {
                lex = Lex::Code;
                end_here = meta_line_end;
            }
            Lex::BlockComment if c == '*' && next == Some('/') => {
                lex = Lex::Code;
                advance = 2;
            }
            _ => {}
        }
        for _ in 0..advance {
            if chars.get(i) == Some(&'\n') {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            i += 1;
        }
        if end_here {
            if let Some((f, l, col)) = first {
                let meta = chars[f] == '\\';
                let (from, l, col) = if meta { (f, l, col) } else { (start, start_pos.0, start_pos.1) };
                let body: String = chars[from..i].iter().collect();
                pieces.push(Piece {
                    text: body.trim_end().to_string(),
                    meta,
                    line: l,
                    column: col,
                });
            }
            start = i;
            start_pos = (line, column);
            first = None;
            meta_line_end = false;
        }
    }
    // A trailing meta-command without a newline is complete.
    if meta_line_end && lex != Lex::BlockComment {
        if let Some((f, l, col)) = first {
            let body: String = chars[f..].iter().collect();
            pieces.push(Piece {
                text: body.trim_end().to_string(),
                meta: true,
                line: l,
                column: col,
            });
            return (pieces, String::new());
        }
    }
    let rest: String = chars[start..].iter().collect();
    if first.is_none() && lex != Lex::BlockComment {
        return (pieces, String::new());
    }
    (pieces, rest)
}

/// Every meta-command with its usage line.
pub const HELP: &[(&str, &str)] = &[
    ("\\help", "list meta-commands"),
    ("\\explain <statement>;", "show candidate plans with cost breakdowns; the chosen plan is marked SELECTED"),
    ("\\analyze <statement>;", "execute and show per-operator rows, calls, tokens and time"),
    ("\\feedback <score>", "score the last query's result in [0, 1] to calibrate the models it used"),
    ("\\calibrate <model>", "cross-validate a sample of the last query's model calls against <model>"),
    ("\\register file|dir <name> <path>", "chunk and register a document or a directory of documents"),
    ("\\set lambda <x>", "set the cost/accuracy trade-off (0 = cheapest)"),
    ("\\format table|csv|json", "choose the result format"),
    ("\\ledger", "show token usage and cost of every model call so far"),
    ("\\quit", "leave the shell"),
];

/// A failure with its process exit code.
#[derive(Debug)]
pub struct ShellError {
    pub code: i32,
    pub message: String,
}

impl ShellError {
    fn query(message: impl Into<String>) -> ShellError {
        ShellError {
            code: 1,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ShellError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Quit,
}

/// Moves a syntax position from piece coordinates to script coordinates.
fn relocate(err: Error, piece: &Piece, skip: usize) -> Error {
    match err {
        Error::Syntax { position, message } => {
            let column = if position.line == 1 {
                position.column + piece.column - 1 + skip
            } else {
                position.column
            };
            Error::Syntax {
                position: Position {
                    line: position.line + piece.line - 1,
                    column,
                },
                message,
            }
        }
        other => other,
    }
}

pub struct Shell<O: Write, E: Write> {
    pub session: Session,
    pub format: OutputFormat,
    pub chunk: ChunkParams,
    /// Directory that relative `\register` paths resolve against.
    pub base_dir: PathBuf,
    out: O,
    err: E,
    last: Option<Relation>,
}

impl<O: Write, E: Write> Shell<O, E> {
    pub fn new(session: Session, format: OutputFormat, chunk: ChunkParams, out: O, err: E) -> Self {
        Shell {
            session,
            format,
            chunk,
            base_dir: PathBuf::from("."),
            out,
            err,
            last: None,
        }
    }

    /// The most recent query result.
    pub fn last_relation(&self) -> Option<&Relation> {
        self.last.as_ref()
    }

    pub fn into_writers(self) -> (O, E) {
        (self.out, self.err)
    }

    fn emit(&mut self, text: &str) -> Result<(), ShellError> {
        self.out
            .write_all(text.as_bytes())
            .map_err(|e| ShellError::query(format!("writing output: {e}")))
    }

    fn warn(&mut self, text: &str) {
        let _ = writeln!(self.err, "warning: {text}");
    }

    pub fn render(&self, rel: &Relation) -> Result<String, ShellError> {
        Ok(match self.format {
            OutputFormat::Table => rel.to_table_string(),
            OutputFormat::Csv => rel.to_csv().map_err(|e| ShellError::query(e.to_string()))?,
            OutputFormat::Json => format!("{}\n", rel.to_json()),
        })
    }

    /// Runs a whole script, stopping at the first error.
    pub fn run_script(&mut self, text: &str) -> Result<(), ShellError> {
        let (pieces, rest) = split(text);
        for p in &pieces {
            if self.run_piece(p)? == Control::Quit {
                return Ok(());
            }
        }
        if !rest.trim().is_empty() {
            let (_, line_no) = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .last()
                .map(|(i, l)| (l, i + 1))
                .unwrap_or(("", 1));
            return Err(ShellError::query(format!(
                "syntax error at {line_no}:1: statement is not terminated by ';'"
            )));
        }
        Ok(())
    }

    /// Interactive loop: errors are reported and the loop continues.
    pub fn repl(&mut self, input: impl BufRead, interactive: bool) -> Result<(), ShellError> {
        let mut buffer = String::new();
        let mut line_base = 0usize;
        if interactive {
            self.prompt(false);
        }
        for line in input.lines() {
            let line = line.map_err(|e| ShellError::query(format!("reading input: {e}")))?;
            buffer.push_str(&line);
            buffer.push('\n');
            let (pieces, rest) = split(&buffer);
            for mut p in pieces {
                p.line += line_base;
                match self.run_piece(&p) {
                    Ok(Control::Quit) => return Ok(()),
                    Ok(Control::Continue) => {}
                    Err(e) => {
                        let _ = writeln!(self.err, "error: {e}");
                    }
                }
            }
            if rest.is_empty() {
                line_base += buffer.matches('\n').count();
                buffer.clear();
            } else {
                let consumed = &buffer[..buffer.len() - rest.len()];
                line_base += consumed.matches('\n').count();
                buffer = rest;
            }
            if interactive {
                self.prompt(!buffer.trim().is_empty());
            }
        }
        if !buffer.trim().is_empty() {
            let _ = writeln!(self.err, "error: input ended inside an unterminated statement");
        }
        Ok(())
    }

    fn prompt(&mut self, continuation: bool) {
        let _ = write!(self.out, "{}", if continuation { "   ...> " } else { "semsql> " });
        let _ = self.out.flush();
    }

    pub fn run_piece(&mut self, p: &Piece) -> Result<Control, ShellError> {
        if p.meta {
            return self.meta(p);
        }
        let outcome = self
            .session
            .execute(&p.text)
            .map_err(|e| ShellError::query(format!("{}", relocate(e, p, 0))))?;
        self.outcome(outcome, false)?;
        Ok(Control::Continue)
    }

    fn outcome(&mut self, outcome: StatementOutcome, analyze: bool) -> Result<(), ShellError> {
        match outcome {
            StatementOutcome::Created { table } => self.emit(&format!("CREATE TABLE {table}\n")),
            StatementOutcome::Inserted { rows, .. } => self.emit(&format!("INSERT {rows}\n")),
            StatementOutcome::Query(r) => self.query_result(*r, analyze),
        }
    }

    fn query_result(&mut self, r: QueryResult, analyze: bool) -> Result<(), ShellError> {
        let text = self.render(&r.relation)?;
        self.emit(&text)?;
        if analyze {
            let report = format!("query {} plan {}\n{}", r.query_id, r.metrics.plan_id, r.metrics.render(true));
            self.emit(&report)?;
        } else {
            for w in &r.metrics.warnings {
                self.warn(w);
            }
        }
        self.last = Some(r.relation);
        Ok(())
    }

    fn meta(&mut self, p: &Piece) -> Result<Control, ShellError> {
        let text = p.text.trim();
        let (cmd, arg) = match text.find(char::is_whitespace) {
            Some(i) => (&text[..i], text[i..].trim()),
            None => (text, ""),
        };
        let skip = text.len() - text[cmd.len()..].trim_start().len();
        let usage = |c: &str| {
            let line = HELP.iter().find(|(u, _)| u.split(' ').next() == Some(c)).map(|(u, _)| *u).unwrap_or(c);
            ShellError::query(format!("usage: {line}"))
        };
        match cmd {
            "\\help" | "\\?" => {
                let width = HELP.iter().map(|(u, _)| u.len()).max().unwrap_or(0);
                let mut s = String::new();
                for (u, d) in HELP {
                    s.push_str(&format!("{u:width$}  {d}\n"));
                }
                self.emit(&s)?;
            }
            "\\quit" | "\\q" => return Ok(Control::Quit),
            "\\explain" => {
                if arg.is_empty() {
                    return Err(usage(cmd));
                }
                let text = self
                    .session
                    .explain(arg)
                    .map_err(|e| ShellError::query(format!("{}", relocate(e, p, skip))))?;
                self.emit(&text)?;
            }
            "\\analyze" => {
                if arg.is_empty() {
                    return Err(usage(cmd));
                }
                let outcome = self
                    .session
                    .execute(arg)
                    .map_err(|e| ShellError::query(format!("{}", relocate(e, p, skip))))?;
                self.outcome(outcome, true)?;
            }
            "\\feedback" => {
                let score: f64 = arg.parse().map_err(|_| usage(cmd))?;
                let qid = self
                    .session
                    .last_query_id()
                    .ok_or_else(|| ShellError::query("no query to give feedback on"))?
                    .to_string();
                let records = self.session.feedback(&qid, score).map_err(|e| ShellError::query(e.to_string()))?;
                if records.is_empty() {
                    self.warn(&format!("query {qid} used no model; feedback ignored"));
                } else {
                    let mut s = format!("feedback {} recorded for query {qid}\n", semsql::relation::format_number(score));
                    for r in &records {
                        if let Ok(spec) = self.session.gateway().roster().get(&r.model_id) {
                            let m = self.session.calibrator().matrix(&r.model_id, &spec.prior);
                            s.push_str(&format!(
                                "  {} {}: A=({:.8}, {:.8})\n",
                                r.model_id, r.operator, m.a_input, m.a_output
                            ));
                        }
                    }
                    self.emit(&s)?;
                }
            }
            "\\calibrate" => {
                if arg.is_empty() || arg.contains(char::is_whitespace) {
                    return Err(usage(cmd));
                }
                let qid = self
                    .session
                    .last_query_id()
                    .ok_or_else(|| ShellError::query("no query to calibrate against"))?
                    .to_string();
                match self.session.calibrate(&qid, arg).map_err(|e| ShellError::query(e.to_string()))? {
                    None => self.warn(&format!("query {qid} made no model calls; nothing to calibrate")),
                    Some(cv) => {
                        let s = format!(
                            "calibrated query {qid} against {arg}: sampled={} agreement={} rules={} score={}\n",
                            cv.sampled,
                            semsql::relation::format_number(cv.agreement),
                            semsql::relation::format_number(cv.rule_score),
                            semsql::relation::format_number(cv.score),
                        );
                        self.emit(&s)?;
                    }
                }
            }
            "\\register" => {
                let parts: Vec<&str> = arg.split_whitespace().collect();
                let [kind, name, path] = parts[..] else {
                    return Err(usage(cmd));
                };
                let path = self.resolve(path);
                let chunk = self.chunk;
                let n = match kind {
                    "file" => self.session.catalog_mut().register_file(name, &path, chunk),
                    "dir" => self.session.catalog_mut().register_directory(name, &path, chunk),
                    _ => return Err(usage(cmd)),
                }
                .map_err(|e| ShellError::query(e.to_string()))?;
                self.emit(&format!("registered {kind} {name}: {n} chunks\n"))?;
            }
            "\\set" => {
                let parts: Vec<&str> = arg.split_whitespace().collect();
                match parts[..] {
                    ["lambda", x] => {
                        let v: f64 = x.parse().map_err(|_| usage(cmd))?;
                        self.session.set_lambda(v).map_err(|e| ShellError::query(e.to_string()))?;
                        self.emit(&format!("lambda = {}\n", semsql::relation::format_number(v)))?;
                    }
                    _ => return Err(usage(cmd)),
                }
            }
            "\\format" => {
                self.format = OutputFormat::parse(arg).map_err(|_| usage(cmd))?;
            }
            "\\ledger" => {
                let text = self.session.gateway().ledger().render();
                self.emit(&text)?;
            }
            other => {
                return Err(ShellError::query(format!("unknown meta-command {other}; try \\help")));
            }
        }
        Ok(Control::Continue)
    }

    fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(input: &str) -> Vec<String> {
        split(input).0.into_iter().map(|p| p.text).collect()
    }

    #[test]
    fn splits_on_unquoted_semicolons() {
        let s = "SELECT 'a;b' FROM t; -- c;\nSELECT \"x;\" /* ; */ FROM u;";
        assert_eq!(texts(s), vec!["SELECT 'a;b' FROM t;", " -- c;\nSELECT \"x;\" /* ; */ FROM u;"]);
    }

    #[test]
    fn meta_commands_end_at_newline() {
        let (p, rest) = split("\\format csv\n\\explain SELECT 1\nFROM t;\n\\quit");
        let t: Vec<_> = p.iter().map(|x| (x.text.as_str(), x.meta, x.line)).collect();
        assert_eq!(
            t,
            vec![("\\format csv", true, 1), ("\\explain SELECT 1\nFROM t;", true, 2), ("\\quit", true, 4)]
        );
        assert_eq!(rest, "");
    }

    #[test]
    fn incomplete_tail_is_returned() {
        let (p, rest) = split("SELECT 1 FROM t;\nSELECT 2\n");
        assert_eq!(p.len(), 1);
        assert_eq!(rest, "\nSELECT 2\n");
        let (p, rest) = split("-- only a comment\n  \n");
        assert!(p.is_empty());
        assert_eq!(rest, "");
    }

    #[test]
    fn positions_track_lines() {
        let (p, _) = split("\n\nSELECT 1 FROM t;\n  SELECT 2 FROM t;");
        assert_eq!((p[0].line, p[0].column), (1, 1));
        assert_eq!((p[1].line, p[1].column), (3, 17));
    }

    #[test]
    fn every_meta_command_has_help() {
        for cmd in ["\\help", "\\explain", "\\analyze", "\\feedback", "\\calibrate", "\\register", "\\set", "\\format", "\\ledger", "\\quit"] {
            assert!(HELP.iter().any(|(u, _)| u.split(' ').next() == Some(cmd)), "{cmd}");
        }
    }
}
