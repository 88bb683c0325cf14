//! Interpreter for model-generated transform programs.
//!
//! A program is an optional first line `explode lines(<column>) as <name>`
//! followed by assignment lines `<field> := <expression>`. Expressions use
//! the engine's scalar language: column references, literals, arithmetic,
//! comparisons and the built-in string functions. There is no I/O and no
//! looping beyond applying the program to each row (or each line).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::plan::bind::scalar;
use crate::plan::ScalarExpr;
use crate::relation::Value;
use crate::sql::parse_expression;

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    /// (column, variable) of the explode line.
    pub explode: Option<(String, String)>,
    pub assignments: Vec<(String, ScalarExpr)>,
}

fn strip_fences(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("```") && !l.starts_with('#') && !l.starts_with("--"))
}

fn parse_explode(line: &str) -> Option<(String, String)> {
    let rest = line.strip_prefix("explode")?.trim_start();
    let rest = rest.strip_prefix("lines(")?;
    let close = rest.find(')')?;
    let column = rest[..close].trim().to_string();
    let var = rest[close + 1..].trim().strip_prefix("as")?.trim().to_string();
    let ident = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.');
    (ident(&column) && ident(&var)).then_some((column, var))
}

impl Program {
    /// Parses program text. `known` are the names an expression may use
    /// besides the explode variable and earlier assignments.
    pub fn parse(text: &str, known: &[String]) -> Result<Program> {
        let mut explode = None;
        let mut assignments: Vec<(String, ScalarExpr)> = Vec::new();
        let mut names: Vec<String> = known.to_vec();
        for (n, line) in strip_fences(text).enumerate() {
            if line.starts_with("explode") {
                if n != 0 || explode.is_some() {
                    return Err(Error::Exec(format!("explode must be the first line: '{line}'")));
                }
                let (col, var) = parse_explode(line)
                    .ok_or_else(|| Error::Exec(format!("malformed explode line: '{line}'")))?;
                if !names.iter().any(|k| k.eq_ignore_ascii_case(&col)) {
                    return Err(Error::Exec(format!("explode names unknown column '{col}'")));
                }
                names.push(var.clone());
                explode = Some((col, var));
                continue;
            }
            let (target, expr) = line
                .split_once(":=")
                .ok_or_else(|| Error::Exec(format!("expected `field := expression`, got '{line}'")))?;
            let target = target.trim().to_string();
            if target.is_empty() || !target.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return Err(Error::Exec(format!("invalid assignment target '{target}'")));
            }
            let parsed = parse_expression(expr.trim())
                .map_err(|e| Error::Exec(format!("cannot parse expression '{}': {e}", expr.trim())))?;
            let bound = scalar(&parsed, &|c| {
                let full = match &c.qualifier {
                    Some(q) => format!("{q}.{}", c.name),
                    None => c.name.clone(),
                };
                names
                    .iter()
                    .find(|k| k.eq_ignore_ascii_case(&full))
                    .cloned()
                    .ok_or_else(|| Error::Exec(format!("program references unknown name '{full}'")))
            })?;
            if bound.is_semantic() {
                return Err(Error::Exec("programs cannot call PROMPT or SEM_MATCH".into()));
            }
            names.push(target.clone());
            assignments.push((target, bound));
        }
        if assignments.is_empty() {
            return Err(Error::Exec("program has no assignments".into()));
        }
        Ok(Program { explode, assignments })
    }

    /// Runs the program over one input row given as name → value. Each
    /// output map holds every assigned field.
    pub fn run(&self, row: &BTreeMap<String, Value>) -> Result<Vec<BTreeMap<String, Value>>> {
        let get = |env: &BTreeMap<String, Value>, name: &str| -> Option<Value> {
            env.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.clone())
        };
        let mut envs = Vec::new();
        match &self.explode {
            Some((col, var)) => {
                let text = match get(row, col) {
                    Some(Value::Text(t)) => t,
                    Some(Value::Null) | None => String::new(),
                    Some(other) => other.render(),
                };
                for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
                    let mut env = row.clone();
                    env.insert(var.clone(), Value::text(line));
                    envs.push(env);
                }
            }
            None => envs.push(row.clone()),
        }
        let mut out = Vec::with_capacity(envs.len());
        for mut env in envs {
            let mut fields = BTreeMap::new();
            for (target, expr) in &self.assignments {
                let v = expr.eval_with(&|n| get(&env, n))?;
                env.insert(target.clone(), v.clone());
                fields.insert(target.clone(), v);
            }
            out.push(fields);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pairs: &[(&str, &str)]) -> BTreeMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), Value::text(*v))).collect()
    }

    #[test]
    fn lower_over_three_rows() {
        let p = Program::parse("title_lc := lower(title)", &["title".into()]).unwrap();
        let got: Vec<Value> = ["A B", "Graph", "XY"]
            .iter()
            .map(|t| p.run(&row(&[("title", t)])).unwrap()[0]["title_lc"].clone())
            .collect();
        assert_eq!(got, vec![Value::text("a b"), Value::text("graph"), Value::text("xy")]);
    }

    #[test]
    fn explode_lines_and_chained_assignments() {
        let prog = "```\nexplode lines(text) as line\ntitle := trim(line)\nshort := substr(title, 1, 3)\n```";
        let p = Program::parse(prog, &["chunk_id".into(), "text".into()]).unwrap();
        let out = p.run(&row(&[("text", "Alpha one\n\n  Beta two \n")])).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1]["title"], Value::text("Beta two"));
        assert_eq!(out[0]["short"], Value::text("Alp"));
    }

    #[test]
    fn keyword_classifier_program() {
        let prog = r#"area := if(contains(lower(title), 'diffusion'), 'Diffusion Models', 'Other')"#;
        let p = Program::parse(prog, &["title".into()]).unwrap();
        assert_eq!(p.run(&row(&[("title", "Latent Diffusion Models")])).unwrap()[0]["area"], Value::text("Diffusion Models"));
        assert_eq!(p.run(&row(&[("title", "Graphs")])).unwrap()[0]["area"], Value::text("Other"));
    }

    #[test]
    fn invalid_programs() {
        assert!(Program::parse("title = lower(", &["title".into()]).is_err());
        assert!(Program::parse("x := lower(", &["title".into()]).is_err());
        assert!(Program::parse("x := nope", &["title".into()]).is_err());
        assert!(Program::parse("", &["title".into()]).is_err());
        assert!(Program::parse("x := 1\nexplode lines(title) as l", &["title".into()]).is_err());
        let err = Program::parse("x := upper(title) + ", &["title".into()]).unwrap_err();
        assert!(err.to_string().contains("cannot parse"));
    }
}
