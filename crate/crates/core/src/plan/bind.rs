use super::*;
use crate::error::{Error, Result};
use crate::relation::Value;
use crate::sql::ast::*;
use crate::sql::render_expr;
use crate::storage::Catalog;

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Table { name: String, schema: Schema },
    File { name: String },
    Directory { name: String },
}

/// One FROM or JOIN source after binding.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSource {
    /// Alias, or the source name when no alias was given.
    pub label: String,
    /// Set when the statement has several sources; columns are then named
    /// `<label>.<column>` internally.
    pub qualified: bool,
    pub kind: SourceKind,
    pub stats: SourceStats,
    /// Raw scan schema.
    pub scan_schema: Schema,
    /// TABULAR extraction, or the implicit transform of PROMPT select items.
    pub transform: Option<TransformSpec>,
}

impl BoundSource {
    pub fn output_schema(&self) -> Result<Schema> {
        match &self.transform {
            Some(t) => t.output_schema(&self.scan_schema),
            None => Ok(self.scan_schema.clone()),
        }
    }

    fn internal(&self, column: &str) -> String {
        if self.qualified {
            format!("{}.{column}", self.label)
        } else {
            column.to_string()
        }
    }

    fn scan_source(&self) -> ScanSource {
        match &self.kind {
            SourceKind::Table { name, schema } => ScanSource::Table {
                name: name.clone(),
                schema: schema.clone(),
            },
            SourceKind::File { name } => ScanSource::File { name: name.clone() },
            SourceKind::Directory { name } => ScanSource::Directory { name: name.clone() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundItem {
    pub expr: ScalarExpr,
    pub name: String,
}

/// A SELECT statement with every name resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSelect {
    pub text: String,
    pub sources: Vec<BoundSource>,
    /// `joins[i]` joins `sources[i + 1]` onto everything before it.
    pub joins: Vec<ScalarExpr>,
    pub where_clause: Option<ScalarExpr>,
    /// PROMPT select items over structured rows.
    pub map_transform: Option<TransformSpec>,
    pub group: Option<(Vec<GroupKey>, Vec<Aggregate>)>,
    pub having: Option<ScalarExpr>,
    pub items: Vec<BoundItem>,
    pub context: PromptContext,
}

struct ScopeColumn {
    label: String,
    base: String,
    internal: String,
}

struct Scope {
    columns: Vec<ScopeColumn>,
}

impl Scope {
    fn resolve(&self, c: &ColumnRef) -> Result<String> {
        let hits: Vec<&ScopeColumn> = self
            .columns
            .iter()
            .filter(|s| {
                s.base.eq_ignore_ascii_case(&c.name)
                    && c.qualifier.as_ref().is_none_or(|q| q.eq_ignore_ascii_case(&s.label))
            })
            .collect();
        match hits.len() {
            0 => Err(Error::Bind(format!("unknown column '{c}'"))),
            1 => Ok(hits[0].internal.clone()),
            _ => Err(Error::Bind(format!("ambiguous column '{c}'"))),
        }
    }

    fn try_resolve(&self, c: &ColumnRef) -> Option<String> {
        self.resolve(c).ok()
    }
}

fn literal(l: &Literal) -> Result<Value> {
    Ok(match l {
        Literal::Number(n) => Value::number(*n)?,
        Literal::String(s) => Value::text(s.clone()),
        Literal::Boolean(b) => Value::Boolean(*b),
        Literal::Null => Value::Null,
    })
}

/// Converts a scalar AST expression, resolving columns through `resolve`.
pub(crate) fn scalar(e: &Expr, resolve: &dyn Fn(&ColumnRef) -> Result<String>) -> Result<ScalarExpr> {
    Ok(match e {
        Expr::Column(c) => ScalarExpr::Column(resolve(c)?),
        Expr::Literal(l) => ScalarExpr::Literal(literal(l)?),
        Expr::Binary { op, left, right } => ScalarExpr::Binary {
            op: *op,
            left: Box::new(scalar(left, resolve)?),
            right: Box::new(scalar(right, resolve)?),
        },
        Expr::Unary { op: UnaryOp::Not, expr } => ScalarExpr::Not(Box::new(scalar(expr, resolve)?)),
        Expr::Unary { op: UnaryOp::Negate, expr } => ScalarExpr::Negate(Box::new(scalar(expr, resolve)?)),
        Expr::IsNull { expr, negated } => ScalarExpr::IsNull {
            expr: Box::new(scalar(expr, resolve)?),
            negated: *negated,
        },
        Expr::Function { name, args, star } => {
            let lname = name.to_ascii_lowercase();
            if e.is_aggregate_call() {
                return Err(Error::Bind(format!("aggregate {lname}() is not allowed here")));
            }
            if *star || !SCALAR_FUNCTIONS.contains(&lname.as_str()) {
                return Err(Error::Bind(format!("unknown function '{name}'")));
            }
            ScalarExpr::Function {
                name: lname,
                args: args.iter().map(|a| scalar(a, resolve)).collect::<Result<_>>()?,
            }
        }
        Expr::Prompt(p) => ScalarExpr::Prompt(p.text.clone()),
        Expr::SemMatch(m) => ScalarExpr::SemMatch {
            left: Box::new(scalar(&m.left, resolve)?),
            right: Box::new(scalar(&m.right, resolve)?),
            threshold: m.effective_threshold(),
            method: m.method,
        },
        Expr::SemGroup(_) => return Err(Error::Bind("SEM_GROUP is only supported as a grouping select item".into())),
        Expr::File(_) | Expr::Directory(_) | Expr::Tabular(_) => {
            return Err(Error::Bind("FILE, DIRECTORY and TABULAR are only valid as sources".into()))
        }
    })
}

fn bind_source(t: &TableRef, catalog: &Catalog, qualified: bool) -> Result<BoundSource> {
    use crate::relation::DataType::{Number, Text};
    let file_schema = || vec![Column::new("chunk_id", Number), Column::new("text", Text)];
    let dir_schema = || {
        vec![
            Column::new("doc_id", Text),
            Column::new("chunk_id", Number),
            Column::new("text", Text),
        ]
    };
    let check_file = |name: &str| -> Result<SourceStats> {
        catalog
            .file_stats(name)
            .map_err(|_| Error::Bind(format!("file '{name}' is not registered")))
    };
    let check_dir = |name: &str| -> Result<SourceStats> {
        catalog
            .directory_stats(name)
            .map_err(|_| Error::Bind(format!("directory '{name}' is not registered")))
    };
    let (default_label, kind, stats, cols, tabular) = match &t.source {
        Source::Named(name) => {
            let schema = catalog
                .table_schema(name)
                .map_err(|_| Error::Bind(format!("unknown relation '{name}'")))?
                .clone();
            let stats = catalog.table_stats(name)?;
            let cols = schema.columns().to_vec();
            (name.clone(), SourceKind::Table { name: name.clone(), schema }, stats, cols, None)
        }
        Source::File(f) => (
            f.name.clone(),
            SourceKind::File { name: f.name.clone() },
            check_file(&f.name)?,
            file_schema(),
            None,
        ),
        Source::Directory(d) => (
            d.name.clone(),
            SourceKind::Directory { name: d.name.clone() },
            check_dir(&d.name)?,
            dir_schema(),
            None,
        ),
        Source::Tabular(tab) => {
            let (kind, stats, cols) = match &tab.inner {
                UnstructuredSource::File(f) => (SourceKind::File { name: f.name.clone() }, check_file(&f.name)?, file_schema()),
                UnstructuredSource::Directory(d) => {
                    (SourceKind::Directory { name: d.name.clone() }, check_dir(&d.name)?, dir_schema())
                }
            };
            for (i, c) in tab.columns.iter().enumerate() {
                if tab.columns[..i].iter().any(|o| o.alias.eq_ignore_ascii_case(&c.alias)) {
                    return Err(Error::Bind(format!("duplicate TABULAR column alias '{}'", c.alias)));
                }
            }
            (tab.inner.name().to_string(), kind, stats, cols, Some(tab))
        }
        Source::Expr(e) => {
            return Err(Error::Bind(format!("'{}' is not a valid source", render_expr(e))));
        }
    };
    let label = t.alias.clone().unwrap_or(default_label);
    let mut src = BoundSource {
        label,
        qualified,
        kind,
        stats,
        scan_schema: Schema::empty(),
        transform: None,
    };
    let scan_cols = cols
        .into_iter()
        .map(|c| Column {
            name: src.internal(&c.name),
            ..c
        })
        .collect();
    src.scan_schema = Schema::new(scan_cols)?;
    if let Some(tab) = tabular {
        src.transform = Some(TransformSpec {
            mode: TransformMode::Extract,
            columns: tab
                .columns
                .iter()
                .map(|c| TransformColumn {
                    name: src.internal(&c.alias),
                    field: Some(c.alias.clone()),
                    prompt: c.prompt.text.clone(),
                    hidden: false,
                })
                .collect(),
            input: Some(src.internal("text")),
        });
    }
    Ok(src)
}

fn base_name(internal: &str, src: &BoundSource) -> String {
    if src.qualified {
        internal
            .strip_prefix(&format!("{}.", src.label))
            .unwrap_or(internal)
            .to_string()
    } else {
        internal.to_string()
    }
}

fn scope_of(sources: &[BoundSource]) -> Result<Scope> {
    let mut columns = Vec::new();
    for s in sources {
        for c in s.output_schema()?.columns() {
            columns.push(ScopeColumn {
                label: s.label.clone(),
                base: base_name(&c.name, s),
                internal: c.name.clone(),
            });
        }
    }
    Ok(Scope { columns })
}

fn unique_name(taken: &mut Vec<String>, wanted: &str) -> String {
    let mut name = wanted.to_string();
    let mut n = 2;
    while taken.iter().any(|t| t.eq_ignore_ascii_case(&name)) {
        name = format!("{wanted}_{n}");
        n += 1;
    }
    taken.push(name.clone());
    name
}

/// Resolves names of a placement-valid SELECT against the catalog.
pub fn bind(stmt: &Statement, text: &str, catalog: &Catalog) -> Result<BoundSelect> {
    let Statement::Select(s) = stmt else {
        return Err(Error::Bind("only SELECT statements are planned".into()));
    };
    let violations = crate::sql::validate_placement(stmt);
    if let Some(v) = violations.first() {
        return Err(Error::Bind(v.to_string()));
    }
    let from = s.from.as_ref().ok_or_else(|| Error::Bind("SELECT without FROM is not supported".into()))?;
    let qualified = !s.joins.is_empty();
    let mut sources = vec![bind_source(from, catalog, qualified)?];
    for j in &s.joins {
        sources.push(bind_source(&j.table, catalog, qualified)?);
    }
    for (i, a) in sources.iter().enumerate() {
        if sources[..i].iter().any(|b| b.label.eq_ignore_ascii_case(&a.label)) {
            return Err(Error::Bind(format!("duplicate source name '{}'; add an alias", a.label)));
        }
    }

    let grouped = !s.group_by.is_empty()
        || s.items.iter().any(|i| matches!(i, SelectItem::Expr { expr, .. } if expr.contains_aggregate() || matches!(expr, Expr::SemGroup(_))));

    // PROMPT select items become transform columns.
    let mut prompt_cols: Vec<TransformColumn> = Vec::new();
    let mut prompt_item_cols: Vec<Option<String>> = Vec::new();
    for item in &s.items {
        let mut col = None;
        if let SelectItem::Expr { expr, alias } = item {
            match expr {
                Expr::Prompt(p) => {
                    let name = alias.clone().unwrap_or_else(|| format!("__inferred_{}", prompt_cols.len()));
                    prompt_cols.push(TransformColumn {
                        name: name.clone(),
                        field: alias.clone(),
                        prompt: p.text.clone(),
                        hidden: false,
                    });
                    col = Some(name);
                }
                other => {
                    let mut nested = false;
                    other.walk(&mut |e| nested |= matches!(e, Expr::Prompt(_)));
                    if nested {
                        return Err(Error::Bind("PROMPT must be a whole select item".into()));
                    }
                }
            }
        }
        prompt_item_cols.push(col);
    }
    let mut map_transform = None;
    if !prompt_cols.is_empty() {
        if sources.len() > 1 {
            return Err(Error::Bind("PROMPT select items over a join are not supported".into()));
        }
        let src = &mut sources[0];
        let raw_unstructured = src.transform.is_none() && !matches!(src.kind, SourceKind::Table { .. });
        if raw_unstructured {
            src.transform = Some(TransformSpec {
                mode: if grouped { TransformMode::Extract } else { TransformMode::Synthesize },
                columns: prompt_cols,
                input: Some(src.internal("text")),
            });
        } else {
            map_transform = Some(TransformSpec {
                mode: TransformMode::Map,
                columns: prompt_cols,
                input: None,
            });
        }
    }

    let mut scope = scope_of(&sources)?;
    let mut joins = Vec::new();
    for (i, j) in s.joins.iter().enumerate() {
        // a join predicate sees only the sources joined so far
        let visible = scope_of(&sources[..=i + 1])?;
        let p = scalar(&j.on, &|c| visible.resolve(c))?;
        if p.is_semantic() && !matches!(p, ScalarExpr::SemMatch { .. }) {
            return Err(Error::Bind("a semantic join condition must be a single SEM_MATCH".into()));
        }
        joins.push(p);
    }
    let where_clause = match &s.where_clause {
        Some(w) => {
            let p = scalar(w, &|c| scope.resolve(c))?;
            for c in p.clone().conjuncts() {
                if c.is_semantic() && !matches!(c, ScalarExpr::Prompt(_) | ScalarExpr::SemMatch { .. }) {
                    return Err(Error::Bind(
                        "PROMPT and SEM_MATCH in WHERE must be top-level AND terms".into(),
                    ));
                }
            }
            Some(p)
        }
        None => None,
    };
    if let Some(m) = &map_transform {
        for c in &m.columns {
            scope.columns.push(ScopeColumn {
                label: sources[0].label.clone(),
                base: c.name.clone(),
                internal: c.name.clone(),
            });
        }
    }

    let mut taken = Vec::new();
    let mut items = Vec::new();
    let mut group = None;
    let mut having = None;
    if grouped {
        let (keys, aggs, bound_items, having_expr) = bind_grouped(s, &scope, &prompt_item_cols, &mut taken)?;
        group = Some((keys, aggs));
        items = bound_items;
        having = having_expr;
    } else {
        if s.having.is_some() {
            return Err(Error::Bind("HAVING requires GROUP BY or an aggregate".into()));
        }
        for (idx, item) in s.items.iter().enumerate() {
            match item {
                SelectItem::Wildcard => {
                    for c in &scope.columns {
                        let name = unique_name(&mut taken, &c.base);
                        items.push(BoundItem {
                            expr: ScalarExpr::Column(c.internal.clone()),
                            name,
                        });
                    }
                }
                SelectItem::Expr { expr, alias } => {
                    let bound = match &prompt_item_cols[idx] {
                        Some(col) => ScalarExpr::Column(col.clone()),
                        None => scalar(expr, &|c| scope.resolve(c))?,
                    };
                    if bound.is_semantic() {
                        return Err(Error::Bind("SEM_MATCH is not a select item".into()));
                    }
                    let wanted = alias.clone().unwrap_or_else(|| default_name(expr, &bound));
                    let name = if prompt_item_cols[idx].is_some() && alias.is_none() {
                        wanted
                    } else {
                        unique_name(&mut taken, &wanted)
                    };
                    items.push(BoundItem { expr: bound, name });
                }
            }
        }
    }

    Ok(BoundSelect {
        text: text.to_string(),
        context: assemble_prompt_context(s, text),
        sources,
        joins,
        where_clause,
        map_transform,
        group,
        having,
        items,
    })
}

fn default_name(expr: &Expr, bound: &ScalarExpr) -> String {
    match (expr, bound) {
        (Expr::Column(c), _) => c.name.clone(),
        (_, ScalarExpr::Column(c)) => c.clone(),
        (Expr::Function { name, .. }, _) => name.to_ascii_lowercase(),
        _ => render_expr(expr),
    }
}

type GroupBinding = (Vec<GroupKey>, Vec<Aggregate>, Vec<BoundItem>, Option<ScalarExpr>);

fn bind_grouped(
    s: &Select,
    scope: &Scope,
    prompt_item_cols: &[Option<String>],
    taken: &mut Vec<String>,
) -> Result<GroupBinding> {
    let mut keys: Vec<GroupKey> = Vec::new();
    let sem_group_key = |g: &SemGroupExpr, out: String| -> Result<GroupKey> {
        let target = match scalar(&g.target, &|c| scope.resolve(c))? {
            ScalarExpr::Column(c) => c,
            _ => return Err(Error::Bind("SEM_GROUP target must be a column".into())),
        };
        Ok(GroupKey::Semantic {
            target,
            prompt: g.prompt.clone(),
            k: g.group_count,
            out,
        })
    };
    let alias_of = |name: &str| -> Option<(usize, &Expr)> {
        s.items.iter().enumerate().find_map(|(i, it)| match it {
            SelectItem::Expr { expr, alias: Some(a) } if a.eq_ignore_ascii_case(name) => Some((i, expr)),
            _ => None,
        })
    };
    let non_agg_items: Vec<usize> = s
        .items
        .iter()
        .enumerate()
        .filter(|(_, it)| matches!(it, SelectItem::Expr { expr, .. } if !expr.contains_aggregate()))
        .map(|(i, _)| i)
        .collect();

    for g in &s.group_by {
        let key = match g {
            Expr::Column(c) => {
                let sem_alias = c.qualifier.is_none().then(|| alias_of(&c.name)).flatten();
                match (sem_alias, scope.try_resolve(c)) {
                    (Some((_, Expr::SemGroup(sg))), _) => sem_group_key(sg, c.name.clone())?,
                    (_, Some(col)) => GroupKey::Column { column: col },
                    (Some((i, Expr::Column(inner))), None) => GroupKey::Column {
                        column: scope.resolve(inner).map_err(|_| Error::Bind(format!("unknown column '{c}'")))?,
                    }
                    .or_prompt(prompt_item_cols.get(i)),
                    (Some((i, Expr::Prompt(_))), None) => GroupKey::Column {
                        column: prompt_item_cols[i].clone().expect("prompt item column"),
                    },
                    _ => return Err(Error::Bind(format!("unknown column '{c}' in GROUP BY"))),
                }
            }
            Expr::SemGroup(sg) => {
                let out = s
                    .items
                    .iter()
                    .find_map(|it| match it {
                        SelectItem::Expr { expr: Expr::SemGroup(o), alias } if o == sg => {
                            Some(alias.clone().unwrap_or_else(|| format!("__group_{}", keys.len())))
                        }
                        _ => None,
                    })
                    .unwrap_or_else(|| format!("__group_{}", keys.len()));
                sem_group_key(sg, out)?
            }
            Expr::Prompt(p) => {
                if non_agg_items.len() != 1 {
                    return Err(Error::Bind(
                        "GROUP BY PROMPT needs exactly one non-aggregate select item to group".into(),
                    ));
                }
                let i = non_agg_items[0];
                let target = match (&prompt_item_cols[i], &s.items[i]) {
                    (Some(col), _) => col.clone(),
                    (None, SelectItem::Expr { expr: Expr::Column(c), .. }) => scope.resolve(c)?,
                    _ => return Err(Error::Bind("GROUP BY PROMPT needs a column or PROMPT select item".into())),
                };
                GroupKey::Semantic {
                    target: target.clone(),
                    prompt: p.text.clone(),
                    k: None,
                    out: target,
                }
            }
            other => {
                return Err(Error::Bind(format!(
                    "GROUP BY supports columns, SEM_GROUP and PROMPT, not '{}'",
                    render_expr(other)
                )))
            }
        };
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    // SEM_GROUP items not named in GROUP BY still group.
    for it in &s.items {
        if let SelectItem::Expr { expr: Expr::SemGroup(sg), alias } = it {
            let present = keys.iter().any(|k| match k {
                GroupKey::Semantic { prompt, out, .. } => {
                    prompt == &sg.prompt && alias.as_ref().is_none_or(|a| a.eq_ignore_ascii_case(out))
                }
                _ => false,
            });
            if !present {
                let out = alias.clone().unwrap_or_else(|| format!("__group_{}", keys.len()));
                keys.push(sem_group_key(sg, out)?);
            }
        }
    }
    for k in &keys {
        taken.push(k.output_name().to_string());
    }

    let key_outputs: Vec<String> = keys.iter().map(|k| k.output_name().to_string()).collect();
    // Aggregate arguments may name a semantic key's output (Statement-c style).
    let agg_resolve = |c: &ColumnRef| -> Result<String> {
        if c.qualifier.is_none() {
            if let Some(k) = key_outputs.iter().find(|k| k.eq_ignore_ascii_case(&c.name)) {
                return Ok(k.clone());
            }
        }
        scope.resolve(c)
    };
    let mut aggs: Vec<Aggregate> = Vec::new();
    let mut agg_names: Vec<String> = Vec::new();
    let mut agg_of = |e: &Expr, alias: Option<&String>, hidden: bool, aggs: &mut Vec<Aggregate>| -> Result<String> {
        let Expr::Function { name, args, star } = e else {
            return Err(Error::Bind(format!(
                "'{}' must be an aggregate or a grouping column",
                render_expr(e)
            )));
        };
        let func = AggFunc::parse(name).ok_or_else(|| Error::Bind(format!("unknown aggregate '{name}'")))?;
        let arg = if *star {
            None
        } else {
            match args.as_slice() {
                [Expr::Literal(l)] if func == AggFunc::Count && !matches!(l, Literal::Null) => None,
                [Expr::Column(c)] => Some(agg_resolve(c)?),
                _ => return Err(Error::Bind(format!("{name}() takes a single column argument"))),
            }
        };
        if let Some(existing) = aggs.iter().find(|a| a.func == func && a.arg == arg && (alias.is_none() || hidden)) {
            return Ok(existing.out.clone());
        }
        let out = if hidden {
            format!("__having_{}", aggs.len())
        } else {
            unique_name(&mut agg_names, alias.map(String::as_str).unwrap_or(func.as_str()))
        };
        aggs.push(Aggregate { func, arg, out: out.clone(), hidden });
        Ok(out)
    };

    let mut items = Vec::new();
    for (idx, it) in s.items.iter().enumerate() {
        let SelectItem::Expr { expr, alias } = it else {
            return Err(Error::Bind("SELECT * cannot be combined with grouping".into()));
        };
        if expr.contains_aggregate() {
            if !expr.is_aggregate_call() {
                return Err(Error::Bind("expressions over aggregates are not supported".into()));
            }
            let out = agg_of(expr, alias.as_ref(), false, &mut aggs)?;
            items.push(BoundItem {
                expr: ScalarExpr::Column(out.clone()),
                name: alias.clone().unwrap_or(out),
            });
            continue;
        }
        let key = match expr {
            Expr::SemGroup(sg) => keys.iter().find(|k| match k {
                GroupKey::Semantic { prompt, out, .. } => {
                    prompt == &sg.prompt && alias.as_ref().is_none_or(|a| a.eq_ignore_ascii_case(out))
                }
                _ => false,
            }),
            Expr::Prompt(_) => {
                let col = prompt_item_cols[idx].as_ref().expect("prompt item column");
                keys.iter().find(|k| k.output_name() == col)
            }
            Expr::Column(c) => {
                let resolved = agg_resolve(c)?;
                keys.iter().find(|k| k.output_name() == resolved)
            }
            _ => None,
        };
        let Some(key) = key else {
            return Err(Error::Bind(format!(
                "'{}' must appear in GROUP BY or be an aggregate",
                render_expr(expr)
            )));
        };
        let out = key.output_name().to_string();
        let name = match (alias, expr) {
            (Some(a), _) => a.clone(),
            (None, Expr::Column(c)) => c.name.clone(),
            _ => out.clone(),
        };
        items.push(BoundItem {
            expr: ScalarExpr::Column(out),
            name,
        });
    }

    let having = match &s.having {
        Some(h) => Some(having_expr(h, &key_outputs, scope, &mut |e| agg_of(e, None, true, &mut aggs))?),
        None => None,
    };
    Ok((keys, aggs, items, having))
}

trait OrPrompt {
    fn or_prompt(self, col: Option<&Option<String>>) -> GroupKey;
}

impl OrPrompt for GroupKey {
    fn or_prompt(self, col: Option<&Option<String>>) -> GroupKey {
        match col {
            Some(Some(c)) => GroupKey::Column { column: c.clone() },
            _ => self,
        }
    }
}

fn having_expr(
    h: &Expr,
    key_outputs: &[String],
    scope: &Scope,
    agg: &mut dyn FnMut(&Expr) -> Result<String>,
) -> Result<ScalarExpr> {
    // Aggregates are replaced by columns first so the scalar binder sees
    // only column references.
    fn rewrite(e: &Expr, agg: &mut dyn FnMut(&Expr) -> Result<String>) -> Result<Expr> {
        if e.is_aggregate_call() {
            return Ok(Expr::Column(ColumnRef {
                qualifier: None,
                name: agg(e)?,
            }));
        }
        Ok(match e {
            Expr::Binary { op, left, right } => Expr::Binary {
                op: *op,
                left: Box::new(rewrite(left, agg)?),
                right: Box::new(rewrite(right, agg)?),
            },
            Expr::Unary { op, expr } => Expr::Unary {
                op: *op,
                expr: Box::new(rewrite(expr, agg)?),
            },
            Expr::IsNull { expr, negated } => Expr::IsNull {
                expr: Box::new(rewrite(expr, agg)?),
                negated: *negated,
            },
            Expr::SemMatch(m) => Expr::SemMatch(SemMatchExpr {
                left: Box::new(rewrite(&m.left, agg)?),
                right: Box::new(rewrite(&m.right, agg)?),
                threshold: m.threshold,
                method: m.method,
            }),
            other => other.clone(),
        })
    }
    let rewritten = rewrite(h, agg)?;
    scalar(&rewritten, &|c| {
        if c.qualifier.is_none() {
            if let Some(k) = key_outputs.iter().find(|k| k.eq_ignore_ascii_case(&c.name)) {
                return Ok(k.clone());
            }
            if c.name.starts_with("__having_") || c.name.starts_with("__") {
                return Ok(c.name.clone());
            }
        }
        let col = scope.resolve(c)?;
        key_outputs
            .iter()
            .find(|k| **k == col)
            .cloned()
            .ok_or_else(|| Error::Bind(format!("'{c}' in HAVING must be a grouping column or aggregate")))
    })
}

/// Collects every PROMPT, SEM_MATCH and SEM_GROUP literal in clause order.
pub fn assemble_prompt_context(s: &Select, text: &str) -> PromptContext {
    let mut literals = Vec::new();
    let mut sources = Vec::new();
    let collect = |e: &Expr, clause: Clause, out: &mut Vec<(Clause, String)>| {
        e.walk(&mut |sub| match sub {
            Expr::Prompt(p) => out.push((clause, p.text.clone())),
            Expr::SemGroup(g) => out.push((clause, g.prompt.clone())),
            Expr::SemMatch(_) => out.push((clause, render_expr(sub))),
            _ => {}
        });
    };
    for it in &s.items {
        if let SelectItem::Expr { expr, .. } = it {
            collect(expr, Clause::Select, &mut literals);
        }
    }
    let mut from = |t: &TableRef, literals: &mut Vec<(Clause, String)>| match &t.source {
        Source::File(f) => sources.push(f.name.clone()),
        Source::Directory(d) => sources.push(d.name.clone()),
        Source::Tabular(tab) => {
            for c in &tab.columns {
                literals.push((Clause::From, c.prompt.text.clone()));
            }
            sources.push(tab.inner.name().to_string());
        }
        Source::Named(_) | Source::Expr(_) => {}
    };
    if let Some(f) = &s.from {
        from(f, &mut literals);
    }
    for j in &s.joins {
        from(&j.table, &mut literals);
        collect(&j.on, Clause::JoinOn, &mut literals);
    }
    if let Some(w) = &s.where_clause {
        collect(w, Clause::Where, &mut literals);
    }
    for g in &s.group_by {
        collect(g, Clause::GroupBy, &mut literals);
    }
    if let Some(h) = &s.having {
        collect(h, Clause::Having, &mut literals);
    }
    PromptContext {
        statement_text: text.trim().to_string(),
        prompt_literals: literals,
        source_descriptors: sources,
    }
}

fn group_schema(keys: &[GroupKey], aggs: &[Aggregate], input: &Schema) -> Result<Schema> {
    let mut cols = Vec::new();
    for k in keys {
        let ty = match k {
            GroupKey::Column { column } => input
                .column(column)
                .map(|c| c.data_type)
                .ok_or_else(|| Error::Plan(format!("group key '{column}' missing from input")))?,
            GroupKey::Semantic { .. } => DataType::Text,
        };
        cols.push(Column::new(k.output_name(), ty));
    }
    for a in aggs {
        let ty = match (a.func, &a.arg) {
            (AggFunc::Count | AggFunc::Sum | AggFunc::Avg, _) => DataType::Number,
            (_, Some(arg)) => input
                .column(arg)
                .map(|c| c.data_type)
                .or_else(|| keys.iter().any(|k| k.output_name() == arg).then_some(DataType::Text))
                .ok_or_else(|| Error::Plan(format!("aggregate argument '{arg}' missing from input")))?,
            (_, None) => DataType::Number,
        };
        let col = if a.hidden {
            Column::hidden(a.out.clone(), ty)
        } else {
            Column::new(a.out.clone(), ty)
        };
        cols.push(col);
    }
    Schema::new(cols)
}

fn filters(predicate: ScalarExpr, child: LogicalPlan) -> LogicalPlan {
    let (semantic, classic): (Vec<ScalarExpr>, Vec<ScalarExpr>) =
        predicate.conjuncts().into_iter().partition(ScalarExpr::is_semantic);
    let mut plan = child;
    if let Some(p) = ScalarExpr::and_all(classic) {
        let schema = plan.schema.clone();
        plan = LogicalPlan {
            node: LogicalNode::Filter {
                predicate: p,
                semantic: false,
            },
            children: vec![plan],
            schema,
        };
    }
    for p in semantic {
        let schema = plan.schema.clone();
        plan = LogicalPlan {
            node: LogicalNode::Filter {
                predicate: p,
                semantic: true,
            },
            children: vec![plan],
            schema,
        };
    }
    plan
}

/// Lowers a bound statement into a logical operator tree.
pub fn build_logical_plan(b: &BoundSelect) -> Result<LogicalPlan> {
    let mut branches = Vec::new();
    for src in &b.sources {
        let mut plan = LogicalPlan {
            node: LogicalNode::Scan {
                source: src.scan_source(),
                stats: src.stats,
                qualifier: src.qualified.then(|| src.label.clone()),
            },
            children: vec![],
            schema: src.scan_schema.clone(),
        };
        if let Some(t) = &src.transform {
            plan = LogicalPlan {
                schema: src.output_schema()?,
                node: LogicalNode::Transform(t.clone()),
                children: vec![plan],
            };
        }
        branches.push(plan);
    }
    let mut branches = branches.into_iter();
    let mut plan = branches.next().ok_or_else(|| Error::Plan("statement has no source".into()))?;
    for (right, predicate) in branches.zip(&b.joins) {
        let schema = plan.schema.join(&right.schema)?;
        plan = LogicalPlan {
            node: LogicalNode::Join {
                predicate: predicate.clone(),
            },
            children: vec![plan, right],
            schema,
        };
    }
    if let Some(w) = &b.where_clause {
        plan = filters(w.clone(), plan);
    }
    if let Some(m) = &b.map_transform {
        plan = LogicalPlan {
            schema: m.output_schema(&plan.schema)?,
            node: LogicalNode::Transform(m.clone()),
            children: vec![plan],
        };
    }
    if let Some((keys, aggs)) = &b.group {
        let mut input = plan.schema.clone();
        for k in keys {
            if let GroupKey::Semantic { out, target, .. } = k {
                if out != target && input.index_of(out).is_none() {
                    input = input.with_column(Column::new(out.clone(), DataType::Text))?;
                }
            }
        }
        plan = LogicalPlan {
            schema: group_schema(keys, aggs, &input)?,
            node: LogicalNode::Group {
                keys: keys.clone(),
                aggregates: aggs.clone(),
            },
            children: vec![plan],
        };
    }
    if let Some(h) = &b.having {
        plan = filters(h.clone(), plan);
    }
    let visible: Vec<&str> = plan
        .schema
        .columns()
        .iter()
        .filter(|c| !c.hidden)
        .map(|c| c.name.as_str())
        .collect();
    let identity = visible.len() == b.items.len()
        && b.items
            .iter()
            .zip(&visible)
            .all(|(it, v)| it.name == *v && it.expr == ScalarExpr::Column(v.to_string()));
    if !identity {
        let mut cols = Vec::new();
        for it in &b.items {
            let ty = match &it.expr {
                ScalarExpr::Column(c) => plan
                    .schema
                    .column(c)
                    .map(|c| c.data_type)
                    .ok_or_else(|| Error::Plan(format!("projected column '{c}' missing")))?,
                _ => infer_type(&it.expr, &plan.schema),
            };
            cols.push(Column::new(it.name.clone(), ty));
        }
        plan = LogicalPlan {
            schema: Schema::new(cols)?,
            node: LogicalNode::Project {
                items: b
                    .items
                    .iter()
                    .map(|i| ProjectItem {
                        expr: i.expr.clone(),
                        name: i.name.clone(),
                    })
                    .collect(),
            },
            children: vec![plan],
        };
    }
    Ok(plan)
}

/// Static result type of a classic expression; text when undecidable.
pub(crate) fn infer_type(e: &ScalarExpr, schema: &Schema) -> DataType {
    use crate::sql::ast::BinaryOp::*;
    match e {
        ScalarExpr::Column(c) => schema.column(c).map(|c| c.data_type).unwrap_or(DataType::Text),
        ScalarExpr::Literal(v) => v.data_type().unwrap_or(DataType::Text),
        ScalarExpr::Binary { op, .. } => match op {
            Plus | Minus | Multiply | Divide | Modulo => DataType::Number,
            Concat => DataType::Text,
            _ => DataType::Boolean,
        },
        ScalarExpr::Not(_) | ScalarExpr::IsNull { .. } | ScalarExpr::SemMatch { .. } | ScalarExpr::Prompt(_) => {
            DataType::Boolean
        }
        ScalarExpr::Negate(_) => DataType::Number,
        ScalarExpr::Function { name, args } => match name.as_str() {
            "length" | "abs" | "round" => DataType::Number,
            "contains" | "starts_with" => DataType::Boolean,
            "coalesce" | "if" => args
                .get(if name == "if" { 1 } else { 0 })
                .map(|a| infer_type(a, schema))
                .unwrap_or(DataType::Text),
            _ => DataType::Text,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse;
    use crate::storage::ChunkParams;

    pub(crate) const STATEMENT_A: &str = r#"SELECT PROMPT("Analyze technical areas and count the number of publications in each area.")
FROM FILE("neurips_2024.txt");"#;
    pub(crate) const STATEMENT_B: &str = r#"SELECT PROMPT("Analyze technical areas"), count(1)
FROM FILE("neurips_2024.txt")  -- no schema
GROUP BY PROMPT("Count the numbers of publications in each area");"#;
    pub(crate) const STATEMENT_C: &str = r#"SELECT count(area), SEM_GROUP(title, "Area of publications", 5) /* 5 is optional, which means divided into five groups */ as area
FROM TABULAR(PROMPT("title of the paper") as title FROM FILE("neurips_2024.txt"))
GROUP BY area;"#;
    const JOIN_QUERY: &str = r#"SELECT t24.area, count(*) FROM
  TABULAR(PROMPT("research area") AS area, PROMPT("title") AS title FROM FILE("neurips_2024.txt")) AS t24
  JOIN TABULAR(PROMPT("research area") AS area FROM FILE("neurips_2023.txt")) AS t23
  ON SEM_MATCH(t24.area, t23.area, 0.9)
GROUP BY t24.area"#;

    fn catalog() -> (tempfile::TempDir, Catalog) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "Attention Is All You Need\nGraph Neural Networks\n").unwrap();
        let mut cat = Catalog::in_memory();
        cat.register_file("neurips_2024.txt", dir.path().join("a.txt"), ChunkParams::default()).unwrap();
        cat.register_file("neurips_2023.txt", dir.path().join("a.txt"), ChunkParams::default()).unwrap();
        let schema = crate::storage::schema_from_defs(&[("a".into(), "INT".into()), ("b".into(), "TEXT".into())]).unwrap();
        cat.create_table("t", schema).unwrap();
        (dir, cat)
    }

    fn plan(sql: &str) -> Result<(BoundSelect, LogicalPlan)> {
        let (_d, cat) = catalog();
        let b = bind(&parse(sql)?, sql, &cat)?;
        let p = build_logical_plan(&b)?;
        Ok((b, p))
    }

    #[test]
    fn statement_shapes() {
        let (_, a) = plan(STATEMENT_A).unwrap();
        assert_eq!(a.shape(), vec!["Transform", "Scan"]);
        let (_, b) = plan(STATEMENT_B).unwrap();
        assert_eq!(b.shape(), vec!["Group", "Transform", "Scan"]);
        let (bc, c) = plan(STATEMENT_C).unwrap();
        assert_eq!(c.shape(), vec!["Project", "Group", "Transform", "Scan"]);
        assert_eq!(c.schema.names(), vec!["count", "area"]);
        let (keys, aggs) = bc.group.unwrap();
        assert_eq!(
            keys,
            vec![GroupKey::Semantic {
                target: "title".into(),
                prompt: "Area of publications".into(),
                k: Some(5),
                out: "area".into()
            }]
        );
        assert_eq!(aggs[0].arg.as_deref(), Some("area"));
        let (_, j) = plan(JOIN_QUERY).unwrap();
        assert_eq!(j.shape(), vec!["Project", "Group", "Join", "Transform", "Scan", "Transform", "Scan"]);
        let (_, t) = plan("SELECT a FROM t").unwrap();
        assert_eq!(t.shape(), vec!["Project", "Scan"]);
    }

    #[test]
    fn prompt_literals_in_source_order() {
        let (a, _) = plan(STATEMENT_A).unwrap();
        assert_eq!(a.context.prompt_literals.len(), 1);
        let (b, _) = plan(STATEMENT_B).unwrap();
        assert_eq!(
            b.context.prompt_literals,
            vec![
                (Clause::Select, "Analyze technical areas".to_string()),
                (Clause::GroupBy, "Count the numbers of publications in each area".to_string())
            ]
        );
        let (t, _) = plan("SELECT a FROM t WHERE a > 1").unwrap();
        assert!(t.context.prompt_literals.is_empty());
    }

    #[test]
    fn every_prompt_maps_to_one_attribute() {
        for sql in [STATEMENT_A, STATEMENT_B, STATEMENT_C, JOIN_QUERY] {
            let (b, p) = plan(sql).unwrap();
            let ast = parse(sql).unwrap();
            let Statement::Select(s) = ast else { unreachable!() };
            let mut n = 0;
            let mut count = |e: &Expr| {
                e.walk(&mut |x| {
                    if matches!(x, Expr::Prompt(_) | Expr::SemMatch(_) | Expr::SemGroup(_)) {
                        n += 1
                    }
                })
            };
            s.items.iter().for_each(|i| {
                if let SelectItem::Expr { expr, .. } = i {
                    count(expr)
                }
            });
            s.group_by.iter().for_each(&mut count);
            s.joins.iter().for_each(|j| count(&j.on));
            let tabular: usize = std::iter::once(&s.from.clone().unwrap())
                .chain(s.joins.iter().map(|j| &j.table))
                .map(|t| match &t.source {
                    Source::Tabular(tab) => tab.columns.len(),
                    _ => 0,
                })
                .sum();
            assert_eq!(p.semantic_attribute_count(), n + tabular, "{sql}");
            assert_eq!(b.context.prompt_literals.len(), n + tabular, "{sql}");
        }
    }

    #[test]
    fn binding_errors() {
        let err = plan(r#"SELECT PROMPT("x") FROM FILE("missing.txt")"#).unwrap_err();
        assert!(err.to_string().contains("missing.txt"));
        let err = plan(r#"SELECT a FROM TABULAR(PROMPT("x") AS a, PROMPT("y") AS A FROM FILE("neurips_2024.txt"))"#).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        assert!(plan("SELECT zz FROM t").is_err());
        assert!(plan("SELECT a FROM nope").is_err());
        let err = plan(
            r#"SELECT area FROM TABULAR(PROMPT("x") AS area FROM FILE("neurips_2024.txt")) AS x
               JOIN TABULAR(PROMPT("x") AS area FROM FILE("neurips_2023.txt")) AS y ON x.area = y.area"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("ambiguous"));
    }

    #[test]
    fn planning_is_deterministic() {
        assert_eq!(plan(STATEMENT_C).unwrap().1, plan(STATEMENT_C).unwrap().1);
    }

    #[test]
    fn where_conjuncts_split() {
        let (_, p) = plan(
            r#"SELECT title FROM TABULAR(PROMPT("t") AS title FROM FILE("neurips_2024.txt"))
               WHERE SEM_MATCH(title, "graphs", 0.5) AND length(title) > 3"#,
        )
        .unwrap();
        assert_eq!(p.shape(), vec!["Filter", "Filter", "Transform", "Scan"]);
        let LogicalNode::Filter { semantic, .. } = &p.node else { panic!() };
        assert!(*semantic);
    }
}
