//! Values, schemas and relations shared by every stage of the engine.
//!
//! A [`Relation`] is the unit passed between operators and returned to the
//! user. Relations are immutable once constructed. Columns may be marked
//! hidden (embedding vectors, normalized join keys); hidden columns flow
//! through plans but are stripped from every user-facing rendering.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Text,
    Number,
    Boolean,
    Embedding,
}

impl DataType {
    pub fn name(self) -> &'static str {
        match self {
            DataType::Text => "TEXT",
            DataType::Number => "NUMBER",
            DataType::Boolean => "BOOLEAN",
            DataType::Embedding => "EMBEDDING",
        }
    }

    /// Parses a column type name as written in `CREATE TABLE`.
    pub fn parse(name: &str) -> Option<DataType> {
        match name.to_ascii_uppercase().as_str() {
            "TEXT" | "VARCHAR" | "STRING" | "CHAR" => Some(DataType::Text),
            "NUMBER" | "INT" | "INTEGER" | "BIGINT" | "FLOAT" | "DOUBLE" | "REAL" | "NUMERIC" => {
                Some(DataType::Number)
            }
            "BOOLEAN" | "BOOL" => Some(DataType::Boolean),
            "EMBEDDING" | "VECTOR" => Some(DataType::Embedding),
            _ => None,
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A dense embedding with its Euclidean norm cached at construction.
#[derive(Debug, Clone)]
pub struct EmbeddingVector {
    values: Arc<[f32]>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        let norm = values
            .iter()
            .map(|v| f64::from(*v) * f64::from(*v))
            .sum::<f64>()
            .sqrt();
        EmbeddingVector {
            values: values.into(),
            norm,
        }
    }

    /// Builds a unit-length copy of `values`. A zero vector is returned unchanged.
    pub fn normalized(values: Vec<f32>) -> Self {
        let raw = EmbeddingVector::new(values);
        if raw.norm == 0.0 {
            return raw;
        }
        let scale = 1.0 / raw.norm;
        EmbeddingVector::new(
            raw.values
                .iter()
                .map(|v| (f64::from(*v) * scale) as f32)
                .collect(),
        )
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum()
    }
}

impl PartialEq for EmbeddingVector {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

/// Cosine similarity `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Value(format!(
            "embedding dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Err(Error::Value("cosine similarity of a zero-norm vector".into()));
    }
    let sim = a.dot(b) / (a.norm() * b.norm());
    Ok(sim.clamp(-1.0, 1.0))
}

/// A single cell. Numbers are never NaN.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Text(String),
    Number(f64),
    Boolean(bool),
    Embedding(EmbeddingVector),
}

impl Value {
    pub fn number(v: f64) -> Result<Value> {
        if v.is_nan() {
            Err(Error::Value("operation produced NaN".into()))
        } else if v == 0.0 {
            // fold -0.0 so equal numbers hash equally
            Ok(Value::Number(0.0))
        } else {
            Ok(Value::Number(v))
        }
    }

    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    pub fn data_type(&self) -> Option<DataType> {
        match self {
            Value::Null => None,
            Value::Text(_) => Some(DataType::Text),
            Value::Number(_) => Some(DataType::Number),
            Value::Boolean(_) => Some(DataType::Boolean),
            Value::Embedding(_) => Some(DataType::Embedding),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_embedding(&self) -> Option<&EmbeddingVector> {
        match self {
            Value::Embedding(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    /// Three-valued truthiness: `None` for NULL.
    pub fn truthy(&self) -> Option<bool> {
        match self {
            Value::Null => None,
            Value::Boolean(b) => Some(*b),
            Value::Number(n) => Some(*n != 0.0),
            Value::Text(s) => Some(!s.is_empty()),
            Value::Embedding(_) => Some(true),
        }
    }

    /// Total order used for sorting and merge joins: NULL first, then
    /// booleans, numbers, text (byte-wise UTF-8) and embeddings.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Null => 0,
                Value::Boolean(_) => 1,
                Value::Number(_) => 2,
                Value::Text(_) => 3,
                Value::Embedding(_) => 4,
            }
        }
        match (self, other) {
            (Value::Boolean(a), Value::Boolean(b)) => a.cmp(b),
            (Value::Number(a), Value::Number(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.as_bytes().cmp(b.as_bytes()),
            (Value::Embedding(a), Value::Embedding(b)) => {
                for (x, y) in a.values().iter().zip(b.values()) {
                    match x.total_cmp(y) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                a.dim().cmp(&b.dim())
            }
            _ => rank(self).cmp(&rank(other)),
        }
    }

    /// Plain rendering for table and CSV output.
    pub fn render(&self) -> String {
        match self {
            Value::Null => "NULL".to_string(),
            Value::Text(s) => s.clone(),
            Value::Number(n) => format_number(*n),
            Value::Boolean(b) => if *b { "true" } else { "false" }.to_string(),
            Value::Embedding(e) => format!("<embedding dim={}>", e.dim()),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Null => serde_json::Value::Null,
            Value::Text(s) => serde_json::Value::String(s.clone()),
            Value::Number(n) => serde_json::Number::from_f64(*n)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::Boolean(b) => serde_json::Value::Bool(*b),
            Value::Embedding(e) => serde_json::Value::Array(
                e.values()
                    .iter()
                    .map(|v| {
                        serde_json::Number::from_f64(f64::from(*v))
                            .map(serde_json::Value::Number)
                            .unwrap_or(serde_json::Value::Null)
                    })
                    .collect(),
            ),
        }
    }

    /// Inverse of [`Value::to_json`] for a column of known type.
    pub fn from_json(json: &serde_json::Value, ty: DataType) -> Result<Value> {
        use serde_json::Value as J;
        match (json, ty) {
            (J::Null, _) => Ok(Value::Null),
            (J::String(s), DataType::Text) => Ok(Value::Text(s.clone())),
            (J::Number(n), DataType::Text) => Ok(Value::Text(n.to_string())),
            (J::Bool(b), DataType::Text) => Ok(Value::Text(b.to_string())),
            (J::Number(n), DataType::Number) => Value::number(n.as_f64().unwrap_or(f64::NAN)),
            (J::String(s), DataType::Number) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Value(format!("'{s}' is not a number")))
                .and_then(Value::number),
            (J::Bool(b), DataType::Boolean) => Ok(Value::Boolean(*b)),
            (J::Array(items), DataType::Embedding) => {
                let mut values = Vec::with_capacity(items.len());
                for item in items {
                    let v = item
                        .as_f64()
                        .ok_or_else(|| Error::Value("embedding element is not a number".into()))?;
                    values.push(v as f32);
                }
                Ok(Value::Embedding(EmbeddingVector::new(values)))
            }
            (other, ty) => Err(Error::Value(format!("cannot read {other} as {ty}"))),
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Value::Null => {}
            Value::Text(s) => s.hash(state),
            Value::Number(n) => n.to_bits().hash(state),
            Value::Boolean(b) => b.hash(state),
            Value::Embedding(e) => {
                for v in e.values() {
                    v.to_bits().hash(state);
                }
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub data_type: DataType,
    #[serde(default)]
    pub hidden: bool,
}

impl Column {
    pub fn new(name: impl Into<String>, data_type: DataType) -> Self {
        Column {
            name: name.into(),
            data_type,
            hidden: false,
        }
    }

    pub fn hidden(name: impl Into<String>, data_type: DataType) -> Self {
        Column {
            name: name.into(),
            data_type,
            hidden: true,
        }
    }
}

/// Ordered columns with case-insensitively unique names.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Schema> {
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name.eq_ignore_ascii_case(&c.name)) {
                return Err(Error::Value(format!("duplicate column name '{}'", c.name)));
            }
        }
        Ok(Schema { columns })
    }

    pub fn empty() -> Schema {
        Schema::default()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.index_of(name).map(|i| &self.columns[i])
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn visible_indices(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|i| !self.columns[*i].hidden)
            .collect()
    }

    /// Concatenation of two schemas; fails on a name clash.
    pub fn join(&self, other: &Schema) -> Result<Schema> {
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        Schema::new(columns)
    }

    pub fn with_column(&self, column: Column) -> Result<Schema> {
        let mut columns = self.columns.clone();
        columns.push(column);
        Schema::new(columns)
    }
}

pub type Row = Vec<Value>;

/// A schema plus an ordered list of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    schema: Schema,
    rows: Vec<Row>,
}

impl Relation {
    /// Builds a relation, checking arity and that every cell matches its
    /// column type or is NULL.
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<Relation> {
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::Value(format!(
                    "row {r} has {} cells, schema has {} columns",
                    row.len(),
                    schema.len()
                )));
            }
            for (cell, col) in row.iter().zip(schema.columns()) {
                if let Some(ty) = cell.data_type() {
                    if ty != col.data_type {
                        return Err(Error::Value(format!(
                            "row {r}: column '{}' expects {}, got {}",
                            col.name, col.data_type, ty
                        )));
                    }
                }
            }
        }
        Ok(Relation { schema, rows })
    }

    pub fn empty(schema: Schema) -> Relation {
        Relation {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Keeps exactly the named columns, in the requested order.
    pub fn project(&self, columns: &[&str]) -> Result<Relation> {
        let mut indices = Vec::with_capacity(columns.len());
        for name in columns {
            let idx = self
                .schema
                .index_of(name)
                .ok_or_else(|| Error::Value(format!("unknown column '{name}'")))?;
            indices.push(idx);
        }
        Ok(self.select_indices(&indices))
    }

    fn select_indices(&self, indices: &[usize]) -> Relation {
        let schema = Schema {
            columns: indices
                .iter()
                .map(|i| self.schema.columns[*i].clone())
                .collect(),
        };
        let rows = self
            .rows
            .iter()
            .map(|row| indices.iter().map(|i| row[*i].clone()).collect())
            .collect();
        Relation { schema, rows }
    }

    /// The user-visible part of the relation (hidden columns removed).
    pub fn visible(&self) -> Relation {
        self.select_indices(&self.schema.visible_indices())
    }

    /// Aligned text table.
    pub fn to_table_string(&self) -> String {
        let rel = self.visible();
        let headers: Vec<String> = rel.schema.names().iter().map(|s| s.to_string()).collect();
        let cells: Vec<Vec<String>> = rel
            .rows
            .iter()
            .map(|r| r.iter().map(Value::render).collect())
            .collect();
        let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let numeric: Vec<bool> = rel
            .schema
            .columns()
            .iter()
            .map(|c| c.data_type == DataType::Number)
            .collect();
        let line = |parts: Vec<String>| format!("| {} |\n", parts.join(" | "));
        let pad = |s: &str, w: usize, right: bool| {
            let fill = " ".repeat(w - s.chars().count());
            if right {
                format!("{fill}{s}")
            } else {
                format!("{s}{fill}")
            }
        };
        let sep = format!(
            "+{}+\n",
            widths
                .iter()
                .map(|w| "-".repeat(w + 2))
                .collect::<Vec<_>>()
                .join("+")
        );
        let mut out = String::new();
        out.push_str(&sep);
        out.push_str(&line(
            headers
                .iter()
                .zip(&widths)
                .map(|(h, w)| pad(h, *w, false))
                .collect(),
        ));
        out.push_str(&sep);
        for row in &cells {
            out.push_str(&line(
                row.iter()
                    .enumerate()
                    .map(|(i, c)| pad(c, widths[i], numeric[i]))
                    .collect(),
            ));
        }
        out.push_str(&sep);
        let n = rel.rows.len();
        out.push_str(&format!("({} row{})\n", n, if n == 1 { "" } else { "s" }));
        out
    }

    /// RFC 4180 CSV with a header line.
    pub fn to_csv(&self) -> Result<String> {
        let rel = self.visible();
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        let header = rel.schema.names();
        writer
            .write_record(&header)
            .map_err(|e| Error::Value(e.to_string()))?;
        for row in &rel.rows {
            writer
                .write_record(row.iter().map(|v| match v {
                    Value::Null => String::new(),
                    other => other.render(),
                }))
                .map_err(|e| Error::Value(e.to_string()))?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::Value(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Value(e.to_string()))
    }

    /// JSON array of objects keyed by column name.
    pub fn to_json(&self) -> String {
        let rel = self.visible();
        let array: Vec<serde_json::Value> = rel
            .rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                for (col, v) in rel.schema.columns().iter().zip(row) {
                    obj.insert(col.name.clone(), v.to_json());
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::Value::Array(array))
            .expect("serializing plain JSON values cannot fail")
    }
}
