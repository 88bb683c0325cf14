use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A source position, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("syntax error at {position}: {message}")]
    Syntax { position: Position, message: String },

    #[error("binding error: {0}")]
    Bind(String),

    #[error("planning error: {0}")]
    Plan(String),

    #[error("cost model error: {0}")]
    Cost(String),

    #[error("value error: {0}")]
    Value(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("model configuration error: {0}")]
    ModelConfig(String),

    #[error("operator {operator} failed in plan {plan_id}: {source}")]
    Operator {
        operator: String,
        plan_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("execution error: {0}")]
    Exec(String),

    #[error("storage error: {0}")]
    Storage(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn syntax(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Syntax {
            position: Position { line, column },
            message: message.into(),
        }
    }
}
