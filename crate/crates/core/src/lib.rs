//! A semantic SQL engine.
//!
//! Queries are written in an extended SQL dialect whose `PROMPT`, `SEM_MATCH`,
//! `SEM_GROUP`, `TABULAR`, `FILE` and `DIRECTORY` tokens describe work over
//! unstructured text. A statement is parsed ([`sql`]), bound and lowered into a
//! logical plan ([`plan`]), expanded into alternative physical plans mixing
//! model-backed and classic operators ([`physical`]), costed with the
//! accuracy/cost trade-off model ([`cost`]) and executed against a pluggable
//! model backend ([`exec`], [`gateway`]). Accuracy coefficients are refined
//! from feedback by [`calibration`].

pub mod calibration;
pub mod cost;
pub mod error;
pub mod exec;
pub mod gateway;
pub mod physical;
pub mod plan;
pub mod relation;
pub mod session;
pub mod sql;
pub mod storage;

pub use error::{Error, Result};
pub use relation::{cosine_similarity, Column, DataType, EmbeddingVector, Relation, Schema, Value};
pub use session::{QueryOptions, QueryResult, Session, SessionOptions, StatementOutcome};
