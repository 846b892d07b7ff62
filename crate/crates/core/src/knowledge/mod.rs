//! Concept schemas, the knowledge DSL, and exact reasoning over it.

mod expr;
mod parser;
mod reasoning;
mod schema;

use thiserror::Error;

pub use expr::{Expr, KnowledgeExpr, LabelComponent, LabelDef, LabelSpace, LabelValue, Predicate, Ty};
pub use parser::parse_knowledge;
pub use reasoning::{
    admissible_set, figure_pattern_distribution, AdmissibleIndex, FigureFlags, Reasoner,
    StructureDecl, MAX_FULL_ASSIGNMENTS,
};
pub use schema::{Assignments, ConceptSchema, ObjectSlot, Variable};

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("assignment: {0}")]
    Assignment(String),
    #[error("label: {0}")]
    Label(String),
    #[error("distribution: {0}")]
    Distribution(String),
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown variable `{name}` at {line}:{col}")]
    UnknownVariable { name: String, line: usize, col: usize },
    #[error("label `{label}` is not total: {msg}")]
    NonTotal { label: String, msg: String },
    #[error("joint space of {assignments} assignments exceeds the limit of {limit}")]
    TooLarge { assignments: u128, limit: u128 },
    #[error("structure: {0}")]
    Structure(String),
}
