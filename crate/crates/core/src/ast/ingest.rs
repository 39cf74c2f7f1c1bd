use serde::{Deserialize, Serialize};

use super::tree::{Ast, AstError, NodeSpec};

/// One line of the AST interchange JSONL:
/// `{id, language, source, nodes: [{id, type, start, end, children}], root}`.
/// Offsets are bytes into `source`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstRecord {
    pub id: String,
    pub language: String,
    pub source: String,
    pub nodes: Vec<NodeSpec>,
    pub root: usize,
}

/// Validates an interchange record into an [`Ast`].
pub fn ingest_ast(record: &AstRecord) -> Result<Ast, AstError> {
    Ast::from_parts(record.nodes.clone(), record.root, Some(record.source.len()))
}

impl AstRecord {
    pub fn from_json(line: &str) -> serde_json::Result<Self> {
        serde_json::from_str(line)
    }
}
