//! Syntax trees, the JSONL interchange format, the bundled mini-language
//! parser and the token-to-node assignment.

mod ingest;
mod mapping;
mod mini;
mod tree;

pub use ingest::{ingest_ast, AstRecord};
pub use mapping::{map_tokens_to_nodes, AssignError, TokenNodeAssignment};
pub use mini::{parse_mini, ParseError};
pub use tree::{Ast, AstError, AstNode, NodeSpec};
