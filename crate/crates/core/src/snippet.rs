//! First preprocessing stage: one function's source plus its AST become a
//! masked token sequence, a token-to-node assignment and a name label.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::ast::{ingest_ast, map_tokens_to_nodes, parse_mini, Ast, AstError, AstRecord, NodeSpec};
use crate::corpus::{
    normalize, split_subtokens, Language, RawToken, SourceRange, TokenKind, TokenRecord, METHOD_NAME_MASK,
};

/// Method names are truncated to this many subtokens.
pub const MAX_LABEL_SUBTOKENS: usize = 6;
pub const MAX_TOKENS_TRAIN: usize = 512;
pub const MAX_TOKENS_EVAL: usize = 1000;

/// Raw input line: `{id, language, source}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: String,
    pub language: Language,
    pub source: String,
}

/// Output of the first stage, one JSONL line per accepted snippet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage1Record {
    pub id: String,
    pub language: Language,
    pub tokens: Vec<TokenRecord>,
    pub nodes: Vec<NodeSpec>,
    pub root: usize,
    /// Node id per token.
    pub assignment: Vec<usize>,
    /// Index of the `[METHOD_NAME_MASK]` token.
    pub name_position: usize,
    pub label: Vec<String>,
}

impl Stage1Record {
    pub fn ast(&self) -> Result<Ast, AstError> {
        Ast::from_parts(self.nodes.clone(), self.root, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    Tokenizer,
    Parse,
    NoMethodName,
    Assignment,
    Length,
    Schema,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Tokenizer => "tokenizer",
            RejectReason::Parse => "parse",
            RejectReason::NoMethodName => "no-method-name",
            RejectReason::Assignment => "assignment",
            RejectReason::Length => "length",
            RejectReason::Schema => "schema",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A snippet dropped by preprocessing, logged as one JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub id: String,
    pub stage: u8,
    pub reason: RejectReason,
    pub detail: String,
}

impl Reject {
    pub fn new(id: &str, stage: u8, reason: RejectReason, detail: impl fmt::Display) -> Self {
        Self {
            id: id.to_string(),
            stage,
            reason,
            detail: detail.to_string(),
        }
    }
}

/// Lexes and parses a mini-language snippet, then runs [`build_stage1`].
pub fn stage1_from_source(record: &SourceRecord, max_tokens: usize) -> Result<Stage1Record, Reject> {
    let reject = |reason, detail: String| Reject::new(&record.id, 1, reason, detail);
    if record.language != Language::Mini {
        return Err(reject(
            RejectReason::Schema,
            format!("no bundled parser for {}; supply an AST record", record.language),
        ));
    }
    let raw = normalize(&record.source, record.language).map_err(|e| reject(RejectReason::Tokenizer, e.to_string()))?;
    let ast = parse_mini(&record.source).map_err(|e| reject(RejectReason::Parse, e.to_string()))?;
    build_stage1(&record.id, record.language, raw, &ast, max_tokens)
}

/// Validates an externally parsed AST record and runs [`build_stage1`].
pub fn stage1_from_ast_record(record: &AstRecord, max_tokens: usize) -> Result<Stage1Record, Reject> {
    let reject = |reason, detail: String| Reject::new(&record.id, 1, reason, detail);
    let language: Language = record
        .language
        .parse()
        .map_err(|e: crate::corpus::UnknownLanguage| reject(RejectReason::Schema, e.to_string()))?;
    let ast = ingest_ast(record).map_err(|e| reject(RejectReason::Parse, e.to_string()))?;
    let raw = normalize(&record.source, language).map_err(|e| reject(RejectReason::Tokenizer, e.to_string()))?;
    build_stage1(&record.id, language, raw, &ast, max_tokens)
}

/// Masks the method name, drops punctuation, enforces the length limit and
/// assigns every remaining token to an AST node.
pub fn build_stage1(
    id: &str,
    language: Language,
    raw: Vec<RawToken>,
    ast: &Ast,
    max_tokens: usize,
) -> Result<Stage1Record, Reject> {
    let reject = |reason, detail: String| Reject::new(id, 1, reason, detail);
    let name_index = find_method_name(&raw, language)
        .ok_or_else(|| reject(RejectReason::NoMethodName, "no declared function name found".into()))?;

    let mut label = split_subtokens(&raw[name_index].text);
    label.truncate(MAX_LABEL_SUBTOKENS);

    let mut tokens = Vec::with_capacity(raw.len());
    let mut name_position = 0;
    for (i, t) in raw.iter().enumerate() {
        if i == name_index {
            name_position = tokens.len();
            tokens.push(TokenRecord {
                text: METHOD_NAME_MASK.to_string(),
                kind: TokenKind::Identifier,
                start: t.range.start,
                end: t.range.end,
                subtokens: vec![METHOD_NAME_MASK.to_string()],
            });
        } else if let Some(rec) = TokenRecord::from_raw(t) {
            tokens.push(rec);
        }
    }
    if tokens.len() > max_tokens {
        return Err(reject(
            RejectReason::Length,
            format!("{} tokens exceed the limit of {max_tokens}", tokens.len()),
        ));
    }

    let ranges: Vec<SourceRange> = tokens.iter().map(TokenRecord::range).collect();
    let assignment = map_tokens_to_nodes(&ranges, ast).map_err(|e| reject(RejectReason::Assignment, e.to_string()))?;

    Ok(Stage1Record {
        id: id.to_string(),
        language,
        tokens,
        nodes: ast.to_parts(),
        root: ast.root(),
        assignment: assignment.0,
        name_position,
        label,
    })
}

/// The first identifier after a declaration keyword, or failing that the
/// first identifier directly followed by `(`.
pub fn find_method_name(raw: &[RawToken], language: Language) -> Option<usize> {
    let decl = language.declaration_keywords();
    let after_keyword = raw.windows(2).position(|w| {
        w[0].kind == TokenKind::Keyword && decl.contains(&w[0].text.as_str()) && w[1].kind == TokenKind::Identifier
    });
    if let Some(i) = after_keyword {
        return Some(i + 1);
    }
    raw.windows(2)
        .position(|w| w[0].kind == TokenKind::Identifier && w[1].kind == TokenKind::Punctuation && w[1].text == "(")
}
