use serde::{Deserialize, Serialize};
use std::fmt;

/// Closed token-kind taxonomy shared by every supported language.
///
/// The discriminant doubles as the token-kind embedding id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum TokenKind {
    Identifier = 0,
    Keyword = 1,
    Punctuation = 2,
    StringLiteral = 3,
    NumberLiteral = 4,
    Comment = 5,
    Whitespace = 6,
    Newline = 7,
    Indent = 8,
    Dedent = 9,
}

impl TokenKind {
    pub const COUNT: usize = 10;

    pub const ALL: [TokenKind; Self::COUNT] = [
        TokenKind::Identifier,
        TokenKind::Keyword,
        TokenKind::Punctuation,
        TokenKind::StringLiteral,
        TokenKind::NumberLiteral,
        TokenKind::Comment,
        TokenKind::Whitespace,
        TokenKind::Newline,
        TokenKind::Indent,
        TokenKind::Dedent,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    /// Kinds that never reach the model input.
    pub fn is_dropped_for_model(self) -> bool {
        matches!(
            self,
            TokenKind::Punctuation | TokenKind::Comment | TokenKind::Whitespace
        )
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenKind::Identifier => "identifier",
            TokenKind::Keyword => "keyword",
            TokenKind::Punctuation => "punctuation",
            TokenKind::StringLiteral => "string-literal",
            TokenKind::NumberLiteral => "number-literal",
            TokenKind::Comment => "comment",
            TokenKind::Whitespace => "whitespace",
            TokenKind::Newline => "newline",
            TokenKind::Indent => "indent",
            TokenKind::Dedent => "dedent",
        };
        f.write_str(s)
    }
}

/// Half-open byte range `[start, end)` into the snippet source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceRange {
    pub start: usize,
    pub end: usize,
}

impl SourceRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: &SourceRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawToken {
    pub text: String,
    pub kind: TokenKind,
    pub range: SourceRange,
}

impl RawToken {
    pub fn new(text: impl Into<String>, kind: TokenKind, start: usize, end: usize) -> Self {
        Self {
            text: text.into(),
            kind,
            range: SourceRange::new(start, end),
        }
    }
}

pub const MASK_STRING: &str = "[MASK_STRING]";
pub const MASK_NUMBER: &str = "[MASK_NUMBER]";
pub const INDENT: &str = "[INDENT]";
pub const DEDENT: &str = "[DEDENT]";
pub const NEWLINE: &str = "[NEWLINE]";
pub const METHOD_NAME_MASK: &str = "[METHOD_NAME_MASK]";
