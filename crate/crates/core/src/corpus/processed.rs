use serde::{Deserialize, Serialize};

use super::subtoken::split_subtokens;
use super::token::{RawToken, SourceRange, TokenKind, DEDENT, INDENT, MASK_NUMBER, MASK_STRING, NEWLINE};
use super::vocab::{Vocabulary, PAD_ID};

/// Fixed number of subtoken slots per input token.
pub const SUBTOKEN_SLOTS: usize = 5;

/// String-level token as produced by the first preprocessing stage, before
/// vocabularization. Holds at most [`SUBTOKEN_SLOTS`] subtokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub text: String,
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    pub subtokens: Vec<String>,
}

impl TokenRecord {
    /// Converts a normalized token; returns `None` for kinds that never reach the
    /// model (punctuation, comments, whitespace).
    pub fn from_raw(raw: &RawToken) -> Option<Self> {
        if raw.kind.is_dropped_for_model() {
            return None;
        }
        let mut subtokens = match raw.kind {
            TokenKind::StringLiteral => vec![MASK_STRING.to_string()],
            TokenKind::NumberLiteral => vec![MASK_NUMBER.to_string()],
            TokenKind::Newline => vec![NEWLINE.to_string()],
            TokenKind::Indent => vec![INDENT.to_string()],
            TokenKind::Dedent => vec![DEDENT.to_string()],
            _ => split_subtokens(&raw.text),
        };
        subtokens.truncate(SUBTOKEN_SLOTS);
        Some(Self {
            text: raw.text.clone(),
            kind: raw.kind,
            start: raw.range.start,
            end: raw.range.end,
            subtokens,
        })
    }

    pub fn range(&self) -> SourceRange {
        SourceRange::new(self.start, self.end)
    }
}

/// Model-ready token: exactly five subtoken ids (PAD-filled), the token kind
/// and the text kept for copy targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessedToken {
    pub subtokens: [u32; SUBTOKEN_SLOTS],
    pub kind: TokenKind,
    pub range: SourceRange,
    pub original_text: String,
}

impl ProcessedToken {
    pub fn from_record(record: &TokenRecord, vocab: &Vocabulary) -> Self {
        let mut subtokens = [PAD_ID; SUBTOKEN_SLOTS];
        for (slot, s) in subtokens.iter_mut().zip(&record.subtokens) {
            *slot = vocab.id_or_unk(s);
        }
        Self {
            subtokens,
            kind: record.kind,
            range: record.range(),
            original_text: record.text.clone(),
        }
    }
}
