//! Source normalization, subtoken splitting and vocabularies.

mod lang;
mod normalize;
mod processed;
mod subtoken;
mod token;
pub mod vocab;

pub use lang::{Language, UnknownLanguage};
pub use normalize::{normalize, LexError};
pub use processed::{ProcessedToken, TokenRecord, SUBTOKEN_SLOTS};
pub use subtoken::split_subtokens;
pub use token::{
    RawToken, SourceRange, TokenKind, DEDENT, INDENT, MASK_NUMBER, MASK_STRING, METHOD_NAME_MASK,
    NEWLINE,
};
pub use vocab::{build_vocab, VocabError, Vocabulary};
