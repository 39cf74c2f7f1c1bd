use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Source languages the normalizer knows how to lex.
///
/// `Mini` is the bundled demonstration language parsed by [`crate::ast::parse_mini`];
/// the others rely on externally produced ASTs ingested as JSONL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Mini,
    Python,
    Javascript,
    Go,
    Ruby,
    Java,
}

impl Language {
    pub const ALL: [Language; 6] = [
        Language::Mini,
        Language::Python,
        Language::Javascript,
        Language::Go,
        Language::Ruby,
        Language::Java,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Language::Mini => "mini",
            Language::Python => "python",
            Language::Javascript => "javascript",
            Language::Go => "go",
            Language::Ruby => "ruby",
            Language::Java => "java",
        }
    }

    pub(crate) fn keywords(self) -> &'static [&'static str] {
        match self {
            Language::Mini => &[
                "fn", "let", "if", "else", "while", "for", "in", "return", "true", "false", "nil",
            ],
            Language::Python => &[
                "False", "None", "True", "and", "as", "assert", "async", "await", "break",
                "class", "continue", "def", "del", "elif", "else", "except", "finally", "for",
                "from", "global", "if", "import", "in", "is", "lambda", "nonlocal", "not", "or",
                "pass", "raise", "return", "try", "while", "with", "yield",
            ],
            Language::Javascript => &[
                "break", "case", "catch", "class", "const", "continue", "debugger", "default",
                "delete", "do", "else", "export", "extends", "false", "finally", "for",
                "function", "if", "import", "in", "instanceof", "let", "new", "null", "return",
                "super", "switch", "this", "throw", "true", "try", "typeof", "undefined", "var",
                "void", "while", "with", "yield", "async", "await", "of",
            ],
            Language::Go => &[
                "break", "case", "chan", "const", "continue", "default", "defer", "else",
                "fallthrough", "for", "func", "go", "goto", "if", "import", "interface", "map",
                "package", "range", "return", "select", "struct", "switch", "type", "var", "nil",
                "true", "false",
            ],
            Language::Ruby => &[
                "BEGIN", "END", "alias", "and", "begin", "break", "case", "class", "def",
                "defined?", "do", "else", "elsif", "end", "ensure", "false", "for", "if", "in",
                "module", "next", "nil", "not", "or", "redo", "rescue", "retry", "return",
                "self", "super", "then", "true", "undef", "unless", "until", "when", "while",
                "yield",
            ],
            Language::Java => &[
                "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char",
                "class", "const", "continue", "default", "do", "double", "else", "enum",
                "extends", "final", "finally", "float", "for", "goto", "if", "implements",
                "import", "instanceof", "int", "interface", "long", "native", "new", "package",
                "private", "protected", "public", "return", "short", "static", "strictfp",
                "super", "switch", "synchronized", "this", "throw", "throws", "transient", "try",
                "void", "volatile", "while", "true", "false", "null",
            ],
        }
    }

    pub(crate) fn line_comments(self) -> &'static [&'static str] {
        match self {
            Language::Mini => &["//", "#"],
            Language::Python | Language::Ruby => &["#"],
            Language::Javascript | Language::Go | Language::Java => &["//"],
        }
    }

    pub(crate) fn block_comments(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Language::Mini | Language::Javascript | Language::Go | Language::Java => {
                &[("/*", "*/")]
            }
            Language::Ruby => &[("=begin", "=end")],
            Language::Python => &[],
        }
    }

    /// Quote characters that open a string literal.
    pub(crate) fn quotes(self) -> &'static [char] {
        match self {
            Language::Mini | Language::Python | Language::Java => &['"', '\''],
            Language::Javascript | Language::Go | Language::Ruby => &['"', '\'', '`'],
        }
    }

    /// Keywords that introduce a named function or method declaration.
    pub(crate) fn declaration_keywords(self) -> &'static [&'static str] {
        match self {
            Language::Mini => &["fn"],
            Language::Python | Language::Ruby => &["def"],
            Language::Javascript => &["function"],
            Language::Go => &["func"],
            Language::Java => &[],
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown language `{0}`")]
pub struct UnknownLanguage(pub String);

impl FromStr for Language {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mini" => Ok(Language::Mini),
            "python" | "py" => Ok(Language::Python),
            "javascript" | "js" => Ok(Language::Javascript),
            "go" => Ok(Language::Go),
            "ruby" | "rb" => Ok(Language::Ruby),
            "java" => Ok(Language::Java),
            other => Err(UnknownLanguage(other.to_string())),
        }
    }
}
