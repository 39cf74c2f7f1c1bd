//! Source normalization: lex a snippet, drop comments and blank lines, mask
//! literals and turn indentation changes into `[INDENT]` / `[DEDENT]` tokens.

use super::lang::Language;
use super::token::{RawToken, TokenKind, DEDENT, INDENT, MASK_NUMBER, MASK_STRING, NEWLINE};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexError {
    #[error("unterminated string literal starting at byte {0}")]
    UnterminatedString(usize),
    #[error("unterminated block comment starting at byte {0}")]
    UnterminatedComment(usize),
    #[error("unexpected character {ch:?} at byte {offset}")]
    UnexpectedChar { ch: char, offset: usize },
}

const MULTI_CHAR_OPERATORS: &[&str] = &[
    "===", "!==", "**=", "<<=", ">>=", "...", ">>>", "==", "!=", "<=", ">=", "&&", "||", "->",
    "=>", "::", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>", "++", "--", "**",
    ":=", "..", "<-", "?.",
];

const SINGLE_CHAR_PUNCTUATION: &str = "(){}[];:,.+-*/%=<>!&|^~?@#\\$`";

/// Lexes `source` into the normalized token stream fed to the rest of the pipeline.
///
/// Comments and blank lines disappear, string and number literals collapse to
/// `[MASK_STRING]` / `[MASK_NUMBER]`, and a `[NEWLINE]` token separates
/// consecutive non-empty lines. Indentation changes relative to the first line
/// become zero-width `[INDENT]` / `[DEDENT]` tokens, one per level.
pub fn normalize(source: &str, lang: Language) -> Result<Vec<RawToken>, LexError> {
    let raw = lex(source, lang)?;
    let content: Vec<RawToken> = drop_doc_strings(raw, source, lang)
        .into_iter()
        .filter(|t| {
            !matches!(
                t.kind,
                TokenKind::Comment | TokenKind::Whitespace | TokenKind::Newline
            )
        })
        .collect();
    Ok(layout(content, source))
}

fn lex(source: &str, lang: Language) -> Result<Vec<RawToken>, LexError> {
    let mut lexer = Lexer {
        src: source,
        pos: 0,
        lang,
        out: Vec::new(),
    };
    lexer.run()?;
    Ok(lexer.out)
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    lang: Language,
    out: Vec<RawToken>,
}

impl Lexer<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn push(&mut self, kind: TokenKind, start: usize, text: Option<&str>) {
        let text = text.unwrap_or(&self.src[start..self.pos]).to_string();
        self.out.push(RawToken::new(text, kind, start, self.pos));
    }

    fn at_line_start(&self) -> bool {
        self.src[..self.pos]
            .chars()
            .rev()
            .take_while(|c| *c != '\n')
            .all(|c| c == ' ' || c == '\t')
    }

    fn run(&mut self) -> Result<(), LexError> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            if c == '\n' || self.rest().starts_with("\r\n") {
                self.pos += if c == '\n' { 1 } else { 2 };
                self.push(TokenKind::Newline, start, None);
            } else if c == ' ' || c == '\t' || c == '\r' || c == '\x0b' || c == '\x0c' {
                while matches!(self.peek(), Some(' ' | '\t' | '\x0b' | '\x0c'))
                    || (self.peek() == Some('\r') && !self.rest().starts_with("\r\n"))
                {
                    self.pos += 1;
                }
                self.push(TokenKind::Whitespace, start, None);
            } else if self.try_comment()? {
                self.push(TokenKind::Comment, start, None);
            } else if let Some(quote_len) = self.string_opening() {
                self.lex_string(quote_len)?;
                self.push(TokenKind::StringLiteral, start, Some(MASK_STRING));
            } else if c.is_ascii_digit()
                || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit()))
            {
                self.lex_number();
                self.push(TokenKind::NumberLiteral, start, Some(MASK_NUMBER));
            } else if self.is_ident_start(c) {
                self.lex_identifier();
                let text = &self.src[start..self.pos];
                let kind = if self.lang.keywords().contains(&text) {
                    TokenKind::Keyword
                } else {
                    TokenKind::Identifier
                };
                self.push(kind, start, None);
            } else if let Some(op) = MULTI_CHAR_OPERATORS
                .iter()
                .find(|op| self.rest().starts_with(**op))
            {
                self.pos += op.len();
                self.push(TokenKind::Punctuation, start, None);
            } else if SINGLE_CHAR_PUNCTUATION.contains(c) {
                self.pos += c.len_utf8();
                self.push(TokenKind::Punctuation, start, None);
            } else {
                return Err(LexError::UnexpectedChar { ch: c, offset: start });
            }
        }
        Ok(())
    }

    fn try_comment(&mut self) -> Result<bool, LexError> {
        let start = self.pos;
        for opener in self.lang.line_comments() {
            if self.rest().starts_with(opener) {
                let len = self.rest().find('\n').unwrap_or(self.rest().len());
                let len = if self.rest()[..len].ends_with('\r') { len - 1 } else { len };
                self.pos += len;
                return Ok(true);
            }
        }
        for (open, close) in self.lang.block_comments() {
            // Ruby's `=begin` only counts at the start of a line.
            if self.rest().starts_with(open) && (*open != "=begin" || self.at_line_start()) {
                let body = &self.rest()[open.len()..];
                match body.find(close) {
                    Some(i) => {
                        self.pos += open.len() + i + close.len();
                        return Ok(true);
                    }
                    None => return Err(LexError::UnterminatedComment(start)),
                }
            }
        }
        Ok(false)
    }

    /// Returns the byte length of a string prefix plus opening quote, if a string starts here.
    fn string_opening(&self) -> Option<usize> {
        let rest = self.rest();
        let quotes = self.lang.quotes();
        if rest.chars().next().is_some_and(|c| quotes.contains(&c)) {
            return Some(0);
        }
        if self.lang == Language::Python {
            let prefix_len = rest
                .chars()
                .take(3)
                .take_while(|c| matches!(c.to_ascii_lowercase(), 'r' | 'b' | 'u' | 'f'))
                .count();
            if (1..=2).contains(&prefix_len)
                && rest[prefix_len..].starts_with(['"', '\''])
                && self.previous_char_is_boundary()
            {
                return Some(prefix_len);
            }
        }
        None
    }

    fn previous_char_is_boundary(&self) -> bool {
        self.src[..self.pos]
            .chars()
            .next_back()
            .is_none_or(|c| !(c.is_alphanumeric() || c == '_'))
    }

    fn lex_string(&mut self, prefix_len: usize) -> Result<(), LexError> {
        let start = self.pos;
        self.pos += prefix_len;
        let quote = self.peek().expect("string opening checked by caller");
        let triple: String = std::iter::repeat_n(quote, 3).collect();
        if self.lang == Language::Python && self.rest().starts_with(&triple) {
            self.pos += 3;
            return match self.rest().find(&triple) {
                Some(i) => {
                    self.pos += i + 3;
                    Ok(())
                }
                None => Err(LexError::UnterminatedString(start)),
            };
        }
        self.pos += quote.len_utf8();
        let multiline = quote == '`';
        let raw = quote == '`' && self.lang == Language::Go;
        while let Some(c) = self.peek() {
            if c == '\\' && !raw {
                self.pos += 1;
                if let Some(escaped) = self.peek() {
                    self.pos += escaped.len_utf8();
                }
                continue;
            }
            if c == '\n' && !multiline {
                return Err(LexError::UnterminatedString(start));
            }
            self.pos += c.len_utf8();
            if c == quote {
                return Ok(());
            }
        }
        Err(LexError::UnterminatedString(start))
    }

    fn lex_number(&mut self) {
        let rest = self.rest();
        let radix_prefixed = rest.len() > 1
            && rest.starts_with('0')
            && matches!(rest.as_bytes()[1], b'x' | b'X' | b'b' | b'B' | b'o' | b'O');
        if radix_prefixed {
            self.pos += 2;
            self.eat_while(|c| c.is_ascii_alphanumeric() || c == '_');
            return;
        }
        self.eat_while(|c| c.is_ascii_digit() || c == '_');
        if self.peek() == Some('.') && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
            self.eat_while(|c| c.is_ascii_digit() || c == '_');
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let sign = usize::from(matches!(self.peek_at(1), Some('+' | '-')));
            if self.peek_at(1 + sign).is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1 + sign;
                self.eat_while(|c| c.is_ascii_digit());
            }
        }
        // type suffixes such as `10L`, `1.5f`, `3j`
        self.eat_while(|c| c.is_ascii_alphanumeric() || c == '_');
    }

    fn is_ident_start(&self, c: char) -> bool {
        c.is_alphabetic()
            || c == '_'
            || (c == '$' && matches!(self.lang, Language::Javascript | Language::Java))
    }

    fn is_ident_continue(&self, c: char) -> bool {
        c.is_alphanumeric()
            || c == '_'
            || (c == '$' && matches!(self.lang, Language::Javascript | Language::Java))
    }

    fn lex_identifier(&mut self) {
        while let Some(c) = self.peek() {
            if self.is_ident_continue(c) {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        if self.lang == Language::Ruby
            && matches!(self.peek(), Some('?' | '!'))
            && self.peek_at(1) != Some('=')
        {
            self.pos += 1;
        }
    }

    fn eat_while(&mut self, pred: impl Fn(char) -> bool) {
        while let Some(c) = self.peek() {
            if pred(c) {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }
}

/// Python doc strings are string literals standing alone on their line(s); they
/// count as comments.
fn drop_doc_strings(tokens: Vec<RawToken>, source: &str, lang: Language) -> Vec<RawToken> {
    if lang != Language::Python {
        return tokens;
    }
    let significant: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| !matches!(t.kind, TokenKind::Whitespace | TokenKind::Comment))
        .map(|(i, _)| i)
        .collect();
    let mut doc = vec![false; tokens.len()];
    for (pos, &i) in significant.iter().enumerate() {
        let t = &tokens[i];
        if t.kind != TokenKind::StringLiteral {
            continue;
        }
        let begins_line = pos == 0 || tokens[significant[pos - 1]].kind == TokenKind::Newline;
        let ends_line = pos + 1 == significant.len()
            || tokens[significant[pos + 1]].kind == TokenKind::Newline;
        let body = source[t.range.start..t.range.end]
            .trim_start_matches(|c: char| c.is_ascii_alphabetic());
        let triple = body.starts_with("\"\"\"") || body.starts_with("'''");
        if begins_line && ends_line && triple {
            doc[i] = true;
        }
    }
    tokens
        .into_iter()
        .zip(doc)
        .filter(|(_, is_doc)| !is_doc)
        .map(|(t, _)| t)
        .collect()
}

fn line_start(source: &str, offset: usize) -> usize {
    source[..offset].rfind('\n').map_or(0, |i| i + 1)
}

fn leading_whitespace(source: &str, offset: usize) -> &str {
    let start = line_start(source, offset);
    let line = &source[start..];
    let n = line
        .char_indices()
        .find(|(_, c)| *c != ' ' && *c != '\t')
        .map_or(line.len(), |(i, _)| i);
    &line[..n]
}

/// Indentation tracker. The unit is inferred from the first indented line;
/// a tab counts as one unit.
struct Indentation {
    unit: Option<usize>,
    /// (column, levels pushed) for every open indentation step.
    stack: Vec<(usize, usize)>,
    base: usize,
}

impl Indentation {
    const DEFAULT_TAB: usize = 4;

    fn new(first_line_ws: &str) -> Self {
        let mut ind = Self {
            unit: None,
            stack: Vec::new(),
            base: 0,
        };
        ind.base = ind.columns(first_line_ws);
        ind
    }

    fn tab_width(&self) -> usize {
        self.unit.unwrap_or(Self::DEFAULT_TAB)
    }

    fn columns(&self, ws: &str) -> usize {
        ws.chars()
            .map(|c| if c == '\t' { self.tab_width() } else { 1 })
            .sum()
    }

    fn top(&self) -> usize {
        self.stack.last().map_or(self.base, |(c, _)| *c)
    }

    /// Signed level change for a line with leading whitespace `ws`.
    fn update(&mut self, ws: &str) -> isize {
        if self.unit.is_none() {
            let cols = self.columns(ws);
            if cols > self.base {
                let extra = &ws[ws.len().min(self.base)..];
                let unit = if extra.starts_with('\t') {
                    Self::DEFAULT_TAB
                } else {
                    (cols - self.base).max(1)
                };
                self.unit = Some(unit);
            }
        }
        let cols = self.columns(ws);
        let unit = self.tab_width();
        let mut delta = 0isize;
        while cols < self.top() {
            let (_, levels) = self.stack.pop().expect("top above base implies a stack entry");
            delta -= levels as isize;
        }
        if cols > self.top() {
            let levels = ((cols - self.top()) as f64 / unit as f64).round().max(1.0) as usize;
            self.stack.push((cols, levels));
            delta += levels as isize;
        }
        delta
    }

    fn open_levels(&self) -> usize {
        self.stack.iter().map(|(_, l)| l).sum()
    }
}

fn layout(content: Vec<RawToken>, source: &str) -> Vec<RawToken> {
    let mut out = Vec::with_capacity(content.len() * 2);
    let Some(first) = content.first() else {
        return out;
    };
    let mut indentation = Indentation::new(leading_whitespace(source, first.range.start));
    let mut prev_end: Option<usize> = None;
    for tok in content {
        if let Some(end) = prev_end {
            if let Some(nl) = source[end..tok.range.start].find('\n') {
                let nl = end + nl;
                let nl_start = if nl > 0 && source.as_bytes()[nl - 1] == b'\r' && nl - 1 >= end {
                    nl - 1
                } else {
                    nl
                };
                out.push(RawToken::new(NEWLINE, TokenKind::Newline, nl_start, nl + 1));
                let delta = indentation.update(leading_whitespace(source, tok.range.start));
                let at = tok.range.start;
                for _ in 0..delta.max(0) {
                    out.push(RawToken::new(INDENT, TokenKind::Indent, at, at));
                }
                for _ in 0..(-delta).max(0) {
                    out.push(RawToken::new(DEDENT, TokenKind::Dedent, at, at));
                }
            }
        }
        prev_end = Some(tok.range.end);
        out.push(tok);
    }
    if let Some(end) = prev_end {
        for _ in 0..indentation.open_levels() {
            out.push(RawToken::new(DEDENT, TokenKind::Dedent, end, end));
        }
    }
    out
}
