//! Recursive-descent parser for the bundled demonstration language.
//!
//! ```text
//! function   = "fn" NAME "(" [NAME {"," NAME}] ")" block
//! block      = "{" {statement} "}"
//! statement  = "let" NAME "=" expr [";"]
//!            | "return" [expr] [";"]
//!            | "if" expr block ["else" (block | if-statement)]
//!            | "while" expr block
//!            | "for" NAME "in" expr block
//!            | expr ["=" expr] [";"]
//! expr       = and {"||" and}
//! and        = compare {"&&" compare}
//! compare    = sum {("==" | "!=" | "<" | ">" | "<=" | ">=") sum}
//! sum        = product {("+" | "-") product}
//! product    = unary {("*" | "/" | "%") unary}
//! unary      = ("!" | "-") unary | postfix
//! postfix    = primary {"(" [expr {"," expr}] ")" | "." NAME | "[" expr "]"}
//! primary    = NAME | NUMBER | STRING | "true" | "false" | "nil"
//!            | "(" expr ")" | "[" [expr {"," expr}] "]"
//! ```
//!
//! Newlines and indentation are insignificant. Comments are `//`, `/* */` or `#`.

use super::tree::{Ast, NodeSpec};
use crate::corpus::{normalize, Language, LexError, RawToken, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
}

/// Parses one mini-language function into an [`Ast`].
pub fn parse_mini(source: &str) -> Result<Ast, ParseError> {
    let tokens: Vec<RawToken> = normalize(source, Language::Mini)?
        .into_iter()
        .filter(|t| !matches!(t.kind, TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent))
        .collect();
    let mut p = Parser {
        source,
        tokens,
        pos: 0,
        nodes: Vec::new(),
    };
    let root = p.function()?;
    if p.pos < p.tokens.len() {
        return Err(p.error("trailing input after function"));
    }
    // node ids were handed out in creation order, which is already dense
    Ok(Ast::from_parts(p.nodes, root, Some(source.len())).expect("parser builds well-formed trees"))
}

struct Parser<'a> {
    source: &'a str,
    tokens: Vec<RawToken>,
    pos: usize,
    nodes: Vec<NodeSpec>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&RawToken> {
        self.tokens.get(self.pos)
    }

    fn peek_is(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text && t.kind != TokenKind::StringLiteral)
    }

    fn error(&self, message: &str) -> ParseError {
        let offset = self
            .peek()
            .map_or(self.source.len(), |t| t.range.start);
        let before = &self.source[..offset];
        let line = before.matches('\n').count() + 1;
        let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
        let found = self.peek().map_or("end of input".to_string(), |t| format!("`{}`", t.text));
        ParseError::Syntax {
            line,
            column,
            message: format!("{message}, found {found}"),
        }
    }

    fn expect(&mut self, text: &str) -> Result<RawToken, ParseError> {
        if self.peek_is(text) {
            Ok(self.advance())
        } else {
            Err(self.error(&format!("expected `{text}`")))
        }
    }

    fn advance(&mut self) -> RawToken {
        let t = self.tokens[self.pos].clone();
        self.pos += 1;
        t
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.peek_is(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn node(&mut self, node_type: &str, start: usize, end: usize, children: Vec<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(NodeSpec {
            id,
            node_type: node_type.to_string(),
            start,
            end,
            children,
        });
        id
    }

    fn start(&self, id: usize) -> usize {
        self.nodes[id].start
    }

    fn end(&self, id: usize) -> usize {
        self.nodes[id].end
    }

    fn name(&mut self, node_type: &str) -> Result<usize, ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                let t = self.advance();
                Ok(self.node(node_type, t.range.start, t.range.end, vec![]))
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn function(&mut self) -> Result<usize, ParseError> {
        let kw = self.expect("fn")?;
        let name = self.name("Name")?;
        let open = self.expect("(")?;
        let mut params = Vec::new();
        if !self.peek_is(")") {
            loop {
                params.push(self.name("Param")?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        let close = self.expect(")")?;
        let params = self.node("Params", open.range.start, close.range.end, params);
        let body = self.block()?;
        let end = self.end(body);
        Ok(self.node("Function", kw.range.start, end, vec![name, params, body]))
    }

    fn block(&mut self) -> Result<usize, ParseError> {
        let open = self.expect("{")?;
        let mut stmts = Vec::new();
        while !self.peek_is("}") {
            if self.peek().is_none() {
                return Err(self.error("unclosed block"));
            }
            stmts.push(self.statement()?);
        }
        let close = self.advance();
        Ok(self.node("Block", open.range.start, close.range.end, stmts))
    }

    /// Consumes an optional `;`, returning the statement end offset.
    fn terminator(&mut self, end: usize) -> usize {
        if self.peek_is(";") {
            self.advance().range.end
        } else {
            end
        }
    }

    fn statement(&mut self) -> Result<usize, ParseError> {
        let Some(first) = self.peek().cloned() else {
            return Err(self.error("expected statement"));
        };
        let start = first.range.start;
        match first.text.as_str() {
            "let" if first.kind == TokenKind::Keyword => {
                self.advance();
                let target = self.name("Ident")?;
                self.expect("=")?;
                let value = self.expr()?;
                let end = self.terminator(self.end(value));
                Ok(self.node("Let", start, end, vec![target, value]))
            }
            "return" if first.kind == TokenKind::Keyword => {
                self.advance();
                let mut children = Vec::new();
                let mut end = first.range.end;
                if !self.peek_is(";") && !self.peek_is("}") && self.peek().is_some() {
                    let value = self.expr()?;
                    end = self.end(value);
                    children.push(value);
                }
                let end = self.terminator(end);
                Ok(self.node("Return", start, end, children))
            }
            "if" if first.kind == TokenKind::Keyword => self.if_statement(),
            "while" if first.kind == TokenKind::Keyword => {
                self.advance();
                let cond = self.expr()?;
                let body = self.block()?;
                let end = self.end(body);
                Ok(self.node("While", start, end, vec![cond, body]))
            }
            "for" if first.kind == TokenKind::Keyword => {
                self.advance();
                let var = self.name("Ident")?;
                self.expect("in")?;
                let iter = self.expr()?;
                let body = self.block()?;
                let end = self.end(body);
                Ok(self.node("For", start, end, vec![var, iter, body]))
            }
            _ => {
                let target = self.expr()?;
                if self.eat("=") {
                    let value = self.expr()?;
                    let end = self.terminator(self.end(value));
                    Ok(self.node("Assign", start, end, vec![target, value]))
                } else {
                    let end = self.terminator(self.end(target));
                    Ok(self.node("ExprStmt", start, end, vec![target]))
                }
            }
        }
    }

    fn if_statement(&mut self) -> Result<usize, ParseError> {
        let kw = self.expect("if")?;
        let cond = self.expr()?;
        let then = self.block()?;
        let mut children = vec![cond, then];
        let mut end = self.end(then);
        if self.eat("else") {
            let alt = if self.peek_is("if") {
                self.if_statement()?
            } else {
                self.block()?
            };
            end = self.end(alt);
            children.push(alt);
        }
        Ok(self.node("If", kw.range.start, end, children))
    }

    fn expr(&mut self) -> Result<usize, ParseError> {
        self.binary_level(0)
    }

    fn binary_level(&mut self, level: usize) -> Result<usize, ParseError> {
        const LEVELS: [&[(&str, &str)]; 5] = [
            &[("||", "Or")],
            &[("&&", "And")],
            &[
                ("==", "Eq"),
                ("!=", "NotEq"),
                ("<=", "LessEq"),
                (">=", "GreaterEq"),
                ("<", "Less"),
                (">", "Greater"),
            ],
            &[("+", "Plus"), ("-", "Minus")],
            &[("*", "Times"), ("/", "Divide"), ("%", "Modulo")],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary_level(level + 1)?;
        loop {
            let op = LEVELS[level].iter().find(|(tok, _)| self.peek_is(tok));
            let Some(&(_, node_type)) = op else {
                return Ok(lhs);
            };
            self.advance();
            let rhs = self.binary_level(level + 1)?;
            let (start, end) = (self.start(lhs), self.end(rhs));
            lhs = self.node(node_type, start, end, vec![lhs, rhs]);
        }
    }

    fn unary(&mut self) -> Result<usize, ParseError> {
        for (tok, node_type) in [("!", "Not"), ("-", "Negate")] {
            if self.peek_is(tok) {
                let op = self.advance();
                let operand = self.unary()?;
                let end = self.end(operand);
                return Ok(self.node(node_type, op.range.start, end, vec![operand]));
            }
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<usize, ParseError> {
        let mut expr = self.primary()?;
        loop {
            let start = self.start(expr);
            if self.peek_is("(") {
                let open = self.advance();
                let args = self.comma_list(")")?;
                let close = self.expect(")")?;
                let args = self.node("Args", open.range.start, close.range.end, args);
                expr = self.node("Call", start, close.range.end, vec![expr, args]);
            } else if self.eat(".") {
                let field = self.name("Ident")?;
                let end = self.end(field);
                expr = self.node("Field", start, end, vec![expr, field]);
            } else if self.eat("[") {
                let index = self.expr()?;
                let close = self.expect("]")?;
                expr = self.node("Index", start, close.range.end, vec![expr, index]);
            } else {
                return Ok(expr);
            }
        }
    }

    fn comma_list(&mut self, close: &str) -> Result<Vec<usize>, ParseError> {
        let mut items = Vec::new();
        if self.peek_is(close) {
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if !self.eat(",") {
                return Ok(items);
            }
        }
    }

    fn primary(&mut self) -> Result<usize, ParseError> {
        let Some(t) = self.peek().cloned() else {
            return Err(self.error("expected expression"));
        };
        let (s, e) = (t.range.start, t.range.end);
        let leaf = match t.kind {
            TokenKind::Identifier => Some("Ident"),
            TokenKind::NumberLiteral => Some("Number"),
            TokenKind::StringLiteral => Some("String"),
            TokenKind::Keyword if t.text == "true" || t.text == "false" => Some("Bool"),
            TokenKind::Keyword if t.text == "nil" => Some("Nil"),
            _ => None,
        };
        if let Some(node_type) = leaf {
            self.advance();
            return Ok(self.node(node_type, s, e, vec![]));
        }
        if t.text == "(" && t.kind == TokenKind::Punctuation {
            self.advance();
            let inner = self.expr()?;
            self.expect(")")?;
            return Ok(inner);
        }
        if t.text == "[" && t.kind == TokenKind::Punctuation {
            self.advance();
            let items = self.comma_list("]")?;
            let close = self.expect("]")?;
            return Ok(self.node("List", s, close.range.end, items));
        }
        Err(self.error("expected expression"))
    }
}
