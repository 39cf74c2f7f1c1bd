use super::tree::Ast;
use crate::corpus::SourceRange;

/// Assigned AST node id for every token, in token order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenNodeAssignment(pub Vec<usize>);

impl TokenNodeAssignment {
    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("token {token} range {range:?} lies outside the root range {root:?}")]
pub struct AssignError {
    pub token: usize,
    pub range: SourceRange,
    pub root: SourceRange,
}

/// Descends from the root towards each token: among the children containing
/// the token, the one with the shortest range wins (earliest child on ties);
/// the descent stops at the first node with no containing child.
pub fn map_tokens_to_nodes(tokens: &[SourceRange], tree: &Ast) -> Result<TokenNodeAssignment, AssignError> {
    let root_range = tree.node(tree.root()).range;
    tokens
        .iter()
        .enumerate()
        .map(|(i, range)| {
            if !root_range.contains(range) {
                return Err(AssignError {
                    token: i,
                    range: *range,
                    root: root_range,
                });
            }
            Ok(descend(tree, range))
        })
        .collect::<Result<_, _>>()
        .map(TokenNodeAssignment)
}

fn descend(tree: &Ast, range: &SourceRange) -> usize {
    let mut current = tree.root();
    loop {
        let mut best: Option<usize> = None;
        for &c in &tree.node(current).children {
            let r = tree.node(c).range;
            if r.contains(range) && best.is_none_or(|b| r.len() < tree.node(b).range.len()) {
                best = Some(c);
            }
        }
        match best {
            Some(c) => current = c,
            None => return current,
        }
    }
}
