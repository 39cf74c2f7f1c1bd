use serde::{Deserialize, Serialize};

use crate::corpus::SourceRange;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub id: usize,
    pub node_type: String,
    pub range: SourceRange,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
}

impl AstNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AstError {
    #[error("tree has no nodes")]
    Empty,
    #[error("node id {id} is out of range for {count} nodes")]
    IdOutOfRange { id: usize, count: usize },
    #[error("node id {0} appears more than once")]
    DuplicateId(usize),
    #[error("root id {0} does not name a node")]
    MissingRoot(usize),
    #[error("node {parent} lists child {child}, which does not exist")]
    DanglingChild { parent: usize, child: usize },
    #[error("node {node} has more than one parent ({first} and {second})")]
    MultipleParents {
        node: usize,
        first: usize,
        second: usize,
    },
    #[error("cycle through node {0}")]
    Cycle(usize),
    #[error("multiple roots: nodes {0:?} are not reachable from the root")]
    MultipleRoots(Vec<usize>),
    #[error("node {node} has an inverted range {start}..{end}")]
    InvertedRange { node: usize, start: usize, end: usize },
    #[error("node {node} ends at byte {end}, past the end of the {len}-byte source")]
    RangeOutOfSource { node: usize, end: usize, len: usize },
    #[error("child {child} range {child_range:?} is not contained in parent {parent} range {parent_range:?}")]
    RangeNotContained {
        child: usize,
        parent: usize,
        child_range: SourceRange,
        parent_range: SourceRange,
    },
}

/// A validated AST: dense ids `0..n`, a single root, every child range inside
/// its parent's range and children ordered by start offset.
///
/// Sibling ranges may overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    nodes: Vec<AstNode>,
    root: usize,
    depth: Vec<usize>,
}

/// Unvalidated node description, the shape accepted by [`Ast::from_parts`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: usize,
    #[serde(rename = "type")]
    pub node_type: String,
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub children: Vec<usize>,
}

impl Ast {
    /// Validates `specs` into a tree. `source_len`, when given, bounds every range.
    pub fn from_parts(specs: Vec<NodeSpec>, root: usize, source_len: Option<usize>) -> Result<Self, AstError> {
        let count = specs.len();
        if count == 0 {
            return Err(AstError::Empty);
        }
        let mut slots: Vec<Option<NodeSpec>> = vec![None; count];
        for spec in specs {
            if spec.id >= count {
                return Err(AstError::IdOutOfRange { id: spec.id, count });
            }
            let id = spec.id;
            if slots[id].replace(spec).is_some() {
                return Err(AstError::DuplicateId(id));
            }
        }
        let specs: Vec<NodeSpec> = slots.into_iter().map(|s| s.expect("ids are dense")).collect();
        if root >= count {
            return Err(AstError::MissingRoot(root));
        }

        for s in &specs {
            if s.start > s.end {
                return Err(AstError::InvertedRange { node: s.id, start: s.start, end: s.end });
            }
            if let Some(len) = source_len {
                if s.end > len {
                    return Err(AstError::RangeOutOfSource { node: s.id, end: s.end, len });
                }
            }
        }

        let mut parent: Vec<Option<usize>> = vec![None; count];
        for s in &specs {
            for &c in &s.children {
                if c >= count {
                    return Err(AstError::DanglingChild { parent: s.id, child: c });
                }
                if c == s.id || c == root {
                    return Err(AstError::Cycle(c));
                }
                if let Some(first) = parent[c] {
                    return Err(AstError::MultipleParents { node: c, first, second: s.id });
                }
                parent[c] = Some(s.id);
            }
        }

        // every node has at most one parent, so a second visit can only come from a cycle
        let mut depth = vec![usize::MAX; count];
        depth[root] = 0;
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            for &c in &specs[n].children {
                if depth[c] != usize::MAX {
                    return Err(AstError::Cycle(c));
                }
                depth[c] = depth[n] + 1;
                stack.push(c);
            }
        }
        let unreachable: Vec<usize> = (0..count).filter(|&i| depth[i] == usize::MAX).collect();
        if !unreachable.is_empty() {
            let orphans: Vec<usize> = unreachable.iter().copied().filter(|&i| parent[i].is_none()).collect();
            return if orphans.is_empty() {
                Err(AstError::Cycle(unreachable[0]))
            } else {
                Err(AstError::MultipleRoots(orphans))
            };
        }

        let mut nodes: Vec<AstNode> = specs
            .into_iter()
            .map(|s| AstNode {
                id: s.id,
                node_type: s.node_type,
                range: SourceRange::new(s.start, s.end),
                children: s.children,
                parent: parent[s.id],
            })
            .collect();

        for i in 0..count {
            if let Some(p) = nodes[i].parent {
                if !nodes[p].range.contains(&nodes[i].range) {
                    return Err(AstError::RangeNotContained {
                        child: i,
                        parent: p,
                        child_range: nodes[i].range,
                        parent_range: nodes[p].range,
                    });
                }
            }
        }
        for i in 0..count {
            let mut children = std::mem::take(&mut nodes[i].children);
            children.sort_by_key(|&c| nodes[c].range.start);
            nodes[i].children = children;
        }

        Ok(Self { nodes, root, depth })
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &AstNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[AstNode] {
        &self.nodes
    }

    pub fn depth(&self, id: usize) -> usize {
        self.depth[id]
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.nodes[id].parent
    }

    /// Position of `id` in its parent's ordered child list.
    pub fn child_index(&self, id: usize) -> Option<usize> {
        let p = self.nodes[id].parent?;
        self.nodes[p].children.iter().position(|&c| c == id)
    }

    /// Undirected adjacency lists (parent first, then children in order).
    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes[id]
            .parent
            .into_iter()
            .chain(self.nodes[id].children.iter().copied())
    }

    pub fn degree(&self, id: usize) -> usize {
        self.nodes[id].children.len() + usize::from(self.nodes[id].parent.is_some())
    }

    /// Back to the unvalidated description, e.g. for JSONL export.
    pub fn to_parts(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id,
                node_type: n.node_type.clone(),
                start: n.range.start,
                end: n.range.end,
                children: n.children.clone(),
            })
            .collect()
    }
}
