use super::RelMatrix;
use crate::ast::Ast;

/// Value used by the ancestor and sibling relations for pairs they do not relate.
pub const UNREACHABLE: f64 = 1000.0;

/// `(i, j) = j - i`.
pub fn seq_distance(n: usize) -> RelMatrix {
    RelMatrix::from_fn(n, |i, j| j as f64 - i as f64)
}

/// Undirected hop counts between all pairs of nodes.
pub fn shortest_paths(tree: &Ast) -> RelMatrix {
    shortest_paths_between(tree, &all_nodes(tree))
}

/// `+depth difference` when `j` descends from `i`, negative when `j` is an
/// ancestor of `i`, [`UNREACHABLE`] otherwise.
pub fn ancestor_distance(tree: &Ast) -> RelMatrix {
    ancestor_between(tree, &all_nodes(tree))
}

/// Signed difference of child indices for nodes sharing a parent,
/// [`UNREACHABLE`] otherwise.
pub fn sibling_distance(tree: &Ast) -> RelMatrix {
    sibling_between(tree, &all_nodes(tree))
}

fn all_nodes(tree: &Ast) -> Vec<usize> {
    (0..tree.len()).collect()
}

/// Lowest common ancestor by climbing the deeper node first.
fn lca(tree: &Ast, mut a: usize, mut b: usize) -> usize {
    while tree.depth(a) > tree.depth(b) {
        a = tree.parent(a).expect("non-root has a parent");
    }
    while tree.depth(b) > tree.depth(a) {
        b = tree.parent(b).expect("non-root has a parent");
    }
    while a != b {
        a = tree.parent(a).expect("distinct nodes at equal depth are below the root");
        b = tree.parent(b).expect("distinct nodes at equal depth are below the root");
    }
    a
}

pub(super) fn shortest_paths_between(tree: &Ast, nodes: &[usize]) -> RelMatrix {
    let m = nodes.len();
    let mut out = RelMatrix::from_vec(m, vec![0.0; m * m]);
    for i in 0..m {
        for j in i + 1..m {
            let (a, b) = (nodes[i], nodes[j]);
            let l = lca(tree, a, b);
            let d = (tree.depth(a) + tree.depth(b) - 2 * tree.depth(l)) as f64;
            out.set(i, j, d);
            out.set(j, i, d);
        }
    }
    out
}

pub(super) fn ancestor_between(tree: &Ast, nodes: &[usize]) -> RelMatrix {
    let m = nodes.len();
    let mut out = RelMatrix::from_vec(m, vec![UNREACHABLE; m * m]);
    for i in 0..m {
        out.set(i, i, 0.0);
        for j in i + 1..m {
            let (a, b) = (nodes[i], nodes[j]);
            if a == b {
                out.set(i, j, 0.0);
                out.set(j, i, 0.0);
                continue;
            }
            let l = lca(tree, a, b);
            let diff = tree.depth(b) as f64 - tree.depth(a) as f64;
            if l == a || l == b {
                out.set(i, j, diff);
                out.set(j, i, -diff);
            }
        }
    }
    out
}

pub(super) fn sibling_between(tree: &Ast, nodes: &[usize]) -> RelMatrix {
    let index: Vec<Option<usize>> = nodes.iter().map(|&a| tree.child_index(a)).collect();
    RelMatrix::from_fn(nodes.len(), |i, j| {
        let (a, b) = (nodes[i], nodes[j]);
        if a == b {
            0.0
        } else if tree.parent(a).is_some() && tree.parent(a) == tree.parent(b) {
            index[j].unwrap() as f64 - index[i].unwrap() as f64
        } else {
            UNREACHABLE
        }
    })
}
