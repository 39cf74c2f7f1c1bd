#![allow(dead_code)]

use ct_core::ast::{Ast, NodeSpec};
use rand::Rng;

/// Random tree with up to `max_nodes` nodes. Every child range lies inside its
/// parent's range; sibling ranges are disjoint unless `overlap` is set.
pub fn random_tree(rng: &mut impl Rng, max_nodes: usize, overlap: bool) -> Ast {
    let n = rng.gen_range(1..=max_nodes);
    let parents: Vec<Option<usize>> = (0..n)
        .map(|i| if i == 0 { None } else { Some(rng.gen_range(0..i)) })
        .collect();
    let children: Vec<Vec<usize>> = (0..n)
        .map(|p| (0..n).filter(|&c| parents[c] == Some(p)).collect())
        .collect();

    let mut ranges = vec![(0usize, 0usize); n];
    ranges[0] = (0, 4000);
    // parents precede children, so a forward pass sees every parent range first
    for p in 0..n {
        let (start, end) = ranges[p];
        let kids = &children[p];
        if kids.is_empty() {
            continue;
        }
        if overlap {
            for &c in kids {
                let a = rng.gen_range(start..=end);
                let b = rng.gen_range(a..=end);
                ranges[c] = (a, b);
            }
        } else {
            let slot = (end - start) / kids.len();
            for (i, &c) in kids.iter().enumerate() {
                let s0 = start + i * slot;
                let a = rng.gen_range(s0..=s0 + slot / 2);
                let b = rng.gen_range(a..=s0 + slot);
                ranges[c] = (a, b);
            }
        }
    }
    let specs = (0..n)
        .map(|i| NodeSpec {
            id: i,
            node_type: format!("t{}", i % 5),
            start: ranges[i].0,
            end: ranges[i].1,
            children: children[i].clone(),
        })
        .collect();
    Ast::from_parts(specs, 0, None).unwrap()
}

/// Hop counts from `src` by breadth-first search over parent and child edges.
pub fn bfs(tree: &Ast, src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; tree.len()];
    dist[src] = 0;
    let mut queue = std::collections::VecDeque::from([src]);
    while let Some(a) = queue.pop_front() {
        let node = tree.node(a);
        for b in node.parent.into_iter().chain(node.children.iter().copied()) {
            if dist[b] == usize::MAX {
                dist[b] = dist[a] + 1;
                queue.push_back(b);
            }
        }
    }
    dist
}
