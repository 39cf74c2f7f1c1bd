//! Pairwise relations between snippet positions and their per-snippet binning.

mod binning;
mod distance;
mod ppr;

use serde::{Deserialize, Serialize};

use crate::ast::Ast;

pub use binning::{bin_relations, bin_values, BinError, BinnedRelation, BinnedRelations, MIN_BINS};
pub use distance::{ancestor_distance, seq_distance, shortest_paths, sibling_distance, UNREACHABLE};
pub use ppr::{ppr_distance, ppr_matrix, PPR_CLAMP, PPR_DENSE_LIMIT};

pub const DEFAULT_ALPHA: f64 = 0.15;
pub const DEFAULT_BINS: usize = 32;
pub const DEFAULT_GROWTH: f64 = 1.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Sequence = 0,
    ShortestPath = 1,
    Ancestor = 2,
    Sibling = 3,
    Ppr = 4,
}

impl Relation {
    pub const COUNT: usize = 5;
    pub const ALL: [Relation; 5] = [
        Relation::Sequence,
        Relation::ShortestPath,
        Relation::Ancestor,
        Relation::Sibling,
        Relation::Ppr,
    ];
    /// The relations derived from the syntax tree.
    pub const STRUCTURAL: [Relation; 4] = [
        Relation::ShortestPath,
        Relation::Ancestor,
        Relation::Sibling,
        Relation::Ppr,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    /// Integer-valued relations get the nine reserved bins around zero.
    pub fn is_discrete(self) -> bool {
        self != Relation::Ppr
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Sequence => "sequence",
            Relation::ShortestPath => "shortest-path",
            Relation::Ancestor => "ancestor",
            Relation::Sibling => "sibling",
            Relation::Ppr => "ppr",
        }
    }
}

/// Dense row-major square matrix of relation values.
#[derive(Debug, Clone, PartialEq)]
pub struct RelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl RelMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(i, j));
            }
        }
        Self { n, values }
    }

    pub fn from_vec(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n, "relation matrix must be square");
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry `(i, j)` is `self[idx[i], idx[j]]`.
    pub fn gather(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), |i, j| self.get(idx[i], idx[j]))
    }

    /// Symmetric permutation: entry `(i, j)` of the result is `self[perm[i], perm[j]]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        self.gather(perm)
    }
}

/// All five relations over the `n` model positions of one snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationSet {
    matrices: Vec<RelMatrix>,
}

impl RelationSet {
    pub fn new(matrices: [RelMatrix; 5]) -> Self {
        let n = matrices[0].n();
        assert!(matrices.iter().all(|m| m.n() == n), "relation matrices disagree on size");
        Self {
            matrices: matrices.into(),
        }
    }

    /// Positions are tokens; each token reads its tree relations off the node it
    /// was assigned to, and its sequence relation off its own index.
    pub fn compute(tree: &Ast, assignment: &[usize], alpha: f64) -> Self {
        let n = assignment.len();
        // restrict the expensive node-level work to the nodes that carry tokens
        let mut used: Vec<usize> = assignment.to_vec();
        used.sort_unstable();
        used.dedup();
        let local: Vec<usize> = assignment
            .iter()
            .map(|a| used.binary_search(a).expect("assigned node is in the used set"))
            .collect();

        let sp = distance::shortest_paths_between(tree, &used).gather(&local);
        let anc = distance::ancestor_between(tree, &used).gather(&local);
        let sib = distance::sibling_between(tree, &used).gather(&local);
        let ppr = ppr::ppr_distance_between(tree, &used, alpha).gather(&local);
        Self::new([seq_distance(n), sp, anc, sib, ppr])
    }

    pub fn n(&self) -> usize {
        self.matrices[0].n()
    }

    pub fn get(&self, r: Relation) -> &RelMatrix {
        &self.matrices[r.id()]
    }

    pub fn get_mut(&mut self, r: Relation) -> &mut RelMatrix {
        &mut self.matrices[r.id()]
    }

    pub fn permute(&self, perm: &[usize]) -> Self {
        Self {
            matrices: self.matrices.iter().map(|m| m.permute(perm)).collect(),
        }
    }
}
