use super::RelMatrix;
use crate::ast::Ast;

/// `-log PPR` values above this are treated as unreachable and clamped to it.
pub const PPR_CLAMP: f64 = 5.0;
/// Trees up to this many nodes are solved densely; larger ones by power iteration.
pub const PPR_DENSE_LIMIT: usize = 512;

const POWER_TOL: f64 = 1e-14;
const POWER_MAX_ITERS: usize = 10_000;

/// Personalized PageRank matrix over all nodes: row `i` is the stationary
/// distribution of a walk on the undirected tree that restarts at `i` with
/// probability `alpha`. An isolated node keeps its walker in place.
pub fn ppr_matrix(tree: &Ast, alpha: f64) -> RelMatrix {
    let all: Vec<usize> = (0..tree.len()).collect();
    ppr_rows(tree, &all, alpha).into()
}

/// `-log` of [`ppr_matrix`], clamped to [`PPR_CLAMP`].
pub fn ppr_distance(tree: &Ast, alpha: f64) -> RelMatrix {
    let all: Vec<usize> = (0..tree.len()).collect();
    ppr_distance_between(tree, &all, alpha)
}

pub(super) fn ppr_distance_between(tree: &Ast, nodes: &[usize], alpha: f64) -> RelMatrix {
    let rows = ppr_rows(tree, nodes, alpha);
    let m = nodes.len();
    RelMatrix::from_fn(m, |i, j| {
        let p = rows.get(i, nodes[j]);
        if p > 0.0 {
            (-p.ln()).min(PPR_CLAMP)
        } else {
            PPR_CLAMP
        }
    })
}

/// PPR rows for the given source nodes, indexed by `(source position, node id)`.
fn ppr_rows(tree: &Ast, sources: &[usize], alpha: f64) -> Rows {
    assert!(alpha > 0.0 && alpha < 1.0, "teleport probability must lie in (0, 1)");
    if tree.len() == 1 {
        // the walker can never leave; solving would only add rounding noise
        return Rows {
            width: 1,
            values: vec![1.0; sources.len()],
        };
    }
    if tree.len() <= PPR_DENSE_LIMIT {
        dense_rows(tree, sources, alpha)
    } else {
        power_rows(tree, sources, alpha)
    }
}

pub(super) struct Rows {
    width: usize,
    values: Vec<f64>,
}

impl Rows {
    pub(super) fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

impl From<Rows> for RelMatrix {
    fn from(rows: Rows) -> Self {
        RelMatrix::from_vec(rows.width, rows.values)
    }
}

fn transition(tree: &Ast, a: usize) -> Vec<(usize, f64)> {
    let degree = tree.degree(a);
    if degree == 0 {
        return vec![(a, 1.0)];
    }
    let w = 1.0 / degree as f64;
    tree.neighbors(a).map(|b| (b, w)).collect()
}

/// Solves `pi_i (I - (1 - alpha) P) = alpha e_i` for each source via one LU
/// factorization of the transposed system.
fn dense_rows(tree: &Ast, sources: &[usize], alpha: f64) -> Rows {
    let n = tree.len();
    // a[r][c] = (I - (1-alpha) P)^T [r][c] = delta(r,c) - (1-alpha) P[c][r]
    let mut a = vec![0.0; n * n];
    for r in 0..n {
        a[r * n + r] = 1.0;
    }
    for c in 0..n {
        for (r, p) in transition(tree, c) {
            a[r * n + c] -= (1.0 - alpha) * p;
        }
    }
    let lu = Lu::factor(n, a);
    let mut values = Vec::with_capacity(sources.len() * n);
    for &s in sources {
        let mut b = vec![0.0; n];
        b[s] = alpha;
        values.extend(lu.solve(b));
    }
    Rows { width: n, values }
}

fn power_rows(tree: &Ast, sources: &[usize], alpha: f64) -> Rows {
    let n = tree.len();
    let adjacency: Vec<Vec<(usize, f64)>> = (0..n).map(|a| transition(tree, a)).collect();
    let mut values = Vec::with_capacity(sources.len() * n);
    for &s in sources {
        let mut pi = vec![0.0; n];
        pi[s] = 1.0;
        for _ in 0..POWER_MAX_ITERS {
            let mut next = vec![0.0; n];
            next[s] = alpha;
            for (a, out) in adjacency.iter().enumerate() {
                let mass = (1.0 - alpha) * pi[a];
                if mass != 0.0 {
                    for &(b, p) in out {
                        next[b] += mass * p;
                    }
                }
            }
            let change: f64 = next.iter().zip(&pi).map(|(x, y)| (x - y).abs()).sum();
            pi = next;
            if change < POWER_TOL {
                break;
            }
        }
        values.extend(pi);
    }
    Rows { width: n, values }
}

/// LU decomposition with partial pivoting, `P A = L U` packed in place.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(n: usize, mut a: Vec<f64>) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let pivot = (k..n)
                .max_by(|&x, &y| a[x * n + k].abs().total_cmp(&a[y * n + k].abs()))
                .expect("non-empty pivot range");
            if pivot != k {
                for c in 0..n {
                    a.swap(k * n + c, pivot * n + c);
                }
                perm.swap(k, pivot);
            }
            let d = a[k * n + k];
            // I - (1-alpha)P^T is strictly column diagonally dominant, so d != 0
            for r in k + 1..n {
                let f = a[r * n + k] / d;
                if f == 0.0 {
                    continue;
                }
                a[r * n + k] = f;
                for c in k + 1..n {
                    a[r * n + c] -= f * a[k * n + c];
                }
            }
        }
        Self { n, lu: a, perm }
    }

    fn solve(&self, b: Vec<f64>) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s / self.lu[r * n + r];
        }
        x
    }
}
