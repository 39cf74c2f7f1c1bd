use super::{RelMatrix, Relation, RelationSet};

/// Integers in `-RESERVED..=RESERVED` get singleton bins for discrete relations.
const RESERVED: i32 = 4;
const RESERVED_BINS: usize = (2 * RESERVED + 1) as usize;
const BISECTION_STEPS: usize = 200;
/// Fewest bins that hold every relation: the reserved singletons plus one
/// bin per tail.
pub const MIN_BINS: usize = RESERVED_BINS + 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BinError {
    #[error("{k} bins cannot hold the {need} bins a {kind} relation requires")]
    TooFewBins { k: usize, need: usize, kind: &'static str },
    #[error("{0} bins do not fit a one-byte bin index")]
    TooManyBins(usize),
    #[error("relation value {0} is not finite")]
    NonFinite(f64),
}

/// One relation after binning: `index[i * n + j]` selects a row of `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedRelation {
    pub index: Vec<u8>,
    pub values: Vec<f64>,
}

impl BinnedRelation {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// Representative value of the bin holding entry `(i, j)`.
    pub fn value(&self, n: usize, i: usize, j: usize) -> f64 {
        self.values[self.index[i * n + j] as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedRelations {
    pub n: usize,
    pub k: usize,
    pub relations: Vec<BinnedRelation>,
}

impl BinnedRelations {
    pub fn get(&self, r: Relation) -> &BinnedRelation {
        &self.relations[r.id()]
    }

    pub fn permute(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let relations = self
            .relations
            .iter()
            .map(|b| BinnedRelation {
                index: (0..n * n).map(|e| b.index[perm[e / n] * n + perm[e % n]]).collect(),
                values: b.values.clone(),
            })
            .collect();
        Self {
            n,
            k: self.k,
            relations,
        }
    }
}

/// Bins each relation of one snippet independently into `k` bins.
pub fn bin_relations(set: &RelationSet, k: usize, growth: f64) -> Result<BinnedRelations, BinError> {
    let relations = Relation::ALL
        .iter()
        .map(|&r| bin_values(set.get(r), k, growth, r.is_discrete()))
        .collect::<Result<_, _>>()?;
    Ok(BinnedRelations {
        n: set.n(),
        k,
        relations,
    })
}

/// Groups the entries of `m` into exactly `k` bins with strictly increasing
/// representatives.
///
/// When the distinct values fit, every value gets its own bin (for discrete
/// relations the integers -4..=4 are added when they fit too). Otherwise
/// discrete relations keep singleton bins for -4..=4 and the tails on either
/// side are swept outward, closing a bin once `width × occupancy` reaches a
/// target area that grows by `growth` per bin. The first target is the
/// smallest one (found by bisection) that keeps the side within its bin budget.
/// A bin's representative is the mean of its entries. Unused bins are padded
/// above the largest representative in unit steps.
pub fn bin_values(m: &RelMatrix, k: usize, growth: f64, discrete: bool) -> Result<BinnedRelation, BinError> {
    if k > 256 {
        return Err(BinError::TooManyBins(k));
    }
    let need = if discrete { MIN_BINS } else { 2 };
    if k < need {
        return Err(BinError::TooFewBins {
            k,
            need,
            kind: if discrete { "discrete" } else { "continuous" },
        });
    }
    if let Some(&bad) = m.values().iter().find(|v| !v.is_finite()) {
        return Err(BinError::NonFinite(bad));
    }

    let distinct = distinct_counts(m.values());
    let groups = group_values(&distinct, k, growth, discrete);

    let mut reps: Vec<f64> = groups.iter().map(|g| representative(g)).collect();
    let mut bin_of = Vec::with_capacity(distinct.len());
    for (b, g) in groups.iter().enumerate() {
        bin_of.extend(g.iter().filter(|&&(_, c)| c > 0).map(|_| b as u8));
    }
    let top = reps.last().copied().unwrap_or(0.0);
    let padding = k - reps.len();
    reps.extend((1..=padding).map(|p| top + p as f64));

    let observed: Vec<f64> = distinct.iter().map(|&(v, _)| v).collect();
    let index = m
        .values()
        .iter()
        .map(|v| {
            let pos = observed
                .binary_search_by(|x| x.total_cmp(v))
                .expect("every entry was counted");
            bin_of[pos]
        })
        .collect();
    Ok(BinnedRelation { index, values: reps })
}

/// Sorted distinct values with their multiplicities.
fn distinct_counts(values: &[f64]) -> Vec<(f64, u64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, u64)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some((last, c)) if *last == v => *c += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

/// Ascending groups of `(value, count)`; a count of zero marks a reserved
/// value that was not observed.
fn group_values(distinct: &[(f64, u64)], k: usize, growth: f64, discrete: bool) -> Vec<Vec<(f64, u64)>> {
    let singles = |vals: Vec<(f64, u64)>| vals.into_iter().map(|v| vec![v]).collect();

    if discrete {
        let mut with_reserved = distinct.to_vec();
        for r in -RESERVED..=RESERVED {
            let r = f64::from(r);
            if !distinct.iter().any(|&(v, _)| v == r) {
                with_reserved.push((r, 0));
            }
        }
        if with_reserved.len() <= k {
            with_reserved.sort_by(|a, b| a.0.total_cmp(&b.0));
            return singles(with_reserved);
        }
    }
    if distinct.len() <= k {
        return singles(distinct.to_vec());
    }

    let (origin, budget) = if discrete {
        (f64::from(RESERVED), k - RESERVED_BINS)
    } else {
        (0.0, k)
    };
    let (low, high) = if discrete { (-origin, origin) } else { (0.0, 0.0) };
    let neg: Vec<(f64, u64)> = distinct.iter().copied().filter(|&(v, _)| v < low).collect();
    let pos: Vec<(f64, u64)> = distinct
        .iter()
        .copied()
        .filter(|&(v, _)| if discrete { v > high } else { v >= high })
        .collect();

    let (neg_budget, pos_budget) = split_budget(budget, neg.len(), pos.len());

    // sweep outward: the negative tail is walked from -origin downwards
    let neg_out: Vec<(f64, u64)> = neg.iter().rev().map(|&(v, c)| (-origin - v, c)).collect();
    let pos_out: Vec<(f64, u64)> = pos.iter().map(|&(v, c)| (v - high, c)).collect();
    let neg_cuts = sweep(&neg_out, neg_budget, growth);
    let pos_cuts = sweep(&pos_out, pos_budget, growth);

    let mut groups: Vec<Vec<(f64, u64)>> = Vec::with_capacity(k);
    for range in neg_cuts.iter().rev() {
        // indices in neg_out are reversed relative to neg
        let g: Vec<(f64, u64)> = range.clone().map(|i| neg[neg.len() - 1 - i]).rev().collect();
        groups.push(g);
    }
    if discrete {
        for r in -RESERVED..=RESERVED {
            let r = f64::from(r);
            let c = distinct.iter().find(|&&(v, _)| v == r).map_or(0, |&(_, c)| c);
            groups.push(vec![(r, c)]);
        }
    }
    for range in &pos_cuts {
        groups.push(pos[range.clone()].to_vec());
    }
    groups
}

/// Splits `budget` bins between two tails in proportion to their distinct
/// counts, giving each non-empty tail at least one and none more than it can use.
fn split_budget(budget: usize, neg: usize, pos: usize) -> (usize, usize) {
    match (neg, pos) {
        (0, _) => (0, budget.min(pos)),
        (_, 0) => (budget.min(neg), 0),
        _ => {
            let share = (budget as f64 * neg as f64 / (neg + pos) as f64).round() as usize;
            let mut n = share.clamp(1, budget - 1).min(neg);
            let mut p = (budget - n).min(pos);
            // hand back what one side cannot use
            n = (budget - p).min(neg);
            p = (budget - n).min(pos);
            (n, p)
        }
    }
}

/// Index ranges of consecutive groups over `outward` (distances from the
/// inner edge, ascending) using at most `budget` groups.
fn sweep(outward: &[(f64, u64)], budget: usize, growth: f64) -> Vec<std::ops::Range<usize>> {
    if outward.is_empty() {
        return Vec::new();
    }
    if outward.len() <= budget {
        return (0..outward.len()).map(|i| i..i + 1).collect();
    }
    let total: u64 = outward.iter().map(|&(_, c)| c).sum();
    let mut lo = 0.0;
    let mut hi = outward.last().unwrap().0 * total as f64;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cuts(outward, mid, growth).len() <= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    cuts(outward, hi, growth)
}

fn cuts(outward: &[(f64, u64)], first_target: f64, growth: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut edge = 0.0;
    let mut target = first_target;
    let mut start = 0;
    let mut count = 0u64;
    for (i, &(x, c)) in outward.iter().enumerate() {
        count += c;
        if (x - edge) * count as f64 >= target {
            out.push(start..i + 1);
            start = i + 1;
            count = 0;
            edge = x;
            target *= growth;
        }
    }
    if start < outward.len() {
        out.push(start..outward.len());
    }
    out
}

fn representative(group: &[(f64, u64)]) -> f64 {
    if let [(v, _)] = group {
        return *v;
    }
    let n: u64 = group.iter().map(|&(_, c)| c).sum();
    let sum: f64 = group.iter().map(|&(v, c)| v * c as f64).sum();
    let (min, max) = (group[0].0, group[group.len() - 1].0);
    (sum / n as f64).clamp(min, max)
}
