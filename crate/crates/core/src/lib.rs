//! Preprocessing side of the code transformer: source normalization, syntax
//! trees, pairwise relations with binning, snippet shards and F1 scoring.

pub mod ast;
pub mod corpus;
pub mod relations;
pub mod snippet;
pub mod metrics;
pub mod shard;
