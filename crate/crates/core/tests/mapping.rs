mod common;

use ct_core::ast::{map_tokens_to_nodes, Ast};
use ct_core::corpus::SourceRange;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tokens(rng: &mut impl Rng, tree: &Ast, count: usize) -> Vec<SourceRange> {
    let root = tree.node(tree.root()).range;
    (0..count)
        .map(|_| {
            let s = rng.gen_range(root.start..root.end);
            let e = rng.gen_range(s + 1..=(s + 40).min(root.end));
            SourceRange::new(s, e)
        })
        .collect()
}

/// Shortest containing range over all nodes; ties go to the deeper node.
fn brute_force(tree: &Ast, token: &SourceRange) -> usize {
    (0..tree.len())
        .filter(|&i| tree.node(i).range.contains(token))
        .min_by_key(|&i| (tree.node(i).range.len(), usize::MAX - tree.depth(i)))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn assigned_node_contains_token(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = common::random_tree(&mut rng, 60, true);
        let tokens = random_tokens(&mut rng, &tree, 30);
        let assignment = map_tokens_to_nodes(&tokens, &tree).unwrap();
        prop_assert_eq!(assignment.len(), tokens.len());
        for (t, &a) in tokens.iter().zip(assignment.nodes()) {
            prop_assert!(tree.node(a).range.contains(t));
        }
    }

    #[test]
    fn greedy_equals_exhaustive_without_overlap(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = common::random_tree(&mut rng, 60, false);
        let tokens = random_tokens(&mut rng, &tree, 30);
        let assignment = map_tokens_to_nodes(&tokens, &tree).unwrap();
        for (t, &a) in tokens.iter().zip(assignment.nodes()) {
            prop_assert_eq!(a, brute_force(&tree, t));
        }
    }
}
