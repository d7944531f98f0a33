//! Structural pruning: trees trade subtrees for fitness within a tolerance.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ops;
use crate::tree::{NodeId, TreeNode};

/// Subtrees eligible for pruning: the root's children and grandchildren,
/// each paired with its subtree depth. Candidates whose removal would
/// cascade into the root are dropped.
pub fn prune_candidates(root: &TreeNode) -> Vec<(NodeId, usize)> {
    let mut out = Vec::new();
    for child in &root.children {
        out.push((child.id, child.depth()));
        for grandchild in &child.children {
            out.push((grandchild.id, grandchild.depth()));
        }
    }
    let deletable = ops::delete_candidates(root);
    out.retain(|(id, _)| deletable.contains(id));
    out
}

/// Draws one candidate with probability proportional to its subtree depth,
/// so deeper limbs go first: depths 3 and 1 split 75% to 25%.
pub fn choose_candidate(
    candidates: &[(NodeId, usize)],
    rng: &mut ChaCha8Rng,
) -> Option<NodeId> {
    let total: usize = candidates.iter().map(|&(_, d)| d).sum();
    if total == 0 {
        return None;
    }
    let mut ticket = rng.gen_range(0..total);
    for &(id, depth) in candidates {
        if ticket < depth {
            return Some(id);
        }
        ticket -= depth;
    }
    None
}

/// The tree with the chosen subtree removed, under the same cascade rules as
/// the delete mutation. None when the removal would consume the root.
pub fn prune(root: &TreeNode, target: NodeId) -> Option<TreeNode> {
    let mut out = root.clone();
    ops::delete_with_cleanup(&mut out, target).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Root with one deep limb (depth 3) and one leaf limb (depth 1).
    fn lopsided() -> TreeNode {
        TreeNode::selector(
            0,
            vec![
                TreeNode::sequence(
                    1,
                    vec![TreeNode::decorator(2, "invert", TreeNode::action(3, "idle"))],
                ),
                TreeNode::action(4, "idle"),
            ],
        )
    }

    #[test]
    fn candidates_cover_children_and_grandchildren() {
        let root = lopsided();
        let cands = prune_candidates(&root);
        let ids: Vec<u32> = cands.iter().map(|&(id, _)| id.0).collect();
        assert_eq!(ids, vec![1, 2, 4], "both limbs plus the deep limb's child");
        let depths: Vec<usize> = cands.iter().map(|&(_, d)| d).collect();
        assert_eq!(depths, vec![3, 2, 1]);
    }

    #[test]
    fn single_limb_roots_offer_nothing() {
        let root = TreeNode::selector(
            0,
            vec![TreeNode::sequence(1, vec![TreeNode::action(2, "idle")])],
        );
        // Deleting either node empties the chain up to the root, and the
        // grandchild is the sequence's only child.
        assert_eq!(prune_candidates(&root), Vec::new());
    }

    #[test]
    fn depth_weights_split_three_to_one() {
        let cands = vec![(NodeId(1), 3usize), (NodeId(4), 1usize)];
        let mut rng = rng::stream(9, 0);
        let trials = 40_000;
        let mut deep = 0u32;
        for _ in 0..trials {
            if choose_candidate(&cands, &mut rng) == Some(NodeId(1)) {
                deep += 1;
            }
        }
        let rate = f64::from(deep) / f64::from(trials);
        assert!((rate - 0.75).abs() < 0.01, "deep limb rate {rate}");
    }

    #[test]
    fn prune_removes_the_subtree_and_keeps_the_rest() {
        let root = lopsided();
        let pruned = prune(&root, NodeId(1)).expect("the leaf limb remains");
        assert_eq!(pruned.count(), 2);
        assert_eq!(pruned.children[0].id, NodeId(4));
        assert!(prune(&root, NodeId(0)).is_none(), "the root itself is never a target");
    }
}
