//! Behavior tree model: node kinds, tick statuses, and structural metrics.
//!
//! Trees are plain data. The engine never stores execution state inside the
//! tree itself; every tick starts from the serialized structure, and anything
//! that must survive across ticks lives in the owning agent's local
//! blackboard keyed by node id.

use std::collections::BTreeMap;
use std::fmt;

/// Result of ticking a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeStatus {
    Success,
    Failure,
    Running,
}

impl NodeStatus {
    /// Success and Failure swap; Running is a fixed point.
    pub fn inverted(self) -> NodeStatus {
        match self {
            NodeStatus::Success => NodeStatus::Failure,
            NodeStatus::Failure => NodeStatus::Success,
            NodeStatus::Running => NodeStatus::Running,
        }
    }
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeStatus::Success => "success",
            NodeStatus::Failure => "failure",
            NodeStatus::Running => "running",
        };
        f.write_str(s)
    }
}

/// Stable identifier of a node within one tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Child evaluation order of a composite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderPolicy {
    /// Children run left to right as listed.
    #[default]
    Deterministic,
    /// A fresh permutation is drawn from the agent's RNG stream every tick.
    Shuffled,
}

/// What a node is, plus the kind-specific payload.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Selector { order: OrderPolicy },
    Sequence { order: OrderPolicy },
    /// `k` is the success threshold: with `n` children and `c` successes the
    /// node succeeds when `c >= k`, fails when `c < n - k`, and keeps running
    /// otherwise (checked in that order).
    Parallel { k: usize },
    Action { template: String },
    Condition { template: String },
    Decorator { template: String },
    /// Leaf reference to another named tree; resolved at bind time.
    Proxy { tree: String },
}

impl NodeKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            NodeKind::Selector { .. } => "selector",
            NodeKind::Sequence { .. } => "sequence",
            NodeKind::Parallel { .. } => "parallel",
            NodeKind::Action { .. } => "action",
            NodeKind::Condition { .. } => "condition",
            NodeKind::Decorator { .. } => "decorator",
            NodeKind::Proxy { .. } => "proxy",
        }
    }

    /// Selector, sequence, or parallel.
    pub fn is_composite(&self) -> bool {
        matches!(
            self,
            NodeKind::Selector { .. } | NodeKind::Sequence { .. } | NodeKind::Parallel { .. }
        )
    }

    /// Template name for template-bearing kinds.
    pub fn template(&self) -> Option<&str> {
        match self {
            NodeKind::Action { template }
            | NodeKind::Condition { template }
            | NodeKind::Decorator { template } => Some(template),
            _ => None,
        }
    }
}

/// One node of a behavior tree.
///
/// `params` maps a template parameter name to its value. Discrete parameters
/// store the selected member's value, so everything is a 64-bit float.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub params: BTreeMap<String, f64>,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn new(id: u32, kind: NodeKind) -> Self {
        TreeNode { id: NodeId(id), kind, params: BTreeMap::new(), children: Vec::new() }
    }

    pub fn selector(id: u32, children: Vec<TreeNode>) -> Self {
        TreeNode { children, ..Self::new(id, NodeKind::Selector { order: OrderPolicy::Deterministic }) }
    }

    pub fn sequence(id: u32, children: Vec<TreeNode>) -> Self {
        TreeNode { children, ..Self::new(id, NodeKind::Sequence { order: OrderPolicy::Deterministic }) }
    }

    pub fn parallel(id: u32, k: usize, children: Vec<TreeNode>) -> Self {
        TreeNode { children, ..Self::new(id, NodeKind::Parallel { k }) }
    }

    pub fn action(id: u32, template: &str) -> Self {
        Self::new(id, NodeKind::Action { template: template.to_owned() })
    }

    pub fn condition(id: u32, template: &str, children: Vec<TreeNode>) -> Self {
        TreeNode { children, ..Self::new(id, NodeKind::Condition { template: template.to_owned() }) }
    }

    pub fn decorator(id: u32, template: &str, child: TreeNode) -> Self {
        TreeNode {
            children: vec![child],
            ..Self::new(id, NodeKind::Decorator { template: template.to_owned() })
        }
    }

    pub fn proxy(id: u32, tree: &str) -> Self {
        Self::new(id, NodeKind::Proxy { tree: tree.to_owned() })
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_owned(), value);
        self
    }

    /// Pre-order walk over the node and all descendants.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a TreeNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    /// Pre-order walk with mutable access.
    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut TreeNode)) {
        f(self);
        for c in &mut self.children {
            c.walk_mut(f);
        }
    }

    /// Total number of nodes in the subtree, this node included.
    pub fn count(&self) -> usize {
        1 + self.children.iter().map(TreeNode::count).sum::<usize>()
    }

    /// Depth of the subtree in nodes: a leaf has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(TreeNode::depth).max().unwrap_or(0)
    }

    /// Largest node id in the subtree.
    pub fn max_id(&self) -> u32 {
        let mut m = self.id.0;
        for c in &self.children {
            m = m.max(c.max_id());
        }
        m
    }

    /// Reassigns ids in pre-order starting from 0.
    pub fn renumber(&mut self) {
        let mut next = 0u32;
        self.walk_mut(&mut |n| {
            n.id = NodeId(next);
            next += 1;
        });
    }

    /// Shifts every id in the subtree by `offset`.
    pub fn shift_ids(&mut self, offset: u32) {
        self.walk_mut(&mut |n| n.id = NodeId(n.id.0 + offset));
    }

    pub fn find(&self, id: NodeId) -> Option<&TreeNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    pub fn find_mut(&mut self, id: NodeId) -> Option<&mut TreeNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(id))
    }
}

/// Structural dimensions of a tree. Proxies count as single leaves; the
/// referenced tree is not expanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeMetrics {
    /// Longest root-to-leaf path, counted in nodes.
    pub depth: usize,
    /// Largest number of nodes on any one level.
    pub width: usize,
    pub node_count: usize,
}

impl TreeMetrics {
    pub fn of(root: &TreeNode) -> TreeMetrics {
        let mut per_level: Vec<usize> = Vec::new();
        fn rec(n: &TreeNode, level: usize, per_level: &mut Vec<usize>) {
            if per_level.len() <= level {
                per_level.resize(level + 1, 0);
            }
            per_level[level] += 1;
            for c in &n.children {
                rec(c, level + 1, per_level);
            }
        }
        rec(root, 0, &mut per_level);
        TreeMetrics {
            depth: per_level.len(),
            width: per_level.iter().copied().max().unwrap_or(0),
            node_count: per_level.iter().sum(),
        }
    }
}

/// Free-form lineage record attached to a tree.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub generation: Option<u32>,
    pub parents: Vec<String>,
    pub operator: Option<String>,
}

/// A named behavior tree.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorTree {
    pub name: String,
    pub root: TreeNode,
    pub provenance: Provenance,
}

impl BehaviorTree {
    pub fn new(name: &str, root: TreeNode) -> Self {
        BehaviorTree { name: name.to_owned(), root, provenance: Provenance::default() }
    }

    pub fn metrics(&self) -> TreeMetrics {
        TreeMetrics::of(&self.root)
    }
}

/// Named trees available for proxy resolution.
pub type TreeLibrary = BTreeMap<String, BehaviorTree>;

#[cfg(test)]
mod tests {
    use super::*;

    /// Root selector over a two-action sequence and a parallel holding a
    /// decorated action plus a bare action.
    fn sample_tree() -> TreeNode {
        TreeNode::selector(
            0,
            vec![
                TreeNode::sequence(1, vec![TreeNode::action(2, "a"), TreeNode::action(3, "b")]),
                TreeNode::parallel(
                    4,
                    1,
                    vec![
                        TreeNode::decorator(5, "invert", TreeNode::action(6, "c")),
                        TreeNode::action(7, "d"),
                    ],
                ),
            ],
        )
    }

    #[test]
    fn metrics_counts_levels_like_a_hand_count() {
        let m = TreeMetrics::of(&sample_tree());
        assert_eq!(m.depth, 4, "levels: root / seq+par / 4 leaves+dec / action");
        assert_eq!(m.width, 4, "widest level holds two actions, a decorator, and an action");
        assert_eq!(m.node_count, 8);
    }

    #[test]
    fn single_node_has_depth_one() {
        let m = TreeMetrics::of(&TreeNode::action(0, "x"));
        assert_eq!((m.depth, m.width, m.node_count), (1, 1, 1));
    }

    #[test]
    fn renumber_assigns_preorder_ids() {
        let mut t = sample_tree();
        t.shift_ids(100);
        t.renumber();
        let mut ids = Vec::new();
        t.walk(&mut |n| ids.push(n.id.0));
        assert_eq!(ids, vec![0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn inverted_status_swaps_terminal_outcomes() {
        assert_eq!(NodeStatus::Success.inverted(), NodeStatus::Failure);
        assert_eq!(NodeStatus::Failure.inverted(), NodeStatus::Success);
        assert_eq!(NodeStatus::Running.inverted(), NodeStatus::Running);
    }
}
