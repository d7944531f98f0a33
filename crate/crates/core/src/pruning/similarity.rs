//! Structural similarity between behavior trees.
//!
//! The score walks both trees in lockstep applying a priority list of rules;
//! at each node pair the first rule that matches wins. Ordered composites
//! (selector, sequence) differ maximally from everything that is not one.
//! Gates (conditions and decorators) cost a flat 0.2 against non-gates plus
//! whatever their guarded subtrees differ by, and two gates differ by their
//! normalized parameter distance. Leaves cost 0.2 when they name different
//! behaviors and nothing when they agree. Child lists are compared pairwise
//! in order, and every child without a counterpart adds 0.2.
//!
//! The raw score is directional (the rules inspect the first argument before
//! the second), so clustering uses [`Similarity::distance`], the larger of
//! the two directions, which is symmetric by construction.

use std::slice;

use crate::catalog::{TemplateCatalog, TemplateKind};
use crate::tree::{NodeKind, TreeNode};

/// Scores how differently two trees behave. Zero means indistinguishable.
pub struct Similarity<'a> {
    catalog: &'a TemplateCatalog,
}

impl<'a> Similarity<'a> {
    pub fn new(catalog: &'a TemplateCatalog) -> Similarity<'a> {
        Similarity { catalog }
    }

    /// Directional score of `a` against `b`; nonnegative, zero for
    /// structurally identical subtrees.
    pub fn score(&self, a: &TreeNode, b: &TreeNode) -> f64 {
        if ordered_composite(a) && !ordered_composite(b) {
            return 1.0;
        }
        if gate(a) && !gate(b) {
            return 0.2 + self.children(&a.children, slice::from_ref(b));
        }
        if gate(a) && gate(b) {
            return self.params_diff(a, b) + self.children(&a.children, &b.children);
        }
        if let (Some(la), Some(lb)) = (leaf_name(a), leaf_name(b)) {
            return if la == lb { 0.0 } else { 0.2 };
        }
        if !a.children.is_empty() && !b.children.is_empty() {
            return self.children(&a.children, &b.children);
        }
        0.0
    }

    /// Symmetric clustering distance: the larger directional score.
    pub fn distance(&self, a: &TreeNode, b: &TreeNode) -> f64 {
        self.score(a, b).max(self.score(b, a))
    }

    fn children(&self, xs: &[TreeNode], ys: &[TreeNode]) -> f64 {
        let paired: f64 = xs.iter().zip(ys).map(|(x, y)| self.score(x, y)).sum();
        paired + 0.2 * xs.len().abs_diff(ys.len()) as f64
    }

    /// Parameter distance between two gates: 0.2 for different templates,
    /// otherwise the mean over the template's parameters of the absolute
    /// value difference normalized by the parameter's range width.
    fn params_diff(&self, a: &TreeNode, b: &TreeNode) -> f64 {
        let ga = gate_template(a).expect("caller checked a is a gate");
        let gb = gate_template(b).expect("caller checked b is a gate");
        if ga != gb {
            return 0.2;
        }
        let (kind, name) = ga;
        let Some((_, template)) = self.catalog.resolve(kind, name) else {
            // No declared ranges to normalize against; all that can still be
            // told apart is whether the raw parameter maps agree.
            return if a.params == b.params { 0.0 } else { 0.2 };
        };
        if template.params.is_empty() {
            return 0.0;
        }
        let total: f64 = template
            .params
            .iter()
            .map(|spec| {
                let va = a.params.get(&spec.name).copied().unwrap_or_else(|| spec.kind.default_value());
                let vb = b.params.get(&spec.name).copied().unwrap_or_else(|| spec.kind.default_value());
                let width = spec.kind.range_width();
                if width > 0.0 {
                    (va - vb).abs() / width
                } else {
                    0.0
                }
            })
            .sum();
        total / template.params.len() as f64
    }
}

fn ordered_composite(n: &TreeNode) -> bool {
    matches!(n.kind, NodeKind::Selector { .. } | NodeKind::Sequence { .. })
}

fn gate(n: &TreeNode) -> bool {
    matches!(n.kind, NodeKind::Condition { .. } | NodeKind::Decorator { .. })
}

fn gate_template(n: &TreeNode) -> Option<(TemplateKind, &str)> {
    match &n.kind {
        NodeKind::Condition { template } => Some((TemplateKind::Condition, template)),
        NodeKind::Decorator { template } => Some((TemplateKind::Decorator, template)),
        _ => None,
    }
}

fn leaf_name(n: &TreeNode) -> Option<(&'static str, &str)> {
    match &n.kind {
        NodeKind::Action { template } => Some(("action", template)),
        NodeKind::Proxy { tree } => Some(("proxy", tree)),
        _ => None,
    }
}
