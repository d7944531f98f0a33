//! Structural and referential validation of behavior trees.
//!
//! `validate` returns every violation it finds rather than stopping at the
//! first, so generators and file loaders can report the whole story at once.
//! An empty list is the precondition for binding and simulation.

use std::collections::BTreeSet;
use std::fmt;

use crate::catalog::{TemplateCatalog, TemplateKind};
use crate::tree::{BehaviorTree, NodeId, NodeKind, TreeLibrary, TreeNode};

/// One rule breach, anchored to the offending node.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Wrong child count for the node kind.
    Arity { node: NodeId, kind: &'static str, children: usize },
    /// Parallel success threshold outside `1..=children`.
    ParallelThreshold { node: NodeId, k: usize, children: usize },
    /// Template name not present in the catalog section for this kind.
    UnknownTemplate { node: NodeId, kind: TemplateKind, template: String },
    /// A `params` key the referenced template does not declare.
    UnknownParam { node: NodeId, template: String, param: String },
    /// A parameter value outside its declared range or value set.
    ParamOutOfRange { node: NodeId, template: String, param: String, value: f64 },
    /// Two nodes share an id.
    DuplicateId { node: NodeId },
    /// Proxy names a tree the library does not contain.
    UnknownProxyTarget { node: NodeId, tree: String },
    /// Following proxy references revisits a tree.
    ProxyCycle { node: NodeId, tree: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Arity { node, kind, children } => {
                write!(f, "{kind} arity: node {node} has {children} children")
            }
            Violation::ParallelThreshold { node, k, children } => {
                write!(f, "parallel threshold: node {node} has k={k} with {children} children")
            }
            Violation::UnknownTemplate { node, kind, template } => {
                write!(f, "unknown {} template `{template}` at node {node}", kind.label())
            }
            Violation::UnknownParam { node, template, param } => {
                write!(f, "unknown parameter `{param}` for template `{template}` at node {node}")
            }
            Violation::ParamOutOfRange { node, template, param, value } => {
                write!(f, "parameter out of range: `{param}`={value} for template `{template}` at node {node}")
            }
            Violation::DuplicateId { node } => write!(f, "duplicate node id {node}"),
            Violation::UnknownProxyTarget { node, tree } => {
                write!(f, "unknown proxy target `{tree}` at node {node}")
            }
            Violation::ProxyCycle { node, tree } => {
                write!(f, "proxy cycle through `{tree}` at node {node}")
            }
        }
    }
}

/// Checks arity rules, template references, parameter legality, id
/// uniqueness, and proxy reachability/acyclicity against `library`.
pub fn validate(tree: &BehaviorTree, catalog: &TemplateCatalog, library: &TreeLibrary) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    check_node(&tree.root, catalog, &mut ids, &mut out);

    // Proxy graph: walk references depth-first; a back edge to any tree on
    // the current reference stack is a cycle. The starting tree participates
    // under its own name.
    let mut stack: Vec<String> = vec![tree.name.clone()];
    check_proxies(&tree.root, library, &mut stack, &mut out);
    out
}

fn check_node(
    node: &TreeNode,
    catalog: &TemplateCatalog,
    ids: &mut BTreeSet<u32>,
    out: &mut Vec<Violation>,
) {
    if !ids.insert(node.id.0) {
        out.push(Violation::DuplicateId { node: node.id });
    }
    let n = node.children.len();
    match &node.kind {
        NodeKind::Selector { .. } | NodeKind::Sequence { .. } => {
            if n == 0 {
                out.push(Violation::Arity { node: node.id, kind: node.kind.keyword(), children: n });
            }
        }
        NodeKind::Parallel { k } => {
            if n == 0 {
                out.push(Violation::Arity { node: node.id, kind: "parallel", children: n });
            } else if *k < 1 || *k > n {
                out.push(Violation::ParallelThreshold { node: node.id, k: *k, children: n });
            }
        }
        NodeKind::Action { template } => {
            if n != 0 {
                out.push(Violation::Arity { node: node.id, kind: "action", children: n });
            }
            check_template(node, TemplateKind::Action, template, catalog, out);
        }
        NodeKind::Condition { template } => {
            if n > 1 {
                out.push(Violation::Arity { node: node.id, kind: "condition", children: n });
            }
            check_template(node, TemplateKind::Condition, template, catalog, out);
        }
        NodeKind::Decorator { template } => {
            if n != 1 {
                out.push(Violation::Arity { node: node.id, kind: "decorator", children: n });
            }
            check_template(node, TemplateKind::Decorator, template, catalog, out);
        }
        NodeKind::Proxy { .. } => {
            if n != 0 {
                out.push(Violation::Arity { node: node.id, kind: "proxy", children: n });
            }
        }
    }
    for c in &node.children {
        check_node(c, catalog, ids, out);
    }
}

fn check_template(
    node: &TreeNode,
    kind: TemplateKind,
    template: &str,
    catalog: &TemplateCatalog,
    out: &mut Vec<Violation>,
) {
    let Some((_, spec)) = catalog.resolve(kind, template) else {
        out.push(Violation::UnknownTemplate { node: node.id, kind, template: template.to_owned() });
        return;
    };
    for (name, &value) in &node.params {
        match spec.param(name) {
            None => out.push(Violation::UnknownParam {
                node: node.id,
                template: template.to_owned(),
                param: name.clone(),
            }),
            Some(p) if !p.kind.contains(value) => out.push(Violation::ParamOutOfRange {
                node: node.id,
                template: template.to_owned(),
                param: name.clone(),
                value,
            }),
            Some(_) => {}
        }
    }
}

fn check_proxies(node: &TreeNode, library: &TreeLibrary, stack: &mut Vec<String>, out: &mut Vec<Violation>) {
    if let NodeKind::Proxy { tree } = &node.kind {
        if stack.iter().any(|t| t == tree) {
            out.push(Violation::ProxyCycle { node: node.id, tree: tree.clone() });
        } else {
            match library.get(tree) {
                None => out.push(Violation::UnknownProxyTarget { node: node.id, tree: tree.clone() }),
                Some(target) => {
                    stack.push(tree.clone());
                    check_proxies(&target.root, library, stack, out);
                    stack.pop();
                }
            }
        }
    }
    for c in &node.children {
        check_proxies(c, library, stack, out);
    }
}
