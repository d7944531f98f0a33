//! Genetic operators over behavior trees.
//!
//! Closure holds throughout: a tree that validates against the catalog stays
//! valid under every operator here. Structure edits keep trees in normal
//! form, meaning no decorator directly wraps another decorator and no
//! composite is left childless, and node ids stay unique within a tree.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{ParamKind, Template, TemplateCatalog, TemplateKind};
use crate::tree::{BehaviorTree, NodeId, NodeKind, Provenance, TreeMetrics, TreeNode};

/// Depth and width limits bred trees must stay inside.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeCaps {
    pub max_depth: usize,
    pub max_width: usize,
}

impl SizeCaps {
    pub fn admits(&self, root: &TreeNode) -> bool {
        let m = TreeMetrics::of(root);
        m.depth <= self.max_depth && m.width <= self.max_width
    }
}

/// Which edit a mutation performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MutationOp {
    /// One parameter re-encoded as a 32-bit fixed-point number with a single
    /// bit flipped, or moved to a different member of its discrete set.
    ParamFlip,
    /// A fresh leaf inserted under a selector or sequence, or a decorator or
    /// condition gate spliced into an edge.
    AddNode,
    /// One selector rewritten as a sequence or the other way around.
    FlipComposite,
    /// One non-root subtree removed, with childless ancestors removed too.
    DeleteSubtree,
}

impl MutationOp {
    pub fn label(self) -> &'static str {
        match self {
            MutationOp::ParamFlip => "param-flip",
            MutationOp::AddNode => "add-node",
            MutationOp::FlipComposite => "flip-composite",
            MutationOp::DeleteSubtree => "delete-subtree",
        }
    }
}

/// Steps the fixed-point grid continuous parameters mutate on.
const PARAM_GRID: f64 = u32::MAX as f64;

/// Maps `value` onto a 32-bit grid spanning `[min, max]`, flips `bit`, and
/// maps back. The result always lands inside the range.
pub fn flip_continuous(value: f64, min: f64, max: f64, bit: u32) -> f64 {
    let span = max - min;
    if span <= 0.0 {
        return value;
    }
    let q = (((value - min) / span).clamp(0.0, 1.0) * PARAM_GRID).round() as u32;
    let flipped = q ^ (1u32 << bit);
    min + (flipped as f64 / PARAM_GRID) * span
}

fn template_kind_of(kind: &NodeKind) -> Option<TemplateKind> {
    match kind {
        NodeKind::Action { .. } => Some(TemplateKind::Action),
        NodeKind::Condition { .. } => Some(TemplateKind::Condition),
        NodeKind::Decorator { .. } => Some(TemplateKind::Decorator),
        _ => None,
    }
}

fn template_of<'c>(node: &TreeNode, catalog: &'c TemplateCatalog) -> Option<&'c Template> {
    let kind = template_kind_of(&node.kind)?;
    catalog.resolve(kind, node.kind.template()?).map(|(_, t)| t)
}

/// All `(node, parameter)` pairs with more than one legal value.
fn param_sites(root: &TreeNode, catalog: &TemplateCatalog) -> Vec<(NodeId, String)> {
    let mut sites = Vec::new();
    root.walk(&mut |n| {
        let Some(tpl) = template_of(n, catalog) else { return };
        for spec in &tpl.params {
            let usable = match &spec.kind {
                ParamKind::Continuous { min, max } => max > min,
                ParamKind::Discrete(values) => values.len() > 1,
            };
            if usable {
                sites.push((n.id, spec.name.clone()));
            }
        }
    });
    sites
}

fn mutate_param(root: &mut TreeNode, catalog: &TemplateCatalog, rng: &mut ChaCha8Rng) -> bool {
    let sites = param_sites(root, catalog);
    let Some((id, name)) = sites.choose(rng).cloned() else { return false };
    let node = root.find_mut(id).expect("site was collected from this tree");
    let spec = template_of(node, catalog)
        .and_then(|t| t.param(&name))
        .expect("site names a declared parameter")
        .clone();
    let current = node.params.get(&name).copied().unwrap_or_else(|| spec.kind.default_value());
    let next = match &spec.kind {
        ParamKind::Continuous { min, max } => {
            flip_continuous(current, *min, *max, rng.gen_range(0..32))
        }
        ParamKind::Discrete(values) => {
            let others: Vec<f64> = values.iter().copied().filter(|&v| v != current).collect();
            others.choose(rng).copied().unwrap_or(current)
        }
    };
    node.params.insert(name, next);
    true
}

/// A place where a node can be added.
#[derive(Debug, Clone, Copy)]
enum AddSite {
    /// New leaf at `index` of the composite `parent`.
    Leaf { parent: NodeId, index: usize },
    /// Wrapper spliced between `parent` and its `index`-th child.
    Wrap { parent: NodeId, index: usize, dec_ok: bool, cond_ok: bool },
}

fn add_sites(root: &TreeNode, catalog: &TemplateCatalog) -> Vec<AddSite> {
    let leaf_ok = !(catalog.actions.is_empty() && catalog.conditions.is_empty());
    let have_dec = !catalog.decorators.is_empty();
    let have_cond = !catalog.conditions.is_empty();
    let mut sites = Vec::new();
    root.walk(&mut |n| {
        if leaf_ok && matches!(n.kind, NodeKind::Selector { .. } | NodeKind::Sequence { .. }) {
            for index in 0..=n.children.len() {
                sites.push(AddSite::Leaf { parent: n.id, index });
            }
        }
        let parent_dec = matches!(n.kind, NodeKind::Decorator { .. });
        for (index, child) in n.children.iter().enumerate() {
            let child_dec = matches!(child.kind, NodeKind::Decorator { .. });
            let dec_ok = have_dec && !parent_dec && !child_dec;
            if dec_ok || have_cond {
                sites.push(AddSite::Wrap { parent: n.id, index, dec_ok, cond_ok: have_cond });
            }
        }
    });
    sites
}

/// A random leaf with every parameter sampled explicitly.
fn random_leaf(catalog: &TemplateCatalog, id: u32, rng: &mut ChaCha8Rng) -> Option<TreeNode> {
    let pick_action = match (catalog.actions.is_empty(), catalog.conditions.is_empty()) {
        (true, true) => return None,
        (false, true) => true,
        (true, false) => false,
        (false, false) => rng.gen_bool(0.5),
    };
    let (tpl, mut node) = if pick_action {
        let t = catalog.actions.choose(rng).expect("section is nonempty");
        (t, TreeNode::action(id, &t.name))
    } else {
        let t = catalog.conditions.choose(rng).expect("section is nonempty");
        (t, TreeNode::condition(id, &t.name, Vec::new()))
    };
    for spec in &tpl.params {
        node.params.insert(spec.name.clone(), spec.kind.sample(rng));
    }
    Some(node)
}

fn add_node(root: &mut TreeNode, catalog: &TemplateCatalog, rng: &mut ChaCha8Rng) -> bool {
    let sites = add_sites(root, catalog);
    let Some(&site) = sites.choose(rng) else { return false };
    let fresh = root.max_id() + 1;
    match site {
        AddSite::Leaf { parent, index } => {
            let leaf = random_leaf(catalog, fresh, rng).expect("leaf sites imply leaf templates");
            root.find_mut(parent).expect("site parent exists").children.insert(index, leaf);
        }
        AddSite::Wrap { parent, index, dec_ok, cond_ok } => {
            let use_dec = dec_ok && (!cond_ok || rng.gen_bool(0.5));
            let tpl = if use_dec {
                catalog.decorators.choose(rng).expect("dec_ok implies decorators")
            } else {
                catalog.conditions.choose(rng).expect("cond_ok implies conditions")
            };
            let node = root.find_mut(parent).expect("site parent exists");
            let child = node.children.remove(index);
            let mut wrapper = if use_dec {
                TreeNode::decorator(fresh, &tpl.name, child)
            } else {
                TreeNode::condition(fresh, &tpl.name, vec![child])
            };
            for spec in &tpl.params {
                wrapper.params.insert(spec.name.clone(), spec.kind.sample(rng));
            }
            node.children.insert(index, wrapper);
        }
    }
    true
}

fn flippable(root: &TreeNode) -> Vec<NodeId> {
    let mut ids = Vec::new();
    root.walk(&mut |n| {
        if matches!(n.kind, NodeKind::Selector { .. } | NodeKind::Sequence { .. }) {
            ids.push(n.id);
        }
    });
    ids
}

fn flip_composite(root: &mut TreeNode, rng: &mut ChaCha8Rng) -> bool {
    let ids = flippable(root);
    let Some(&id) = ids.choose(rng) else { return false };
    let node = root.find_mut(id).expect("id was collected from this tree");
    node.kind = match node.kind {
        NodeKind::Selector { order } => NodeKind::Sequence { order },
        NodeKind::Sequence { order } => NodeKind::Selector { order },
        _ => unreachable!("flippable only collects selectors and sequences"),
    };
    true
}

/// Node ids from root down to `target`, inclusive.
fn path_to(root: &TreeNode, target: NodeId) -> Option<Vec<NodeId>> {
    if root.id == target {
        return Some(vec![root.id]);
    }
    for child in &root.children {
        if let Some(mut tail) = path_to(child, target) {
            let mut path = vec![root.id];
            path.append(&mut tail);
            return Some(path);
        }
    }
    None
}

/// Index into `path` of the deepest ancestor that keeps a child once the
/// path tail is deleted. None means the cascade would consume the root.
fn surviving_ancestor(root: &TreeNode, path: &[NodeId]) -> Option<usize> {
    for i in (0..path.len() - 1).rev() {
        let anc = root.find(path[i]).expect("path ids come from this tree");
        let collapses = anc.children.len() == 1
            && (anc.kind.is_composite() || matches!(anc.kind, NodeKind::Decorator { .. }));
        if !collapses {
            return Some(i);
        }
    }
    None
}

/// Removes the subtree at `target`. Composites and decorators left childless
/// are removed as well, bubbling toward the root; a parallel that loses a
/// child gets its threshold clamped. Returns false, leaving the tree
/// untouched, when the cascade would consume the root or `target` is the
/// root itself.
pub fn delete_with_cleanup(root: &mut TreeNode, target: NodeId) -> bool {
    let Some(path) = path_to(root, target) else { return false };
    if path.len() < 2 {
        return false;
    }
    let Some(cut_idx) = surviving_ancestor(root, &path) else { return false };
    let doomed = path[cut_idx + 1];
    let cut = root.find_mut(path[cut_idx]).expect("path ids come from this tree");
    cut.children.retain(|c| c.id != doomed);
    if let NodeKind::Parallel { k } = &mut cut.kind {
        *k = (*k).min(cut.children.len()).max(1);
    }
    true
}

/// Non-root nodes whose deletion leaves a rooted tree behind.
pub(crate) fn delete_candidates(root: &TreeNode) -> Vec<NodeId> {
    let root_id = root.id;
    let mut ids = Vec::new();
    root.walk(&mut |n| {
        if n.id != root_id {
            ids.push(n.id);
        }
    });
    ids.retain(|&id| {
        let path = path_to(root, id).expect("id was collected from this tree");
        surviving_ancestor(root, &path).is_some()
    });
    ids
}

fn delete_random_subtree(root: &mut TreeNode, rng: &mut ChaCha8Rng) -> bool {
    let candidates = delete_candidates(root);
    let Some(&id) = candidates.choose(rng) else { return false };
    delete_with_cleanup(root, id)
}

/// Applies one mutation drawn uniformly from the operators that have a site
/// in this tree. None means the tree offers no mutation at all.
pub fn mutate(
    root: &mut TreeNode,
    catalog: &TemplateCatalog,
    rng: &mut ChaCha8Rng,
) -> Option<MutationOp> {
    let mut ops = Vec::new();
    if !param_sites(root, catalog).is_empty() {
        ops.push(MutationOp::ParamFlip);
    }
    if !add_sites(root, catalog).is_empty() {
        ops.push(MutationOp::AddNode);
    }
    if !flippable(root).is_empty() {
        ops.push(MutationOp::FlipComposite);
    }
    if !delete_candidates(root).is_empty() {
        ops.push(MutationOp::DeleteSubtree);
    }
    let op = *ops.choose(rng)?;
    let applied = match op {
        MutationOp::ParamFlip => mutate_param(root, catalog, rng),
        MutationOp::AddNode => add_node(root, catalog, rng),
        MutationOp::FlipComposite => flip_composite(root, rng),
        MutationOp::DeleteSubtree => delete_random_subtree(root, rng),
    };
    debug_assert!(applied, "an operator chosen from the applicable set must apply");
    applied.then_some(op)
}

/// Mutates in place, retrying with fresh rolls when the result leaves the
/// size caps. The tree is untouched when every attempt oversteps.
pub fn mutate_within(
    root: &mut TreeNode,
    catalog: &TemplateCatalog,
    caps: SizeCaps,
    retries: u32,
    rng: &mut ChaCha8Rng,
) -> Option<MutationOp> {
    for _ in 0..retries.max(1) {
        let mut candidate = root.clone();
        let op = mutate(&mut candidate, catalog, rng)?;
        if caps.admits(&candidate) {
            *root = candidate;
            return Some(op);
        }
    }
    None
}

/// Swaps a random non-root subtree of `a` for a random non-root subtree of
/// `b`. The graft is renumbered past `a`'s ids and the result passes through
/// [`repair`]. None when either tree is a bare root.
pub fn crossover(a: &TreeNode, b: &TreeNode, rng: &mut ChaCha8Rng) -> Option<TreeNode> {
    let a_sites = non_root_ids(a);
    let b_sites = non_root_ids(b);
    let &slot = a_sites.choose(rng)?;
    let &graft_id = b_sites.choose(rng)?;
    let mut child = a.clone();
    let mut graft = b.find(graft_id).expect("id was collected from b").clone();
    graft.renumber();
    graft.shift_ids(child.max_id() + 1);
    *child.find_mut(slot).expect("id was collected from a") = graft;
    repair(&mut child);
    Some(child)
}

fn non_root_ids(root: &TreeNode) -> Vec<NodeId> {
    let root_id = root.id;
    let mut ids = Vec::new();
    root.walk(&mut |n| {
        if n.id != root_id {
            ids.push(n.id);
        }
    });
    ids
}

/// Restores normal form after an edit: decorator chains collapse to their
/// innermost link and parallel thresholds are clamped to the child count.
pub fn repair(root: &mut TreeNode) {
    collapse_decorators(root);
    root.walk_mut(&mut |n| {
        if let NodeKind::Parallel { k } = &mut n.kind {
            *k = (*k).min(n.children.len()).max(1);
        }
    });
}

fn collapse_decorators(node: &mut TreeNode) {
    for child in &mut node.children {
        collapse_decorators(child);
    }
    while matches!(node.kind, NodeKind::Decorator { .. })
        && matches!(node.children.first(), Some(c) if matches!(c.kind, NodeKind::Decorator { .. }))
    {
        *node = node.children.remove(0);
    }
}

/// Builds a starting population. Seed trees cycle through the slots; copies
/// beyond the first cycle take one extra mutation per cycle so later copies
/// drift further. Without seeds, trees grow from a one-leaf selector by
/// repeated node additions.
pub fn init_population(
    n: usize,
    seeds: &[BehaviorTree],
    catalog: &TemplateCatalog,
    caps: SizeCaps,
    rng: &mut ChaCha8Rng,
) -> Vec<BehaviorTree> {
    (0..n)
        .map(|i| {
            let (mut root, base, extra) = if seeds.is_empty() {
                (random_root(catalog, caps, rng), "rand".to_owned(), 0)
            } else {
                let seed = &seeds[i % seeds.len()];
                (seed.root.clone(), seed.name.clone(), i / seeds.len())
            };
            for _ in 0..extra {
                mutate_within(&mut root, catalog, caps, 4, rng);
            }
            let mut tree = BehaviorTree::new(&format!("{base}-{i:02}"), root);
            tree.provenance = Provenance {
                generation: Some(0),
                parents: if seeds.is_empty() { Vec::new() } else { vec![base] },
                operator: Some("init".to_owned()),
            };
            tree
        })
        .collect()
}

fn random_root(catalog: &TemplateCatalog, caps: SizeCaps, rng: &mut ChaCha8Rng) -> TreeNode {
    let leaf = random_leaf(catalog, 1, rng).expect("catalog offers at least one leaf template");
    let mut root = TreeNode::selector(0, vec![leaf]);
    let grows = rng.gen_range(2..=5);
    for _ in 0..grows {
        let mut candidate = root.clone();
        if add_node(&mut candidate, catalog, rng) && caps.admits(&candidate) {
            root = candidate;
        }
    }
    root
}
