//! Binding and ticking of behavior trees.
//!
//! Binding resolves every template reference to a catalog index, every
//! required blackboard key to a direct slot, and every proxy to an inlined
//! bound copy of its target tree, so the per-tick hot path never touches a
//! string. Ticking is memoryless: a node that returned Running is not
//! resumed, the whole tree re-runs from the root next tick, and anything
//! that must persist (cooldown stamps, running-since marks) lives in the
//! agent's local blackboard in slots allocated at bind time.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::blackboard::{Blackboard, Scope, SlotId, Value};
use crate::catalog::{DecoratorKind, TemplateCatalog, TemplateKind};
use crate::tree::{BehaviorTree, NodeId, NodeKind, NodeStatus, OrderPolicy, TreeLibrary, TreeNode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BindError {
    #[error("unknown {kind} template `{template}` at node {node}")]
    UnknownTemplate { node: NodeId, kind: &'static str, template: String },
    #[error("missing {scope} blackboard key `{key}` required by `{template}` at node {node}")]
    MissingKey { node: NodeId, scope: Scope, key: String, template: String },
    #[error("unknown proxy target `{tree}` at node {node}")]
    UnknownProxyTarget { node: NodeId, tree: String },
}

/// A resolved leaf call: template index, parameter values in declared order,
/// and the slots of every required key.
#[derive(Debug, Clone)]
pub struct BoundCall {
    pub node: NodeId,
    pub kind: TemplateKind,
    pub template: usize,
    pub params: Vec<f64>,
    pub key_slots: Vec<(Scope, SlotId)>,
}

#[derive(Debug, Clone)]
pub enum BoundNode {
    Selector { id: NodeId, shuffled: bool, children: Vec<BoundNode> },
    Sequence { id: NodeId, shuffled: bool, children: Vec<BoundNode> },
    Parallel { id: NodeId, k: usize, children: Vec<BoundNode> },
    Action { call: BoundCall },
    /// Condition without a child: its expression value becomes the status.
    ConditionLeaf { call: BoundCall },
    /// Condition gating a child: false is Failure, true passes through.
    ConditionGate { call: BoundCall, child: Box<BoundNode> },
    Decorator { call: BoundCall, semantics: DecoratorKind, state: Option<SlotId>, child: Box<BoundNode> },
}

/// A tree bound to one agent's blackboards.
#[derive(Debug, Clone)]
pub struct BoundTree {
    pub name: String,
    pub root: BoundNode,
}

/// Executed-template record pushed by the engine for every leaf or decorator
/// it runs; the simulation copies these into its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecEvent {
    pub node: NodeId,
    pub kind: TemplateKind,
    pub template: usize,
    pub params: Vec<f64>,
}

/// Game-side implementation of actions and conditions.
pub trait ActionRuntime {
    fn tick_action(&mut self, call: &BoundCall, global: &Blackboard, local: &mut Blackboard) -> NodeStatus;
    fn eval_condition(&mut self, call: &BoundCall, global: &Blackboard, local: &Blackboard) -> bool;
}

/// Everything a tick needs. `global` is read-only for trees; `local` belongs
/// to the ticking agent; `rng` is that agent's private stream.
pub struct TickEnv<'a> {
    pub dt: f64,
    /// Seconds since round start (tick index times dt; never wall clock).
    pub now: f64,
    pub rng: &'a mut ChaCha8Rng,
    pub global: &'a Blackboard,
    pub local: &'a mut Blackboard,
    pub runtime: &'a mut dyn ActionRuntime,
    pub exec: &'a mut Vec<ExecEvent>,
    /// Set by a shuffle decorator for its immediate child.
    force_shuffle: bool,
}

impl<'a> TickEnv<'a> {
    pub fn new(
        dt: f64,
        now: f64,
        rng: &'a mut ChaCha8Rng,
        global: &'a Blackboard,
        local: &'a mut Blackboard,
        runtime: &'a mut dyn ActionRuntime,
        exec: &'a mut Vec<ExecEvent>,
    ) -> TickEnv<'a> {
        TickEnv { dt, now, rng, global, local, runtime, exec, force_shuffle: false }
    }
}

// ---------------------------------------------------------------------------
// Binding
// ---------------------------------------------------------------------------

/// Binds `tree` against the agent's blackboards.
///
/// Fails if a referenced blackboard key is absent, naming the key and node.
/// Decorators that need cross-tick state get a slot allocated in `local`
/// here, keyed by node id (and proxy path, so two proxies to the same tree
/// do not share state).
pub fn bind(
    tree: &BehaviorTree,
    catalog: &TemplateCatalog,
    global: &Blackboard,
    local: &mut Blackboard,
    library: &TreeLibrary,
) -> Result<BoundTree, BindError> {
    let root = bind_node(&tree.root, catalog, global, local, library, "")?;
    Ok(BoundTree { name: tree.name.clone(), root })
}

fn bind_call(
    node: &TreeNode,
    kind: TemplateKind,
    template_name: &str,
    catalog: &TemplateCatalog,
    global: &Blackboard,
    local: &Blackboard,
) -> Result<BoundCall, BindError> {
    let Some((index, spec)) = catalog.resolve(kind, template_name) else {
        return Err(BindError::UnknownTemplate {
            node: node.id,
            kind: kind.label(),
            template: template_name.to_owned(),
        });
    };
    // Parameter vector in declared order; omitted params take defaults.
    let params = spec
        .params
        .iter()
        .map(|p| node.params.get(&p.name).copied().unwrap_or_else(|| p.kind.default_value()))
        .collect();
    let mut key_slots = Vec::with_capacity(spec.required_keys.len());
    for rk in &spec.required_keys {
        let slot = match rk.scope {
            Scope::Global => global.slot(&rk.key),
            Scope::Local => local.slot(&rk.key),
        };
        let Some(slot) = slot else {
            return Err(BindError::MissingKey {
                node: node.id,
                scope: rk.scope,
                key: rk.key.clone(),
                template: template_name.to_owned(),
            });
        };
        key_slots.push((rk.scope, slot));
    }
    Ok(BoundCall { node: node.id, kind, template: index, params, key_slots })
}

fn bind_node(
    node: &TreeNode,
    catalog: &TemplateCatalog,
    global: &Blackboard,
    local: &mut Blackboard,
    library: &TreeLibrary,
    prefix: &str,
) -> Result<BoundNode, BindError> {
    let bind_children = |children: &[TreeNode], local: &mut Blackboard| -> Result<Vec<BoundNode>, BindError> {
        children.iter().map(|c| bind_node(c, catalog, global, local, library, prefix)).collect()
    };
    match &node.kind {
        NodeKind::Selector { order } => Ok(BoundNode::Selector {
            id: node.id,
            shuffled: *order == OrderPolicy::Shuffled,
            children: bind_children(&node.children, local)?,
        }),
        NodeKind::Sequence { order } => Ok(BoundNode::Sequence {
            id: node.id,
            shuffled: *order == OrderPolicy::Shuffled,
            children: bind_children(&node.children, local)?,
        }),
        NodeKind::Parallel { k } => Ok(BoundNode::Parallel {
            id: node.id,
            k: *k,
            children: bind_children(&node.children, local)?,
        }),
        NodeKind::Action { template } => Ok(BoundNode::Action {
            call: bind_call(node, TemplateKind::Action, template, catalog, global, local)?,
        }),
        NodeKind::Condition { template } => {
            let call = bind_call(node, TemplateKind::Condition, template, catalog, global, local)?;
            match node.children.first() {
                None => Ok(BoundNode::ConditionLeaf { call }),
                Some(c) => Ok(BoundNode::ConditionGate {
                    call,
                    child: Box::new(bind_node(c, catalog, global, local, library, prefix)?),
                }),
            }
        }
        NodeKind::Decorator { template } => {
            let call = bind_call(node, TemplateKind::Decorator, template, catalog, global, local)?;
            let semantics = catalog.decorators[call.template]
                .decorator
                .expect("catalog check guarantees decorator semantics");
            let state = match semantics {
                DecoratorKind::Cooldown => Some(local.insert(
                    &format!("{prefix}dec{}.last_exec", node.id.0),
                    Value::Number(f64::NEG_INFINITY),
                )),
                DecoratorKind::TimeLimit => Some(local.insert(
                    &format!("{prefix}dec{}.run_since", node.id.0),
                    Value::Number(-1.0),
                )),
                _ => None,
            };
            let child = node.children.first().expect("validated decorator has one child");
            Ok(BoundNode::Decorator {
                call,
                semantics,
                state,
                child: Box::new(bind_node(child, catalog, global, local, library, prefix)?),
            })
        }
        NodeKind::Proxy { tree } => {
            let Some(target) = library.get(tree) else {
                return Err(BindError::UnknownProxyTarget { node: node.id, tree: tree.clone() });
            };
            // Inline the target under a state prefix unique to this proxy.
            let child_prefix = format!("{prefix}p{}.", node.id.0);
            bind_node(&target.root, catalog, global, local, library, &child_prefix)
        }
    }
}

// ---------------------------------------------------------------------------
// Ticking
// ---------------------------------------------------------------------------

/// Runs one tick from the root. The tree holds no mutable state; repeated
/// calls with identical blackboards, RNG state, and runtime behave
/// identically.
pub fn tick(tree: &BoundTree, env: &mut TickEnv<'_>) -> NodeStatus {
    tick_node(&tree.root, env)
}

/// Child visit order for a composite this tick.
fn visit_order(n: usize, shuffled: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffled {
        order.shuffle(rng);
    }
    order
}

fn tick_node(node: &BoundNode, env: &mut TickEnv<'_>) -> NodeStatus {
    // A pending shuffle request applies only to the node entered next.
    let forced = std::mem::take(&mut env.force_shuffle);
    match node {
        BoundNode::Selector { shuffled, children, .. } => {
            let order = visit_order(children.len(), *shuffled || forced, env.rng);
            for i in order {
                match tick_node(&children[i], env) {
                    NodeStatus::Failure => continue,
                    other => return other,
                }
            }
            NodeStatus::Failure
        }
        BoundNode::Sequence { shuffled, children, .. } => {
            let order = visit_order(children.len(), *shuffled || forced, env.rng);
            for i in order {
                match tick_node(&children[i], env) {
                    NodeStatus::Success => continue,
                    other => return other,
                }
            }
            NodeStatus::Success
        }
        BoundNode::Parallel { k, children, .. } => {
            // Every child ticks every time; statuses are combined afterwards.
            let mut successes = 0usize;
            for c in children {
                if tick_node(c, env) == NodeStatus::Success {
                    successes += 1;
                }
            }
            let n = children.len();
            if successes >= *k {
                NodeStatus::Success
            } else if successes < n - *k {
                NodeStatus::Failure
            } else {
                NodeStatus::Running
            }
        }
        BoundNode::Action { call } => {
            push_exec(env, call);
            env.runtime.tick_action(call, env.global, env.local)
        }
        BoundNode::ConditionLeaf { call } => {
            push_exec(env, call);
            if env.runtime.eval_condition(call, env.global, env.local) {
                NodeStatus::Success
            } else {
                NodeStatus::Failure
            }
        }
        BoundNode::ConditionGate { call, child } => {
            push_exec(env, call);
            if env.runtime.eval_condition(call, env.global, env.local) {
                tick_node(child, env)
            } else {
                NodeStatus::Failure
            }
        }
        BoundNode::Decorator { call, semantics, state, child } => {
            push_exec(env, call);
            tick_decorator(call, *semantics, *state, child, env)
        }
    }
}

fn push_exec(env: &mut TickEnv<'_>, call: &BoundCall) {
    env.exec.push(ExecEvent {
        node: call.node,
        kind: call.kind,
        template: call.template,
        params: call.params.clone(),
    });
}

fn tick_decorator(
    call: &BoundCall,
    semantics: DecoratorKind,
    state: Option<SlotId>,
    child: &BoundNode,
    env: &mut TickEnv<'_>,
) -> NodeStatus {
    match semantics {
        DecoratorKind::Invert => tick_node(child, env).inverted(),
        DecoratorKind::Chance => {
            // Fresh dice roll per tick from the agent's stream.
            let p = call.params.first().copied().unwrap_or(0.5);
            if env.rng.gen::<f64>() < p {
                tick_node(child, env)
            } else {
                NodeStatus::Failure
            }
        }
        DecoratorKind::Cooldown => {
            let seconds = call.params.first().copied().unwrap_or(1.0);
            let slot = state.expect("cooldown state allocated at bind");
            let last = env.local.get(slot).as_number().unwrap_or(f64::NEG_INFINITY);
            if env.now - last < seconds {
                return NodeStatus::Failure;
            }
            env.local.set(slot, Value::Number(env.now));
            tick_node(child, env)
        }
        DecoratorKind::ShuffleChildren => {
            env.force_shuffle = true;
            tick_node(child, env)
        }
        DecoratorKind::TimeLimit => {
            let seconds = call.params.first().copied().unwrap_or(1.0);
            let slot = state.expect("time_limit state allocated at bind");
            let since = env.local.get(slot).as_number().unwrap_or(-1.0);
            let status = tick_node(child, env);
            match status {
                NodeStatus::Running => {
                    if since < 0.0 {
                        env.local.set(slot, Value::Number(env.now));
                        NodeStatus::Running
                    } else if env.now - since >= seconds {
                        env.local.set(slot, Value::Number(-1.0));
                        NodeStatus::Failure
                    } else {
                        NodeStatus::Running
                    }
                }
                terminal => {
                    env.local.set(slot, Value::Number(-1.0));
                    terminal
                }
            }
        }
    }
}
