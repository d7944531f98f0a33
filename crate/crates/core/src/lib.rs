//! btforge: evolves behavior trees for game agents, sorts them into
//! difficulty classes, prunes the catalog down to distinct representatives,
//! and checks the result with a deterministic simulation harness.
//!
//! The crate is organized by subsystem:
//!
//! - [`tree`], [`catalog`], [`blackboard`], [`validate`], [`text`],
//!   [`engine`]: the behavior-tree model, file format, and tick engine.
//! - [`arena`]: a deterministic 2D grid shooter used as the evaluation
//!   environment, with full event traces and state-hash checkpoints.
//! - [`difficulty`]: metric normalization, target sampling, fitness, and
//!   class assignment.
//! - [`evolution`]: the genetic loop (mutation, crossover, selection,
//!   plateau handling, anti-bloat).
//! - [`pruning`]: tournament scoring, rank elimination, tree similarity,
//!   K-medoids clustering, and vote ingestion.
//! - [`harness`]: coverage, determinism, and exploit scans over traces.
//! - [`config`], [`pipeline`], [`report`]: the batch pipeline and its
//!   artifacts.
//!
//! All randomness flows from a single master seed through [`rng`].

pub mod arena;
pub mod blackboard;
pub mod catalog;
pub mod config;
pub mod difficulty;
pub mod engine;
pub mod evolution;
pub mod harness;
pub mod pipeline;
pub mod pruning;
pub mod report;
pub(crate) mod hash;
pub mod rng;
pub mod text;
pub mod tree;
pub mod validate;

pub use blackboard::{Blackboard, EntityId, Scope, SlotId, Value, Vec2};
pub use catalog::{DecoratorKind, ParamKind, ParamSpec, RequiredKey, Template, TemplateCatalog, TemplateKind};
pub use engine::{bind, tick, ActionRuntime, BindError, BoundCall, BoundNode, BoundTree, ExecEvent, TickEnv};
pub use tree::{BehaviorTree, NodeId, NodeKind, NodeStatus, OrderPolicy, Provenance, TreeLibrary, TreeMetrics, TreeNode};
pub use validate::{validate, Violation};
