//! Functional-testing harness over the arena.
//!
//! Rounds leave a full event trace behind, which turns evolved trees into
//! test drivers for the game logic: [`coverage`] measures how much of the
//! template catalog a set of rounds exercised and in which orders,
//! [`determinism_check`] replays a round and compares its state-hash
//! checkpoints, and [`exploit_scan`] hunts for trees that top the hardest
//! class with suspiciously little behavior behind them.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::arena::{run_round, ArenaConfig, SimTrace, TraceEvent};
use crate::catalog::{ParamKind, TemplateCatalog, TemplateKind};
use crate::difficulty::DifficultySpec;
use crate::pruning::{ClassPools, TScoreTable};
use crate::tree::{BehaviorTree, NodeKind, TreeLibrary, TreeNode};

/// Buckets a continuous parameter range is split into for diversity counts.
pub const PARAM_BUCKETS: u32 = 8;

/// What a set of traces exercised: which templates ran, in which action
/// orders, and how much of each parameter range got touched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoverageReport {
    /// Catalog templates executed at least once.
    pub executed: BTreeSet<(TemplateKind, String)>,
    /// Ordered pairs of consecutive action executions, per agent per round.
    pub transitions: BTreeSet<(String, String)>,
    /// `kind:template:param` to the set of exercised range buckets.
    pub param_buckets: BTreeMap<String, BTreeSet<u32>>,
    /// Size of the catalog the traces were measured against.
    pub catalog_total: usize,
}

impl CoverageReport {
    /// Coverage of one round's trace.
    pub fn from_trace(trace: &SimTrace, catalog: &TemplateCatalog) -> CoverageReport {
        let mut report = CoverageReport {
            catalog_total: catalog.actions.len()
                + catalog.conditions.len()
                + catalog.decorators.len(),
            ..CoverageReport::default()
        };
        let mut last_action: BTreeMap<u32, String> = BTreeMap::new();
        for record in &trace.records {
            let TraceEvent::Exec { kind, template, params } = &record.event else { continue };
            report.executed.insert((*kind, template.clone()));
            if let Some((_, spec)) = catalog.resolve(*kind, template) {
                for (i, p) in spec.params.iter().enumerate() {
                    let Some(&value) = params.get(i) else { continue };
                    report
                        .param_buckets
                        .entry(format!("{}:{}:{}", kind.label(), template, p.name))
                        .or_default()
                        .insert(bucket(&p.kind, value));
                }
            }
            if *kind == TemplateKind::Action {
                let agent = record.agent.expect("exec events carry their agent");
                if let Some(prev) = last_action.insert(agent, template.clone()) {
                    report.transitions.insert((prev, template.clone()));
                }
            }
        }
        report
    }

    /// Unions another report into this one. Merging per-trace reports gives
    /// exactly the report of the concatenated trace list.
    pub fn merge(&mut self, other: &CoverageReport) {
        debug_assert_eq!(self.catalog_total, other.catalog_total);
        self.executed.extend(other.executed.iter().cloned());
        self.transitions.extend(other.transitions.iter().cloned());
        for (key, buckets) in &other.param_buckets {
            self.param_buckets.entry(key.clone()).or_default().extend(buckets.iter().copied());
        }
    }

    /// Fraction of catalog templates executed at least once.
    pub fn template_coverage(&self) -> f64 {
        if self.catalog_total == 0 {
            return 0.0;
        }
        self.executed.len() as f64 / self.catalog_total as f64
    }
}

/// Aggregated coverage over many round traces. Transitions never chain
/// across rounds; each trace contributes its own consecutive pairs.
pub fn coverage(traces: &[SimTrace], catalog: &TemplateCatalog) -> CoverageReport {
    let mut report = CoverageReport {
        catalog_total: catalog.actions.len() + catalog.conditions.len() + catalog.decorators.len(),
        ..CoverageReport::default()
    };
    for trace in traces {
        report.merge(&CoverageReport::from_trace(trace, catalog));
    }
    report
}

fn bucket(kind: &ParamKind, value: f64) -> u32 {
    match kind {
        ParamKind::Continuous { min, max } if max > min => {
            let t = (value - min) / (max - min) * f64::from(PARAM_BUCKETS);
            (t.floor().max(0.0) as u32).min(PARAM_BUCKETS - 1)
        }
        ParamKind::Continuous { .. } => 0,
        ParamKind::Discrete(values) => {
            let mut best = (0u32, f64::INFINITY);
            for (i, &v) in values.iter().enumerate() {
                let gap = (v - value).abs();
                if gap < best.1 {
                    best = (i as u32, gap);
                }
            }
            best.0
        }
    }
}

/// Where two replays of the same round first disagreed.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    /// Zero-based index of the diverging checkpoint.
    pub checkpoint: usize,
    /// Which rerun disagreed with the baseline (run 0).
    pub run: usize,
    /// `(tick, hash)` the baseline recorded there; `None` when the rerun
    /// produced extra checkpoints past the baseline's end.
    pub baseline: Option<(u64, u64)>,
    /// `(tick, hash)` the rerun recorded there; `None` when it ended early.
    pub observed: Option<(u64, u64)>,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("determinism check needs at least 2 repeats, got {repeats}")]
    TooFewRepeats { repeats: usize },
    #[error("round failed to run: {0}")]
    Round(String),
}

/// Replays one arena round `repeats` times and compares the state-hash
/// checkpoint sequences. `Ok(None)` means all runs matched.
pub fn determinism_check(
    trees: &[&BehaviorTree],
    catalog: &TemplateCatalog,
    library: &TreeLibrary,
    config: &ArenaConfig,
    seed: u64,
    repeats: usize,
) -> Result<Option<Divergence>, HarnessError> {
    determinism_check_with(repeats, |_| {
        run_round(trees, catalog, library, config, seed).map(|o| o.trace).map_err(|e| e.to_string())
    })
}

/// Determinism check over any replayable round source; `run` is called with
/// the run index and must produce the round's trace.
pub fn determinism_check_with<F>(
    repeats: usize,
    mut run: F,
) -> Result<Option<Divergence>, HarnessError>
where
    F: FnMut(usize) -> Result<SimTrace, String>,
{
    if repeats < 2 {
        return Err(HarnessError::TooFewRepeats { repeats });
    }
    let baseline = run(0).map_err(HarnessError::Round)?.checkpoints();
    for rerun in 1..repeats {
        let observed = run(rerun).map_err(HarnessError::Round)?.checkpoints();
        for i in 0..baseline.len().max(observed.len()) {
            let b = baseline.get(i).copied();
            let o = observed.get(i).copied();
            if b != o {
                return Ok(Some(Divergence { checkpoint: i, run: rerun, baseline: b, observed: o }));
            }
        }
    }
    Ok(None)
}

/// A hardest-class tree that scores well with suspiciously little behavior.
#[derive(Debug, Clone, PartialEq)]
pub struct ExploitFlag {
    pub tree: String,
    pub class: String,
    pub node_count: usize,
    pub depth: usize,
    pub width: usize,
    /// Missing when the tree never played a tournament round.
    pub tscore: Option<f64>,
    pub reason: String,
}

/// Scans the hardest class for likely exploits.
///
/// A tree is flagged when its depth plus width is at most `size_threshold`
/// (too small to plausibly earn the class), or when it uses at most two
/// distinct action templates while holding a tournament score at or above
/// the class average (busy-looking trees whose conditions never let more
/// than a trick or two run).
pub fn exploit_scan(
    classes: &ClassPools,
    spec: &DifficultySpec,
    table: &TScoreTable,
    size_threshold: usize,
) -> Vec<ExploitFlag> {
    let ranked = spec.classes_by_rank();
    let Some(hardest) = ranked.first() else { return Vec::new() };
    let Some(pool) = classes.get(&hardest.name) else { return Vec::new() };
    let class_avg = table.class_average(pool);

    let mut flags = Vec::new();
    for entry in pool {
        let m = entry.tree.metrics();
        let tscore = table.tscore(&entry.tree.name);
        let mut reasons = Vec::new();
        if m.depth + m.width <= size_threshold {
            reasons.push(format!(
                "depth {} + width {} is at most {size_threshold}",
                m.depth, m.width
            ));
        }
        let actions = distinct_actions(&entry.tree.root);
        if actions <= 2 {
            if let (Some(score), Some(avg)) = (tscore, class_avg) {
                if score >= avg {
                    reasons.push(format!(
                        "{actions} distinct action template(s) with tournament score \
                         {score:.3} at or above the class average {avg:.3}"
                    ));
                }
            }
        }
        if !reasons.is_empty() {
            flags.push(ExploitFlag {
                tree: entry.tree.name.clone(),
                class: hardest.name.clone(),
                node_count: m.node_count,
                depth: m.depth,
                width: m.width,
                tscore,
                reason: reasons.join("; "),
            });
        }
    }
    flags
}

fn distinct_actions(root: &TreeNode) -> usize {
    let mut seen = BTreeSet::new();
    root.walk(&mut |n| {
        if let NodeKind::Action { template } = &n.kind {
            seen.insert(template.clone());
        }
    });
    seen.len()
}
