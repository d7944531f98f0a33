//! Tournament re-scoring of archived trees.
//!
//! Evolution scores a tree against whatever opponents its generation happens
//! to contain, so a tree can reach its class by beating a weak field. The
//! tournament replays the archive against its peers: each round draws a
//! batch of trees, plays one arena round, and scores every seat against that
//! tree's own class targets with the evolution fitness. A tree's tournament
//! score is its average over the seats it occupied; trees never drawn have
//! no average and drop out of the table.

use std::collections::BTreeMap;

use rand::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{run_round, AgentMetrics, ArenaConfig};
use crate::catalog::TemplateCatalog;
use crate::difficulty::DifficultySpec;
use crate::evolution::{fitness_of, ArchivedTree, EvalResult};
use crate::rng;
use crate::tree::{BehaviorTree, TreeLibrary};

/// Attempts one round slot gets before it is abandoned; resamples both the
/// batch and the round seed, so a single poisoned draw cannot wedge the run.
const MAX_ATTEMPTS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TournamentConfig {
    /// Rounds played per difficulty class.
    pub rounds: u32,
    /// Seats per round. Classes smaller than this repeat drawn trees across
    /// the remaining seats.
    pub batch_size: usize,
    /// Fraction of rounds whose batch is drawn from all classes pooled
    /// together instead of the round's own class.
    pub mix_fraction: f64,
}

impl Default for TournamentConfig {
    fn default() -> TournamentConfig {
        TournamentConfig { rounds: 64, batch_size: 8, mix_fraction: 0.0 }
    }
}

impl TournamentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.rounds == 0 {
            return Err("rounds: must be at least 1".to_owned());
        }
        if self.batch_size < 2 {
            return Err(format!("batch_size: need at least 2 seats, got {}", self.batch_size));
        }
        if !(0.0..=1.0).contains(&self.mix_fraction) {
            return Err(format!("mix_fraction: must be within 0..=1, got {}", self.mix_fraction));
        }
        Ok(())
    }
}

/// Running tally for one tree. A padded batch can seat the same tree twice;
/// each seat counts as one played round.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TreeScore {
    pub rounds_played: u32,
    pub score_sum: f64,
}

impl TreeScore {
    pub fn tscore(&self) -> f64 {
        self.score_sum / f64::from(self.rounds_played)
    }
}

/// Scores keyed by tree name. Trees that never got drawn have no entry and
/// do not survive the stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TScoreTable {
    pub scores: BTreeMap<String, TreeScore>,
    /// Round slots given up after repeated simulator failures.
    pub abandoned_rounds: u32,
}

impl TScoreTable {
    pub fn tscore(&self, name: &str) -> Option<f64> {
        self.scores.get(name).map(TreeScore::tscore)
    }

    /// Mean tournament score over the scored members of a pool; `None` when
    /// nothing in the pool was scored.
    pub fn class_average(&self, pool: &[ArchivedTree]) -> Option<f64> {
        let scored: Vec<f64> = pool.iter().filter_map(|t| self.tscore(&t.tree.name)).collect();
        if scored.is_empty() {
            None
        } else {
            Some(scored.iter().sum::<f64>() / scored.len() as f64)
        }
    }
}

#[derive(Debug, Error)]
pub enum TournamentError {
    #[error("invalid tournament configuration: {0}")]
    InvalidConfig(String),
}

/// Plays one tournament round. The arena runner is the production
/// implementation; tests substitute scripted outcomes.
pub trait RoundRunner {
    /// Returns one result per seat, or an error when the round cannot run at
    /// all (the caller discards the batch and redraws).
    fn play(&mut self, seats: &[&BehaviorTree], seed: u64) -> Result<Vec<EvalResult>, String>;
}

/// Rounds played in the real arena. `batch_size` must equal the arena's
/// agent count, which `new` enforces.
pub struct ArenaRoundRunner<'a> {
    catalog: &'a TemplateCatalog,
    library: &'a TreeLibrary,
    config: &'a ArenaConfig,
}

impl<'a> ArenaRoundRunner<'a> {
    pub fn new(
        catalog: &'a TemplateCatalog,
        library: &'a TreeLibrary,
        config: &'a ArenaConfig,
        tconfig: &TournamentConfig,
    ) -> Result<ArenaRoundRunner<'a>, String> {
        if tconfig.batch_size != config.agents {
            return Err(format!(
                "batch_size {} does not match the arena's {} agents",
                tconfig.batch_size, config.agents
            ));
        }
        Ok(ArenaRoundRunner { catalog, library, config })
    }
}

impl RoundRunner for ArenaRoundRunner<'_> {
    fn play(&mut self, seats: &[&BehaviorTree], seed: u64) -> Result<Vec<EvalResult>, String> {
        let outcome = run_round(seats, self.catalog, self.library, self.config, seed)
            .map_err(|e| e.to_string())?;
        Ok(outcome
            .feedback
            .agents
            .iter()
            .map(|agent| {
                if agent.crashed {
                    EvalResult { crashed: true, ..EvalResult::default() }
                } else {
                    let raw = AgentMetrics::METRIC_NAMES
                        .iter()
                        .map(|&name| {
                            (name.to_owned(), agent.metric(name).expect("known metric name"))
                        })
                        .collect();
                    EvalResult { raw, crashed: false }
                }
            })
            .collect())
    }
}

/// Plays `rounds` rounds per class and tallies every seat's score.
///
/// Empty classes are skipped with a warning. A failed round is logged,
/// discarded, and redrawn with a fresh batch and seed; a slot that keeps
/// failing is abandoned and counted on the table.
pub fn tournament(
    classes: &BTreeMap<String, Vec<ArchivedTree>>,
    spec: &DifficultySpec,
    tconfig: &TournamentConfig,
    runner: &mut dyn RoundRunner,
    seed: u64,
) -> Result<TScoreTable, TournamentError> {
    tconfig.validate().map_err(TournamentError::InvalidConfig)?;
    let mut table = TScoreTable::default();
    let everyone: Vec<&ArchivedTree> = classes.values().flatten().collect();

    for (class_name, pool) in classes {
        if pool.is_empty() {
            log::warn!("class {class_name} has no trees; skipping its tournament rounds");
            continue;
        }
        let own: Vec<&ArchivedTree> = pool.iter().collect();
        let class_seed = rng::sub_seed(seed, &format!("tournament-{class_name}"));
        let mut draw_rng = rng::stream(class_seed, 0);

        for round in 0..tconfig.rounds {
            let mixed = tconfig.mix_fraction > 0.0 && draw_rng.gen_bool(tconfig.mix_fraction);
            let source = if mixed { &everyone } else { &own };
            let mut played = false;
            for attempt in 0..MAX_ATTEMPTS {
                let batch = draw_batch(source, tconfig.batch_size, &mut draw_rng);
                let seats: Vec<&BehaviorTree> = batch.iter().map(|t| &t.tree).collect();
                let round_seed = rng::sub_seed(class_seed, &format!("round-{round}-{attempt}"));
                match runner.play(&seats, round_seed) {
                    Ok(results) if results.len() == seats.len() => {
                        credit(&mut table, spec, &batch, &results);
                        played = true;
                        break;
                    }
                    Ok(results) => log::warn!(
                        "class {class_name} round {round}: runner returned {} results for {} seats; redrawing",
                        results.len(),
                        seats.len()
                    ),
                    Err(err) => log::warn!(
                        "class {class_name} round {round} attempt {attempt} failed: {err}; redrawing"
                    ),
                }
            }
            if !played {
                log::error!(
                    "class {class_name} round {round}: abandoned after {MAX_ATTEMPTS} attempts"
                );
                table.abandoned_rounds += 1;
            }
        }
    }
    Ok(table)
}

/// Draws up to `size` distinct trees uniformly; when the source is smaller,
/// the drawn trees repeat across the remaining seats.
fn draw_batch<'t>(
    source: &[&'t ArchivedTree],
    size: usize,
    draw_rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<&'t ArchivedTree> {
    let take = size.min(source.len());
    let mut order: Vec<usize> = (0..source.len()).collect();
    let (chosen, _) = order.partial_shuffle(draw_rng, take);
    let mut batch: Vec<&ArchivedTree> = chosen.iter().map(|&i| source[i]).collect();
    for fill in 0..size - take {
        let repeat = batch[fill % take];
        batch.push(repeat);
    }
    batch
}

fn credit(
    table: &mut TScoreTable,
    spec: &DifficultySpec,
    batch: &[&ArchivedTree],
    results: &[EvalResult],
) {
    for (tree, res) in batch.iter().zip(results) {
        // Crashing earns nothing, same as during evolution scoring.
        let score = if res.crashed { 0.0 } else { fitness_of(spec, &tree.targets, &res.raw) };
        let entry = table.scores.entry(tree.tree.name.clone()).or_default();
        entry.rounds_played += 1;
        entry.score_sum += score;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::difficulty::{ClassMetric, ClassTargets, DifficultyClass, MetricSpec, MetricTarget};
    use crate::tree::TreeNode;

    /// One metric, one class per call site need; targets pin fitness math.
    fn spec() -> DifficultySpec {
        DifficultySpec {
            metrics: vec![MetricSpec::new("kills", 0.0, 10.0)],
            classes: vec![
                DifficultyClass {
                    name: "hard".to_owned(),
                    rank: 0,
                    metrics: vec![ClassMetric::new("kills", 1.0, (0.8, 1.0))],
                },
                DifficultyClass {
                    name: "easy".to_owned(),
                    rank: 1,
                    metrics: vec![ClassMetric::new("kills", 1.0, (0.0, 0.2))],
                },
            ],
            fitness_eps: 1e-4,
        }
    }

    fn archived(name: &str, class: &str, target: f64) -> ArchivedTree {
        ArchivedTree {
            tree: BehaviorTree::new(name, TreeNode::action(0, "idle")),
            fitness: 0.0,
            raw: BTreeMap::new(),
            targets: ClassTargets {
                class: class.to_owned(),
                targets: vec![MetricTarget {
                    metric: "kills".to_owned(),
                    weight: 1.0,
                    target,
                }],
            },
        }
    }

    fn pool(class: &str, names: &[&str], target: f64) -> Vec<ArchivedTree> {
        names.iter().map(|n| archived(n, class, target)).collect()
    }

    /// Serves every seat the same raw kill count.
    struct FlatRunner {
        kills: f64,
        failures_left: u32,
        calls: u32,
        batches: Vec<Vec<String>>,
    }

    impl FlatRunner {
        fn new(kills: f64) -> FlatRunner {
            FlatRunner { kills, failures_left: 0, calls: 0, batches: Vec::new() }
        }
    }

    impl RoundRunner for FlatRunner {
        fn play(&mut self, seats: &[&BehaviorTree], _seed: u64) -> Result<Vec<EvalResult>, String> {
            self.calls += 1;
            if self.failures_left > 0 {
                self.failures_left -= 1;
                return Err("scripted failure".to_owned());
            }
            self.batches.push(seats.iter().map(|t| t.name.clone()).collect());
            Ok(seats
                .iter()
                .map(|_| EvalResult {
                    raw: BTreeMap::from([("kills".to_owned(), self.kills)]),
                    crashed: false,
                })
                .collect())
        }
    }

    #[test]
    fn tscore_is_the_mean_round_score() {
        let t = TreeScore { rounds_played: 2, score_sum: 6.0 };
        assert_eq!(t.tscore(), 3.0);
    }

    #[test]
    fn every_seat_is_scored_against_its_own_targets() {
        let mut classes = BTreeMap::new();
        classes.insert("hard".to_owned(), pool("hard", &["h1", "h2"], 1.0));
        let tconfig = TournamentConfig { rounds: 3, batch_size: 2, mix_fraction: 0.0 };
        // 10 raw kills normalize to 1.0, exactly on target: every round
        // scores 1/eps, so each tree's average is 1/eps too.
        let mut runner = FlatRunner::new(10.0);
        let table = tournament(&classes, &spec(), &tconfig, &mut runner, 5).expect("valid config");
        assert_eq!(table.scores.len(), 2);
        for score in table.scores.values() {
            assert_eq!(score.rounds_played, 3);
            assert!((score.tscore() - 1e4).abs() < 1e-6);
        }
        assert_eq!(table.abandoned_rounds, 0);
    }

    #[test]
    fn participation_stays_uniform_over_many_rounds() {
        let names: Vec<String> = (0..8).map(|i| format!("t{i}")).collect();
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut classes = BTreeMap::new();
        classes.insert("hard".to_owned(), pool("hard", &name_refs, 1.0));
        let tconfig = TournamentConfig { rounds: 10_000, batch_size: 2, mix_fraction: 0.0 };
        let mut runner = FlatRunner::new(10.0);
        let table = tournament(&classes, &spec(), &tconfig, &mut runner, 9).expect("valid config");
        // Each tree's draw count is binomial(10^4, 1/4): mean 2500, three
        // standard deviations just under 130.
        for name in &names {
            let played = table.scores[name].rounds_played as f64;
            assert!((played - 2500.0).abs() < 130.0, "{name} played {played} rounds");
        }
    }

    #[test]
    fn undrawn_trees_have_no_table_entry() {
        let mut classes = BTreeMap::new();
        classes.insert("hard".to_owned(), pool("hard", &["a", "b", "c", "d", "e"], 1.0));
        let tconfig = TournamentConfig { rounds: 1, batch_size: 2, mix_fraction: 0.0 };
        let mut runner = FlatRunner::new(10.0);
        let table = tournament(&classes, &spec(), &tconfig, &mut runner, 5).expect("valid config");
        assert_eq!(table.scores.len(), 2, "one round seats exactly two trees");
    }

    #[test]
    fn failed_rounds_redraw_until_they_play() {
        let mut classes = BTreeMap::new();
        classes.insert("hard".to_owned(), pool("hard", &["a", "b"], 1.0));
        let tconfig = TournamentConfig { rounds: 2, batch_size: 2, mix_fraction: 0.0 };
        let mut runner = FlatRunner::new(10.0);
        runner.failures_left = 3;
        let table = tournament(&classes, &spec(), &tconfig, &mut runner, 5).expect("valid config");
        assert_eq!(table.abandoned_rounds, 0);
        let total_seats: u32 = table.scores.values().map(|s| s.rounds_played).sum();
        assert_eq!(total_seats, 4, "both rounds eventually played");
        assert_eq!(runner.calls, 2 + 3);
    }

    #[test]
    fn a_dead_simulator_cannot_wedge_the_tournament() {
        let mut classes = BTreeMap::new();
        classes.insert("hard".to_owned(), pool("hard", &["a", "b"], 1.0));
        let tconfig = TournamentConfig { rounds: 2, batch_size: 2, mix_fraction: 0.0 };
        let mut runner = FlatRunner::new(10.0);
        runner.failures_left = u32::MAX;
        let table = tournament(&classes, &spec(), &tconfig, &mut runner, 5).expect("valid config");
        assert_eq!(table.abandoned_rounds, 2);
        assert!(table.scores.is_empty());
    }

    #[test]
    fn short_pools_pad_seats_by_repeating() {
        let mut classes = BTreeMap::new();
        classes.insert("hard".to_owned(), pool("hard", &["solo"], 1.0));
        let tconfig = TournamentConfig { rounds: 2, batch_size: 3, mix_fraction: 0.0 };
        let mut runner = FlatRunner::new(10.0);
        let table = tournament(&classes, &spec(), &tconfig, &mut runner, 5).expect("valid config");
        assert_eq!(table.scores["solo"].rounds_played, 6, "three seats per round, twice");
    }

    #[test]
    fn per_class_rounds_never_mix_but_mixed_rounds_do() {
        let mut classes = BTreeMap::new();
        classes.insert("hard".to_owned(), pool("hard", &["h1", "h2", "h3"], 1.0));
        classes.insert("easy".to_owned(), pool("easy", &["e1", "e2", "e3"], 0.0));
        let unmixed = TournamentConfig { rounds: 20, batch_size: 2, mix_fraction: 0.0 };
        let mut runner = FlatRunner::new(10.0);
        tournament(&classes, &spec(), &unmixed, &mut runner, 5).expect("valid config");
        assert!(runner.batches.iter().all(|batch| {
            batch.iter().all(|n| n.starts_with('h')) || batch.iter().all(|n| n.starts_with('e'))
        }));

        let mixed = TournamentConfig { rounds: 20, batch_size: 2, mix_fraction: 1.0 };
        let mut runner = FlatRunner::new(10.0);
        tournament(&classes, &spec(), &mixed, &mut runner, 5).expect("valid config");
        assert!(runner.batches.iter().any(|batch| {
            batch.iter().any(|n| n.starts_with('h')) && batch.iter().any(|n| n.starts_with('e'))
        }));
    }

    #[test]
    fn mixed_seats_keep_their_own_targets() {
        let mut classes = BTreeMap::new();
        classes.insert("hard".to_owned(), pool("hard", &["h1", "h2"], 1.0));
        classes.insert("easy".to_owned(), pool("easy", &["e1", "e2"], 0.0));
        let tconfig = TournamentConfig { rounds: 50, batch_size: 2, mix_fraction: 1.0 };
        // Every seat kills 10 (normalized 1.0): on target for the hard
        // trees, a full unit away for the easy ones.
        let mut runner = FlatRunner::new(10.0);
        let table = tournament(&classes, &spec(), &tconfig, &mut runner, 5).expect("valid config");
        for hard in ["h1", "h2"] {
            assert!((table.tscore(hard).expect("drawn") - 1e4).abs() < 1e-6);
        }
        for easy in ["e1", "e2"] {
            let t = table.tscore(easy).expect("drawn");
            assert!((t - 1.0 / (1.0 + 1e-4)).abs() < 1e-9, "easy tscore {t}");
        }
    }

    #[test]
    fn crashed_seats_score_zero() {
        struct Crasher;
        impl RoundRunner for Crasher {
            fn play(&mut self, seats: &[&BehaviorTree], _: u64) -> Result<Vec<EvalResult>, String> {
                Ok(seats
                    .iter()
                    .enumerate()
                    .map(|(i, _)| EvalResult {
                        raw: BTreeMap::from([("kills".to_owned(), 10.0)]),
                        crashed: i == 0,
                    })
                    .collect())
            }
        }
        let mut classes = BTreeMap::new();
        classes.insert("hard".to_owned(), pool("hard", &["a", "b"], 1.0));
        let tconfig = TournamentConfig { rounds: 4, batch_size: 2, mix_fraction: 0.0 };
        let table =
            tournament(&classes, &spec(), &tconfig, &mut Crasher, 5).expect("valid config");
        let total: f64 = table.scores.values().map(|s| s.score_sum).sum();
        let seats: u32 = table.scores.values().map(|s| s.rounds_played).sum();
        assert_eq!(seats, 8);
        // Seat zero of every round contributes nothing.
        assert!((total - 4.0 * 1e4).abs() < 1e-5, "total {total}");
    }

    #[test]
    fn same_seed_same_table() {
        let mut classes = BTreeMap::new();
        classes.insert("hard".to_owned(), pool("hard", &["a", "b", "c"], 1.0));
        let tconfig = TournamentConfig { rounds: 10, batch_size: 2, mix_fraction: 0.0 };
        let run = |seed| {
            let mut runner = FlatRunner::new(10.0);
            tournament(&classes, &spec(), &tconfig, &mut runner, seed).expect("valid config")
        };
        assert_eq!(run(42), run(42));
    }

    #[test]
    fn bad_configs_are_refused() {
        let classes = BTreeMap::new();
        let mut runner = FlatRunner::new(0.0);
        for bad in [
            TournamentConfig { rounds: 0, ..TournamentConfig::default() },
            TournamentConfig { batch_size: 1, ..TournamentConfig::default() },
            TournamentConfig { mix_fraction: 1.5, ..TournamentConfig::default() },
        ] {
            assert!(tournament(&classes, &spec(), &bad, &mut runner, 1).is_err());
        }
    }
}
