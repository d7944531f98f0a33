//! The batch pipeline: evolve a population per difficulty class, score the
//! combined archive in a tournament, eliminate by rank, cluster each class
//! down to representatives, apply community votes, then run coverage and
//! exploit scans over what survived.
//!
//! [`run_pipeline`] is pure computation over a [`PipelineConfig`] (plus reads
//! of the seed-tree and vote files named there); writing artifacts to disk is
//! [`crate::report`]'s job. Every stage draws from a named substream of the
//! master seed, so a config and a seed reproduce the run bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use thiserror::Error;

use crate::arena::{builtin_catalog, run_round};
use crate::catalog::TemplateCatalog;
use crate::config::PipelineConfig;
use crate::evolution::{run_evolution, ArenaEvaluator, EvolutionEvent, FunnelCounts};
use crate::harness::{coverage, exploit_scan, CoverageReport, ExploitFlag};
use crate::pruning::{
    cluster, eliminate_by_rank, ingest_votes, parse_votes, tournament, ArenaRoundRunner,
    ClassPools, ClusterAssignment, Similarity, TScoreTable,
};
use crate::rng;
use crate::text;
use crate::tree::{BehaviorTree, TreeLibrary};
use crate::validate::validate;

/// How one class's pool shrank on its way through the pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PruningCounts {
    /// Archive size coming out of evolution.
    pub initial: usize,
    /// Removed by rank elimination after the tournament.
    pub rank_eliminated: usize,
    /// Representatives the clustering stage kept.
    pub cluster_kept: usize,
    /// Removed by community votes.
    pub vote_removed: usize,
    /// Final pool size.
    pub kept: usize,
}

/// Everything a pipeline run produces, keyed by class where applicable.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// Where every individual created during evolution ended up.
    pub funnel: BTreeMap<String, FunnelCounts>,
    /// Plateau, ramp, restart, and stop events per class.
    pub events: BTreeMap<String, Vec<EvolutionEvent>>,
    /// Fitness of every individual per generation, per class.
    pub fitness_logs: BTreeMap<String, Vec<Vec<f64>>>,
    /// The surviving trees after every pruning stage.
    pub archives: ClassPools,
    /// Tournament scores over the pre-elimination archive.
    pub table: TScoreTable,
    pub pruning: BTreeMap<String, PruningCounts>,
    /// Cluster assignment per class; absent for classes that reached the
    /// clustering stage empty.
    pub clusters: BTreeMap<String, ClusterAssignment>,
    /// Template, transition, and parameter-bucket coverage of one showcase
    /// round per surviving class.
    pub coverage: CoverageReport,
    /// Suspiciously small or repetitive trees in the hardest class.
    pub flags: Vec<ExploitFlag>,
}

/// A failure in one stage, tagged with the stage name.
#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

fn fail(stage: &'static str, message: impl Into<String>) -> PipelineError {
    PipelineError { stage, message: message.into() }
}

/// Parses the seed-tree files into a library (so proxies among them resolve)
/// and checks each against the catalog.
pub fn load_seeds(
    config: &PipelineConfig,
    catalog: &TemplateCatalog,
) -> Result<(Vec<BehaviorTree>, TreeLibrary), PipelineError> {
    let mut seeds = Vec::new();
    let mut library = TreeLibrary::new();
    for path in &config.seed_trees {
        let text = fs::read_to_string(path)
            .map_err(|e| fail("seeds", format!("reading {}: {e}", path.display())))?;
        let tree = text::parse(&text)
            .map_err(|e| fail("seeds", format!("{}: {e}", path.display())))?;
        if library.contains_key(&tree.name) {
            return Err(fail(
                "seeds",
                format!("{}: duplicate tree name {:?}", path.display(), tree.name),
            ));
        }
        library.insert(tree.name.clone(), tree.clone());
        seeds.push(tree);
    }
    for tree in &seeds {
        let violations = validate(tree, catalog, &library);
        if let Some(v) = violations.first() {
            return Err(fail("seeds", format!("tree {:?}: {v}", tree.name)));
        }
    }
    Ok((seeds, library))
}

/// The evolution stage's outputs for every class.
#[derive(Debug, Clone)]
pub struct EvolvedClasses {
    pub funnel: BTreeMap<String, FunnelCounts>,
    pub events: BTreeMap<String, Vec<EvolutionEvent>>,
    pub fitness_logs: BTreeMap<String, Vec<Vec<f64>>>,
    pub pools: ClassPools,
}

/// Runs the genetic loop once per class, hardest first, each with its own
/// evaluator and named sub-seeds.
pub fn evolve_classes(
    config: &PipelineConfig,
    catalog: &TemplateCatalog,
    seeds: &[BehaviorTree],
    library: &TreeLibrary,
) -> Result<EvolvedClasses, PipelineError> {
    let seed = config.seed;
    let mut out = EvolvedClasses {
        funnel: BTreeMap::new(),
        events: BTreeMap::new(),
        fitness_logs: BTreeMap::new(),
        pools: ClassPools::new(),
    };

    for class in config.difficulty.classes_by_rank() {
        let name = class.name.clone();
        let mut evaluator = ArenaEvaluator::new(
            catalog.clone(),
            library.clone(),
            config.arena.clone(),
            config.evaluation.rounds_per_individual,
            rng::sub_seed(seed, &format!("rounds-{name}")),
        )
        .and_then(|e| e.with_jobs(config.evaluation.jobs))
        .map_err(|e| fail("evolve", format!("{name}: {e}")))?;

        let outcome = run_evolution(
            &config.evolution,
            &config.difficulty,
            &name,
            seeds,
            catalog,
            &mut evaluator,
            rng::sub_seed(seed, &format!("evolve-{name}")),
        )
        .map_err(|e| fail("evolve", format!("{name}: {e}")))?;

        out.funnel.insert(name.clone(), outcome.funnel);
        out.events.insert(name.clone(), outcome.events);
        out.fitness_logs.insert(name.clone(), outcome.fitness_log);
        out.pools.insert(name, outcome.archived);
    }
    Ok(out)
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    config.validate().map_err(|e| fail("config", e.to_string()))?;
    let map = config.arena.map().map_err(|e| fail("config", e))?;
    let catalog = builtin_catalog(&map);
    let (seeds, library) = load_seeds(config, &catalog)?;
    let seed = config.seed;

    let evolved = evolve_classes(config, &catalog, &seeds, &library)?;
    let EvolvedClasses { funnel, events, fitness_logs, mut pools } = evolved;
    let mut pruning: BTreeMap<String, PruningCounts> = BTreeMap::new();
    for (class, pool) in &pools {
        pruning.entry(class.clone()).or_default().initial = pool.len();
    }

    let mut runner = ArenaRoundRunner::new(&catalog, &library, &config.arena, &config.tournament)
        .map_err(|e| fail("tournament", e))?;
    let table = tournament(
        &pools,
        &config.difficulty,
        &config.tournament,
        &mut runner,
        rng::sub_seed(seed, "tournament"),
    )
    .map_err(|e| fail("tournament", e.to_string()))?;

    for (class, tree) in eliminate_by_rank(&mut pools, &config.difficulty, &table) {
        log::info!("rank elimination dropped {tree} from {class}");
        pruning.entry(class).or_default().rank_eliminated += 1;
    }

    let sim = Similarity::new(&catalog);
    let mut clusters = BTreeMap::new();
    for (class, pool) in pools.iter_mut() {
        if pool.is_empty() {
            log::warn!("class {class}: nothing survived to the clustering stage");
            continue;
        }
        let mut k = config.cluster.k_for(class);
        if k > pool.len() {
            log::warn!("class {class}: K {k} exceeds the {} survivors, clamping", pool.len());
            k = pool.len();
        }
        let trees: Vec<&BehaviorTree> = pool.iter().map(|a| &a.tree).collect();
        let assignment =
            cluster(&trees, k, &sim, rng::sub_seed(seed, &format!("cluster-{class}")))
                .map_err(|e| fail("cluster", format!("{class}: {e}")))?;
        let keep: BTreeSet<&String> = assignment.medoids.iter().collect();
        pool.retain(|a| keep.contains(&a.tree.name));
        pruning.entry(class.clone()).or_default().cluster_kept = pool.len();
        clusters.insert(class.clone(), assignment);
    }

    if let Some(path) = &config.votes.file {
        let text = fs::read_to_string(path)
            .map_err(|e| fail("votes", format!("reading {}: {e}", path.display())))?;
        let votes = parse_votes(&text).map_err(|e| fail("votes", e.to_string()))?;
        for (class, tree) in ingest_votes(&mut pools, &votes, config.votes.threshold) {
            log::info!("votes removed {tree} from {class}");
            pruning.entry(class).or_default().vote_removed += 1;
        }
    }

    for (class, pool) in &pools {
        pruning.entry(class.clone()).or_default().kept = pool.len();
    }

    let mut traces = Vec::new();
    for (class, pool) in &pools {
        if pool.is_empty() {
            continue;
        }
        let seats: Vec<&BehaviorTree> =
            (0..config.arena.agents).map(|i| &pool[i % pool.len()].tree).collect();
        let outcome = run_round(
            &seats,
            &catalog,
            &library,
            &config.arena,
            rng::sub_seed(seed, &format!("showcase-{class}")),
        )
        .map_err(|e| fail("showcase", format!("{class}: {e}")))?;
        traces.push(outcome.trace);
    }
    let coverage = coverage(&traces, &catalog);

    let flags = exploit_scan(&pools, &config.difficulty, &table, config.exploit_size_threshold);

    Ok(PipelineOutcome {
        funnel,
        events,
        fitness_logs,
        archives: pools,
        table,
        pruning,
        clusters,
        coverage,
        flags,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::arena::ArenaConfig;
    use crate::config::{ClusterConfig, EvaluationConfig, VoteConfig};
    use crate::difficulty::{ClassMetric, DifficultyClass, DifficultySpec, MetricSpec};
    use crate::evolution::EvolutionParams;
    use crate::pruning::TournamentConfig;
    use std::path::PathBuf;

    /// A tiny run that still exercises every stage: two agents, short rounds,
    /// two classes with wide-open bands so the archive fills quickly.
    pub(crate) fn tiny_config() -> PipelineConfig {
        let map_rows: Vec<String> = vec![
            "##########".into(),
            "#........#".into(),
            "#........#".into(),
            "#........#".into(),
            "#........#".into(),
            "##########".into(),
        ];
        PipelineConfig {
            seed: 11,
            out_dir: PathBuf::from("unused"),
            seed_trees: Vec::new(),
            exploit_size_threshold: 4,
            arena: ArenaConfig {
                map_rows,
                agents: 2,
                round_ticks: 60,
                box_spawn_period: 1_000_000,
                ..ArenaConfig::default()
            },
            difficulty: DifficultySpec {
                metrics: vec![
                    MetricSpec::new("kills", 0.0, 10.0),
                    MetricSpec::new("distance", 0.0, 500.0),
                ],
                classes: vec![
                    DifficultyClass {
                        name: "hard".into(),
                        rank: 0,
                        metrics: vec![ClassMetric::new("kills", 1.0, (0.0, 1.0))],
                    },
                    DifficultyClass {
                        name: "easy".into(),
                        rank: 1,
                        metrics: vec![ClassMetric::new("distance", 1.0, (0.0, 1.0))],
                    },
                ],
                ..DifficultySpec::default()
            },
            evolution: EvolutionParams {
                pop_size: 6,
                generations: 3,
                prune_probability: 0.0,
                ..EvolutionParams::default()
            },
            evaluation: EvaluationConfig { rounds_per_individual: 1, jobs: 0 },
            tournament: TournamentConfig { rounds: 4, batch_size: 2, mix_fraction: 0.0 },
            cluster: ClusterConfig { default_k: 2, k_per_class: BTreeMap::new() },
            votes: VoteConfig::default(),
        }
    }

    #[test]
    fn every_stage_reports_and_counts_are_consistent() {
        let config = tiny_config();
        let out = run_pipeline(&config).expect("pipeline runs");

        for class in ["hard", "easy"] {
            assert!(out.funnel[class].is_partition(), "{class}: {:?}", out.funnel[class]);
            let generations = config.evolution.generations as usize;
            assert_eq!(out.fitness_logs[class].len(), generations + 1, "gen zero plus bred");
            let counts = out.pruning[class];
            assert_eq!(out.archives[class].len(), counts.kept);
            assert!(counts.kept <= counts.initial);
            if counts.initial > 0 {
                assert!(counts.cluster_kept <= config.cluster.default_k.max(1));
            }
        }
        assert!(out.coverage.catalog_total > 0);
    }

    #[test]
    fn same_config_same_outcome() {
        let config = tiny_config();
        let a = run_pipeline(&config).expect("first run");
        let b = run_pipeline(&config).expect("second run");
        assert_eq!(a.table.scores, b.table.scores);
        assert_eq!(a.clusters, b.clusters);
        let names = |o: &PipelineOutcome| -> Vec<(String, Vec<String>)> {
            o.archives
                .iter()
                .map(|(c, p)| (c.clone(), p.iter().map(|t| t.tree.name.clone()).collect()))
                .collect()
        };
        assert_eq!(names(&a), names(&b));
        assert_eq!(a.coverage.executed, b.coverage.executed);
    }

    #[test]
    fn a_different_seed_changes_the_run() {
        let config = tiny_config();
        let mut other = tiny_config();
        other.seed = 12;
        let a = run_pipeline(&config).expect("seed 11");
        let b = run_pipeline(&other).expect("seed 12");
        assert_ne!(
            (a.table.scores, a.fitness_logs),
            (b.table.scores, b.fitness_logs),
            "different master seeds should not replay the identical run"
        );
    }

    #[test]
    fn seed_trees_join_the_population_and_the_library() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("camper.bt");
        let tree = crate::tree::BehaviorTree::new(
            "camper",
            crate::tree::TreeNode::action(1, "idle"),
        );
        fs::write(&path, text::serialize(&tree)).expect("write seed");

        let mut config = tiny_config();
        config.seed_trees = vec![path];
        run_pipeline(&config).expect("seeded pipeline runs");
    }

    #[test]
    fn a_broken_seed_file_is_a_seeds_stage_error() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("bad.bt");
        fs::write(&path, "this is not a tree").expect("write junk");

        let mut config = tiny_config();
        config.seed_trees = vec![path];
        let err = run_pipeline(&config).expect_err("junk seed file");
        assert_eq!(err.stage, "seeds");
    }

    #[test]
    fn votes_remove_trees_before_the_showcase() {
        let config = tiny_config();
        let base = run_pipeline(&config).expect("base run");
        let Some((class, pool)) = base.archives.iter().find(|(_, p)| !p.is_empty()) else {
            panic!("expected at least one surviving class");
        };
        let target = pool[0].tree.name.clone();

        let dir = tempfile::tempdir().expect("tempdir");
        let votes = dir.path().join("votes.tsv");
        fs::write(&votes, format!("{target}\talice\n{target}\tbob\n")).expect("write votes");

        let mut voted = tiny_config();
        voted.votes = VoteConfig { file: Some(votes), threshold: 2 };
        let out = run_pipeline(&voted).expect("voted run");
        assert!(
            !out.archives[class].iter().any(|t| t.tree.name == target),
            "{target} should have been voted out of {class}"
        );
        assert_eq!(out.pruning[class].vote_removed, 1);
    }

    #[test]
    fn invalid_config_fails_in_the_config_stage() {
        let mut config = tiny_config();
        config.evolution.pop_size = 1;
        let err = run_pipeline(&config).expect_err("population of one");
        assert_eq!(err.stage, "config");
    }
}
