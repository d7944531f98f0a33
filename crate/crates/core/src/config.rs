//! One TOML file configures the whole batch pipeline.
//!
//! Every section is optional and falls back to its documented default, so a
//! minimal config can be a handful of lines. Section names mirror the
//! subsystems they feed:
//!
//! ```toml
//! seed = 7
//! out_dir = "out"
//! seed_trees = ["seeds/rusher.bt"]
//!
//! [arena]        # world geometry and combat tuning
//! [difficulty]   # metric bounds and class bands
//! [evolution]    # population size, operator rates, size caps
//! [evaluation]   # rounds per individual, worker threads
//! [tournament]   # rounds per class, seats per round, mixing
//! [cluster]      # representatives kept per class
//! [votes]        # community vote file and removal threshold
//! ```
//!
//! Relative paths (`seed_trees`, `votes.file`) are resolved against the
//! directory containing the config file, so a config can be loaded from
//! anywhere.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::ArenaConfig;
use crate::difficulty::DifficultySpec;
use crate::evolution::EvolutionParams;
use crate::pruning::TournamentConfig;

/// How many seating batches each individual plays per generation, and how
/// wide the worker pool is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Rounds each individual is seated in per generation; its raw metrics
    /// are averaged across them.
    pub rounds_per_individual: usize,
    /// Worker threads for generation scoring; 0 runs on the calling thread.
    pub jobs: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { rounds_per_individual: 3, jobs: 0 }
    }
}

/// Representatives kept per class by the clustering stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// K for classes without an explicit override.
    pub default_k: usize,
    /// Per-class K, keyed by class name.
    pub k_per_class: BTreeMap<String, usize>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { default_k: 2, k_per_class: BTreeMap::new() }
    }
}

impl ClusterConfig {
    pub fn k_for(&self, class: &str) -> usize {
        self.k_per_class.get(class).copied().unwrap_or(self.default_k)
    }
}

/// Community vote ingestion: a tab-separated file of `tree<TAB>voter` lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoteConfig {
    /// Votes file; the stage is skipped when unset.
    pub file: Option<PathBuf>,
    /// Distinct voters needed before a tree is dropped.
    pub threshold: u32,
}

impl Default for VoteConfig {
    fn default() -> Self {
        VoteConfig { file: None, threshold: 2 }
    }
}

/// The full pipeline configuration. [`load_config`] reads, parses, and
/// validates one from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage derives its own named stream from it, so one
    /// number reproduces the entire run.
    pub seed: u64,
    /// Artifact directory, created on demand.
    pub out_dir: PathBuf,
    /// Behavior-tree files the initial population starts from; the remainder
    /// of the population is generated randomly. The files also form the
    /// library that proxy nodes resolve against.
    pub seed_trees: Vec<PathBuf>,
    /// Trees at or under this depth+width in the hardest class get
    /// exploit-scanned.
    pub exploit_size_threshold: usize,
    pub arena: ArenaConfig,
    pub difficulty: DifficultySpec,
    pub evolution: EvolutionParams,
    pub evaluation: EvaluationConfig,
    pub tournament: TournamentConfig,
    pub cluster: ClusterConfig,
    pub votes: VoteConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            out_dir: PathBuf::from("out"),
            seed_trees: Vec::new(),
            exploit_size_threshold: 6,
            arena: ArenaConfig::default(),
            difficulty: DifficultySpec::default(),
            evolution: EvolutionParams::default(),
            evaluation: EvaluationConfig::default(),
            tournament: TournamentConfig::default(),
            cluster: ClusterConfig::default(),
            votes: VoteConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("{section}: {message}")]
    Invalid { section: &'static str, message: String },
}

impl PipelineConfig {
    /// Rejects contradictions a single section cannot see on its own, on top
    /// of each section's own validation. Class names double as directory and
    /// file-name stems, so they are restricted to a filesystem-safe charset.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |section, message| Err(ConfigError::Invalid { section, message });

        if let Err(e) = self.arena.validate() {
            return invalid("arena", e);
        }
        if let Err(e) = self.difficulty.validate() {
            return invalid("difficulty", e);
        }
        if let Err(e) = self.evolution.validate() {
            return invalid("evolution", e);
        }
        if let Err(e) = self.tournament.validate() {
            return invalid("tournament", e);
        }
        if self.tournament.batch_size != self.arena.agents {
            return invalid(
                "tournament",
                format!(
                    "batch_size ({}) must equal arena.agents ({}); every round seats a full arena",
                    self.tournament.batch_size, self.arena.agents
                ),
            );
        }
        if self.evaluation.rounds_per_individual == 0 {
            return invalid("evaluation", "rounds_per_individual must be positive".into());
        }
        if self.cluster.default_k == 0 {
            return invalid("cluster", "default_k must be positive".into());
        }
        for (class, &k) in &self.cluster.k_per_class {
            if k == 0 {
                return invalid("cluster", format!("k_per_class.{class} must be positive"));
            }
            if self.difficulty.class(class).is_none() {
                return invalid("cluster", format!("k_per_class.{class}: unknown class"));
            }
        }
        if self.votes.threshold == 0 {
            return invalid("votes", "threshold must be positive".into());
        }
        if self.exploit_size_threshold == 0 {
            return invalid("exploit_size_threshold", "must be positive".into());
        }
        for class in &self.difficulty.classes {
            let ok = !class.name.is_empty()
                && class
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok {
                return invalid(
                    "difficulty",
                    format!(
                        "class name {:?} must be ASCII letters, digits, '-' or '_' \
                         (it names archive files)",
                        class.name
                    ),
                );
            }
        }
        Ok(())
    }
}

/// Reads, parses, and validates a pipeline config. Relative `seed_trees` and
/// `votes.file` paths are rebased onto the config file's directory.
pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    let mut config: PipelineConfig = toml::from_str(&text)
        .map_err(|source| ConfigError::Parse { path: path.to_owned(), source: Box::new(source) })?;
    config.validate()?;

    let base = path.parent().unwrap_or(Path::new("."));
    for tree in &mut config.seed_trees {
        if tree.is_relative() {
            *tree = base.join(&tree);
        }
    }
    if let Some(file) = &mut config.votes.file {
        if file.is_relative() {
            *file = base.join(&file);
        }
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_config(dir: &Path, text: &str) -> PathBuf {
        let path = dir.join("pipeline.toml");
        let mut f = fs::File::create(&path).expect("create config");
        f.write_all(text.as_bytes()).expect("write config");
        path
    }

    #[test]
    fn empty_file_yields_the_documented_defaults() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = write_config(dir.path(), "");
        let config = load_config(&path).expect("defaults are valid");
        assert_eq!(config, PipelineConfig::default());
        assert_eq!(config.evolution.mutation_rate, 0.2);
        assert_eq!(config.evolution.crossover_rate, 0.1);
        assert_eq!(config.evolution.generations, 50);
    }

    #[test]
    fn partial_override_keeps_the_rest() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = write_config(
            dir.path(),
            "seed = 99\n[evolution]\npop_size = 40\n[cluster]\ndefault_k = 5\n",
        );
        let config = load_config(&path).expect("valid");
        assert_eq!(config.seed, 99);
        assert_eq!(config.evolution.pop_size, 40);
        assert_eq!(config.evolution.mutation_rate, 0.2);
        assert_eq!(config.cluster.k_for("hard"), 5);
    }

    #[test]
    fn selection_shares_off_by_half_name_the_problem() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = write_config(
            dir.path(),
            "[evolution]\nelite_fraction = 0.5\nroulette_fraction = 0.5\nrandom_fraction = 0.5\n",
        );
        let err = load_config(&path).expect_err("shares do not sum to 1");
        let msg = err.to_string();
        assert!(msg.starts_with("evolution:"), "section tag missing: {msg}");
        assert!(msg.contains("selection shares must sum to 1"), "{msg}");
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = write_config(dir.path(), "[evolution]\npopsize = 40\n");
        let err = load_config(&path).expect_err("typo must not be silently dropped");
        assert!(err.to_string().contains("popsize"), "{err}");
    }

    #[test]
    fn empty_class_list_is_refused_up_front() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = write_config(dir.path(), "[difficulty]\nclasses = []\n");
        let err = load_config(&path).expect_err("no classes to evolve for");
        let msg = err.to_string();
        assert!(msg.starts_with("difficulty:") && msg.contains("at least one"), "{msg}");
    }

    #[test]
    fn batch_size_must_match_the_arena_seating() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = write_config(dir.path(), "[tournament]\nbatch_size = 3\n");
        let err = load_config(&path).expect_err("three seats in an eight-agent arena");
        let msg = err.to_string();
        assert!(msg.contains("batch_size (3)") && msg.contains("arena.agents (8)"), "{msg}");
    }

    #[test]
    fn cluster_override_for_an_unknown_class_is_refused() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = write_config(dir.path(), "[cluster]\nk_per_class = { nightmare = 3 }\n");
        let err = load_config(&path).expect_err("no such class");
        assert!(err.to_string().contains("k_per_class.nightmare"), "{err}");
    }

    #[test]
    fn relative_paths_are_rebased_onto_the_config_dir() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = write_config(
            dir.path(),
            "seed_trees = [\"seeds/a.bt\"]\n[votes]\nfile = \"votes.tsv\"\n",
        );
        let config = load_config(&path).expect("valid");
        assert_eq!(config.seed_trees[0], dir.path().join("seeds/a.bt"));
        assert_eq!(config.votes.file.as_deref(), Some(dir.path().join("votes.tsv").as_path()));
    }

    #[test]
    fn missing_file_reports_the_path() {
        let err = load_config(Path::new("/nonexistent/pipeline.toml")).expect_err("no file");
        assert!(matches!(err, ConfigError::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/pipeline.toml"));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = PipelineConfig::default();
        let text = toml::to_string(&config).expect("serializes");
        let back: PipelineConfig = toml::from_str(&text).expect("parses");
        assert_eq!(back, config);
    }
}
