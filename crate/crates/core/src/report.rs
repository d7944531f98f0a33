//! Renders a pipeline outcome as on-disk artifacts: per-class fitness CSVs,
//! the archived trees themselves, and tab-separated tables for the funnel,
//! tournament scores, pruning counts, clusters, coverage, and exploit flags,
//! plus a human-readable summary.
//!
//! Output is a pure function of the outcome: keys are sorted, floats are
//! printed with fixed precision, and nothing embeds a timestamp, so two runs
//! of the same config produce byte-identical directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::PipelineConfig;
use crate::difficulty::{ClassTargets, MetricTarget};
use crate::evolution::{ArchivedTree, EvolutionEvent, FunnelCounts};
use crate::harness::{CoverageReport, ExploitFlag};
use crate::pipeline::{PipelineOutcome, PruningCounts};
use crate::pruning::{ClassPools, ClusterAssignment, TScoreTable, TreeScore};
use crate::text;

#[derive(Debug, Error)]
#[error("writing {path}: {source}")]
pub struct ReportError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

/// A failure reading an artifact back in.
#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// One row per individual per generation, starting at generation zero.
pub fn render_fitness_csv(log: &[Vec<f64>]) -> String {
    let mut out = String::from("generation,individual,fitness\n");
    for (generation, row) in log.iter().enumerate() {
        for (individual, fitness) in row.iter().enumerate() {
            let _ = writeln!(out, "{generation},{individual},{fitness:.6}");
        }
    }
    out
}

pub fn render_funnel(funnel: &BTreeMap<String, FunnelCounts>) -> String {
    let mut out = String::from("class\tcreated\tcrashed\tdiscarded\tclassified\tunclassified\n");
    let mut total = FunnelCounts::default();
    for (class, f) in funnel {
        let _ = writeln!(
            out,
            "{class}\t{}\t{}\t{}\t{}\t{}",
            f.created, f.crashed, f.discarded, f.classified, f.unclassified
        );
        total.created += f.created;
        total.crashed += f.crashed;
        total.discarded += f.discarded;
        total.classified += f.classified;
        total.unclassified += f.unclassified;
    }
    let _ = writeln!(
        out,
        "total\t{}\t{}\t{}\t{}\t{}",
        total.created, total.crashed, total.discarded, total.classified, total.unclassified
    );
    out
}

pub fn render_tscores(table: &TScoreTable) -> String {
    let mut out = String::from("tree\trounds_played\tscore_sum\ttscore\n");
    for (tree, score) in &table.scores {
        let _ = writeln!(
            out,
            "{tree}\t{}\t{:.6}\t{:.6}",
            score.rounds_played,
            score.score_sum,
            score.tscore()
        );
    }
    out
}

pub fn render_pruning(pruning: &BTreeMap<String, PruningCounts>) -> String {
    let mut out =
        String::from("class\tinitial\trank_eliminated\tcluster_kept\tvote_removed\tkept\n");
    for (class, c) in pruning {
        let _ = writeln!(
            out,
            "{class}\t{}\t{}\t{}\t{}\t{}",
            c.initial, c.rank_eliminated, c.cluster_kept, c.vote_removed, c.kept
        );
    }
    out
}

pub fn render_clusters(clusters: &BTreeMap<String, ClusterAssignment>) -> String {
    let mut out = String::from("class\tcluster\ttree\tmedoid\n");
    for (class, assignment) in clusters {
        for (tree, &slot) in &assignment.members {
            let medoid = if assignment.medoids[slot] == *tree { "yes" } else { "no" };
            let _ = writeln!(out, "{class}\t{slot}\t{tree}\t{medoid}");
        }
    }
    out
}

pub fn render_coverage(coverage: &CoverageReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "template_coverage\t{}\t{}\t{:.4}",
        coverage.executed.len(),
        coverage.catalog_total,
        coverage.template_coverage()
    );
    for (kind, template) in &coverage.executed {
        let _ = writeln!(out, "executed\t{}\t{template}", kind.label());
    }
    for (from, to) in &coverage.transitions {
        let _ = writeln!(out, "transition\t{from}\t{to}");
    }
    for (key, buckets) in &coverage.param_buckets {
        let list: Vec<String> = buckets.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(out, "buckets\t{key}\t{}", list.join(","));
    }
    out
}

pub fn render_exploits(flags: &[ExploitFlag]) -> String {
    let mut out = String::from("class\ttree\tnodes\tdepth\twidth\ttscore\treason\n");
    for f in flags {
        let tscore = match f.tscore {
            Some(t) => format!("{t:.6}"),
            None => "-".to_owned(),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{tscore}\t{}",
            f.class, f.tree, f.node_count, f.depth, f.width, f.reason
        );
    }
    out
}

fn render_events(events: &[EvolutionEvent]) -> String {
    let parts: Vec<String> = events
        .iter()
        .map(|e| match e {
            EvolutionEvent::Plateau { generation } => format!("plateau@{generation}"),
            EvolutionEvent::RateRamp { generation, mutation_rate, crossover_rate } => {
                format!("ramp@{generation}({mutation_rate:.2}/{crossover_rate:.2})")
            }
            EvolutionEvent::Restart { generation } => format!("restart@{generation}"),
            EvolutionEvent::Stop { generation } => format!("stop@{generation}"),
        })
        .collect();
    parts.join(" ")
}

pub fn render_summary(config: &PipelineConfig, out: &PipelineOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "btforge pipeline summary");
    let _ = writeln!(s, "seed: {}", config.seed);
    let classes: Vec<&str> =
        config.difficulty.classes_by_rank().iter().map(|c| c.name.as_str()).collect();
    let _ = writeln!(s, "classes (hardest first): {}", classes.join(", "));
    let _ = writeln!(s);

    for class in classes {
        let _ = writeln!(s, "[{class}]");
        if let Some(f) = out.funnel.get(class) {
            let _ = writeln!(
                s,
                "  funnel: created {}, crashed {}, discarded {}, classified {}, unclassified {}",
                f.created, f.crashed, f.discarded, f.classified, f.unclassified
            );
        }
        if let Some(c) = out.pruning.get(class) {
            let _ = writeln!(
                s,
                "  pruning: archived {} -> rank elimination -{} -> cluster keeps {} -> votes -{} -> kept {}",
                c.initial, c.rank_eliminated, c.cluster_kept, c.vote_removed, c.kept
            );
        }
        if let Some(events) = out.events.get(class) {
            let _ = writeln!(s, "  events: {}", render_events(events));
        }
        let _ = writeln!(s);
    }

    let _ = writeln!(s, "tournament: {} trees scored, {} rounds abandoned", out.table.scores.len(), out.table.abandoned_rounds);
    let _ = writeln!(
        s,
        "coverage: {}/{} templates ({:.1}%), {} transitions, {} parameters bucketed",
        out.coverage.executed.len(),
        out.coverage.catalog_total,
        100.0 * out.coverage.template_coverage(),
        out.coverage.transitions.len(),
        out.coverage.param_buckets.len()
    );
    let _ = writeln!(s, "exploit flags: {}", out.flags.len());
    for f in &out.flags {
        let _ = writeln!(s, "  {} ({}): {}", f.tree, f.class, f.reason);
    }
    s
}

/// One archive class's index. Fitness and targets are printed with the full
/// round-trip float representation because [`load_archive`] rebuilds scoring
/// state from them; everything else is for human eyes.
pub fn render_index(pool: &[ArchivedTree]) -> String {
    let mut index = String::from("tree\tfitness\tdepth\twidth\tnodes\ttargets\n");
    for archived in pool {
        let m = archived.tree.metrics();
        let targets: Vec<String> = archived
            .targets
            .targets
            .iter()
            .map(|t| format!("{}:{}:{}", t.metric, t.weight, t.target))
            .collect();
        let _ = writeln!(
            index,
            "{}\t{}\t{}\t{}\t{}\t{}",
            archived.tree.name,
            archived.fitness,
            m.depth,
            m.width,
            m.node_count,
            targets.join(",")
        );
    }
    index
}

fn bad<T>(path: &Path, message: impl Into<String>) -> Result<T, ArchiveError> {
    Err(ArchiveError::Parse { path: path.to_owned(), message: message.into() })
}

fn read(path: &Path) -> Result<String, ArchiveError> {
    fs::read_to_string(path).map_err(|source| ArchiveError::Io { path: path.to_owned(), source })
}

/// Reads an archive directory (one subdirectory per class, each with an
/// `index.tsv` and the listed `.bt` files) back into class pools. The raw
/// metric snapshots are not persisted, so reloaded trees carry empty ones;
/// only evolution itself needs them.
pub fn load_archive(dir: &Path) -> Result<ClassPools, ArchiveError> {
    let mut pools = ClassPools::new();
    let entries =
        fs::read_dir(dir).map_err(|source| ArchiveError::Io { path: dir.to_owned(), source })?;
    let mut class_dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();

    for class_dir in class_dirs {
        let Some(class) = class_dir.file_name().and_then(|n| n.to_str()).map(str::to_owned)
        else {
            continue;
        };
        let index_path = class_dir.join("index.tsv");
        let index = read(&index_path)?;
        let mut pool = Vec::new();
        for line in index.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                return bad(&index_path, format!("expected 6 columns, got {}", fields.len()));
            }
            let name = fields[0];
            let Ok(fitness) = fields[1].parse::<f64>() else {
                return bad(&index_path, format!("{name}: bad fitness {:?}", fields[1]));
            };
            let mut targets = Vec::new();
            for part in fields[5].split(',').filter(|p| !p.is_empty()) {
                let pieces: Vec<&str> = part.split(':').collect();
                let parsed = match pieces.as_slice() {
                    [metric, weight, target] => weight
                        .parse::<f64>()
                        .and_then(|w| target.parse::<f64>().map(|t| (metric, w, t)))
                        .ok(),
                    _ => None,
                };
                let Some((metric, weight, target)) = parsed else {
                    return bad(&index_path, format!("{name}: bad target {part:?}"));
                };
                targets.push(MetricTarget { metric: (*metric).to_owned(), weight, target });
            }
            let tree_path = class_dir.join(format!("{name}.bt"));
            let tree = match text::parse(&read(&tree_path)?) {
                Ok(tree) => tree,
                Err(e) => return bad(&tree_path, e.to_string()),
            };
            if tree.name != name {
                return bad(
                    &tree_path,
                    format!("tree is named {:?} but the index says {name:?}", tree.name),
                );
            }
            pool.push(ArchivedTree {
                tree,
                fitness,
                raw: BTreeMap::new(),
                targets: ClassTargets { class: class.clone(), targets },
            });
        }
        pools.insert(class, pool);
    }
    Ok(pools)
}

/// Parses a `funnel.tsv` back into per-class counts; the trailing `total`
/// row is dropped and recomputable.
pub fn parse_funnel(text: &str) -> Result<BTreeMap<String, FunnelCounts>, String> {
    let mut funnel = BTreeMap::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(format!("expected 6 columns, got {}: {line:?}", fields.len()));
        }
        if fields[0] == "total" {
            continue;
        }
        let mut nums = [0u64; 5];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            *slot = field.parse::<u64>().map_err(|e| format!("{line:?}: {e}"))?;
        }
        funnel.insert(
            fields[0].to_owned(),
            FunnelCounts {
                created: nums[0],
                crashed: nums[1],
                discarded: nums[2],
                classified: nums[3],
                unclassified: nums[4],
            },
        );
    }
    Ok(funnel)
}

/// Parses a `tscores.tsv` back into a score table. Abandoned-round counts
/// live only in the summary, so the parsed table reports zero of them.
pub fn parse_tscores(text: &str) -> Result<TScoreTable, String> {
    let mut table = TScoreTable::default();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(format!("expected 4 columns, got {}: {line:?}", fields.len()));
        }
        let rounds_played = fields[1].parse::<u32>().map_err(|e| format!("{line:?}: {e}"))?;
        let score_sum = fields[2].parse::<f64>().map_err(|e| format!("{line:?}: {e}"))?;
        table.scores.insert(fields[0].to_owned(), TreeScore { rounds_played, score_sum });
    }
    Ok(table)
}

fn write_file(path: &Path, text: &str, written: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    fs::write(path, text).map_err(|source| ReportError { path: path.to_owned(), source })?;
    written.push(path.to_owned());
    Ok(())
}

/// Writes one subdirectory per class, each holding the class's `index.tsv`
/// and the archived trees as `.bt` files. Returns the paths written.
pub fn write_archive(dir: &Path, archives: &ClassPools) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = Vec::new();
    for (class, pool) in archives {
        let class_dir = dir.join(class);
        fs::create_dir_all(&class_dir)
            .map_err(|source| ReportError { path: class_dir.clone(), source })?;
        write_file(&class_dir.join("index.tsv"), &render_index(pool), &mut written)?;
        for archived in pool {
            write_file(
                &class_dir.join(format!("{}.bt", archived.tree.name)),
                &text::serialize(&archived.tree),
                &mut written,
            )?;
        }
    }
    Ok(written)
}

/// Writes every artifact under `dir` and returns the paths written, sorted.
pub fn write_all(
    dir: &Path,
    config: &PipelineConfig,
    out: &PipelineOutcome,
) -> Result<Vec<PathBuf>, ReportError> {
    let mkdir = |path: &Path| -> Result<(), ReportError> {
        fs::create_dir_all(path).map_err(|source| ReportError { path: path.to_owned(), source })
    };
    mkdir(dir)?;
    let mut written = Vec::new();

    for (class, log) in &out.fitness_logs {
        write_file(&dir.join(format!("fitness_{class}.csv")), &render_fitness_csv(log), &mut written)?;
    }

    written.extend(write_archive(&dir.join("archive"), &out.archives)?);

    write_file(&dir.join("funnel.tsv"), &render_funnel(&out.funnel), &mut written)?;
    write_file(&dir.join("tscores.tsv"), &render_tscores(&out.table), &mut written)?;
    write_file(&dir.join("pruning.tsv"), &render_pruning(&out.pruning), &mut written)?;
    write_file(&dir.join("clusters.tsv"), &render_clusters(&out.clusters), &mut written)?;
    write_file(&dir.join("coverage.tsv"), &render_coverage(&out.coverage), &mut written)?;
    write_file(&dir.join("exploits.tsv"), &render_exploits(&out.flags), &mut written)?;
    write_file(&dir.join("summary.txt"), &render_summary(config, out), &mut written)?;

    written.sort();
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::run_pipeline;
    use crate::pruning::TreeScore;

    #[test]
    fn fitness_csv_has_one_row_per_individual_per_generation() {
        let log = vec![vec![1.0, 2.0], vec![3.0, 4.5]];
        let csv = render_fitness_csv(&log);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "generation,individual,fitness");
        assert_eq!(lines[1], "0,0,1.000000");
        assert_eq!(lines[4], "1,1,4.500000");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn funnel_table_ends_with_the_column_sums() {
        let mut funnel = BTreeMap::new();
        funnel.insert(
            "easy".to_owned(),
            FunnelCounts { created: 10, crashed: 1, discarded: 5, classified: 3, unclassified: 1 },
        );
        funnel.insert(
            "hard".to_owned(),
            FunnelCounts { created: 6, crashed: 0, discarded: 2, classified: 4, unclassified: 0 },
        );
        let table = render_funnel(&funnel);
        assert!(table.lines().last().unwrap() == "total\t16\t1\t7\t7\t1", "{table}");
    }

    #[test]
    fn tscore_rows_divide_sum_by_rounds() {
        let mut table = TScoreTable::default();
        table.scores.insert("hard-001".into(), TreeScore { rounds_played: 4, score_sum: 6.0 });
        let text = render_tscores(&table);
        assert!(text.contains("hard-001\t4\t6.000000\t1.500000"), "{text}");
    }

    #[test]
    fn exploit_rows_print_a_dash_for_unscored_trees() {
        let flags = vec![ExploitFlag {
            tree: "hard-002".into(),
            class: "hard".into(),
            node_count: 3,
            depth: 1,
            width: 2,
            tscore: None,
            reason: "depth+width 3 at or under 4".into(),
        }];
        let text = render_exploits(&flags);
        assert!(text.contains("hard-002\t3\t1\t2\t-\tdepth"), "{text}");
    }

    #[test]
    fn artifacts_are_byte_identical_across_reruns() {
        let config = crate::pipeline::tests::tiny_config();
        let out = run_pipeline(&config).expect("pipeline runs");

        let dir_a = tempfile::tempdir().expect("tempdir a");
        let dir_b = tempfile::tempdir().expect("tempdir b");
        let files_a = write_all(dir_a.path(), &config, &out).expect("write a");
        let out2 = run_pipeline(&config).expect("second run");
        let files_b = write_all(dir_b.path(), &config, &out2).expect("write b");

        let rel = |files: &[PathBuf], base: &Path| -> Vec<PathBuf> {
            files.iter().map(|f| f.strip_prefix(base).unwrap().to_owned()).collect()
        };
        assert_eq!(rel(&files_a, dir_a.path()), rel(&files_b, dir_b.path()));
        for file in rel(&files_a, dir_a.path()) {
            let a = fs::read(dir_a.path().join(&file)).expect("read a");
            let b = fs::read(dir_b.path().join(&file)).expect("read b");
            assert_eq!(a, b, "{} differs between reruns", file.display());
        }
    }

    #[test]
    fn the_expected_artifact_set_appears() {
        let config = crate::pipeline::tests::tiny_config();
        let out = run_pipeline(&config).expect("pipeline runs");
        let dir = tempfile::tempdir().expect("tempdir");
        let files = write_all(dir.path(), &config, &out).expect("write");

        for name in [
            "funnel.tsv",
            "tscores.tsv",
            "pruning.tsv",
            "clusters.tsv",
            "coverage.tsv",
            "exploits.tsv",
            "summary.txt",
            "fitness_hard.csv",
            "fitness_easy.csv",
        ] {
            assert!(files.contains(&dir.path().join(name)), "missing {name}");
        }
        for (class, pool) in &out.archives {
            for archived in pool {
                let bt = dir.path().join(format!("archive/{class}/{}.bt", archived.tree.name));
                assert!(bt.is_file(), "missing {}", bt.display());
                let parsed = text::parse(&fs::read_to_string(&bt).unwrap()).expect("parses back");
                assert_eq!(parsed.root, archived.tree.root);
            }
        }
        let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(summary.contains("seed: 11"), "{summary}");
    }

    #[test]
    fn archive_round_trips_with_exact_fitness_and_targets() {
        let config = crate::pipeline::tests::tiny_config();
        let out = run_pipeline(&config).expect("pipeline runs");
        let dir = tempfile::tempdir().expect("tempdir");
        write_all(dir.path(), &config, &out).expect("write");

        let pools = load_archive(&dir.path().join("archive")).expect("reload");
        assert_eq!(pools.keys().collect::<Vec<_>>(), out.archives.keys().collect::<Vec<_>>());
        for (class, pool) in &out.archives {
            let reloaded = &pools[class];
            assert_eq!(reloaded.len(), pool.len());
            for (a, b) in pool.iter().zip(reloaded) {
                assert_eq!(a.tree.name, b.tree.name);
                assert_eq!(a.tree.root, b.tree.root);
                assert_eq!(a.fitness, b.fitness, "fitness must survive the round trip exactly");
                assert_eq!(a.targets.targets, b.targets.targets);
            }
        }
    }

    #[test]
    fn funnel_and_tscore_tables_round_trip() {
        let mut funnel = BTreeMap::new();
        funnel.insert(
            "hard".to_owned(),
            FunnelCounts { created: 9, crashed: 2, discarded: 3, classified: 4, unclassified: 0 },
        );
        assert_eq!(parse_funnel(&render_funnel(&funnel)).expect("parses"), funnel);

        let mut table = TScoreTable::default();
        table.scores.insert("hard-001".into(), TreeScore { rounds_played: 7, score_sum: 2.5 });
        let back = parse_tscores(&render_tscores(&table)).expect("parses");
        assert_eq!(back.scores["hard-001"].rounds_played, 7);
        assert!((back.scores["hard-001"].score_sum - 2.5).abs() < 1e-9);
    }

    #[test]
    fn a_mangled_index_names_the_file_and_the_problem() {
        let dir = tempfile::tempdir().expect("tempdir");
        let class_dir = dir.path().join("hard");
        fs::create_dir_all(&class_dir).expect("mkdir");
        fs::write(class_dir.join("index.tsv"), "tree\tfitness\tdepth\twidth\tnodes\ttargets\nx\tnot-a-number\t1\t1\t1\t\n").expect("write");
        let err = load_archive(dir.path()).expect_err("bad fitness");
        let msg = err.to_string();
        assert!(msg.contains("index.tsv") && msg.contains("bad fitness"), "{msg}");
    }
}
