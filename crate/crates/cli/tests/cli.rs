//! End-to-end tests of the `btforge` binary: artifact completeness,
//! rerun determinism, argument validation, and the standalone subcommands
//! consuming each other's outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn btforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_btforge"))
        .args(args)
        .current_dir(dir)
        .env_remove("BTFORGE_SEED")
        .env_remove("BTFORGE_JOBS")
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A config small enough that the full pipeline finishes in well under a
/// second: a 10x6 walled box, two agents, 60-tick rounds, six individuals
/// for three generations per class.
const TINY_CONFIG: &str = include_str!("fixtures/tiny.toml");

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().expect("tempdir");
    fs::write(dir.path().join("pipeline.toml"), TINY_CONFIG).expect("write config");
    dir
}

fn tree_files(dir: &Path, n: usize) -> Vec<String> {
    let archive = dir.join("out/archive");
    let mut files: Vec<PathBuf> = fs::read_dir(&archive)
        .expect("archive exists")
        .flat_map(|class| fs::read_dir(class.unwrap().path()).unwrap())
        .map(|f| f.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "bt"))
        .collect();
    files.sort();
    assert!(files.len() >= n, "need {n} archived trees, found {}", files.len());
    files.truncate(n);
    files.into_iter().map(|p| p.to_string_lossy().into_owned()).collect()
}

#[test]
fn run_writes_every_artifact_and_reruns_byte_identically() {
    let dir = setup();
    let out = btforge(dir.path(), &["run"]);
    assert!(out.status.success(), "{}", stderr(&out));

    for name in [
        "out/funnel.tsv",
        "out/tscores.tsv",
        "out/pruning.tsv",
        "out/clusters.tsv",
        "out/coverage.tsv",
        "out/exploits.tsv",
        "out/summary.txt",
        "out/fitness_hard.csv",
        "out/fitness_easy.csv",
        "out/archive/hard/index.tsv",
        "out/archive/easy/index.tsv",
    ] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }

    let snapshot: Vec<(PathBuf, Vec<u8>)> = stdout(&out)
        .lines()
        .map(|line| {
            let path = dir.path().join(line);
            (PathBuf::from(line), fs::read(&path).expect("listed file exists"))
        })
        .collect();

    let again = btforge(dir.path(), &["run", "--out", "out-b"]);
    assert!(again.status.success(), "{}", stderr(&again));
    for (path, bytes) in &snapshot {
        let rel = path.strip_prefix("out").expect("under out/");
        let twin = dir.path().join("out-b").join(rel);
        assert_eq!(&fs::read(&twin).expect("twin exists"), bytes, "{} differs", rel.display());
    }
}

#[test]
fn funnel_report_rows_sum_to_the_total() {
    let dir = setup();
    assert!(btforge(dir.path(), &["run"]).status.success());

    let out = btforge(dir.path(), &["report"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<Vec<u64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().skip(1).map(|w| w.parse().unwrap()).collect())
        .collect();
    let (total, classes) = rows.split_last().expect("total row");
    for col in 0..5 {
        let sum: u64 = classes.iter().map(|r| r[col]).sum();
        assert_eq!(total[col], sum, "column {col} does not sum\n{text}");
    }
    // Per class, the outcome buckets partition the created count.
    for row in classes {
        assert_eq!(row[0], row[1] + row[2] + row[3] + row[4], "{row:?}\n{text}");
    }
}

#[test]
fn standalone_stages_consume_the_evolve_archive() {
    let dir = setup();
    assert!(btforge(dir.path(), &["evolve"]).status.success());
    assert!(!dir.path().join("out/tscores.tsv").exists());

    let out = btforge(dir.path(), &["tournament"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let tscores = fs::read_to_string(dir.path().join("out/tscores.tsv")).unwrap();
    assert!(tscores.starts_with("tree\trounds_played\tscore_sum\ttscore\n"), "{tscores}");
    assert!(tscores.lines().count() > 1, "no scores: {tscores}");

    let out = btforge(dir.path(), &["exploit-scan"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("out/exploits.tsv").is_file());

    let out = btforge(dir.path(), &["cluster"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let clusters = fs::read_to_string(dir.path().join("out/clusters.tsv")).unwrap();
    assert!(clusters.starts_with("class\tcluster\ttree\tmedoid\n"), "{clusters}");
}

#[test]
fn cluster_k_larger_than_the_class_errors() {
    let dir = setup();
    assert!(btforge(dir.path(), &["run"]).status.success());

    let out = btforge(dir.path(), &["cluster", "--k", "100"]);
    assert!(!out.status.success(), "K 100 cannot fit any class here");
    assert!(stderr(&out).contains("exceeds"), "{}", stderr(&out));
}

#[test]
fn simulate_prints_a_feedback_table_and_checks_the_seat_count() {
    let dir = setup();
    assert!(btforge(dir.path(), &["run"]).status.success());
    let trees = tree_files(dir.path(), 2);

    let out = btforge(
        dir.path(),
        &["simulate", "--trees", &trees[0], &trees[1], "--seed", "7"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("end_tick\t"), "{text}");
    assert!(text.contains("agent\ttree\tkills\tdeaths"), "{text}");
    assert_eq!(text.lines().count(), 4, "header, two agents:\n{text}");

    let out = btforge(dir.path(), &["simulate", "--trees", &trees[0], "--seed", "7"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("seats 2"), "{}", stderr(&out));
}

#[test]
fn simulate_is_deterministic_in_the_seed_flag() {
    let dir = setup();
    assert!(btforge(dir.path(), &["run"]).status.success());
    let trees = tree_files(dir.path(), 2);
    let args: Vec<&str> = vec!["simulate", "--trees", &trees[0], &trees[1], "--seed", "7"];
    let a = btforge(dir.path(), &args);
    let b = btforge(dir.path(), &args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn check_determinism_passes_on_the_shipped_simulator() {
    let dir = setup();
    assert!(btforge(dir.path(), &["run"]).status.success());
    let trees = tree_files(dir.path(), 2);

    let out = btforge(
        dir.path(),
        &["check-determinism", "--trees", &trees[0], &trees[1], "--repeats", "4"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("determinism\tok"), "{}", stdout(&out));
}

#[test]
fn coverage_prints_the_report_format() {
    let dir = setup();
    assert!(btforge(dir.path(), &["run"]).status.success());
    let trees = tree_files(dir.path(), 1);

    let out = btforge(dir.path(), &["coverage", "--trees", &trees[0], "--rounds", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("template_coverage\t"), "{text}");
}

#[test]
fn config_errors_name_the_section_and_fail_fast() {
    let dir = tempfile::tempdir().expect("tempdir");
    let bad = TINY_CONFIG.replace(
        "[evolution]",
        "[evolution]\nelite_fraction = 0.7\nroulette_fraction = 0.1\nrandom_fraction = 0.1",
    );
    fs::write(dir.path().join("pipeline.toml"), bad).expect("write config");

    let out = btforge(dir.path(), &["run"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("evolution") && err.contains("sum to 1"), "{err}");
}

#[test]
fn an_empty_class_list_fails_before_any_simulation() {
    let dir = tempfile::tempdir().expect("tempdir");
    fs::write(dir.path().join("pipeline.toml"), "[difficulty]\nclasses = []\n")
        .expect("write config");

    let out = btforge(dir.path(), &["run"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("at least one"), "{}", stderr(&out));
}

#[test]
fn the_seed_env_variable_overrides_the_config() {
    let dir = setup();
    assert!(btforge(dir.path(), &["run"]).status.success());
    let trees = tree_files(dir.path(), 2);

    let with_env = |seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_btforge"))
            .args(["simulate", "--trees", &trees[0], &trees[1]])
            .current_dir(dir.path())
            .env("BTFORGE_SEED", seed)
            .env("RUST_BACKTRACE", "0")
            .output()
            .expect("binary runs")
    };
    let a = with_env("7");
    let b = with_env("7");
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b), "same env seed must reproduce");
}
