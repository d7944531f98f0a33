//! Post-evolution pruning of the archived tree population.
//!
//! Evolution over-produces: every class ends up holding trees that met its
//! bands against weak opposition, near-duplicates of each other, and the
//! occasional behavior a human would flag as unnatural. This module thins
//! the archive in three stages, each of which only ever removes trees:
//!
//! 1. [`tournament`] replays the archive against its peers and averages
//!    each tree's per-round fitness into a tournament score;
//!    [`eliminate_by_rank`] then drops trees that score below the average
//!    of the next easier class (beating a hard band while playing worse
//!    than average medium trees means the hard placement was luck).
//! 2. [`cluster`] groups each class's survivors by the structural tree
//!    distance and keeps one representative per group.
//! 3. [`ingest_votes`] removes trees that human observers flagged often
//!    enough in play sessions.

pub mod cluster;
pub mod similarity;
pub mod tournament;

pub use cluster::{cluster, ClusterAssignment, ClusterError};
pub use similarity::Similarity;
pub use tournament::{
    tournament, ArenaRoundRunner, RoundRunner, TScoreTable, TournamentConfig, TournamentError,
    TreeScore,
};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::difficulty::DifficultySpec;
use crate::evolution::ArchivedTree;

/// Archived trees grouped by difficulty class name.
pub type ClassPools = BTreeMap<String, Vec<ArchivedTree>>;

/// Drops every tree that scored below the mean of the next easier class.
///
/// Class averages come from the table as it stands before any removal, so
/// the order classes are processed in cannot change the outcome. The easiest
/// class has no easier neighbor and is exempt from the average rule; trees
/// without a table entry (never drawn into a round) are dropped from every
/// class, since an unplayed tree has no defensible score. Returns the
/// removed `(class, tree)` pairs.
pub fn eliminate_by_rank(
    classes: &mut ClassPools,
    spec: &DifficultySpec,
    table: &TScoreTable,
) -> Vec<(String, String)> {
    let ranked = spec.classes_by_rank();
    let averages: BTreeMap<&str, Option<f64>> = ranked
        .iter()
        .map(|class| {
            let avg = classes.get(&class.name).and_then(|pool| table.class_average(pool));
            (class.name.as_str(), avg)
        })
        .collect();

    let mut removed = Vec::new();
    for (i, class) in ranked.iter().enumerate() {
        let Some(pool) = classes.get_mut(&class.name) else { continue };
        let had_trees = !pool.is_empty();
        let easier_avg = ranked.get(i + 1).and_then(|c| averages[c.name.as_str()]);
        pool.retain(|tree| {
            let keep = match table.tscore(&tree.tree.name) {
                None => false,
                Some(score) => easier_avg.is_none_or(|avg| score >= avg),
            };
            if !keep {
                removed.push((class.name.clone(), tree.tree.name.clone()));
            }
            keep
        });
        if had_trees && pool.is_empty() {
            log::warn!("rank elimination emptied class {}", class.name);
        }
    }
    removed
}

/// One observer's flag against one tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vote {
    pub tree: String,
    pub voter: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VoteError {
    #[error("vote file line {line}: expected `tree<TAB>voter`, got `{text}`")]
    Malformed { line: usize, text: String },
}

/// Parses a vote file: one `tree_name<TAB>voter_id` pair per line, blank
/// lines ignored.
pub fn parse_votes(text: &str) -> Result<Vec<Vote>, VoteError> {
    let mut votes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let Some((tree, voter)) = line.split_once('\t') else {
            return Err(VoteError::Malformed { line: i + 1, text: line.to_owned() });
        };
        votes.push(Vote { tree: tree.to_owned(), voter: voter.to_owned() });
    }
    Ok(votes)
}

/// Removes every tree that at least `threshold` distinct voters flagged.
///
/// Votes for names not present in any class are logged and skipped; a voter
/// flagging the same tree twice counts once. Returns the removed
/// `(class, tree)` pairs.
pub fn ingest_votes(classes: &mut ClassPools, votes: &[Vote], threshold: u32) -> Vec<(String, String)> {
    let mut voters: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for vote in votes {
        let known =
            classes.values().any(|pool| pool.iter().any(|t| t.tree.name == vote.tree));
        if !known {
            log::warn!("vote for unknown tree `{}` skipped", vote.tree);
            continue;
        }
        voters.entry(&vote.tree).or_default().insert(&vote.voter);
    }
    let flagged: BTreeSet<&str> = voters
        .iter()
        .filter(|(_, who)| who.len() as u32 >= threshold)
        .map(|(&tree, _)| tree)
        .collect();

    let mut removed = Vec::new();
    for (class, pool) in classes.iter_mut() {
        pool.retain(|tree| {
            if flagged.contains(tree.tree.name.as_str()) {
                removed.push((class.clone(), tree.tree.name.clone()));
                false
            } else {
                true
            }
        });
    }
    removed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::difficulty::{ClassMetric, ClassTargets, DifficultyClass, MetricSpec};
    use crate::tree::{BehaviorTree, TreeNode};
    use tournament::TreeScore;

    fn spec() -> DifficultySpec {
        let class = |name: &str, rank| DifficultyClass {
            name: name.to_owned(),
            rank,
            metrics: vec![ClassMetric::new("kills", 1.0, (0.0, 1.0))],
        };
        DifficultySpec {
            metrics: vec![MetricSpec::new("kills", 0.0, 10.0)],
            classes: vec![class("hard", 0), class("medium", 1), class("easy", 2)],
            fitness_eps: 1e-4,
        }
    }

    fn archived(name: &str, class: &str) -> ArchivedTree {
        ArchivedTree {
            tree: BehaviorTree::new(name, TreeNode::action(0, "idle")),
            fitness: 0.0,
            raw: BTreeMap::new(),
            targets: ClassTargets { class: class.to_owned(), targets: vec![] },
        }
    }

    fn pools(layout: &[(&str, &[&str])]) -> ClassPools {
        layout
            .iter()
            .map(|(class, names)| {
                (class.to_string(), names.iter().map(|n| archived(n, class)).collect())
            })
            .collect()
    }

    fn table(entries: &[(&str, f64)]) -> TScoreTable {
        TScoreTable {
            scores: entries
                .iter()
                .map(|&(name, score)| {
                    (name.to_owned(), TreeScore { rounds_played: 1, score_sum: score })
                })
                .collect(),
            abandoned_rounds: 0,
        }
    }

    fn names(classes: &ClassPools, class: &str) -> Vec<String> {
        classes[class].iter().map(|t| t.tree.name.clone()).collect()
    }

    #[test]
    fn trees_below_the_next_easier_average_go() {
        let mut classes = pools(&[
            ("hard", &["h-strong", "h-lucky"]),
            ("medium", &["m1", "m2"]),
            ("easy", &["e1"]),
        ]);
        let table = table(&[
            ("h-strong", 5.0),
            ("h-lucky", 1.0),
            ("m1", 2.0),
            ("m2", 2.0),
            ("e1", 0.1),
        ]);
        let removed = eliminate_by_rank(&mut classes, &spec(), &table);
        assert_eq!(names(&classes, "hard"), vec!["h-strong"]);
        assert_eq!(names(&classes, "medium"), vec!["m1", "m2"]);
        assert_eq!(removed, vec![("hard".to_owned(), "h-lucky".to_owned())]);
    }

    #[test]
    fn matching_the_average_exactly_is_enough_to_stay() {
        let mut classes = pools(&[("hard", &["h1"]), ("medium", &["m1"]), ("easy", &[])]);
        let table = table(&[("h1", 2.0), ("m1", 2.0)]);
        let removed = eliminate_by_rank(&mut classes, &spec(), &table);
        assert!(removed.is_empty());
        assert_eq!(names(&classes, "hard"), vec!["h1"]);
    }

    #[test]
    fn the_easiest_class_is_exempt_from_the_average_rule() {
        let mut classes = pools(&[("hard", &[]), ("medium", &[]), ("easy", &["e-weak"])]);
        let table = table(&[("e-weak", 0.0001)]);
        let removed = eliminate_by_rank(&mut classes, &spec(), &table);
        assert!(removed.is_empty());
        assert_eq!(names(&classes, "easy"), vec!["e-weak"]);
    }

    #[test]
    fn averages_are_taken_before_any_removal() {
        // m-weak is doomed by the easy average (1.0), but the hard tree is
        // judged against medium's pre-removal average (2+0)/2 = 1, not
        // against the post-removal average 2.
        let mut classes =
            pools(&[("hard", &["h1"]), ("medium", &["m-strong", "m-weak"]), ("easy", &["e1"])]);
        let table = table(&[("h1", 1.5), ("m-strong", 2.0), ("m-weak", 0.0), ("e1", 1.0)]);
        let removed = eliminate_by_rank(&mut classes, &spec(), &table);
        assert_eq!(names(&classes, "hard"), vec!["h1"]);
        assert_eq!(names(&classes, "medium"), vec!["m-strong"]);
        assert_eq!(removed, vec![("medium".to_owned(), "m-weak".to_owned())]);
    }

    #[test]
    fn unplayed_trees_are_dropped_everywhere() {
        let mut classes = pools(&[("hard", &["h1"]), ("medium", &[]), ("easy", &["e-ghost"])]);
        let table = table(&[("h1", 3.0)]);
        let removed = eliminate_by_rank(&mut classes, &spec(), &table);
        assert_eq!(removed, vec![("easy".to_owned(), "e-ghost".to_owned())]);
        assert!(names(&classes, "easy").is_empty());
        assert_eq!(names(&classes, "hard"), vec!["h1"]);
    }

    #[test]
    fn an_unscored_easier_class_eliminates_nothing() {
        // Medium exists but none of its trees were scored, so hard trees
        // have no reference average and all stay.
        let mut classes =
            pools(&[("hard", &["h1"]), ("medium", &["m-ghost"]), ("easy", &["e1"])]);
        let table = table(&[("h1", 0.01), ("e1", 5.0)]);
        eliminate_by_rank(&mut classes, &spec(), &table);
        assert_eq!(names(&classes, "hard"), vec!["h1"]);
        assert!(names(&classes, "medium").is_empty());
    }

    #[test]
    fn vote_lines_parse_and_malformed_lines_fail() {
        let votes = parse_votes("hard-001\tqa-1\n\nhard-002\tqa-2\r\n").expect("well formed");
        assert_eq!(
            votes,
            vec![
                Vote { tree: "hard-001".to_owned(), voter: "qa-1".to_owned() },
                Vote { tree: "hard-002".to_owned(), voter: "qa-2".to_owned() },
            ]
        );
        let err = parse_votes("hard-001 qa-1").expect_err("no tab");
        assert_eq!(err, VoteError::Malformed { line: 1, text: "hard-001 qa-1".to_owned() });
    }

    #[test]
    fn no_votes_change_nothing() {
        let mut classes = pools(&[("hard", &["h1"]), ("easy", &["e1"])]);
        let removed = ingest_votes(&mut classes, &[], 1);
        assert!(removed.is_empty());
        assert_eq!(names(&classes, "hard"), vec!["h1"]);
    }

    #[test]
    fn enough_distinct_voters_remove_a_tree() {
        let mut classes = pools(&[("hard", &["h1", "h2"])]);
        let votes = parse_votes("h1\tqa-1\nh1\tqa-2\nh2\tqa-1\n").expect("well formed");
        let removed = ingest_votes(&mut classes, &votes, 2);
        assert_eq!(removed, vec![("hard".to_owned(), "h1".to_owned())]);
        assert_eq!(names(&classes, "hard"), vec!["h2"]);
    }

    #[test]
    fn repeat_votes_from_one_voter_count_once() {
        let mut classes = pools(&[("hard", &["h1"])]);
        let votes = parse_votes("h1\tqa-1\nh1\tqa-1\nh1\tqa-1\n").expect("well formed");
        let removed = ingest_votes(&mut classes, &votes, 2);
        assert!(removed.is_empty());
        assert_eq!(names(&classes, "hard"), vec!["h1"]);
    }

    #[test]
    fn votes_for_unknown_trees_are_skipped() {
        let mut classes = pools(&[("hard", &["h1"])]);
        let votes = parse_votes("nobody\tqa-1\nnobody\tqa-2\n").expect("well formed");
        let removed = ingest_votes(&mut classes, &votes, 1);
        assert!(removed.is_empty());
        assert_eq!(names(&classes, "hard"), vec!["h1"]);
    }
}
