//! Groups near-duplicate trees and picks one representative per group.
//!
//! Trees live in a metric space without coordinates, so the grouping is
//! k-medoids (PAM): every representative is an actual member. A greedy build
//! pass seeds the medoid set, swap descent polishes it to local optimality,
//! and a handful of seeded random restarts guard against bad local optima.
//! All tie-breaks fall toward the lower index, so the result is a pure
//! function of the trees, the cluster count, and the seed.

use std::collections::BTreeMap;

use rand::seq::index;
use thiserror::Error;

use super::similarity::Similarity;
use crate::rng;
use crate::tree::BehaviorTree;

/// Random restarts polished per call, beyond the greedy build.
const RESTARTS: usize = 8;

/// A finished grouping: representatives and the member assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub k: usize,
    /// Representative tree names, one per cluster.
    pub medoids: Vec<String>,
    /// Tree name to index into `medoids`.
    pub members: BTreeMap<String, usize>,
    /// Sum over members of the distance to their representative.
    pub cost: f64,
}

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cluster count must be at least 1")]
    ZeroClusters,
    #[error("cannot pick {k} representatives from {n} trees")]
    TooFewTrees { k: usize, n: usize },
}

/// Partitions `trees` into `k` groups under the symmetric tree distance and
/// names the medoid of each group as its representative.
pub fn cluster(
    trees: &[&BehaviorTree],
    k: usize,
    sim: &Similarity<'_>,
    seed: u64,
) -> Result<ClusterAssignment, ClusterError> {
    let n = trees.len();
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > n {
        return Err(ClusterError::TooFewTrees { k, n });
    }

    let d: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| sim.distance(&trees[i].root, &trees[j].root)).collect())
        .collect();

    let mut medoids = greedy_build(&d, k);
    let mut cost = swap_descent(&d, &mut medoids);

    let mut restart_rng = rng::stream(seed, 0);
    for _ in 0..RESTARTS {
        let mut candidate = index::sample(&mut restart_rng, n, k).into_vec();
        candidate.sort_unstable();
        let candidate_cost = swap_descent(&d, &mut candidate);
        if candidate_cost + 1e-12 < cost {
            cost = candidate_cost;
            medoids = candidate;
        }
    }
    medoids.sort_unstable();

    let mut members = BTreeMap::new();
    for (i, tree) in trees.iter().enumerate() {
        let slot = nearest(&d, &medoids, i).0;
        let previous = members.insert(tree.name.clone(), slot);
        debug_assert!(previous.is_none(), "duplicate tree name {}", tree.name);
    }
    Ok(ClusterAssignment {
        k,
        medoids: medoids.iter().map(|&m| trees[m].name.clone()).collect(),
        members,
        cost,
    })
}

/// Cost of serving every point from its nearest medoid.
fn total_cost(d: &[Vec<f64>], medoids: &[usize]) -> f64 {
    (0..d.len()).map(|i| nearest(d, medoids, i).1).sum()
}

/// Nearest medoid of point `i` as (cluster index, distance); ties go to the
/// lower cluster index.
fn nearest(d: &[Vec<f64>], medoids: &[usize], i: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (slot, &m) in medoids.iter().enumerate() {
        if d[i][m] < best.1 {
            best = (slot, d[i][m]);
        }
    }
    best
}

/// Greedy seeding: start from the point minimizing total distance to all
/// others, then repeatedly add the point that lowers the cost the most.
fn greedy_build(d: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = d.len();
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let first = (0..n)
        .min_by(|&a, &b| {
            let ta: f64 = d[a].iter().sum();
            let tb: f64 = d[b].iter().sum();
            ta.partial_cmp(&tb).expect("finite distances").then(a.cmp(&b))
        })
        .expect("at least one tree");
    medoids.push(first);
    while medoids.len() < k {
        let next = (0..n)
            .filter(|c| !medoids.contains(c))
            .min_by(|&a, &b| {
                let ca = build_cost(d, &medoids, a);
                let cb = build_cost(d, &medoids, b);
                ca.partial_cmp(&cb).expect("finite distances").then(a.cmp(&b))
            })
            .expect("k <= n leaves candidates");
        medoids.push(next);
    }
    medoids.sort_unstable();
    medoids
}

fn build_cost(d: &[Vec<f64>], medoids: &[usize], extra: usize) -> f64 {
    (0..d.len()).map(|i| nearest(d, medoids, i).1.min(d[i][extra])).sum()
}

/// Replaces one medoid with one non-medoid as long as that strictly lowers
/// the cost; returns the locally optimal cost.
fn swap_descent(d: &[Vec<f64>], medoids: &mut Vec<usize>) -> f64 {
    let n = d.len();
    let mut cost = total_cost(d, medoids);
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..medoids.len() {
            for h in 0..n {
                if medoids.contains(&h) {
                    continue;
                }
                let saved = medoids[slot];
                medoids[slot] = h;
                let c = total_cost(d, medoids);
                medoids[slot] = saved;
                if c + 1e-12 < best.map_or(cost, |(b, _, _)| b) {
                    best = Some((c, slot, h));
                }
            }
        }
        match best {
            Some((c, slot, h)) => {
                medoids[slot] = h;
                medoids.sort_unstable();
                cost = c;
            }
            None => return cost,
        }
    }
}
