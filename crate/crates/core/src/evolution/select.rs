//! Survivor selection and stall detection.

use std::cmp::Ordering;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Indices chosen to survive into the next generation, grouped by how they
/// were picked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// Top of the fitness order, ties broken toward the lower index.
    pub elite: Vec<usize>,
    /// Rank-weighted draws from the non-elite remainder.
    pub roulette: Vec<usize>,
    /// Uniform draws from whatever is left after that.
    pub random: Vec<usize>,
}

impl Selection {
    pub fn all(&self) -> Vec<usize> {
        self.elite.iter().chain(&self.roulette).chain(&self.random).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.elite.len() + self.roulette.len() + self.random.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How the survivor quota splits between the three strategies. Group sizes
/// come from cumulative floors, so the quota is always met exactly: quota 5
/// under the default shares splits 3 elite, 1 roulette, 1 random.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionShares {
    pub elite: f64,
    pub roulette: f64,
    pub random: f64,
}

impl Default for SelectionShares {
    fn default() -> Self {
        SelectionShares { elite: 0.75, roulette: 0.15, random: 0.10 }
    }
}

/// Picks `quota` survivors from `(index, fitness)` candidates.
///
/// Candidates are ranked by fitness, higher first, ties toward the lower
/// index. The elite share takes the head of that order. The roulette share
/// draws without replacement from the remainder, the best-ranked remaining
/// candidate weighted `r` down to 1 for the worst, where `r` is the
/// remainder size. The random share draws uniformly from what is left. The
/// quota is clamped to the candidate count.
pub fn select(
    candidates: &[(usize, f64)],
    quota: usize,
    shares: SelectionShares,
    rng: &mut ChaCha8Rng,
) -> Selection {
    let mut order: Vec<(usize, f64)> = candidates.to_vec();
    order.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
    });
    let quota = quota.min(order.len());
    let n_elite = (shares.elite * quota as f64).floor() as usize;
    let n_upto_roulette = ((shares.elite + shares.roulette) * quota as f64).floor() as usize;
    let n_roulette = n_upto_roulette - n_elite;
    let n_random = quota - n_upto_roulette;

    let elite: Vec<usize> = order[..n_elite].iter().map(|&(i, _)| i).collect();
    // Weights are fixed by the initial rank and keep their value as the pool
    // drains, so a draw removes a candidate but never reshuffles the rest.
    let mut pool: Vec<(usize, u64)> = order[n_elite..]
        .iter()
        .enumerate()
        .map(|(rank, &(i, _))| (i, (order.len() - n_elite - rank) as u64))
        .collect();

    let mut roulette = Vec::with_capacity(n_roulette);
    for _ in 0..n_roulette {
        let total: u64 = pool.iter().map(|&(_, w)| w).sum();
        let mut ticket = rng.gen_range(0..total);
        let mut hit = pool.len() - 1;
        for (at, &(_, w)) in pool.iter().enumerate() {
            if ticket < w {
                hit = at;
                break;
            }
            ticket -= w;
        }
        roulette.push(pool.remove(hit).0);
    }

    let mut random = Vec::with_capacity(n_random);
    for _ in 0..n_random {
        let at = rng.gen_range(0..pool.len());
        random.push(pool.remove(at).0);
    }

    Selection { elite, roulette, random }
}

/// True when two generations' sorted fitness vectors sit within `eps` of
/// each other, measured as the sum of squared per-slot differences. Vectors
/// of different lengths compare with zero padding.
pub fn detect_plateau(prev: &[f64], current: &[f64], eps: f64) -> bool {
    let mut a = prev.to_vec();
    let mut b = current.to_vec();
    let desc = |x: &f64, y: &f64| y.partial_cmp(x).unwrap_or(Ordering::Equal);
    a.sort_by(desc);
    b.sort_by(desc);
    let slots = a.len().max(b.len());
    let sum: f64 = (0..slots)
        .map(|i| {
            let x = a.get(i).copied().unwrap_or(0.0);
            let y = b.get(i).copied().unwrap_or(0.0);
            (x - y) * (x - y)
        })
        .sum();
    sum < eps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::collections::BTreeSet;

    fn scored(n: usize) -> Vec<(usize, f64)> {
        (0..n).map(|i| (i, (n - i) as f64)).collect()
    }

    #[test]
    fn quota_five_splits_three_one_one() {
        let mut rng = rng::stream(1, 0);
        let picked = select(&scored(20), 5, SelectionShares::default(), &mut rng);
        assert_eq!(picked.elite, vec![0, 1, 2]);
        assert_eq!(picked.roulette.len(), 1);
        assert_eq!(picked.random.len(), 1);
        let all: BTreeSet<usize> = picked.all().into_iter().collect();
        assert_eq!(all.len(), 5, "groups never overlap");
        assert!(all.iter().all(|&i| i < 20));
    }

    #[test]
    fn elite_ties_break_toward_the_lower_index() {
        let mut rng = rng::stream(2, 0);
        let candidates = vec![(4, 1.0), (0, 1.0), (2, 1.0), (1, 1.0), (3, 1.0)];
        let picked = select(&candidates, 4, SelectionShares::default(), &mut rng);
        assert_eq!(picked.elite, vec![0, 1, 2]);
    }

    #[test]
    fn quota_clamps_to_the_candidate_count() {
        let mut rng = rng::stream(3, 0);
        let picked = select(&scored(3), 10, SelectionShares::default(), &mut rng);
        assert_eq!(picked.len(), 3);
        let all: BTreeSet<usize> = picked.all().into_iter().collect();
        assert_eq!(all, BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn roulette_prefers_the_better_ranked_remainder() {
        let mut rng = rng::stream(4, 0);
        let candidates = scored(20);
        let trials = 50_000;
        let mut best_hits = 0u32;
        let mut worst_hits = 0u32;
        for _ in 0..trials {
            let picked = select(&candidates, 5, SelectionShares::default(), &mut rng);
            match picked.roulette[0] {
                3 => best_hits += 1,
                19 => worst_hits += 1,
                _ => {}
            }
        }
        // The remainder holds indices 3..20 with weights 17 down to 1 out of
        // a 153 total, so the head lands near 11.1% and the tail near 0.65%.
        let best_rate = f64::from(best_hits) / f64::from(trials);
        let worst_rate = f64::from(worst_hits) / f64::from(trials);
        assert!((best_rate - 17.0 / 153.0).abs() < 0.01, "head rate {best_rate}");
        assert!((worst_rate - 1.0 / 153.0).abs() < 0.005, "tail rate {worst_rate}");
    }

    #[test]
    fn empty_candidates_select_nothing() {
        let mut rng = rng::stream(5, 0);
        let picked = select(&[], 5, SelectionShares::default(), &mut rng);
        assert!(picked.is_empty());
    }

    #[test]
    fn plateau_ignores_slot_order() {
        assert!(detect_plateau(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0], 1e-4));
        assert!(!detect_plateau(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.5], 1e-4));
    }

    #[test]
    fn plateau_boundary_is_exclusive() {
        assert!(!detect_plateau(&[0.0], &[0.01], 1e-4), "0.01^2 equals eps exactly");
        assert!(detect_plateau(&[0.0], &[0.009], 1e-4));
    }

    #[test]
    fn plateau_pads_shorter_vectors_with_zeros() {
        assert!(detect_plateau(&[1.0, 0.0], &[1.0], 1e-4));
        assert!(!detect_plateau(&[1.0, 1.0], &[1.0], 1e-4));
    }
}
