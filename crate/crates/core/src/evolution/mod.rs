//! Breeding behavior trees toward a difficulty class.
//!
//! A run owns a fixed-size population. Every generation it keeps a survivor
//! quota picked by elite, roulette, and random shares, refills the rest with
//! crossover and mutation offspring, re-scores everyone, and probes
//! oversized individuals with pruning. The sorted fitness vector is watched
//! for stalls: a stalled run ramps its operator rates linearly toward their
//! maxima, restarts from scratch once the ramp runs dry, and stops for good
//! the second time that happens. Individuals that match the target class at
//! the end come back as the archive.

pub mod arena_eval;
pub mod bloat;
pub mod ops;
pub mod select;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arena_eval::ArenaEvaluator;
pub use ops::{crossover, init_population, mutate, mutate_within, repair, MutationOp, SizeCaps};
pub use select::{detect_plateau, select, Selection, SelectionShares};

use crate::catalog::TemplateCatalog;
use crate::difficulty::{classify, fitness, sample_targets, ClassTargets, DifficultySpec};
use crate::rng;
use crate::tree::{BehaviorTree, Provenance};

/// Knobs of one evolution run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionParams {
    /// Individuals held between selections.
    pub pop_size: usize,
    /// Hard stop after this many breeding cycles.
    pub generations: u64,
    /// Fraction of the population kept as parents, rounded up.
    pub select_fraction: f64,
    /// Split of the survivor quota between the three pick strategies; the
    /// three must sum to one.
    pub elite_fraction: f64,
    pub roulette_fraction: f64,
    pub random_fraction: f64,
    /// Base chance an offspring mutates.
    pub mutation_rate: f64,
    /// Base chance an offspring comes from crossover.
    pub crossover_rate: f64,
    /// Rates reached at the end of a stall ramp.
    pub mutation_rate_max: f64,
    pub crossover_rate_max: f64,
    /// A generation counts as stalled when the sum of squared differences
    /// between consecutive sorted fitness vectors falls below this.
    pub plateau_eps: f64,
    /// Stalled generations tolerated before the rate ramp starts.
    pub stall_window: u32,
    /// Generations the ramp takes to reach the maximum rates.
    pub rate_ramp_generations: u32,
    pub max_depth: usize,
    pub max_width: usize,
    /// Chance per individual per generation of a pruning probe.
    pub prune_probability: f64,
    /// A pruned tree is adopted when its fitness moved by at most this
    /// fraction of the original's.
    pub prune_tolerance: f64,
    /// Attempts to breed a child inside the size caps before falling back to
    /// a plain copy of the parent.
    pub breed_retries: u32,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        EvolutionParams {
            pop_size: 20,
            generations: 50,
            select_fraction: 0.25,
            elite_fraction: 0.75,
            roulette_fraction: 0.15,
            random_fraction: 0.10,
            mutation_rate: 0.2,
            crossover_rate: 0.1,
            mutation_rate_max: 0.5,
            crossover_rate_max: 0.4,
            plateau_eps: 1e-4,
            stall_window: 5,
            rate_ramp_generations: 10,
            max_depth: 12,
            max_width: 12,
            prune_probability: 0.25,
            prune_tolerance: 0.1,
            breed_retries: 8,
        }
    }
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.pop_size < 2 {
            return Err("pop_size must be at least 2".to_owned());
        }
        if self.generations == 0 {
            return Err("generations must be positive".to_owned());
        }
        if !(self.select_fraction > 0.0 && self.select_fraction <= 1.0) {
            return Err("select_fraction must lie in (0, 1]".to_owned());
        }
        let shares = self.elite_fraction + self.roulette_fraction + self.random_fraction;
        if (shares - 1.0).abs() > 1e-9 {
            return Err(format!("selection shares must sum to 1, got {shares}"));
        }
        if self.elite_fraction < 0.0 || self.roulette_fraction < 0.0 || self.random_fraction < 0.0
        {
            return Err("selection shares must be nonnegative".to_owned());
        }
        for (name, v) in [
            ("mutation_rate", self.mutation_rate),
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate_max", self.mutation_rate_max),
            ("crossover_rate_max", self.crossover_rate_max),
            ("prune_probability", self.prune_probability),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.mutation_rate_max < self.mutation_rate {
            return Err("mutation_rate_max must not undercut mutation_rate".to_owned());
        }
        if self.crossover_rate_max < self.crossover_rate {
            return Err("crossover_rate_max must not undercut crossover_rate".to_owned());
        }
        if !(self.plateau_eps > 0.0) {
            return Err("plateau_eps must be positive".to_owned());
        }
        if self.stall_window == 0 || self.rate_ramp_generations == 0 {
            return Err("stall_window and rate_ramp_generations must be positive".to_owned());
        }
        if self.max_depth == 0 || self.max_width == 0 {
            return Err("size caps must be positive".to_owned());
        }
        if self.prune_tolerance < 0.0 {
            return Err("prune_tolerance must be nonnegative".to_owned());
        }
        if self.breed_retries == 0 {
            return Err("breed_retries must be positive".to_owned());
        }
        Ok(())
    }

    /// Survivors kept each generation: `select_fraction` of the population,
    /// rounded up.
    pub fn survivor_quota(&self) -> usize {
        (self.select_fraction * self.pop_size as f64).ceil() as usize
    }

    pub fn shares(&self) -> SelectionShares {
        SelectionShares {
            elite: self.elite_fraction,
            roulette: self.roulette_fraction,
            random: self.random_fraction,
        }
    }

    pub fn caps(&self) -> SizeCaps {
        SizeCaps { max_depth: self.max_depth, max_width: self.max_width }
    }

    /// Mutation and crossover rates after `stall` consecutive stalled
    /// generations: the base rates until the stall window fills, then a
    /// linear walk that reaches the maxima `rate_ramp_generations` stalls
    /// later.
    pub fn adapted_rates(&self, stall: u32) -> (f64, f64) {
        if stall < self.stall_window {
            return (self.mutation_rate, self.crossover_rate);
        }
        let steps = (stall - self.stall_window + 1).min(self.rate_ramp_generations);
        let t = f64::from(steps) / f64::from(self.rate_ramp_generations);
        (
            self.mutation_rate + (self.mutation_rate_max - self.mutation_rate) * t,
            self.crossover_rate + (self.crossover_rate_max - self.crossover_rate) * t,
        )
    }

    /// True once the ramp has nowhere left to go: the next stalled
    /// generation triggers a restart or the final stop.
    pub fn ramp_exhausted(&self, stall: u32) -> bool {
        stall >= self.stall_window + self.rate_ramp_generations
    }
}

/// One population slot.
#[derive(Debug, Clone)]
pub struct Individual {
    pub tree: BehaviorTree,
    /// Averaged raw arena metrics from the latest evaluation.
    pub raw: BTreeMap<String, f64>,
    pub fitness: f64,
    pub crashed: bool,
}

impl Individual {
    fn fresh(tree: BehaviorTree) -> Individual {
        Individual { tree, raw: BTreeMap::new(), fitness: 0.0, crashed: false }
    }
}

/// Averaged raw metrics plus the crash flag for one evaluated tree.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalResult {
    pub raw: BTreeMap<String, f64>,
    pub crashed: bool,
}

/// Scores trees in some environment. Implementations must be deterministic
/// in their inputs.
pub trait Evaluator {
    /// Scores a whole generation; `generation` folds into the round seeds so
    /// later generations see fresh rounds.
    fn evaluate_generation(&mut self, trees: &[BehaviorTree], generation: u64)
        -> Vec<EvalResult>;

    /// Re-scores one seat of the most recent generation with a substitute
    /// tree, replaying the same rounds against the same opponents.
    fn evaluate_single(&mut self, seat: usize, tree: &BehaviorTree) -> EvalResult;
}

/// Milestones of a run, in the order they happened.
#[derive(Debug, Clone, PartialEq)]
pub enum EvolutionEvent {
    /// The sorted fitness vector barely moved this generation.
    Plateau { generation: u64 },
    /// Operator rates moved along the stall ramp.
    RateRamp { generation: u64, mutation_rate: f64, crossover_rate: f64 },
    /// The population was thrown away and re-seeded.
    Restart { generation: u64 },
    /// The run ended, by budget or by a second dead stall.
    Stop { generation: u64 },
}

/// Where every individual created during a run ended up. The four outcome
/// buckets partition `created`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FunnelCounts {
    pub created: u64,
    /// Panicked in the arena; never bred from, never classified.
    pub crashed: u64,
    /// Dropped at a selection boundary or wiped by a restart.
    pub discarded: u64,
    /// Alive at the end and inside the target class bands.
    pub classified: u64,
    /// Alive at the end but outside the target class.
    pub unclassified: u64,
}

impl FunnelCounts {
    /// Every instance lands in exactly one bucket.
    pub fn is_partition(&self) -> bool {
        self.created == self.crashed + self.discarded + self.classified + self.unclassified
    }
}

/// A tree that finished inside the target class.
#[derive(Debug, Clone)]
pub struct ArchivedTree {
    pub tree: BehaviorTree,
    pub fitness: f64,
    pub raw: BTreeMap<String, f64>,
    /// Targets of the epoch the tree finished in.
    pub targets: ClassTargets,
}

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct EvolutionOutcome {
    pub archived: Vec<ArchivedTree>,
    pub events: Vec<EvolutionEvent>,
    pub funnel: FunnelCounts,
    /// Fitness of every individual per generation, population order, one row
    /// per scored generation starting at generation zero.
    pub fitness_log: Vec<Vec<f64>>,
    pub generations_run: u64,
}

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("unknown difficulty class `{0}`")]
    UnknownClass(String),
    #[error("invalid evolution parameters: {0}")]
    InvalidParams(String),
    #[error("invalid difficulty spec: {0}")]
    InvalidSpec(String),
}

/// Normalizes raw metrics against the spec and scores them against a target
/// vector. Shared between generation scoring and tournament re-scoring.
pub fn fitness_of(spec: &DifficultySpec, targets: &ClassTargets, raw: &BTreeMap<String, f64>) -> f64 {
    let norm = spec.normalize_all(raw);
    fitness(
        targets
            .targets
            .iter()
            .map(|t| (norm.get(&t.metric).copied().unwrap_or(0.0), t.target, t.weight)),
        spec.fitness_eps,
    )
}

fn score_population(
    population: &mut [Individual],
    targets: &ClassTargets,
    spec: &DifficultySpec,
    evaluator: &mut dyn Evaluator,
    generation: u64,
    funnel: &mut FunnelCounts,
) {
    let trees: Vec<BehaviorTree> = population.iter().map(|i| i.tree.clone()).collect();
    let results = evaluator.evaluate_generation(&trees, generation);
    debug_assert_eq!(results.len(), population.len());
    for (ind, res) in population.iter_mut().zip(results) {
        if res.crashed && !ind.crashed {
            funnel.crashed += 1;
        }
        ind.crashed = ind.crashed || res.crashed;
        ind.fitness = if ind.crashed { 0.0 } else { fitness_of(spec, targets, &res.raw) };
        ind.raw = res.raw;
    }
}

fn breed_one(
    parents: &[Individual],
    params: &EvolutionParams,
    catalog: &TemplateCatalog,
    rates: (f64, f64),
    generation: u64,
    slot: usize,
    rng: &mut ChaCha8Rng,
) -> Individual {
    let (pm, pc) = rates;
    let caps = params.caps();
    let pick = rng.gen_range(0..parents.len());
    let first = &parents[pick];
    let mut root = first.tree.root.clone();
    let mut used: Vec<&str> = Vec::new();
    let mut lineage = vec![first.tree.name.clone()];
    for _ in 0..params.breed_retries {
        let mut candidate = first.tree.root.clone();
        let mut ops_used = Vec::new();
        let mut names = vec![first.tree.name.clone()];
        if parents.len() > 1 && rng.gen_bool(pc) {
            let mut other = rng.gen_range(0..parents.len() - 1);
            if other >= pick {
                other += 1;
            }
            let second = &parents[other];
            if let Some(crossed) = ops::crossover(&candidate, &second.tree.root, rng) {
                candidate = crossed;
                ops_used.push("crossover");
                names.push(second.tree.name.clone());
            }
        }
        if rng.gen_bool(pm) {
            if let Some(op) = ops::mutate(&mut candidate, catalog, rng) {
                ops_used.push(op.label());
            }
        }
        if caps.admits(&candidate) {
            root = candidate;
            used = ops_used;
            lineage = names;
            break;
        }
    }
    let mut tree = BehaviorTree::new(&format!("g{generation}-{slot:02}"), root);
    tree.provenance = Provenance {
        generation: Some(generation as u32),
        parents: lineage,
        operator: Some(if used.is_empty() { "copy".to_owned() } else { used.join("+") }),
    };
    Individual::fresh(tree)
}

fn prune_pass(
    population: &mut [Individual],
    params: &EvolutionParams,
    spec: &DifficultySpec,
    targets: &ClassTargets,
    evaluator: &mut dyn Evaluator,
    rng: &mut ChaCha8Rng,
) {
    if params.prune_probability <= 0.0 {
        return;
    }
    for (seat, ind) in population.iter_mut().enumerate() {
        if ind.crashed || !rng.gen_bool(params.prune_probability) {
            continue;
        }
        let candidates = bloat::prune_candidates(&ind.tree.root);
        let Some(target) = bloat::choose_candidate(&candidates, rng) else { continue };
        let Some(pruned_root) = bloat::prune(&ind.tree.root, target) else { continue };
        let mut probe_tree = ind.tree.clone();
        probe_tree.root = pruned_root;
        let probe = evaluator.evaluate_single(seat, &probe_tree);
        if probe.crashed {
            continue;
        }
        let pruned_fitness = fitness_of(spec, targets, &probe.raw);
        if (pruned_fitness - ind.fitness).abs() <= params.prune_tolerance * ind.fitness {
            ind.tree.root = probe_tree.root;
            ind.fitness = pruned_fitness;
            ind.raw = probe.raw;
        }
    }
}

fn spawn_population(
    params: &EvolutionParams,
    seeds: &[BehaviorTree],
    catalog: &TemplateCatalog,
    rng: &mut ChaCha8Rng,
    funnel: &mut FunnelCounts,
) -> Vec<Individual> {
    let trees = ops::init_population(params.pop_size, seeds, catalog, params.caps(), rng);
    funnel.created += trees.len() as u64;
    trees.into_iter().map(Individual::fresh).collect()
}

/// Runs one evolution toward `class_name` and returns the archive plus the
/// run's full bookkeeping. `seeds` may be empty, in which case the starting
/// population grows randomly. All randomness flows from `seed`; the
/// evaluator carries its own.
pub fn run_evolution(
    params: &EvolutionParams,
    spec: &DifficultySpec,
    class_name: &str,
    seeds: &[BehaviorTree],
    catalog: &TemplateCatalog,
    evaluator: &mut dyn Evaluator,
    seed: u64,
) -> Result<EvolutionOutcome, EvolutionError> {
    params.validate().map_err(EvolutionError::InvalidParams)?;
    spec.validate().map_err(EvolutionError::InvalidSpec)?;
    let class = spec
        .class(class_name)
        .ok_or_else(|| EvolutionError::UnknownClass(class_name.to_owned()))?;

    let mut rng = rng::stream(seed, 0);
    let mut funnel = FunnelCounts::default();
    let mut events = Vec::new();
    let mut fitness_log: Vec<Vec<f64>> = Vec::new();

    let mut targets = sample_targets(class, &mut rng);
    let mut population = spawn_population(params, seeds, catalog, &mut rng, &mut funnel);
    score_population(&mut population, &targets, spec, evaluator, 0, &mut funnel);
    let baseline: Vec<f64> = population.iter().map(|i| i.fitness).collect();
    let mut prev_avg = baseline.iter().sum::<f64>() / baseline.len() as f64;
    let mut prev_vector = Some(baseline.clone());
    fitness_log.push(baseline);

    let mut stall: u32 = 0;
    let mut restarted = false;
    let mut stopped_at: Option<u64> = None;

    for generation in 1..=params.generations {
        let eligible: Vec<(usize, f64)> = population
            .iter()
            .enumerate()
            .filter(|(_, i)| !i.crashed)
            .map(|(idx, i)| (idx, i.fitness))
            .collect();

        // A population with nothing left to breed from is as dead as an
        // exhausted stall.
        if eligible.is_empty() {
            if restarted {
                events.push(EvolutionEvent::Stop { generation });
                stopped_at = Some(generation);
                break;
            }
            restarted = true;
            events.push(EvolutionEvent::Restart { generation });
            restart(
                params, spec, class, seeds, catalog, evaluator, generation, &mut rng,
                &mut funnel, &mut population, &mut targets,
            );
            prev_vector = None;
            prev_avg = population.iter().map(|i| i.fitness).sum::<f64>()
                / population.len() as f64;
            stall = 0;
            continue;
        }

        let quota = params.survivor_quota().min(eligible.len()).max(1);
        let picked = select(&eligible, quota, params.shares(), &mut rng);
        let keep: BTreeSet<usize> = picked.all().into_iter().collect();
        for (idx, ind) in population.iter().enumerate() {
            if !keep.contains(&idx) && !ind.crashed {
                funnel.discarded += 1;
            }
        }
        let parents: Vec<Individual> =
            keep.iter().map(|&idx| population[idx].clone()).collect();

        let rates = params.adapted_rates(stall);
        let mut next = parents.clone();
        while next.len() < params.pop_size {
            let slot = next.len();
            let child = breed_one(&parents, params, catalog, rates, generation, slot, &mut rng);
            funnel.created += 1;
            next.push(child);
        }
        population = next;

        score_population(&mut population, &targets, spec, evaluator, generation, &mut funnel);
        prune_pass(&mut population, params, spec, &targets, evaluator, &mut rng);

        let vector: Vec<f64> = population.iter().map(|i| i.fitness).collect();
        let avg = vector.iter().sum::<f64>() / vector.len() as f64;
        fitness_log.push(vector.clone());

        let plateaued = prev_vector
            .as_deref()
            .is_some_and(|prev| detect_plateau(prev, &vector, params.plateau_eps));
        if plateaued {
            stall += 1;
            events.push(EvolutionEvent::Plateau { generation });
            if params.ramp_exhausted(stall) {
                if restarted {
                    events.push(EvolutionEvent::Stop { generation });
                    stopped_at = Some(generation);
                    break;
                }
                restarted = true;
                events.push(EvolutionEvent::Restart { generation });
                restart(
                    params, spec, class, seeds, catalog, evaluator, generation, &mut rng,
                    &mut funnel, &mut population, &mut targets,
                );
                prev_vector = None;
                prev_avg = population.iter().map(|i| i.fitness).sum::<f64>()
                    / population.len() as f64;
                stall = 0;
                continue;
            }
            if stall >= params.stall_window {
                let (mutation_rate, crossover_rate) = params.adapted_rates(stall);
                events.push(EvolutionEvent::RateRamp { generation, mutation_rate, crossover_rate });
            }
        } else if avg > prev_avg {
            stall = 0;
        }
        prev_vector = Some(vector);
        prev_avg = avg;
    }

    let final_generation = stopped_at.unwrap_or(params.generations);
    if stopped_at.is_none() {
        events.push(EvolutionEvent::Stop { generation: final_generation });
    }

    let mut archived = Vec::new();
    for ind in &population {
        if ind.crashed {
            continue;
        }
        let matched = classify(spec, &ind.raw).map(|c| c.name.as_str());
        if matched == Some(class_name) {
            funnel.classified += 1;
            let mut tree = ind.tree.clone();
            tree.name = format!("{}-{:03}", class_name, archived.len() + 1);
            archived.push(ArchivedTree {
                tree,
                fitness: ind.fitness,
                raw: ind.raw.clone(),
                targets: targets.clone(),
            });
        } else {
            funnel.unclassified += 1;
        }
    }
    debug_assert!(funnel.is_partition(), "funnel buckets must partition created: {funnel:?}");

    Ok(EvolutionOutcome {
        archived,
        events,
        funnel,
        fitness_log,
        generations_run: final_generation,
    })
}

/// Wipes the population into the discard bucket, re-seeds it, resamples the
/// epoch targets, and scores the fresh baseline.
#[allow(clippy::too_many_arguments)]
fn restart(
    params: &EvolutionParams,
    spec: &DifficultySpec,
    class: &crate::difficulty::DifficultyClass,
    seeds: &[BehaviorTree],
    catalog: &TemplateCatalog,
    evaluator: &mut dyn Evaluator,
    generation: u64,
    rng: &mut ChaCha8Rng,
    funnel: &mut FunnelCounts,
    population: &mut Vec<Individual>,
    targets: &mut ClassTargets,
) {
    for ind in population.iter() {
        if !ind.crashed {
            funnel.discarded += 1;
        }
    }
    *targets = sample_targets(class, rng);
    *population = spawn_population(params, seeds, catalog, rng, funnel);
    score_population(population, targets, spec, evaluator, generation, funnel);
}
