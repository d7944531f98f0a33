//! Arena-backed fitness evaluation.
//!
//! Each generation gets a deterministic round plan: every individual plays
//! `k_rounds` batches, each batch a fresh shuffled seating of the whole
//! population chunked into rounds of `config.agents` seats, short rounds
//! padded from the front of the shuffle. Rounds run independently, so they
//! parallelize freely without disturbing determinism. The plan is retained
//! so pruning probes can replay one seat's rounds with a substitute tree
//! against the exact same opponents and seeds.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{EvalResult, Evaluator};
use crate::arena::{run_round, AgentMetrics, ArenaConfig, RoundFeedback};
use crate::catalog::TemplateCatalog;
use crate::rng;
use crate::tree::{BehaviorTree, TreeLibrary};

/// One scheduled round: a seed plus which individual sits in each seat.
#[derive(Debug, Clone, PartialEq, Eq)]
struct RoundPlan {
    seed: u64,
    seats: Vec<usize>,
}

/// Scores trees by playing arena rounds.
pub struct ArenaEvaluator {
    catalog: TemplateCatalog,
    library: TreeLibrary,
    config: ArenaConfig,
    /// Seating batches each individual plays per generation.
    pub k_rounds: usize,
    seed: u64,
    pool: Option<rayon::ThreadPool>,
    plan: Vec<RoundPlan>,
    last_trees: Vec<BehaviorTree>,
}

impl ArenaEvaluator {
    pub fn new(
        catalog: TemplateCatalog,
        library: TreeLibrary,
        config: ArenaConfig,
        k_rounds: usize,
        seed: u64,
    ) -> Result<ArenaEvaluator, String> {
        if k_rounds == 0 {
            return Err("k_rounds must be positive".to_owned());
        }
        config.validate()?;
        catalog.check()?;
        Ok(ArenaEvaluator {
            catalog,
            library,
            config,
            k_rounds,
            seed,
            pool: None,
            plan: Vec::new(),
            last_trees: Vec::new(),
        })
    }

    /// Caps round parallelism at `jobs` worker threads; zero keeps the
    /// global rayon pool.
    pub fn with_jobs(mut self, jobs: usize) -> Result<ArenaEvaluator, String> {
        self.pool = if jobs == 0 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build()
                    .map_err(|e| format!("building a {jobs}-thread pool: {e}"))?,
            )
        };
        Ok(self)
    }

    fn build_plan(&self, individuals: usize, generation: u64) -> Vec<RoundPlan> {
        let agents = self.config.agents;
        let mut plan = Vec::new();
        for batch in 0..self.k_rounds {
            let batch_seed = rng::sub_seed(self.seed, &format!("plan-{generation}-{batch}"));
            let mut order: Vec<usize> = (0..individuals).collect();
            order.shuffle(&mut rng::stream(batch_seed, 0));
            for (round, chunk) in order.chunks(agents).enumerate() {
                let mut seats = chunk.to_vec();
                let mut fill = 0;
                while seats.len() < agents {
                    seats.push(order[fill % order.len()]);
                    fill += 1;
                }
                plan.push(RoundPlan {
                    seed: rng::sub_seed(batch_seed, &format!("round-{round}")),
                    seats,
                });
            }
        }
        plan
    }

    /// Plays one planned round, substituting `replace` into its seats. A
    /// round that fails to start counts as a crash for every seat.
    fn play(
        &self,
        plan: &RoundPlan,
        trees: &[BehaviorTree],
        replace: Option<(usize, &BehaviorTree)>,
    ) -> RoundFeedback {
        let seats: Vec<&BehaviorTree> = plan
            .seats
            .iter()
            .map(|&individual| match replace {
                Some((seat, tree)) if seat == individual => tree,
                _ => &trees[individual],
            })
            .collect();
        match run_round(&seats, &self.catalog, &self.library, &self.config, plan.seed) {
            Ok(outcome) => outcome.feedback,
            Err(err) => {
                log::warn!("round {} failed to start: {err}", plan.seed);
                RoundFeedback {
                    end_tick: 0,
                    agents: vec![
                        AgentMetrics { crashed: true, ..AgentMetrics::default() };
                        plan.seats.len()
                    ],
                }
            }
        }
    }

    fn play_all(
        &self,
        plans: &[&RoundPlan],
        trees: &[BehaviorTree],
        replace: Option<(usize, &BehaviorTree)>,
    ) -> Vec<RoundFeedback> {
        let run = || {
            plans
                .par_iter()
                .map(|plan| self.play(plan, trees, replace))
                .collect::<Vec<RoundFeedback>>()
        };
        match &self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        }
    }

    /// Folds played rounds into per-individual averages. Only individuals
    /// named by some seat get a result slot updated.
    fn accumulate(
        plans: &[&RoundPlan],
        feedbacks: &[RoundFeedback],
        results: &mut [EvalResult],
        plays: &mut [u64],
    ) {
        for (plan, feedback) in plans.iter().zip(feedbacks) {
            for (agent, &individual) in plan.seats.iter().enumerate() {
                let metrics = &feedback.agents[agent];
                plays[individual] += 1;
                if metrics.crashed {
                    results[individual].crashed = true;
                }
                for name in AgentMetrics::METRIC_NAMES {
                    *results[individual].raw.entry(name.to_owned()).or_insert(0.0) +=
                        metrics.metric(name).expect("METRIC_NAMES are all readable");
                }
            }
        }
        for (result, &n) in results.iter_mut().zip(plays.iter()) {
            if n == 0 {
                continue;
            }
            if result.crashed {
                // A crash anywhere voids the individual's feedback.
                for v in result.raw.values_mut() {
                    *v = 0.0;
                }
            } else {
                for v in result.raw.values_mut() {
                    *v /= n as f64;
                }
            }
        }
    }
}

impl Evaluator for ArenaEvaluator {
    fn evaluate_generation(
        &mut self,
        trees: &[BehaviorTree],
        generation: u64,
    ) -> Vec<EvalResult> {
        self.last_trees = trees.to_vec();
        self.plan = self.build_plan(trees.len(), generation);
        let plans: Vec<&RoundPlan> = self.plan.iter().collect();
        let feedbacks = self.play_all(&plans, trees, None);
        let mut results = vec![EvalResult::default(); trees.len()];
        let mut plays = vec![0u64; trees.len()];
        Self::accumulate(&plans, &feedbacks, &mut results, &mut plays);
        results
    }

    fn evaluate_single(&mut self, seat: usize, tree: &BehaviorTree) -> EvalResult {
        let plans: Vec<&RoundPlan> =
            self.plan.iter().filter(|p| p.seats.contains(&seat)).collect();
        if plans.is_empty() {
            return EvalResult::default();
        }
        let feedbacks = self.play_all(&plans, &self.last_trees, Some((seat, tree)));
        let slots = self.last_trees.len().max(seat + 1);
        let mut results = vec![EvalResult::default(); slots];
        let mut plays = vec![0u64; slots];
        Self::accumulate(&plans, &feedbacks, &mut results, &mut plays);
        results.swap_remove(seat)
    }
}
