use std::collections::BTreeMap;

use btforge_core::arena::{builtin_catalog, run_round, AgentMetrics};
use btforge_core::config::load_config;
use btforge_core::difficulty::classify;
use btforge_core::pipeline::load_seeds;
use btforge_core::rng;

#[test]
fn probe() {
    let config =
        load_config(format!("{}/../../configs/desk.toml", env!("CARGO_MANIFEST_DIR")).as_ref())
            .unwrap();
    let map = config.arena.map().unwrap();
    let catalog = builtin_catalog(&map);
    let (seeds, library) = load_seeds(&config, &catalog).unwrap();
    let striker = &seeds[0];
    let loiterer = &seeds[1];
    let seats = [striker, loiterer, striker, loiterer, striker, loiterer];

    let mut sums: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); 2];
    let rounds = 3;
    for round in 0..rounds {
        let seed = rng::sub_seed(config.seed, &format!("probe-{round}"));
        let out = run_round(&seats, &catalog, &library, &config.arena, seed).unwrap();
        for (seat, metrics) in out.feedback.agents.iter().enumerate() {
            let bucket = &mut sums[seat % 2];
            for name in AgentMetrics::METRIC_NAMES {
                *bucket.entry(name.to_string()).or_insert(0.0) +=
                    metrics.metric(name).unwrap();
            }
        }
    }
    let n = (rounds * 3) as f64;
    for (who, sum) in ["striker", "loiterer"].iter().zip(&sums) {
        let avg: BTreeMap<String, f64> =
            sum.iter().map(|(k, v)| (k.clone(), v / n)).collect();
        println!("{who}: {avg:?}");
        println!(
            "{who} classifies as {:?}",
            classify(&config.difficulty, &avg).map(|c| c.name.clone())
        );
    }
}

#[test]
fn probe_pipeline_time() {
    let config =
        load_config(format!("{}/../../configs/desk.toml", env!("CARGO_MANIFEST_DIR")).as_ref())
            .unwrap();
    let start = std::time::Instant::now();
    let out = btforge_core::pipeline::run_pipeline(&config).unwrap();
    println!("pipeline took {:?}", start.elapsed());
    for (class, pool) in &out.archives {
        println!("{class}: {} archived", pool.len());
    }
    println!("funnel: {:#?}", out.funnel);
    println!("flags: {}", out.flags.len());
}

#[test]
fn probe_medium_population() {
    let config =
        load_config(format!("{}/../../configs/desk.toml", env!("CARGO_MANIFEST_DIR")).as_ref())
            .unwrap();
    let map = config.arena.map().unwrap();
    let catalog = builtin_catalog(&map);
    let (seeds, library) = load_seeds(&config, &catalog).unwrap();
    let evolved =
        btforge_core::pipeline::evolve_classes(&config, &catalog, &seeds, &library).unwrap();
    for (class, pool) in &evolved.pools {
        for t in pool {
            println!(
                "{class}: {} kills={:.2} damage={:.2} fitness={:.3}",
                t.tree.name,
                t.raw.get("kills").copied().unwrap_or(0.0),
                t.raw.get("damage_dealt").copied().unwrap_or(0.0),
                t.fitness
            );
        }
    }
}

#[test]
fn probe_seed_scan() {
    let base =
        load_config(format!("{}/../../configs/desk.toml", env!("CARGO_MANIFEST_DIR")).as_ref())
            .unwrap();
    let map = base.arena.map().unwrap();
    let catalog = builtin_catalog(&map);
    let (seeds, library) = load_seeds(&base, &catalog).unwrap();
    let striker = &seeds[0];
    let skirmisher = &seeds[1];
    let loiterer = &seeds[2];
    for master in [97u64, 1, 2, 3, 4, 5, 6, 7, 8, 11, 13, 17, 19, 23, 29, 31] {
        let mut config = base.clone();
        config.seed = master;
        let seats = [striker, skirmisher, loiterer, striker, skirmisher, loiterer];
        let mut kills = [0.0f64; 3];
        for round in 0..3 {
            let seed = rng::sub_seed(config.seed, &format!("class-check-{round}"));
            let out = run_round(&seats, &catalog, &library, &config.arena, seed).unwrap();
            for (seat, m) in out.feedback.agents.iter().enumerate() {
                kills[seat % 3] += m.metric("kills").unwrap();
            }
        }
        let out = btforge_core::pipeline::run_pipeline(&config).unwrap();
        let pools: Vec<String> =
            out.archives.iter().map(|(c, p)| format!("{c}:{}", p.len())).collect();
        println!();
        println!(
            "seed {master}: striker kills {:.2} skirmisher {:.2} loiterer {:.2} pools {}",
            kills[0] / 6.0,
            kills[1] / 6.0,
            kills[2] / 6.0,
            pools.join(" ")
        );
    }
}

#[test]
fn probe_medium_final_generation() {
    use btforge_core::evolution::{
        run_evolution, ArenaEvaluator, EvalResult, Evaluator,
    };
    use btforge_core::tree::BehaviorTree;

    struct Recorder {
        inner: ArenaEvaluator,
        last: Vec<EvalResult>,
    }
    impl Evaluator for Recorder {
        fn evaluate_generation(
            &mut self,
            trees: &[BehaviorTree],
            generation: u64,
        ) -> Vec<EvalResult> {
            let out = self.inner.evaluate_generation(trees, generation);
            self.last = out.clone();
            out
        }
        fn evaluate_single(&mut self, seat: usize, tree: &BehaviorTree) -> EvalResult {
            self.inner.evaluate_single(seat, tree)
        }
    }

    let config =
        load_config(format!("{}/../../configs/desk.toml", env!("CARGO_MANIFEST_DIR")).as_ref())
            .unwrap();
    let map = config.arena.map().unwrap();
    let catalog = builtin_catalog(&map);
    let (seeds, library) = load_seeds(&config, &catalog).unwrap();
    let inner = ArenaEvaluator::new(
        &catalog,
        &library,
        &config.arena,
        config.evaluation.rounds_per_individual,
        rng::sub_seed(config.seed, "rounds-medium"),
    )
    .unwrap();
    let mut eval = Recorder { inner, last: Vec::new() };
    let outcome = run_evolution(
        &config.evolution,
        &config.difficulty,
        "medium",
        &seeds,
        &catalog,
        &mut eval,
        rng::sub_seed(config.seed, "evolve-medium"),
    )
    .unwrap();
    println!("archived {}", outcome.archived.len());
    for (i, r) in eval.last.iter().enumerate() {
        println!(
            "seat {i}: kills={:.3} damage={:.1} crashed={}",
            r.raw.get("kills").copied().unwrap_or(0.0),
            r.raw.get("damage_dealt").copied().unwrap_or(0.0),
            r.crashed
        );
    }
}
