//! btforge: evolves behavior-tree opponents, classifies them by difficulty,
//! prunes the archive to distinct representatives, and inspects the results.
//!
//! One TOML config drives everything; `--seed`, `--out`, `--jobs`, and
//! `--mixed-batches` override single knobs without editing the file. `run`
//! executes the whole pipeline; the other subcommands run one stage against
//! an existing output directory or loose `.bt` files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use btforge_core::arena::{builtin_catalog, run_round, suppress_panic_output, AgentMetrics};
use btforge_core::catalog::TemplateCatalog;
use btforge_core::config::{load_config, PipelineConfig};
use btforge_core::harness::{coverage, determinism_check, exploit_scan};
use btforge_core::pipeline::{evolve_classes, load_seeds, run_pipeline};
use btforge_core::pruning::{cluster, tournament, ArenaRoundRunner, Similarity};
use btforge_core::report;
use btforge_core::rng;
use btforge_core::text;
use btforge_core::tree::{BehaviorTree, TreeLibrary};
use btforge_core::validate::validate;

#[derive(Parser)]
#[command(
    name = "btforge",
    version,
    about = "Evolves behavior trees into difficulty-classed opponent archives"
)]
struct Cli {
    /// Pipeline config file. Defaults to ./pipeline.toml when present,
    /// otherwise the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true, env = "BTFORGE_SEED", value_name = "U64")]
    seed: Option<u64>,
    /// Artifact directory override.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for evaluation; 0 stays on one thread.
    #[arg(long, global = true, env = "BTFORGE_JOBS", value_name = "N")]
    jobs: Option<usize>,
    /// Draw this fraction of tournament rounds from all classes pooled
    /// together; the bare flag means 0.5.
    #[arg(
        long,
        global = true,
        num_args = 0..=1,
        default_missing_value = "0.5",
        value_name = "FRACTION"
    )]
    mixed_batches: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write every artifact.
    Run,
    /// Evolution only: writes the archive, fitness logs, and the funnel.
    Evolve,
    /// Tournament-score an existing archive into tscores.tsv.
    Tournament,
    /// Cluster an existing archive and write the grouping to clusters.tsv.
    Cluster {
        /// Representatives per class; overrides the config for every class.
        #[arg(long, value_name = "K")]
        k: Option<usize>,
    },
    /// Play one round between tree files and print per-agent metrics.
    Simulate {
        /// Tree files; the count must match the arena's agent count.
        #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
        trees: Vec<PathBuf>,
    },
    /// Replay rounds and compare state-hash checkpoints across runs.
    CheckDeterminism {
        #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
        trees: Vec<PathBuf>,
        /// Total runs compared against the first.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Play rounds seating the given trees and print template, transition,
    /// and parameter-bucket coverage.
    Coverage {
        /// Tree files; seats are filled by cycling through them.
        #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
        trees: Vec<PathBuf>,
        /// Rounds to play, each with its own derived seed.
        #[arg(long, default_value_t = 1)]
        rounds: usize,
    },
    /// Scan the hardest class's archive for suspiciously cheap winners.
    ExploitScan {
        /// Flag trees whose depth+width is at or under this; overrides the
        /// config.
        #[arg(long, value_name = "N")]
        size_threshold: Option<usize>,
    },
    /// Render the funnel table from an output directory.
    Report,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    suppress_panic_output();

    let cli = Cli::parse();
    let config = effective_config(&cli)?;
    match &cli.command {
        Command::Run => cmd_run(&config),
        Command::Evolve => cmd_evolve(&config),
        Command::Tournament => cmd_tournament(&config),
        Command::Cluster { k } => cmd_cluster(&config, *k),
        Command::Simulate { trees } => cmd_simulate(&config, trees),
        Command::CheckDeterminism { trees, repeats } => {
            cmd_check_determinism(&config, trees, *repeats)
        }
        Command::Coverage { trees, rounds } => cmd_coverage(&config, trees, *rounds),
        Command::ExploitScan { size_threshold } => cmd_exploit_scan(&config, *size_threshold),
        Command::Report => cmd_report(&config),
    }
}

/// Loads the config (explicit path, else ./pipeline.toml, else defaults) and
/// applies the command-line overrides, then re-validates.
fn effective_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => {
            let fallback = Path::new("pipeline.toml");
            if fallback.is_file() {
                load_config(fallback)?
            } else {
                PipelineConfig::default()
            }
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(jobs) = cli.jobs {
        config.evaluation.jobs = jobs;
    }
    if let Some(mix) = cli.mixed_batches {
        config.tournament.mix_fraction = mix;
    }
    config.validate()?;
    Ok(config)
}

fn print_written(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn cmd_run(config: &PipelineConfig) -> Result<()> {
    let outcome = run_pipeline(config)?;
    let files = report::write_all(&config.out_dir, config, &outcome)?;
    print_written(&files);
    Ok(())
}

fn cmd_evolve(config: &PipelineConfig) -> Result<()> {
    let map = config.arena.map().map_err(anyhow::Error::msg)?;
    let catalog = builtin_catalog(&map);
    let (seeds, library) = load_seeds(config, &catalog)?;
    let evolved = evolve_classes(config, &catalog, &seeds, &library)?;

    let dir = &config.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = report::write_archive(&dir.join("archive"), &evolved.pools)?;
    for (class, log) in &evolved.fitness_logs {
        let path = dir.join(format!("fitness_{class}.csv"));
        fs::write(&path, report::render_fitness_csv(log))
            .with_context(|| format!("writing {}", path.display()))?;
        files.push(path);
    }
    let funnel_path = dir.join("funnel.tsv");
    fs::write(&funnel_path, report::render_funnel(&evolved.funnel))
        .with_context(|| format!("writing {}", funnel_path.display()))?;
    files.push(funnel_path);
    files.sort();
    print_written(&files);
    Ok(())
}

fn cmd_tournament(config: &PipelineConfig) -> Result<()> {
    let map = config.arena.map().map_err(anyhow::Error::msg)?;
    let catalog = builtin_catalog(&map);
    let pools = report::load_archive(&config.out_dir.join("archive"))
        .context("loading the archive (run `btforge run` or `btforge evolve` first)")?;
    let library = TreeLibrary::new();
    let mut runner = ArenaRoundRunner::new(&catalog, &library, &config.arena, &config.tournament)
        .map_err(anyhow::Error::msg)?;
    let table = tournament(
        &pools,
        &config.difficulty,
        &config.tournament,
        &mut runner,
        rng::sub_seed(config.seed, "tournament"),
    )?;
    let path = config.out_dir.join("tscores.tsv");
    fs::write(&path, report::render_tscores(&table))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_cluster(config: &PipelineConfig, k_override: Option<usize>) -> Result<()> {
    let map = config.arena.map().map_err(anyhow::Error::msg)?;
    let catalog = builtin_catalog(&map);
    let pools = report::load_archive(&config.out_dir.join("archive"))
        .context("loading the archive (run `btforge run` or `btforge evolve` first)")?;
    let sim = Similarity::new(&catalog);

    let mut clusters = BTreeMap::new();
    for (class, pool) in &pools {
        if pool.is_empty() {
            log::warn!("class {class}: archive is empty, skipping");
            continue;
        }
        let k = k_override.unwrap_or_else(|| config.cluster.k_for(class));
        if k > pool.len() {
            bail!("class {class}: K {k} exceeds the {} archived trees", pool.len());
        }
        let trees: Vec<&BehaviorTree> = pool.iter().map(|a| &a.tree).collect();
        let assignment =
            cluster(&trees, k, &sim, rng::sub_seed(config.seed, &format!("cluster-{class}")))
                .map_err(|e| anyhow::Error::msg(e.to_string()))?;
        clusters.insert(class.clone(), assignment);
    }
    let path = config.out_dir.join("clusters.tsv");
    fs::write(&path, report::render_clusters(&clusters))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

/// Parses loose `.bt` files into a seating order plus a library so proxies
/// among them resolve, and validates each against the catalog.
fn load_tree_files(
    paths: &[PathBuf],
    catalog: &TemplateCatalog,
) -> Result<(Vec<BehaviorTree>, TreeLibrary)> {
    let mut trees = Vec::new();
    let mut library = TreeLibrary::new();
    for path in paths {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let tree =
            text::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        if library.contains_key(&tree.name) {
            bail!("{}: duplicate tree name {:?}", path.display(), tree.name);
        }
        library.insert(tree.name.clone(), tree.clone());
        trees.push(tree);
    }
    for tree in &trees {
        if let Some(v) = validate(tree, catalog, &library).first() {
            bail!("tree {:?}: {v}", tree.name);
        }
    }
    Ok((trees, library))
}

fn cmd_simulate(config: &PipelineConfig, paths: &[PathBuf]) -> Result<()> {
    let map = config.arena.map().map_err(anyhow::Error::msg)?;
    let catalog = builtin_catalog(&map);
    let (trees, library) = load_tree_files(paths, &catalog)?;
    if trees.len() != config.arena.agents {
        bail!(
            "{} trees given but the arena seats {} agents (arena.agents)",
            trees.len(),
            config.arena.agents
        );
    }
    let seats: Vec<&BehaviorTree> = trees.iter().collect();
    let outcome = run_round(&seats, &catalog, &library, &config.arena, config.seed)
        .map_err(|e| anyhow::Error::msg(e.to_string()))?;

    println!("end_tick\t{}", outcome.feedback.end_tick);
    let mut header = String::from("agent\ttree");
    for name in AgentMetrics::METRIC_NAMES {
        header.push('\t');
        header.push_str(name);
    }
    header.push_str("\tcrashed");
    println!("{header}");
    for (i, agent) in outcome.feedback.agents.iter().enumerate() {
        let mut row = format!("{i}\t{}", trees[i].name);
        for name in AgentMetrics::METRIC_NAMES {
            let value = agent.metric(name).expect("metric names are exhaustive");
            row.push('\t');
            row.push_str(&value.to_string());
        }
        row.push_str(if agent.crashed { "\tyes" } else { "\tno" });
        println!("{row}");
    }
    Ok(())
}

fn cmd_check_determinism(
    config: &PipelineConfig,
    paths: &[PathBuf],
    repeats: usize,
) -> Result<()> {
    let map = config.arena.map().map_err(anyhow::Error::msg)?;
    let catalog = builtin_catalog(&map);
    let (trees, library) = load_tree_files(paths, &catalog)?;
    if trees.len() != config.arena.agents {
        bail!(
            "{} trees given but the arena seats {} agents (arena.agents)",
            trees.len(),
            config.arena.agents
        );
    }
    let seats: Vec<&BehaviorTree> = trees.iter().collect();
    let divergence =
        determinism_check(&seats, &catalog, &library, &config.arena, config.seed, repeats)
            .map_err(|e| anyhow::Error::msg(e.to_string()))?;
    match divergence {
        None => {
            println!("determinism\tok\t{repeats} runs identical (seed {})", config.seed);
            Ok(())
        }
        Some(d) => {
            println!(
                "determinism\tFAILED\tcheckpoint {} differs in run {} (baseline {:?}, observed {:?})",
                d.checkpoint, d.run, d.baseline, d.observed
            );
            bail!("simulation is not deterministic");
        }
    }
}

fn cmd_coverage(config: &PipelineConfig, paths: &[PathBuf], rounds: usize) -> Result<()> {
    if rounds == 0 {
        bail!("--rounds must be positive");
    }
    let map = config.arena.map().map_err(anyhow::Error::msg)?;
    let catalog = builtin_catalog(&map);
    let (trees, library) = load_tree_files(paths, &catalog)?;
    let seats: Vec<&BehaviorTree> =
        (0..config.arena.agents).map(|i| &trees[i % trees.len()]).collect();

    let mut traces = Vec::new();
    for round in 0..rounds {
        let seed = rng::sub_seed(config.seed, &format!("coverage-{round}"));
        let outcome = run_round(&seats, &catalog, &library, &config.arena, seed)
            .map_err(|e| anyhow::Error::msg(e.to_string()))?;
        traces.push(outcome.trace);
    }
    print!("{}", report::render_coverage(&coverage(&traces, &catalog)));
    Ok(())
}

fn cmd_exploit_scan(config: &PipelineConfig, size_threshold: Option<usize>) -> Result<()> {
    let pools = report::load_archive(&config.out_dir.join("archive"))
        .context("loading the archive (run `btforge run` or `btforge evolve` first)")?;
    let tscores_path = config.out_dir.join("tscores.tsv");
    let table = fs::read_to_string(&tscores_path)
        .with_context(|| {
            format!("reading {} (run `btforge tournament` first)", tscores_path.display())
        })
        .and_then(|text| report::parse_tscores(&text).map_err(anyhow::Error::msg))?;

    let threshold = size_threshold.unwrap_or(config.exploit_size_threshold);
    let flags = exploit_scan(&pools, &config.difficulty, &table, threshold);
    let path = config.out_dir.join("exploits.tsv");
    fs::write(&path, report::render_exploits(&flags))
        .with_context(|| format!("writing {}", path.display()))?;
    if flags.is_empty() {
        println!("no exploit flags (size threshold {threshold})");
    }
    for f in &flags {
        println!("{}\t{}\t{}", f.class, f.tree, f.reason);
    }
    Ok(())
}

fn cmd_report(config: &PipelineConfig) -> Result<()> {
    let path = config.out_dir.join("funnel.tsv");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {} (run `btforge run` first)", path.display()))?;
    let funnel = report::parse_funnel(&text).map_err(anyhow::Error::msg)?;

    let width = funnel.keys().map(|c| c.len()).max().unwrap_or(5).max("class".len());
    println!(
        "{:<width$}  {:>8}  {:>8}  {:>9}  {:>10}  {:>12}",
        "class", "created", "crashed", "discarded", "classified", "unclassified"
    );
    let mut total = [0u64; 5];
    for (class, f) in &funnel {
        println!(
            "{class:<width$}  {:>8}  {:>8}  {:>9}  {:>10}  {:>12}",
            f.created, f.crashed, f.discarded, f.classified, f.unclassified
        );
        for (slot, v) in total
            .iter_mut()
            .zip([f.created, f.crashed, f.discarded, f.classified, f.unclassified])
        {
            *slot += v;
        }
    }
    println!(
        "{:<width$}  {:>8}  {:>8}  {:>9}  {:>10}  {:>12}",
        "total", total[0], total[1], total[2], total[3], total[4]
    );
    Ok(())
}
