//! Deterministic grid-combat arena.
//!
//! A round puts one behavior tree in control of each agent and steps the
//! world in a fixed phase order: agents tick by id, projectiles fly, pickup
//! boxes spawn and get collected, deaths resolve. All randomness comes from
//! named substreams of the round seed (one per agent plus one for the
//! world), so two runs with the same trees, config, and seed produce
//! byte-identical traces. A panicking controller is caught, logged, and
//! leaves its agent inert; the round keeps going.

pub mod builtin;
pub mod map;
pub mod runtime;
pub mod trace;
pub mod world;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Once;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::blackboard::{Blackboard, EntityId, Scope, Value, Vec2};
use crate::catalog::TemplateCatalog;
use crate::engine::{self, BindError, TickEnv};
use crate::rng;
use crate::tree::{BehaviorTree, TreeLibrary};

pub use builtin::{builtin_catalog, keys, OpTables};
pub use map::{cell_of, Cell, GridMap};
pub use runtime::ArenaRuntime;
pub use trace::{collect_metrics, AgentMetrics, PickupKind, RoundFeedback, SimTrace, TraceEvent};
pub use world::{spawn_pickup, state_hash, AgentState, ArenaConfig, PickupBox, Projectile, World};

#[derive(Debug, Error)]
pub enum RoundError {
    #[error("arena config: {0}")]
    Config(String),
    #[error("template catalog: {0}")]
    Catalog(String),
    #[error("round needs one tree per agent: got {trees} trees for {agents} agents")]
    TreeCount { trees: usize, agents: usize },
    #[error("agent {agent} ({tree}): {source}")]
    Bind { agent: usize, tree: String, source: BindError },
}

/// Test and diagnostic taps into a running round.
#[derive(Default)]
pub struct RoundHooks<'h> {
    /// Runs right before each living agent's controller tick, inside the
    /// same panic guard, so a panicking hook crashes that agent exactly like
    /// a controller bug would.
    pub pre_agent_tick: Option<Box<dyn FnMut(u64, usize, &mut World) + 'h>>,
}

/// What a finished round hands back.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub trace: SimTrace,
    pub feedback: RoundFeedback,
}

/// Replaces the process panic hook with a silent one. Rounds catch controller
/// panics and record them in the trace, so the default hook's backtrace spam
/// is pure noise when crashing controllers are expected (evolution, crash
/// tests). Irreversible for the process; call only where that is acceptable.
pub fn suppress_panic_output() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| std::panic::set_hook(Box::new(|_| {})));
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "controller panicked".to_string()
    }
}

/// Runs one round with the given tree per agent. See [`run_round_with_hooks`].
pub fn run_round(
    trees: &[&BehaviorTree],
    catalog: &TemplateCatalog,
    library: &TreeLibrary,
    config: &ArenaConfig,
    seed: u64,
) -> Result<RoundOutcome, RoundError> {
    run_round_with_hooks(trees, catalog, library, config, seed, &mut RoundHooks::default())
}

/// Runs one round, calling the hooks along the way.
///
/// RNG layout: substream 0 of `seed` drives world randomness (initial spawn
/// cells, box placement), substream `1 + i` belongs to agent `i` (chance
/// decorators, shuffles, respawn cells), so one agent's rolls never shift
/// another's.
pub fn run_round_with_hooks(
    trees: &[&BehaviorTree],
    catalog: &TemplateCatalog,
    library: &TreeLibrary,
    config: &ArenaConfig,
    seed: u64,
    hooks: &mut RoundHooks<'_>,
) -> Result<RoundOutcome, RoundError> {
    config.validate().map_err(RoundError::Config)?;
    let map = config.map().map_err(RoundError::Config)?;
    let ops = OpTables::from_catalog(catalog).map_err(RoundError::Catalog)?;
    let n = config.agents;
    if trees.len() != n {
        return Err(RoundError::TreeCount { trees: trees.len(), agents: n });
    }

    let mut streams: Vec<ChaCha8Rng> = (0..=n).map(|i| rng::stream(seed, i as u64)).collect();
    let walkable = map.walkable_cells();

    // Distinct starting cells, drawn from the world stream.
    let mut free = walkable.clone();
    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let cell = free.swap_remove(streams[0].gen_range(0..free.len()));
        agents.push(AgentState::spawn(i as u32, cell.center(), config, config.lives));
    }

    let mut world =
        World { map, tick: 0, agents, projectiles: Vec::new(), boxes: Vec::new() };

    let mut global = Blackboard::new(Scope::Global);
    global.insert(keys::TICK, Value::Number(0.0));
    global.insert(keys::AGENTS_ALIVE, Value::Number(n as f64));
    global.insert(keys::BOX_COUNT, Value::Number(0.0));

    let mut locals: Vec<Blackboard> = Vec::with_capacity(n);
    let mut trace = SimTrace::default();
    for a in &world.agents {
        let mut local = Blackboard::new(Scope::Local);
        local.insert(keys::SELF_POS, Value::Vec2(a.pos));
        local.insert(keys::SELF_FACING, Value::Vec2(a.facing));
        local.insert(keys::SELF_HEALTH, Value::Number(a.health));
        local.insert(keys::SELF_AMMO, Value::Number(f64::from(a.ammo)));
        local.insert(keys::SELF_LIVES, Value::Number(f64::from(a.lives)));
        local.insert(keys::SELF_SHIELD, Value::Number(a.shield));
        local.insert(keys::SELF_WEAPON, Value::Number(0.0));
        local.insert(keys::ENEMY_VISIBLE, Value::Bool(false));
        local.insert(keys::CLOSEST_ENEMY, Value::Entity(EntityId::NONE));
        local.insert(keys::CLOSEST_ENEMY_POS, Value::Vec2(a.pos));
        local.insert(keys::CLOSEST_ENEMY_VEL, Value::Vec2(Vec2::ZERO));
        local.insert(keys::CLOSEST_ENEMY_HEALTH, Value::Number(0.0));
        local.insert(keys::CLOSEST_ENEMY_SHIELD, Value::Number(0.0));
        local.insert(keys::CLOSEST_ENEMY_WEAPON, Value::Number(0.0));
        local.insert(keys::BOX_AVAILABLE, Value::Bool(false));
        local.insert(keys::CLOSEST_BOX_POS, Value::Vec2(Vec2::ZERO));
        trace.push(0, Some(a.id), TraceEvent::Spawn { pos: a.pos });
        locals.push(local);
    }

    let mut bounds = Vec::with_capacity(n);
    for (i, tree) in trees.iter().enumerate() {
        let bound = engine::bind(tree, catalog, &global, &mut locals[i], library).map_err(
            |source| RoundError::Bind { agent: i, tree: tree.name.clone(), source },
        )?;
        bounds.push(bound);
    }

    let dt = config.dt();
    let mut prev_visible = vec![false; n];
    let mut exec = Vec::new();
    let mut reason = "tick_limit";

    for t in 1..=config.round_ticks {
        world.tick = t;

        // Housekeeping: remember last positions, run down timers.
        for a in &mut world.agents {
            a.prev_pos = a.pos;
            if a.alive {
                a.fire_cooldown = a.fire_cooldown.saturating_sub(1);
                a.weapon_ticks = a.weapon_ticks.saturating_sub(1);
            }
        }

        let g_tick = global.slot(keys::TICK).expect("inserted above");
        let g_alive = global.slot(keys::AGENTS_ALIVE).expect("inserted above");
        let g_boxes = global.slot(keys::BOX_COUNT).expect("inserted above");
        global.set(g_tick, Value::Number(t as f64));
        global.set(g_alive, Value::Number(world.alive_count() as f64));
        global.set(g_boxes, Value::Number(world.boxes.len() as f64));

        // Agent phase, in id order.
        for i in 0..n {
            if !world.agents[i].alive || world.agents[i].crashed {
                continue;
            }
            write_observations(&world, config, &mut locals[i], i, &mut prev_visible[i], &mut trace);
            exec.clear();
            let result = catch_unwind(AssertUnwindSafe(|| {
                if let Some(h) = hooks.pre_agent_tick.as_mut() {
                    h(t, i, &mut world);
                }
                let mut rt = ArenaRuntime {
                    world: &mut world,
                    agent: i,
                    config,
                    ops: &ops,
                    trace: &mut trace,
                };
                let mut env = TickEnv::new(
                    dt,
                    t as f64 * dt,
                    &mut streams[i + 1],
                    &global,
                    &mut locals[i],
                    &mut rt,
                    &mut exec,
                );
                engine::tick(&bounds[i], &mut env)
            }));
            match result {
                Ok(_status) => {
                    for e in exec.drain(..) {
                        let name = catalog.section(e.kind)[e.template].name.clone();
                        trace.push(
                            t,
                            Some(i as u32),
                            TraceEvent::Exec { kind: e.kind, template: name, params: e.params },
                        );
                    }
                }
                Err(payload) => {
                    world.agents[i].crashed = true;
                    trace.push(
                        t,
                        Some(i as u32),
                        TraceEvent::Crash { message: panic_message(payload) },
                    );
                }
            }
        }

        // Projectile phase.
        let flight = config.projectile_speed * dt;
        let mut projectiles = std::mem::take(&mut world.projectiles);
        projectiles.retain_mut(|p| {
            let mut remaining = flight;
            while remaining > 0.0 {
                let adv = remaining.min(0.25);
                p.pos = p.pos.add(p.dir.scale(adv));
                p.traveled += adv;
                remaining -= adv;
                if !world.map.is_walkable(cell_of(p.pos)) {
                    return false;
                }
                let hit = world.agents.iter().position(|a| {
                    a.alive && a.id != p.owner && a.pos.distance(p.pos) <= 0.5
                });
                if let Some(victim) = hit {
                    apply_damage(&mut world, &mut trace, config, p.owner, victim, p.damage);
                    return false;
                }
                if p.traveled >= config.projectile_range {
                    return false;
                }
            }
            true
        });
        world.projectiles = projectiles;

        // Pickup phase: scheduled spawns, then collection in agent id order.
        if t % u64::from(config.box_spawn_period) == 0 && world.boxes.len() < config.max_boxes {
            if let Some(b) = spawn_pickup(&world.map, &world.boxes, &mut streams[0]) {
                world.boxes.push(b);
                trace.push(t, None, TraceEvent::BoxSpawn { kind: b.kind, cell: b.cell });
            }
        }
        let mut boxes = std::mem::take(&mut world.boxes);
        boxes.retain(|b| {
            let taker = world
                .agents
                .iter()
                .position(|a| a.alive && a.pos.distance(b.cell.center()) <= 0.5);
            match taker {
                Some(i) => {
                    apply_pickup(&mut world, &mut trace, config, i, b.kind);
                    false
                }
                None => true,
            }
        });
        world.boxes = boxes;

        // Death phase.
        for i in 0..n {
            let a = &mut world.agents[i];
            if !(a.alive && a.health <= 0.0) {
                continue;
            }
            let killer = a.pending_killer.take().unwrap_or(u32::MAX);
            a.lives -= 1;
            trace.push(t, Some(i as u32), TraceEvent::Death { killer });
            if a.lives > 0 {
                let lives = a.lives;
                let crashed = a.crashed;
                let cell = walkable[streams[i + 1].gen_range(0..walkable.len())];
                *a = AgentState::spawn(i as u32, cell.center(), config, lives);
                a.crashed = crashed;
                trace.push(t, Some(i as u32), TraceEvent::Spawn { pos: a.pos });
            } else {
                a.alive = false;
            }
        }

        if t % config.checkpoint_period == 0 {
            let hash = state_hash(&world, &global, &locals, &streams);
            trace.push(t, None, TraceEvent::Checkpoint { hash });
        }

        if world.alive_count() <= 1 {
            reason = "last_agent";
            break;
        }
    }

    let end = world.tick;
    let hash = state_hash(&world, &global, &locals, &streams);
    trace.push(end, None, TraceEvent::Checkpoint { hash });
    trace.push(end, None, TraceEvent::RoundEnd { reason: reason.to_string() });

    let feedback = collect_metrics(&trace, config);
    Ok(RoundOutcome { trace, feedback })
}

fn apply_damage(
    world: &mut World,
    trace: &mut SimTrace,
    config: &ArenaConfig,
    attacker: u32,
    victim: usize,
    amount: f64,
) {
    let tick = world.tick;
    let a = &mut world.agents[victim];
    let absorbed = amount.min(a.shield);
    a.shield -= absorbed;
    a.health = (a.health - (amount - absorbed)).max(0.0);
    if a.health <= 0.0 && a.pending_killer.is_none() {
        a.pending_killer = Some(attacker);
    }
    debug_assert!(a.shield >= 0.0 && (0.0..=config.max_health).contains(&a.health));
    trace.push(
        tick,
        Some(a.id),
        TraceEvent::Damage { attacker, amount, health_after: a.health, shield_after: a.shield },
    );
}

fn apply_pickup(
    world: &mut World,
    trace: &mut SimTrace,
    config: &ArenaConfig,
    agent: usize,
    kind: PickupKind,
) {
    let tick = world.tick;
    let a = &mut world.agents[agent];
    match kind {
        PickupKind::Shield => a.shield = config.shield_points,
        PickupKind::Weapon => a.weapon_ticks = config.weapon_boost_ticks(),
        PickupKind::Ammo => a.ammo = (a.ammo + config.ammo_pickup_amount).min(config.max_ammo),
        PickupKind::Health => {
            a.health = (a.health + config.health_pickup_amount).min(config.max_health);
        }
    }
    debug_assert!(a.ammo <= config.max_ammo && a.health <= config.max_health);
    trace.push(tick, Some(a.id), TraceEvent::Pickup { kind });
}

/// Refreshes one agent's observation keys from the live world and logs
/// enemy-visibility transitions. When no enemy is in view the closest-enemy
/// keys keep their last values, so trees can chase a cold trail.
fn write_observations(
    world: &World,
    config: &ArenaConfig,
    local: &mut Blackboard,
    agent: usize,
    prev_visible: &mut bool,
    trace: &mut SimTrace,
) {
    let me = &world.agents[agent];
    local.insert(keys::SELF_POS, Value::Vec2(me.pos));
    local.insert(keys::SELF_FACING, Value::Vec2(me.facing));
    local.insert(keys::SELF_HEALTH, Value::Number(me.health));
    local.insert(keys::SELF_AMMO, Value::Number(f64::from(me.ammo)));
    local.insert(keys::SELF_LIVES, Value::Number(f64::from(me.lives)));
    local.insert(keys::SELF_SHIELD, Value::Number(me.shield));
    local.insert(keys::SELF_WEAPON, Value::Number(me.weapon_ticks as f64));

    let mut closest: Option<&AgentState> = None;
    for enemy in &world.agents {
        if enemy.id == me.id || !enemy.alive {
            continue;
        }
        if !world.can_see(me.pos, enemy.pos, config.view_range) {
            continue;
        }
        let better = match closest {
            None => true,
            Some(best) => {
                let (d, bd) = (me.pos.distance(enemy.pos), me.pos.distance(best.pos));
                d < bd || (d == bd && enemy.id < best.id)
            }
        };
        if better {
            closest = Some(enemy);
        }
    }
    let visible = closest.is_some();
    local.insert(keys::ENEMY_VISIBLE, Value::Bool(visible));
    if let Some(enemy) = closest {
        let vel = enemy.pos.sub(enemy.prev_pos).scale(f64::from(config.tick_rate));
        local.insert(keys::CLOSEST_ENEMY, Value::Entity(EntityId(enemy.id)));
        local.insert(keys::CLOSEST_ENEMY_POS, Value::Vec2(enemy.pos));
        local.insert(keys::CLOSEST_ENEMY_VEL, Value::Vec2(vel));
        local.insert(keys::CLOSEST_ENEMY_HEALTH, Value::Number(enemy.health));
        local.insert(keys::CLOSEST_ENEMY_SHIELD, Value::Number(enemy.shield));
        local.insert(keys::CLOSEST_ENEMY_WEAPON, Value::Number(enemy.weapon_ticks as f64));
    }
    if visible != *prev_visible {
        let event = if visible { TraceEvent::EnemySeen } else { TraceEvent::EnemyLost };
        trace.push(world.tick, Some(me.id), event);
        *prev_visible = visible;
    }

    local.insert(keys::BOX_AVAILABLE, Value::Bool(!world.boxes.is_empty()));
    let closest_box = world.boxes.iter().min_by(|a, b| {
        me.pos
            .distance(a.cell.center())
            .partial_cmp(&me.pos.distance(b.cell.center()))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cell.cmp(&b.cell))
    });
    if let Some(b) = closest_box {
        local.insert(keys::CLOSEST_BOX_POS, Value::Vec2(b.cell.center()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeNode;

    fn open_map_config() -> ArenaConfig {
        ArenaConfig {
            map_rows: vec![
                "##########".into(),
                "#........#".into(),
                "#........#".into(),
                "#........#".into(),
                "#........#".into(),
                "#........#".into(),
                "#........#".into(),
                "#........#".into(),
                "#........#".into(),
                "##########".into(),
            ],
            agents: 2,
            view_range: 30.0,
            start_ammo: 40,
            max_ammo: 40,
            // Short weapon range, so the hunter has to close the distance.
            projectile_range: 4.0,
            // No boxes: keeps the duel arithmetic exact.
            box_spawn_period: 1_000_000,
            round_ticks: 600,
            ..ArenaConfig::default()
        }
    }

    fn tree(name: &str, mut root: TreeNode) -> BehaviorTree {
        root.renumber();
        BehaviorTree::new(name, root)
    }

    // Fires only inside weapon range (radius under projectile_range minus
    // the muzzle offset), otherwise closes in. With the firing radius above
    // the approach range there is no standoff gap, and with the fire
    // cooldown longer than a shot's flight time at most one projectile is
    // ever in the air, so every shot fired at the stationary idler lands.
    fn hunter() -> BehaviorTree {
        let root = TreeNode::selector(
            0,
            vec![
                TreeNode::sequence(
                    0,
                    vec![
                        TreeNode::condition(0, "enemy_close", vec![]).with_param("radius", 3.5),
                        TreeNode::action(0, "fire_lead"),
                    ],
                ),
                TreeNode::action(0, "pathfind_closest_enemy").with_param("range", 3.0),
            ],
        );
        tree("hunter", root)
    }

    fn idler() -> BehaviorTree {
        tree("idler", TreeNode::action(0, "idle"))
    }

    fn run(config: &ArenaConfig, trees: &[&BehaviorTree], seed: u64) -> RoundOutcome {
        let map = config.map().unwrap();
        let catalog = builtin_catalog(&map);
        run_round(trees, &catalog, &TreeLibrary::new(), config, seed).expect("round runs")
    }

    #[test]
    fn hunter_eliminates_idler() {
        let config = open_map_config();
        let out = run(&config, &[&hunter(), &idler()], 11);

        // Lives times (max_health / projectile_damage) hits, all landed by
        // the hunter: 3 * 5 hits of 20 damage.
        let hunter_m = &out.feedback.agents[0];
        let idler_m = &out.feedback.agents[1];
        assert_eq!(hunter_m.kills, 3);
        assert_eq!(hunter_m.deaths, 0);
        assert_eq!(hunter_m.damage_dealt, 300.0);
        assert_eq!(idler_m.kills, 0);
        assert_eq!(idler_m.deaths, 3);
        assert_eq!(idler_m.distance, 0.0, "idler never moves");
        assert!(hunter_m.distance > 0.0, "hunter closes the distance");

        let end = out.trace.end_tick();
        assert!(end < config.round_ticks, "round ends as soon as one agent stands");
        assert!(matches!(
            out.trace.records.last().map(|r| &r.event),
            Some(TraceEvent::RoundEnd { reason }) if reason == "last_agent"
        ));
        assert_eq!(hunter_m.survival_ticks, end);
        assert!(
            out.trace.records.iter().any(|r| matches!(r.event, TraceEvent::EnemySeen)),
            "visibility transitions are logged"
        );
    }

    #[test]
    fn same_seed_replays_byte_identically() {
        let config = open_map_config();
        let trees = [hunter(), idler()];
        let refs: Vec<&BehaviorTree> = trees.iter().collect();
        let a = run(&config, &refs, 42);
        let b = run(&config, &refs, 42);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace.dump(), b.trace.dump());
        assert_eq!(a.feedback, b.feedback);

        let c = run(&config, &refs, 43);
        assert_ne!(a.trace.dump(), c.trace.dump(), "different seed, different round");
    }

    #[test]
    fn full_default_round_is_deterministic() {
        let config = ArenaConfig { round_ticks: 300, ..ArenaConfig::default() };
        let trees: Vec<BehaviorTree> =
            (0..config.agents).map(|i| if i % 2 == 0 { hunter() } else { idler() }).collect();
        let refs: Vec<&BehaviorTree> = trees.iter().collect();
        let a = run(&config, &refs, 7);
        let b = run(&config, &refs, 7);
        assert_eq!(a.trace.checkpoints(), b.trace.checkpoints());
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn move_speed_changes_the_outcome() {
        let config = open_map_config();
        let fast = ArenaConfig { move_speed: config.move_speed * 2.0, ..config.clone() };
        let trees = [hunter(), idler()];
        let refs: Vec<&BehaviorTree> = trees.iter().collect();
        let slow_out = run(&config, &refs, 42);
        let fast_out = run(&fast, &refs, 42);
        assert_ne!(
            slow_out.trace.dump(),
            fast_out.trace.dump(),
            "movement speed must influence the round"
        );
    }

    #[test]
    fn panicking_controller_crashes_only_its_agent() {
        suppress_panic_output();
        let config = open_map_config();
        let map = config.map().unwrap();
        let catalog = builtin_catalog(&map);
        let trees = [hunter(), idler()];
        let refs: Vec<&BehaviorTree> = trees.iter().collect();
        let mut hooks = RoundHooks {
            pre_agent_tick: Some(Box::new(|tick, agent, _world: &mut World| {
                if tick == 5 && agent == 1 {
                    panic!("injected fault");
                }
            })),
        };
        let out = run_round_with_hooks(&refs, &catalog, &TreeLibrary::new(), &config, 11, &mut hooks)
            .expect("round survives the crash");

        let crash = out
            .trace
            .records
            .iter()
            .find(|r| matches!(r.event, TraceEvent::Crash { .. }))
            .expect("crash is logged");
        assert_eq!((crash.tick, crash.agent), (5, Some(1)));
        assert!(out.feedback.agents[1].crashed);
        assert_eq!(out.feedback.agents[1], AgentMetrics { crashed: true, ..Default::default() });
        // The hunter still plays a full round against the inert body.
        assert_eq!(out.feedback.agents[0].kills, 3);
        assert!(!out.feedback.agents[0].crashed);
    }

    #[test]
    fn idle_round_runs_to_the_tick_limit() {
        let config = ArenaConfig { agents: 2, round_ticks: 150, ..open_map_config() };
        let trees = [idler(), idler()];
        let refs: Vec<&BehaviorTree> = trees.iter().collect();
        let out = run(&config, &refs, 3);
        assert_eq!(out.trace.end_tick(), 150);
        assert!(matches!(
            out.trace.records.last().map(|r| &r.event),
            Some(TraceEvent::RoundEnd { reason }) if reason == "tick_limit"
        ));
        for m in &out.feedback.agents {
            assert_eq!(m.survival_ticks, 150);
            assert_eq!(m.deaths, 0);
        }
        assert!(
            !out.trace.records.iter().any(|r| matches!(r.event, TraceEvent::Damage { .. })),
            "idlers never hurt each other"
        );
    }

    #[test]
    fn boxes_spawn_and_get_collected() {
        let mut config = ArenaConfig { agents: 2, round_ticks: 400, ..open_map_config() };
        config.box_spawn_period = 20;
        config.max_boxes = 4;
        // Chasers roam the map, so they run into boxes eventually.
        let chaser = tree(
            "chaser",
            TreeNode::selector(
                0,
                vec![
                    TreeNode::action(0, "pathfind_closest_box"),
                    TreeNode::action(0, "pathfind_closest_enemy"),
                ],
            ),
        );
        let trees = [chaser.clone(), chaser];
        let refs: Vec<&BehaviorTree> = trees.iter().collect();
        let out = run(&config, &refs, 5);
        assert!(
            out.trace.records.iter().any(|r| matches!(r.event, TraceEvent::BoxSpawn { .. })),
            "boxes spawn on schedule"
        );
        let picked: u32 = out
            .feedback
            .agents
            .iter()
            .map(|m| m.shield_pickups + m.weapon_pickups + m.ammo_pickups + m.health_pickups)
            .sum();
        assert!(picked > 0, "somebody collects a box");
    }

    #[test]
    fn bind_failure_names_the_agent_and_tree() {
        let config = open_map_config();
        let map = config.map().unwrap();
        let catalog = builtin_catalog(&map);
        let bad = tree("warper", TreeNode::action(0, "warp"));
        let good = idler();
        let err = run_round(&[&good, &bad], &catalog, &TreeLibrary::new(), &config, 1)
            .expect_err("unknown template cannot bind");
        let msg = err.to_string();
        assert!(msg.contains("agent 1") && msg.contains("warper") && msg.contains("warp"), "got {msg}");
    }

    #[test]
    fn damage_events_stay_within_health_bounds() {
        let config = open_map_config();
        let trees = [hunter(), hunter()];
        let refs: Vec<&BehaviorTree> = trees.iter().collect();
        let out = run(&config, &refs, 99);
        for r in &out.trace.records {
            if let TraceEvent::Damage { health_after, shield_after, .. } = r.event {
                assert!((0.0..=config.max_health).contains(&health_after));
                assert!(shield_after >= 0.0);
            }
        }
    }
}
