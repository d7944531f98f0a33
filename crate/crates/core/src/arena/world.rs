//! Arena configuration and mutable world state.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arena::map::{Cell, GridMap};
use crate::arena::trace::PickupKind;
use crate::blackboard::{Blackboard, Vec2};
use crate::hash::Fnv64;

fn default_map_rows() -> Vec<String> {
    [
        "####################",
        "#..................#",
        "#..##..........##..#",
        "#..##..........##..#",
        "#..................#",
        "#......#....#......#",
        "#......#....#......#",
        "#..................#",
        "#..................#",
        "#....##......##....#",
        "#....##......##....#",
        "#..................#",
        "#..................#",
        "#......#....#......#",
        "#......#....#......#",
        "#..................#",
        "#..##..........##..#",
        "#..##..........##..#",
        "#..................#",
        "####################",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

fn d_tick_rate() -> u32 {
    10
}
fn d_round_ticks() -> u64 {
    600
}
fn d_agents() -> usize {
    8
}
fn d_lives() -> u32 {
    3
}
fn d_max_health() -> f64 {
    100.0
}
fn d_move_speed() -> f64 {
    3.0
}
fn d_view_range() -> f64 {
    8.0
}
fn d_projectile_speed() -> f64 {
    12.0
}
fn d_projectile_damage() -> f64 {
    20.0
}
fn d_projectile_range() -> f64 {
    10.0
}
fn d_fire_cooldown_ticks() -> u32 {
    5
}
fn d_start_ammo() -> u32 {
    10
}
fn d_max_ammo() -> u32 {
    30
}
fn d_ammo_pickup_amount() -> u32 {
    10
}
fn d_health_pickup_amount() -> f64 {
    50.0
}
fn d_shield_points() -> f64 {
    50.0
}
fn d_weapon_boost_seconds() -> f64 {
    5.0
}
fn d_weapon_damage_multiplier() -> f64 {
    2.0
}
fn d_box_spawn_period() -> u32 {
    50
}
fn d_max_boxes() -> usize {
    4
}
fn d_checkpoint_period() -> u64 {
    100
}
fn d_escape_window_seconds() -> f64 {
    5.0
}
fn d_escape_health_fraction() -> f64 {
    0.25
}

/// Everything that shapes a round. All fields have working defaults, so a
/// config file only needs to override what it cares about.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaConfig {
    /// Map as ASCII rows: `#` blocks a cell, anything else is walkable.
    pub map_rows: Vec<String>,
    /// Simulation ticks per second of game time.
    pub tick_rate: u32,
    /// Maximum round length in ticks; a round also ends early when at most
    /// one agent is left standing.
    pub round_ticks: u64,
    /// Number of agents in a round.
    pub agents: usize,
    /// Lives per agent; the last death is final.
    pub lives: u32,
    pub max_health: f64,
    /// Agent movement speed in cells per second.
    pub move_speed: f64,
    /// Enemies farther than this are never visible.
    pub view_range: f64,
    /// Projectile speed in cells per second.
    pub projectile_speed: f64,
    /// Damage per projectile hit before the weapon multiplier.
    pub projectile_damage: f64,
    /// Projectiles vanish after traveling this many cells.
    pub projectile_range: f64,
    /// Minimum ticks between shots from one agent.
    pub fire_cooldown_ticks: u32,
    pub start_ammo: u32,
    pub max_ammo: u32,
    pub ammo_pickup_amount: u32,
    pub health_pickup_amount: f64,
    /// Shield granted by a shield pickup; absorbs damage before health.
    pub shield_points: f64,
    /// How long a weapon pickup boosts damage, in seconds.
    pub weapon_boost_seconds: f64,
    pub weapon_damage_multiplier: f64,
    /// A new box spawns every this many ticks while below `max_boxes`.
    pub box_spawn_period: u32,
    pub max_boxes: usize,
    /// A state hash checkpoint is recorded every this many ticks.
    pub checkpoint_period: u64,
    /// Quiet time with no enemy in view that ends an engagement.
    pub escape_window_seconds: f64,
    /// Health fraction below which an escape counts as a low-health escape.
    pub escape_health_fraction: f64,
}

impl Default for ArenaConfig {
    fn default() -> ArenaConfig {
        ArenaConfig {
            map_rows: default_map_rows(),
            tick_rate: d_tick_rate(),
            round_ticks: d_round_ticks(),
            agents: d_agents(),
            lives: d_lives(),
            max_health: d_max_health(),
            move_speed: d_move_speed(),
            view_range: d_view_range(),
            projectile_speed: d_projectile_speed(),
            projectile_damage: d_projectile_damage(),
            projectile_range: d_projectile_range(),
            fire_cooldown_ticks: d_fire_cooldown_ticks(),
            start_ammo: d_start_ammo(),
            max_ammo: d_max_ammo(),
            ammo_pickup_amount: d_ammo_pickup_amount(),
            health_pickup_amount: d_health_pickup_amount(),
            shield_points: d_shield_points(),
            weapon_boost_seconds: d_weapon_boost_seconds(),
            weapon_damage_multiplier: d_weapon_damage_multiplier(),
            box_spawn_period: d_box_spawn_period(),
            max_boxes: d_max_boxes(),
            checkpoint_period: d_checkpoint_period(),
            escape_window_seconds: d_escape_window_seconds(),
            escape_health_fraction: d_escape_health_fraction(),
        }
    }
}

impl ArenaConfig {
    pub fn map(&self) -> Result<GridMap, String> {
        GridMap::from_rows(&self.map_rows)
    }

    pub fn dt(&self) -> f64 {
        1.0 / f64::from(self.tick_rate)
    }

    pub fn escape_window_ticks(&self) -> u64 {
        (self.escape_window_seconds * f64::from(self.tick_rate)).round() as u64
    }

    pub fn weapon_boost_ticks(&self) -> u64 {
        (self.weapon_boost_seconds * f64::from(self.tick_rate)).round() as u64
    }

    /// Checks the config for values a round cannot run with. Errors name the
    /// offending key.
    pub fn validate(&self) -> Result<(), String> {
        let map = self.map().map_err(|e| format!("map_rows: {e}"))?;
        if self.agents < 2 {
            return Err(format!("agents: need at least 2, got {}", self.agents));
        }
        let free = map.walkable_cells().len();
        if free < self.agents {
            return Err(format!(
                "map_rows: only {free} walkable cells for {} agents",
                self.agents
            ));
        }
        if self.tick_rate == 0 {
            return Err("tick_rate: must be positive".into());
        }
        if self.round_ticks == 0 {
            return Err("round_ticks: must be positive".into());
        }
        if self.checkpoint_period == 0 {
            return Err("checkpoint_period: must be positive".into());
        }
        if self.lives == 0 {
            return Err("lives: must be positive".into());
        }
        for (key, v) in [
            ("max_health", self.max_health),
            ("move_speed", self.move_speed),
            ("view_range", self.view_range),
            ("projectile_speed", self.projectile_speed),
            ("projectile_damage", self.projectile_damage),
            ("projectile_range", self.projectile_range),
        ] {
            if !(v > 0.0) {
                return Err(format!("{key}: must be positive, got {v}"));
            }
        }
        for (key, v) in [
            ("health_pickup_amount", self.health_pickup_amount),
            ("shield_points", self.shield_points),
            ("weapon_boost_seconds", self.weapon_boost_seconds),
            ("escape_window_seconds", self.escape_window_seconds),
        ] {
            if !(v >= 0.0) {
                return Err(format!("{key}: must not be negative, got {v}"));
            }
        }
        if self.weapon_damage_multiplier < 1.0 {
            return Err(format!(
                "weapon_damage_multiplier: must be at least 1, got {}",
                self.weapon_damage_multiplier
            ));
        }
        if !(0.0..=1.0).contains(&self.escape_health_fraction) {
            return Err(format!(
                "escape_health_fraction: must be in [0, 1], got {}",
                self.escape_health_fraction
            ));
        }
        if self.box_spawn_period == 0 {
            return Err("box_spawn_period: must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: u32,
    pub pos: Vec2,
    /// Position at the start of the current tick; velocity observations are
    /// derived from it.
    pub prev_pos: Vec2,
    pub facing: Vec2,
    pub health: f64,
    pub shield: f64,
    pub ammo: u32,
    pub lives: u32,
    /// Remaining ticks of weapon damage boost.
    pub weapon_ticks: u64,
    /// Remaining ticks before the agent may fire again.
    pub fire_cooldown: u32,
    pub alive: bool,
    /// A crashed agent stays in the world as a passive target but never
    /// ticks again.
    pub crashed: bool,
    /// Set when health reaches zero; the death phase resolves it.
    pub pending_killer: Option<u32>,
}

impl AgentState {
    pub fn spawn(id: u32, pos: Vec2, config: &ArenaConfig, lives: u32) -> AgentState {
        AgentState {
            id,
            pos,
            prev_pos: pos,
            facing: Vec2::new(1.0, 0.0),
            health: config.max_health,
            shield: 0.0,
            ammo: config.start_ammo,
            lives,
            weapon_ticks: 0,
            fire_cooldown: 0,
            alive: true,
            crashed: false,
            pending_killer: None,
        }
    }

    fn fold_hash(&self, h: &mut Fnv64) {
        h.write_u64(u64::from(self.id));
        h.write_f64(self.pos.x);
        h.write_f64(self.pos.y);
        h.write_f64(self.prev_pos.x);
        h.write_f64(self.prev_pos.y);
        h.write_f64(self.facing.x);
        h.write_f64(self.facing.y);
        h.write_f64(self.health);
        h.write_f64(self.shield);
        h.write_u64(u64::from(self.ammo));
        h.write_u64(u64::from(self.lives));
        h.write_u64(self.weapon_ticks);
        h.write_u64(u64::from(self.fire_cooldown));
        h.write_u8(u8::from(self.alive));
        h.write_u8(u8::from(self.crashed));
        h.write_u64(self.pending_killer.map_or(u64::MAX, u64::from));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projectile {
    pub owner: u32,
    pub pos: Vec2,
    pub dir: Vec2,
    pub damage: f64,
    pub traveled: f64,
}

impl Projectile {
    fn fold_hash(&self, h: &mut Fnv64) {
        h.write_u64(u64::from(self.owner));
        h.write_f64(self.pos.x);
        h.write_f64(self.pos.y);
        h.write_f64(self.dir.x);
        h.write_f64(self.dir.y);
        h.write_f64(self.damage);
        h.write_f64(self.traveled);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PickupBox {
    pub kind: PickupKind,
    pub cell: Cell,
}

impl PickupBox {
    fn fold_hash(self, h: &mut Fnv64) {
        h.write_u8(self.kind.tag());
        h.write_u64(self.cell.x as u64);
        h.write_u64(self.cell.y as u64);
    }
}

/// Mutable state of one round, excluding blackboards and RNG streams (the
/// round driver owns those so agent controllers can borrow the world whole).
#[derive(Debug, Clone)]
pub struct World {
    pub map: GridMap,
    pub tick: u64,
    pub agents: Vec<AgentState>,
    pub projectiles: Vec<Projectile>,
    pub boxes: Vec<PickupBox>,
}

impl World {
    pub fn alive_count(&self) -> usize {
        self.agents.iter().filter(|a| a.alive).count()
    }

    /// True when an enemy at `target` is visible from `from`: within view
    /// range and with clear line of sight.
    pub fn can_see(&self, from: Vec2, target: Vec2, view_range: f64) -> bool {
        from.distance(target) <= view_range && self.map.line_of_sight(from, target)
    }

    fn fold_hash(&self, h: &mut Fnv64) {
        self.map.fold_hash(h);
        h.write_u64(self.tick);
        h.write_u64(self.agents.len() as u64);
        for a in &self.agents {
            a.fold_hash(h);
        }
        h.write_u64(self.projectiles.len() as u64);
        for p in &self.projectiles {
            p.fold_hash(h);
        }
        h.write_u64(self.boxes.len() as u64);
        for b in &self.boxes {
            b.fold_hash(h);
        }
    }
}

/// Draws a pickup for an empty walkable cell: the kind uniformly among the
/// four kinds, the cell uniformly among walkable cells with no box on them.
/// Returns `None` when no such cell exists.
pub fn spawn_pickup(
    map: &GridMap,
    boxes: &[PickupBox],
    rng: &mut ChaCha8Rng,
) -> Option<PickupBox> {
    let free: Vec<Cell> =
        map.walkable_cells().into_iter().filter(|c| !boxes.iter().any(|b| b.cell == *c)).collect();
    if free.is_empty() {
        return None;
    }
    let kind = PickupKind::ALL[rng.gen_range(0..PickupKind::ALL.len())];
    let cell = free[rng.gen_range(0..free.len())];
    Some(PickupBox { kind, cell })
}

/// Deterministic hash of the full round state: world, blackboards, and the
/// consumed position of every RNG stream. Two runs that ever disagree in any
/// of those diverge in this hash.
pub fn state_hash(
    world: &World,
    global: &Blackboard,
    locals: &[Blackboard],
    streams: &[ChaCha8Rng],
) -> u64 {
    let mut h = Fnv64::new();
    world.fold_hash(&mut h);
    global.fold_hash(&mut h);
    h.write_u64(locals.len() as u64);
    for l in locals {
        l.fold_hash(&mut h);
    }
    h.write_u64(streams.len() as u64);
    for s in streams {
        let pos = s.get_word_pos();
        h.write_u64(pos as u64);
        h.write_u64((pos >> 64) as u64);
    }
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn default_config_validates() {
        ArenaConfig::default().validate().expect("default config is runnable");
    }

    #[test]
    fn validate_names_the_bad_key() {
        let mut c = ArenaConfig::default();
        c.agents = 1;
        assert!(c.validate().unwrap_err().contains("agents"));

        let mut c = ArenaConfig::default();
        c.move_speed = 0.0;
        assert!(c.validate().unwrap_err().contains("move_speed"));

        let mut c = ArenaConfig::default();
        c.map_rows = vec!["##".into(), "#".into()];
        assert!(c.validate().unwrap_err().contains("map_rows"));

        let mut c = ArenaConfig::default();
        c.escape_health_fraction = 1.5;
        assert!(c.validate().unwrap_err().contains("escape_health_fraction"));
    }

    #[test]
    fn spawn_pickup_is_uniform_over_kinds_and_cells() {
        let map = GridMap::from_rows(&["....", "..#."]).unwrap();
        let boxes = vec![PickupBox { kind: PickupKind::Ammo, cell: Cell::new(0, 0) }];
        let free = 6.0; // 8 cells, one blocked, one occupied
        let mut rng = rng::stream(7, 0);
        let trials = 100_000;
        let mut kind_counts = [0u32; 4];
        let mut cell_counts = std::collections::BTreeMap::new();
        for _ in 0..trials {
            let b = spawn_pickup(&map, &boxes, &mut rng).expect("free cells exist");
            assert!(map.is_walkable(b.cell));
            assert_ne!(b.cell, Cell::new(0, 0), "occupied cell is never drawn");
            kind_counts[b.kind.tag() as usize] += 1;
            *cell_counts.entry(b.cell).or_insert(0u32) += 1;
        }
        for count in kind_counts {
            let freq = f64::from(count) / f64::from(trials);
            assert!((freq - 0.25).abs() < 0.02, "kind frequency {freq} off from 0.25");
        }
        assert_eq!(cell_counts.len(), free as usize);
        for (&cell, &count) in &cell_counts {
            let freq = f64::from(count) / f64::from(trials);
            let want = 1.0 / free;
            assert!((freq - want).abs() < 0.02, "cell {cell:?} frequency {freq} off from {want}");
        }
    }

    #[test]
    fn spawn_pickup_returns_none_when_full() {
        let map = GridMap::from_rows(&[".#", "##"]).unwrap();
        let boxes = vec![PickupBox { kind: PickupKind::Health, cell: Cell::new(0, 0) }];
        let mut rng = rng::stream(7, 0);
        assert!(spawn_pickup(&map, &boxes, &mut rng).is_none());
    }

    #[test]
    fn state_hash_tracks_rng_consumption() {
        let config = ArenaConfig::default();
        let map = config.map().unwrap();
        let world = World {
            map,
            tick: 0,
            agents: vec![AgentState::spawn(0, Vec2::new(1.0, 1.0), &config, config.lives)],
            projectiles: Vec::new(),
            boxes: Vec::new(),
        };
        let global = Blackboard::new(crate::blackboard::Scope::Global);
        let mut streams = vec![rng::stream(1, 0)];
        let before = state_hash(&world, &global, &[], &streams);
        let again = state_hash(&world, &global, &[], &streams);
        assert_eq!(before, again, "hashing is read only");
        let _: u32 = streams[0].gen();
        let after = state_hash(&world, &global, &[], &streams);
        assert_ne!(before, after, "consuming randomness changes the hash");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = ArenaConfig { agents: 4, round_ticks: 42, ..ArenaConfig::default() };
        let text = toml::to_string(&config).unwrap();
        let back: ArenaConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = toml::from_str::<ArenaConfig>("agents = 4\nbogus_key = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "got {err}");
    }
}
