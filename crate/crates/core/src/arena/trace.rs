//! Round traces: the event log a round emits and the metrics derived from it.
//!
//! The trace is the single source for round feedback. `collect_metrics`
//! replays the event stream and produces per-agent numbers, so every consumer
//! (evolution, tournaments, reports, coverage) agrees with what actually
//! happened in the round. Traces dump to a line-based text form, one event
//! per line: `tick<TAB>agent<TAB>event<TAB>payload`.

use serde::{Deserialize, Serialize};

use crate::arena::map::Cell;
use crate::arena::world::ArenaConfig;
use crate::blackboard::Vec2;
use crate::catalog::TemplateKind;

/// What a pickup box grants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PickupKind {
    Shield,
    Weapon,
    Ammo,
    Health,
}

impl PickupKind {
    pub const ALL: [PickupKind; 4] =
        [PickupKind::Shield, PickupKind::Weapon, PickupKind::Ammo, PickupKind::Health];

    pub fn name(self) -> &'static str {
        match self {
            PickupKind::Shield => "shield",
            PickupKind::Weapon => "weapon",
            PickupKind::Ammo => "ammo",
            PickupKind::Health => "health",
        }
    }

    pub fn parse(s: &str) -> Option<PickupKind> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            PickupKind::Shield => 0,
            PickupKind::Weapon => 1,
            PickupKind::Ammo => 2,
            PickupKind::Health => 3,
        }
    }
}

/// One simulation event. The `agent` column of the enclosing record names the
/// acting agent (the victim, for `Damage` and `Death`); world events carry no
/// agent.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    /// Agent entered the world (round start or respawn) at a position.
    Spawn { pos: Vec2 },
    /// Agent moved to a new position.
    Move { pos: Vec2 },
    /// Agent fired a projectile along a direction.
    Fire { dir: Vec2 },
    /// Agent took damage; `attacker` dealt `amount` before mitigation.
    Damage { attacker: u32, amount: f64, health_after: f64, shield_after: f64 },
    /// Agent ran out of health; `killer` scores the kill.
    Death { killer: u32 },
    /// Agent collected a pickup box.
    Pickup { kind: PickupKind },
    /// A pickup box appeared on a cell.
    BoxSpawn { kind: PickupKind, cell: Cell },
    /// An enemy entered the agent's view (transition, not a per-tick state).
    EnemySeen,
    /// The last visible enemy left the agent's view.
    EnemyLost,
    /// A tree leaf or decorator executed; recorded for coverage analysis.
    Exec { kind: TemplateKind, template: String, params: Vec<f64> },
    /// The agent's controller panicked; the agent is inert from here on.
    Crash { message: String },
    /// Deterministic world-state hash for replay comparison.
    Checkpoint { hash: u64 },
    /// End of round.
    RoundEnd { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub tick: u64,
    pub agent: Option<u32>,
    pub event: TraceEvent,
}

/// Ordered event log of one round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub records: Vec<TraceRecord>,
}

fn kind_label(kind: TemplateKind) -> &'static str {
    match kind {
        TemplateKind::Action => "action",
        TemplateKind::Condition => "condition",
        TemplateKind::Decorator => "decorator",
    }
}

fn parse_kind(s: &str) -> Option<TemplateKind> {
    match s {
        "action" => Some(TemplateKind::Action),
        "condition" => Some(TemplateKind::Condition),
        "decorator" => Some(TemplateKind::Decorator),
        _ => None,
    }
}

fn sanitize(msg: &str) -> String {
    msg.chars().map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c }).collect()
}

fn join_nums(vals: &[f64]) -> String {
    vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn split_nums(s: &str) -> Result<Vec<f64>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| p.parse::<f64>().map_err(|e| format!("bad number {p:?}: {e}"))).collect()
}

impl TraceEvent {
    fn name(&self) -> &'static str {
        match self {
            TraceEvent::Spawn { .. } => "spawn",
            TraceEvent::Move { .. } => "move",
            TraceEvent::Fire { .. } => "fire",
            TraceEvent::Damage { .. } => "damage",
            TraceEvent::Death { .. } => "death",
            TraceEvent::Pickup { .. } => "pickup",
            TraceEvent::BoxSpawn { .. } => "box_spawn",
            TraceEvent::EnemySeen => "enemy_seen",
            TraceEvent::EnemyLost => "enemy_lost",
            TraceEvent::Exec { .. } => "exec",
            TraceEvent::Crash { .. } => "crash",
            TraceEvent::Checkpoint { .. } => "checkpoint",
            TraceEvent::RoundEnd { .. } => "round_end",
        }
    }

    fn payload(&self) -> String {
        match self {
            TraceEvent::Spawn { pos } | TraceEvent::Move { pos } => {
                format!("{},{}", pos.x, pos.y)
            }
            TraceEvent::Fire { dir } => format!("{},{}", dir.x, dir.y),
            TraceEvent::Damage { attacker, amount, health_after, shield_after } => {
                format!("{attacker},{amount},{health_after},{shield_after}")
            }
            TraceEvent::Death { killer } => killer.to_string(),
            TraceEvent::Pickup { kind } => kind.name().to_string(),
            TraceEvent::BoxSpawn { kind, cell } => {
                format!("{},{},{}", kind.name(), cell.x, cell.y)
            }
            TraceEvent::EnemySeen | TraceEvent::EnemyLost => "-".to_string(),
            TraceEvent::Exec { kind, template, params } => {
                if params.is_empty() {
                    format!("{}:{}", kind_label(*kind), template)
                } else {
                    format!("{}:{}:{}", kind_label(*kind), template, join_nums(params))
                }
            }
            TraceEvent::Crash { message } => sanitize(message),
            TraceEvent::Checkpoint { hash } => format!("{hash:016x}"),
            TraceEvent::RoundEnd { reason } => reason.clone(),
        }
    }

    fn from_parts(name: &str, payload: &str) -> Result<TraceEvent, String> {
        let vec2 = |s: &str| -> Result<Vec2, String> {
            let v = split_nums(s)?;
            if v.len() != 2 {
                return Err(format!("expected x,y but got {s:?}"));
            }
            Ok(Vec2::new(v[0], v[1]))
        };
        match name {
            "spawn" => Ok(TraceEvent::Spawn { pos: vec2(payload)? }),
            "move" => Ok(TraceEvent::Move { pos: vec2(payload)? }),
            "fire" => Ok(TraceEvent::Fire { dir: vec2(payload)? }),
            "damage" => {
                let v = split_nums(payload)?;
                if v.len() != 4 {
                    return Err(format!("damage payload needs 4 fields, got {payload:?}"));
                }
                Ok(TraceEvent::Damage {
                    attacker: v[0] as u32,
                    amount: v[1],
                    health_after: v[2],
                    shield_after: v[3],
                })
            }
            "death" => {
                let killer = payload.parse().map_err(|e| format!("bad killer id: {e}"))?;
                Ok(TraceEvent::Death { killer })
            }
            "pickup" => PickupKind::parse(payload)
                .map(|kind| TraceEvent::Pickup { kind })
                .ok_or_else(|| format!("unknown pickup kind {payload:?}")),
            "box_spawn" => {
                let mut it = payload.splitn(2, ',');
                let kind = it
                    .next()
                    .and_then(PickupKind::parse)
                    .ok_or_else(|| format!("bad box_spawn payload {payload:?}"))?;
                let rest = it.next().ok_or_else(|| format!("bad box_spawn payload {payload:?}"))?;
                let v = split_nums(rest)?;
                if v.len() != 2 {
                    return Err(format!("bad box_spawn cell {rest:?}"));
                }
                Ok(TraceEvent::BoxSpawn { kind, cell: Cell::new(v[0] as i32, v[1] as i32) })
            }
            "enemy_seen" => Ok(TraceEvent::EnemySeen),
            "enemy_lost" => Ok(TraceEvent::EnemyLost),
            "exec" => {
                let mut it = payload.splitn(3, ':');
                let kind = it
                    .next()
                    .and_then(parse_kind)
                    .ok_or_else(|| format!("bad exec payload {payload:?}"))?;
                let template =
                    it.next().ok_or_else(|| format!("bad exec payload {payload:?}"))?.to_string();
                let params = match it.next() {
                    Some(rest) => split_nums(rest)?,
                    None => Vec::new(),
                };
                Ok(TraceEvent::Exec { kind, template, params })
            }
            "crash" => Ok(TraceEvent::Crash { message: payload.to_string() }),
            "checkpoint" => {
                let hash = u64::from_str_radix(payload, 16)
                    .map_err(|e| format!("bad checkpoint hash: {e}"))?;
                Ok(TraceEvent::Checkpoint { hash })
            }
            "round_end" => Ok(TraceEvent::RoundEnd { reason: payload.to_string() }),
            other => Err(format!("unknown event {other:?}")),
        }
    }
}

impl SimTrace {
    pub fn push(&mut self, tick: u64, agent: Option<u32>, event: TraceEvent) {
        self.records.push(TraceRecord { tick, agent, event });
    }

    /// Ticks hash checkpoints were taken at, with their hashes, in order.
    pub fn checkpoints(&self) -> Vec<(u64, u64)> {
        self.records
            .iter()
            .filter_map(|r| match r.event {
                TraceEvent::Checkpoint { hash } => Some((r.tick, hash)),
                _ => None,
            })
            .collect()
    }

    /// Tick of the round-end marker, or of the last record when absent.
    pub fn end_tick(&self) -> u64 {
        self.records
            .iter()
            .rev()
            .find(|r| matches!(r.event, TraceEvent::RoundEnd { .. }))
            .or(self.records.last())
            .map_or(0, |r| r.tick)
    }

    /// Text form, one `tick<TAB>agent<TAB>event<TAB>payload` line per event.
    /// World events use `-` in the agent column.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let agent = r.agent.map_or_else(|| "-".to_string(), |a| a.to_string());
            out.push_str(&format!("{}\t{}\t{}\t{}\n", r.tick, agent, r.event.name(), r.event.payload()));
        }
        out
    }

    /// Parses the `dump` text form back into a trace.
    pub fn parse(text: &str) -> Result<SimTrace, String> {
        let mut trace = SimTrace::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| format!("trace line {}: {msg}", i + 1);
            let mut cols = line.splitn(4, '\t');
            let tick = cols
                .next()
                .and_then(|s| s.parse::<u64>().ok())
                .ok_or_else(|| err("bad tick column".into()))?;
            let agent_col = cols.next().ok_or_else(|| err("missing agent column".into()))?;
            let agent = if agent_col == "-" {
                None
            } else {
                Some(agent_col.parse::<u32>().map_err(|e| err(format!("bad agent id: {e}")))?)
            };
            let name = cols.next().ok_or_else(|| err("missing event column".into()))?;
            let payload = cols.next().unwrap_or("");
            let event = TraceEvent::from_parts(name, payload).map_err(err)?;
            trace.push(tick, agent, event);
        }
        Ok(trace)
    }
}

/// Per-agent numbers derived from one round's trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentMetrics {
    pub kills: u32,
    pub deaths: u32,
    pub damage_dealt: f64,
    /// Total distance moved, in cells; respawn teleports do not count.
    pub distance: f64,
    /// Engagements broken off by staying out of enemy view long enough.
    pub escapes: u32,
    /// Escapes completed while at low health.
    pub low_health_escapes: u32,
    pub shield_pickups: u32,
    pub weapon_pickups: u32,
    pub ammo_pickups: u32,
    pub health_pickups: u32,
    /// Ticks spent alive across all lives.
    pub survival_ticks: u64,
    /// True when the agent's controller panicked; all other fields are
    /// zeroed so a crashing controller earns nothing.
    pub crashed: bool,
}

impl AgentMetrics {
    pub const METRIC_NAMES: [&'static str; 11] = [
        "kills",
        "deaths",
        "damage_dealt",
        "distance",
        "escapes",
        "low_health_escapes",
        "shield_pickups",
        "weapon_pickups",
        "ammo_pickups",
        "health_pickups",
        "survival_ticks",
    ];

    /// Looks a metric up by name; `None` for unknown names.
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "kills" => f64::from(self.kills),
            "deaths" => f64::from(self.deaths),
            "damage_dealt" => self.damage_dealt,
            "distance" => self.distance,
            "escapes" => f64::from(self.escapes),
            "low_health_escapes" => f64::from(self.low_health_escapes),
            "shield_pickups" => f64::from(self.shield_pickups),
            "weapon_pickups" => f64::from(self.weapon_pickups),
            "ammo_pickups" => f64::from(self.ammo_pickups),
            "health_pickups" => f64::from(self.health_pickups),
            "survival_ticks" => self.survival_ticks as f64,
            _ => return None,
        })
    }
}

/// Everything a round reports back about its agents.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundFeedback {
    pub end_tick: u64,
    pub agents: Vec<AgentMetrics>,
}

struct Tracker {
    m: AgentMetrics,
    health: f64,
    pos: Option<Vec2>,
    alive: bool,
    spawn_tick: u64,
    engaged: bool,
    enemy_visible: bool,
    /// Tick the current quiet spell started; meaningful while engaged and no
    /// enemy is visible.
    quiet_since: u64,
}

impl Tracker {
    fn new(max_health: f64) -> Tracker {
        Tracker {
            m: AgentMetrics::default(),
            health: max_health,
            pos: None,
            alive: false,
            spawn_tick: 0,
            engaged: false,
            enemy_visible: false,
            quiet_since: 0,
        }
    }

    /// Counts a pending escape if the quiet window has fully elapsed by
    /// `now`. Called before applying any event (and once at round end), so a
    /// window still open when the round ends never counts.
    fn settle_escape(&mut self, now: u64, window: u64, low_health: f64) {
        if self.engaged && !self.enemy_visible && self.quiet_since + window <= now {
            self.m.escapes += 1;
            if self.health < low_health {
                self.m.low_health_escapes += 1;
            }
            self.engaged = false;
        }
    }

    fn open_engagement(&mut self, tick: u64) {
        if !self.engaged {
            self.engaged = true;
            if !self.enemy_visible {
                self.quiet_since = tick;
            }
        } else if !self.enemy_visible {
            // Fresh contact restarts the quiet clock.
            self.quiet_since = tick;
        }
    }
}

/// Replays a trace into per-agent metrics.
///
/// An engagement opens when an agent deals or takes damage and closes either
/// by death or by an escape: a full escape window (`escape_window_seconds`)
/// with no enemy in view. Escapes finishing while health is below
/// `escape_health_fraction` of maximum also count as low-health escapes.
pub fn collect_metrics(trace: &SimTrace, config: &ArenaConfig) -> RoundFeedback {
    let window = config.escape_window_ticks();
    let low = config.escape_health_fraction * config.max_health;
    let mut agents: Vec<Tracker> =
        (0..config.agents).map(|_| Tracker::new(config.max_health)).collect();
    let end_tick = trace.end_tick();

    for r in &trace.records {
        let Some(id) = r.agent else { continue };
        let idx = id as usize;
        if idx >= agents.len() {
            continue;
        }
        agents[idx].settle_escape(r.tick, window, low);
        match &r.event {
            TraceEvent::Spawn { pos } => {
                let t = &mut agents[idx];
                t.pos = Some(*pos);
                t.health = config.max_health;
                t.alive = true;
                t.spawn_tick = r.tick;
                t.engaged = false;
                t.enemy_visible = false;
            }
            TraceEvent::Move { pos } => {
                let t = &mut agents[idx];
                if let Some(prev) = t.pos {
                    t.m.distance += prev.distance(*pos);
                }
                t.pos = Some(*pos);
            }
            TraceEvent::Fire { .. } => {}
            TraceEvent::Damage { attacker, amount, health_after, .. } => {
                let victim = &mut agents[idx];
                victim.health = *health_after;
                victim.open_engagement(r.tick);
                if let Some(att) = agents.get_mut(*attacker as usize) {
                    att.settle_escape(r.tick, window, low);
                    att.m.damage_dealt += amount;
                    att.open_engagement(r.tick);
                }
            }
            TraceEvent::Death { killer } => {
                let victim = &mut agents[idx];
                victim.m.deaths += 1;
                victim.m.survival_ticks += r.tick - victim.spawn_tick;
                victim.alive = false;
                victim.engaged = false;
                if let Some(k) = agents.get_mut(*killer as usize) {
                    k.m.kills += 1;
                }
            }
            TraceEvent::Pickup { kind } => {
                let t = &mut agents[idx];
                match kind {
                    PickupKind::Shield => t.m.shield_pickups += 1,
                    PickupKind::Weapon => t.m.weapon_pickups += 1,
                    PickupKind::Ammo => t.m.ammo_pickups += 1,
                    PickupKind::Health => {
                        t.m.health_pickups += 1;
                        t.health = (t.health + config.health_pickup_amount).min(config.max_health);
                    }
                }
            }
            TraceEvent::EnemySeen => agents[idx].enemy_visible = true,
            TraceEvent::EnemyLost => {
                let t = &mut agents[idx];
                t.enemy_visible = false;
                if t.engaged {
                    t.quiet_since = r.tick;
                }
            }
            TraceEvent::Crash { .. } => agents[idx].m.crashed = true,
            TraceEvent::Exec { .. }
            | TraceEvent::BoxSpawn { .. }
            | TraceEvent::Checkpoint { .. }
            | TraceEvent::RoundEnd { .. } => {}
        }
    }

    let metrics = agents
        .into_iter()
        .map(|mut t| {
            t.settle_escape(end_tick, window, low);
            if t.alive {
                t.m.survival_ticks += end_tick - t.spawn_tick;
            }
            if t.m.crashed {
                AgentMetrics { crashed: true, ..AgentMetrics::default() }
            } else {
                t.m
            }
        })
        .collect();
    RoundFeedback { end_tick, agents: metrics }
}
