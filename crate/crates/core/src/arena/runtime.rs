//! The arena's implementation of agent actions and conditions.
//!
//! Decision inputs (enemy positions, box positions, flags) come from the
//! agent's blackboard via the bound key slots, so agents act on the
//! observation snapshot taken at the start of their turn, including stale
//! last-seen enemy data. Physical effects (movement, shots) go through the
//! live world.

use crate::arena::builtin::{ActionOp, CondOp, OpTables};
use crate::arena::map::{cell_of, Cell};
use crate::arena::trace::{SimTrace, TraceEvent};
use crate::arena::world::{ArenaConfig, Projectile, World};
use crate::blackboard::{Blackboard, EntityId, Scope, SlotId, Value, Vec2};
use crate::engine::{ActionRuntime, BoundCall};
use crate::tree::NodeStatus;

pub struct ArenaRuntime<'a> {
    pub world: &'a mut World,
    pub agent: usize,
    pub config: &'a ArenaConfig,
    pub ops: &'a OpTables,
    pub trace: &'a mut SimTrace,
}

enum Step {
    Arrived,
    Moving,
    Blocked,
}

fn slot_value<'b>(
    call: &BoundCall,
    idx: usize,
    global: &'b Blackboard,
    local: &'b Blackboard,
) -> &'b Value {
    let (scope, slot): (Scope, SlotId) = call.key_slots[idx];
    match scope {
        Scope::Global => global.get(slot),
        Scope::Local => local.get(slot),
    }
}

fn num(call: &BoundCall, idx: usize, global: &Blackboard, local: &Blackboard) -> f64 {
    slot_value(call, idx, global, local).as_number().unwrap_or(0.0)
}

fn flag(call: &BoundCall, idx: usize, global: &Blackboard, local: &Blackboard) -> bool {
    slot_value(call, idx, global, local).as_bool().unwrap_or(false)
}

fn vec2(call: &BoundCall, idx: usize, global: &Blackboard, local: &Blackboard) -> Vec2 {
    slot_value(call, idx, global, local).as_vec2().unwrap_or(Vec2::ZERO)
}

fn entity(call: &BoundCall, idx: usize, global: &Blackboard, local: &Blackboard) -> EntityId {
    slot_value(call, idx, global, local).as_entity().unwrap_or(EntityId::NONE)
}

impl ArenaRuntime<'_> {
    fn me(&self) -> &crate::arena::world::AgentState {
        &self.world.agents[self.agent]
    }

    fn step_len(&self) -> f64 {
        self.config.move_speed * self.config.dt()
    }

    /// Moves the agent to `pos`, updates facing (unless overridden), and logs
    /// the move.
    fn move_agent(&mut self, pos: Vec2, keep_facing: bool) {
        let tick = self.world.tick;
        let id = self.agent as u32;
        let a = &mut self.world.agents[self.agent];
        if pos == a.pos {
            return;
        }
        if !keep_facing {
            let dir = pos.sub(a.pos).normalized();
            if dir.length() > 0.0 {
                a.facing = dir;
            }
        }
        a.pos = pos;
        self.trace.push(tick, Some(id), TraceEvent::Move { pos });
    }

    /// One movement step along the A* path toward `target`.
    fn step_along_path(&mut self, target: Cell) -> Step {
        let pos = self.me().pos;
        let from = cell_of(pos);
        if from == target && pos == target.center() {
            return Step::Arrived;
        }
        let Some(path) = self.world.map.astar(from, target) else {
            return Step::Blocked;
        };
        // Head for the next cell center on the path; within the final cell,
        // head for its center.
        let waypoint = if path.len() >= 2 { path[1].center() } else { target.center() };
        let step = self.step_len();
        let dist = pos.distance(waypoint);
        let next = if dist <= step {
            waypoint
        } else {
            pos.add(waypoint.sub(pos).normalized().scale(step))
        };
        self.move_agent(next, false);
        if next == target.center() {
            Step::Arrived
        } else {
            Step::Moving
        }
    }

    fn status_of(&mut self, step: Step) -> NodeStatus {
        match step {
            Step::Arrived => NodeStatus::Success,
            Step::Moving => NodeStatus::Running,
            Step::Blocked => NodeStatus::Failure,
        }
    }

    /// Fires a projectile along `dir` if ammo and cooldown allow.
    fn try_fire(&mut self, dir: Vec2) -> bool {
        let tick = self.world.tick;
        let id = self.agent as u32;
        let config = self.config;
        let a = &mut self.world.agents[self.agent];
        if a.fire_cooldown > 0 || a.ammo == 0 {
            return false;
        }
        let dir = if dir.length() > 0.0 { dir.normalized() } else { a.facing };
        let dir = if dir.length() > 0.0 { dir } else { Vec2::new(1.0, 0.0) };
        a.ammo -= 1;
        a.fire_cooldown = config.fire_cooldown_ticks;
        a.facing = dir;
        let damage = if a.weapon_ticks > 0 {
            config.projectile_damage * config.weapon_damage_multiplier
        } else {
            config.projectile_damage
        };
        // Spawn just outside the shooter's own hit radius.
        let pos = a.pos.add(dir.scale(0.6));
        self.world.projectiles.push(Projectile { owner: id, pos, dir, damage, traveled: 0.0 });
        self.trace.push(tick, Some(id), TraceEvent::Fire { dir });
        true
    }

    fn fire_status(&mut self, dir: Vec2) -> NodeStatus {
        if self.try_fire(dir) {
            NodeStatus::Success
        } else {
            NodeStatus::Failure
        }
    }

    /// Nearest reachable cell (ring scan from the agent) whose center has no
    /// line of sight to `enemy`.
    fn find_cover(&self, enemy: Vec2) -> Option<Cell> {
        let me = cell_of(self.me().pos);
        let radius = self.config.view_range.ceil() as i32;
        for r in 1..=radius {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()) != r {
                        continue;
                    }
                    let c = Cell::new(me.x + dx, me.y + dy);
                    if !self.world.map.is_walkable(c) {
                        continue;
                    }
                    if self.world.map.line_of_sight(c.center(), enemy) {
                        continue;
                    }
                    if self.world.map.astar(me, c).is_some() {
                        return Some(c);
                    }
                }
            }
        }
        None
    }
}

impl ActionRuntime for ArenaRuntime<'_> {
    fn tick_action(
        &mut self,
        call: &BoundCall,
        global: &Blackboard,
        local: &mut Blackboard,
    ) -> NodeStatus {
        match self.ops.actions[call.template] {
            ActionOp::GoToPosition => {
                let map = &self.world.map;
                let x = call.params[0].clamp(0.0, (map.width() - 1) as f64);
                let y = call.params[1].clamp(0.0, (map.height() - 1) as f64);
                let Some(target) = map.nearest_walkable(cell_of(Vec2::new(x, y))) else {
                    return NodeStatus::Failure;
                };
                let step = self.step_along_path(target);
                self.status_of(step)
            }
            ActionOp::FireForward => {
                let facing = self.me().facing;
                self.fire_status(facing)
            }
            ActionOp::FireLead => {
                // Slots: enemy_visible, closest_enemy_pos, closest_enemy_vel,
                // self_ammo.
                if !flag(call, 0, global, local) {
                    return NodeStatus::Failure;
                }
                let enemy_pos = vec2(call, 1, global, local);
                let enemy_vel = vec2(call, 2, global, local);
                let me = self.me().pos;
                let lead = enemy_pos.distance(me) / self.config.projectile_speed;
                let predicted = enemy_pos.add(enemy_vel.scale(lead));
                self.fire_status(predicted.sub(me))
            }
            ActionOp::PathfindClosestEnemy => {
                // Slots: self_pos, enemy_visible, closest_enemy,
                // closest_enemy_pos. Param: desired engagement range.
                if entity(call, 2, global, local) == EntityId::NONE {
                    return NodeStatus::Failure;
                }
                let visible = flag(call, 1, global, local);
                let enemy_pos = vec2(call, 3, global, local);
                let me = self.me().pos;
                if visible && me.distance(enemy_pos) <= call.params[0] {
                    return NodeStatus::Success;
                }
                let Some(target) = self.world.map.nearest_walkable(cell_of(enemy_pos)) else {
                    return NodeStatus::Failure;
                };
                match self.step_along_path(target) {
                    // Reached the last known position but the enemy is not
                    // there to engage: the trail is cold.
                    Step::Arrived => NodeStatus::Failure,
                    Step::Moving => NodeStatus::Running,
                    Step::Blocked => NodeStatus::Failure,
                }
            }
            ActionOp::MoveBackward => {
                let a = self.me();
                let facing = if a.facing.length() > 0.0 { a.facing } else { Vec2::new(1.0, 0.0) };
                let next = a.pos.sub(facing.scale(self.step_len()));
                if !self.world.map.is_walkable(cell_of(next)) {
                    return NodeStatus::Failure;
                }
                // Backpedal: keep facing the way we were.
                self.move_agent(next, true);
                NodeStatus::Success
            }
            ActionOp::PathfindClosestBox => {
                // Slots: self_pos, box_available, closest_box_pos.
                if !flag(call, 1, global, local) {
                    return NodeStatus::Failure;
                }
                let box_pos = vec2(call, 2, global, local);
                let step = self.step_along_path(cell_of(box_pos));
                self.status_of(step)
            }
            ActionOp::SeekCover => {
                // Slots: self_pos, closest_enemy, closest_enemy_pos.
                if entity(call, 1, global, local) == EntityId::NONE {
                    return NodeStatus::Failure;
                }
                let enemy_pos = vec2(call, 2, global, local);
                if !self.world.map.line_of_sight(self.me().pos, enemy_pos) {
                    return NodeStatus::Success;
                }
                let Some(cover) = self.find_cover(enemy_pos) else {
                    return NodeStatus::Failure;
                };
                match self.step_along_path(cover) {
                    Step::Arrived | Step::Moving => NodeStatus::Running,
                    Step::Blocked => NodeStatus::Failure,
                }
            }
            ActionOp::Idle => NodeStatus::Success,
        }
    }

    fn eval_condition(&mut self, call: &BoundCall, global: &Blackboard, local: &Blackboard) -> bool {
        match self.ops.conditions[call.template] {
            CondOp::EnemyInView => flag(call, 0, global, local),
            CondOp::LowHealth => {
                num(call, 0, global, local) < call.params[0] * self.config.max_health
            }
            CondOp::LowAmmo => num(call, 0, global, local) < call.params[0],
            CondOp::HasShield => num(call, 0, global, local) > 0.0,
            CondOp::BoxAvailable => flag(call, 0, global, local),
            CondOp::EnemyClose => {
                // Slots: enemy_visible, closest_enemy_pos, self_pos.
                flag(call, 0, global, local)
                    && vec2(call, 1, global, local).distance(vec2(call, 2, global, local))
                        <= call.params[0]
            }
        }
    }
}
