//! Typed blackboards: the only channel between trees and the simulation.
//!
//! A global blackboard carries world state the simulation exposes to every
//! tree; each agent additionally owns a local blackboard for private state
//! (observations written by the simulation glue, plus decorator bookkeeping
//! keyed by node id). Binding resolves key names to slot indices once, so
//! per-tick access is a plain vector index.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Which blackboard a key lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    Global,
    Local,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Global => "global",
            Scope::Local => "local",
        })
    }
}

/// 2D vector in grid cell units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Vec2 {
        Vec2 { x, y }
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn length(self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn distance(self, o: Vec2) -> f64 {
        self.sub(o).length()
    }

    /// Unit vector, or zero if the vector is (near) zero.
    pub fn normalized(self) -> Vec2 {
        let l = self.length();
        if l < 1e-12 {
            Vec2::ZERO
        } else {
            self.scale(1.0 / l)
        }
    }
}

/// Identifier of a simulated entity (an agent slot, for our arena).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EntityId(pub u32);

impl EntityId {
    /// Sentinel for "no entity".
    pub const NONE: EntityId = EntityId(u32::MAX);
}

/// A blackboard entry value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Number(f64),
    Bool(bool),
    Vec2(Vec2),
    Entity(EntityId),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_vec2(&self) -> Option<Vec2> {
        match self {
            Value::Vec2(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_entity(&self) -> Option<EntityId> {
        match self {
            Value::Entity(e) => Some(*e),
            _ => None,
        }
    }

    /// Folds the value into a running FNV-style hash, bit-exactly.
    pub(crate) fn fold_hash(&self, h: &mut crate::hash::Fnv64) {
        match self {
            Value::Number(n) => {
                h.write_u8(0);
                h.write_u64(n.to_bits());
            }
            Value::Bool(b) => {
                h.write_u8(1);
                h.write_u8(u8::from(*b));
            }
            Value::Vec2(v) => {
                h.write_u8(2);
                h.write_u64(v.x.to_bits());
                h.write_u64(v.y.to_bits());
            }
            Value::Entity(e) => {
                h.write_u8(3);
                h.write_u64(u64::from(e.0));
            }
        }
    }
}

/// Direct index into a blackboard's slot vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotId(pub usize);

/// A scoped set of named, typed slots with O(1) access once bound.
#[derive(Debug, Clone)]
pub struct Blackboard {
    scope: Scope,
    names: Vec<String>,
    values: Vec<Value>,
    index: BTreeMap<String, usize>,
}

impl Default for Blackboard {
    fn default() -> Self {
        Blackboard::new(Scope::Local)
    }
}

impl Blackboard {
    pub fn new(scope: Scope) -> Blackboard {
        Blackboard { scope, names: Vec::new(), values: Vec::new(), index: BTreeMap::new() }
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Inserts or overwrites a key, returning its slot.
    pub fn insert(&mut self, key: &str, value: Value) -> SlotId {
        if let Some(&i) = self.index.get(key) {
            self.values[i] = value;
            return SlotId(i);
        }
        let i = self.values.len();
        self.names.push(key.to_owned());
        self.values.push(value);
        self.index.insert(key.to_owned(), i);
        SlotId(i)
    }

    /// Resolves a key to its slot, if present.
    pub fn slot(&self, key: &str) -> Option<SlotId> {
        self.index.get(key).map(|&i| SlotId(i))
    }

    pub fn get(&self, slot: SlotId) -> &Value {
        &self.values[slot.0]
    }

    pub fn set(&mut self, slot: SlotId, value: Value) {
        self.values[slot.0] = value;
    }

    pub fn get_by_name(&self, key: &str) -> Option<&Value> {
        self.slot(key).map(|s| self.get(s))
    }

    /// Slots in insertion order; iteration order is part of the replay
    /// contract (state hashes fold over it).
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub(crate) fn fold_hash(&self, h: &mut crate::hash::Fnv64) {
        h.write_u64(self.values.len() as u64);
        for (name, value) in self.iter() {
            h.write_bytes(name.as_bytes());
            value.fold_hash(h);
        }
    }
}
