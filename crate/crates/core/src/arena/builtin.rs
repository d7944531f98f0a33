//! The built-in template catalog for arena agents, and the mapping from
//! catalog entries to runtime operations.
//!
//! Required-key declarations here are a contract with the round driver
//! (which writes every observation key before an agent ticks) and with the
//! runtime (which reads `BoundCall::key_slots` by position, in declaration
//! order). Changing a template's key list means updating both.

use crate::arena::map::GridMap;
use crate::catalog::{
    DecoratorKind, ParamSpec, RequiredKey, Template, TemplateCatalog, TemplateKind,
};

/// Local blackboard keys the driver refreshes before every agent tick.
pub mod keys {
    pub const SELF_POS: &str = "self_pos";
    pub const SELF_FACING: &str = "self_facing";
    pub const SELF_HEALTH: &str = "self_health";
    pub const SELF_AMMO: &str = "self_ammo";
    pub const SELF_LIVES: &str = "self_lives";
    pub const SELF_SHIELD: &str = "self_shield";
    /// Remaining weapon-boost ticks.
    pub const SELF_WEAPON: &str = "self_weapon";
    pub const ENEMY_VISIBLE: &str = "enemy_visible";
    /// Entity id of the closest visible enemy; keeps its last value (and
    /// `enemy_visible` goes false) when nobody is in view.
    pub const CLOSEST_ENEMY: &str = "closest_enemy";
    pub const CLOSEST_ENEMY_POS: &str = "closest_enemy_pos";
    pub const CLOSEST_ENEMY_VEL: &str = "closest_enemy_vel";
    pub const CLOSEST_ENEMY_HEALTH: &str = "closest_enemy_health";
    pub const CLOSEST_ENEMY_SHIELD: &str = "closest_enemy_shield";
    pub const CLOSEST_ENEMY_WEAPON: &str = "closest_enemy_weapon";
    pub const BOX_AVAILABLE: &str = "box_available";
    pub const CLOSEST_BOX_POS: &str = "closest_box_pos";

    pub const ALL_LOCAL: [&str; 16] = [
        SELF_POS,
        SELF_FACING,
        SELF_HEALTH,
        SELF_AMMO,
        SELF_LIVES,
        SELF_SHIELD,
        SELF_WEAPON,
        ENEMY_VISIBLE,
        CLOSEST_ENEMY,
        CLOSEST_ENEMY_POS,
        CLOSEST_ENEMY_VEL,
        CLOSEST_ENEMY_HEALTH,
        CLOSEST_ENEMY_SHIELD,
        CLOSEST_ENEMY_WEAPON,
        BOX_AVAILABLE,
        CLOSEST_BOX_POS,
    ];

    /// Global blackboard keys, written once per tick.
    pub const TICK: &str = "tick";
    pub const AGENTS_ALIVE: &str = "agents_alive";
    pub const BOX_COUNT: &str = "box_count";

    pub const ALL_GLOBAL: [&str; 3] = [TICK, AGENTS_ALIVE, BOX_COUNT];
}

/// Builds the agent template catalog for a given map (movement target ranges
/// span the map).
pub fn builtin_catalog(map: &GridMap) -> TemplateCatalog {
    use keys as k;
    let max_x = (map.width() - 1) as f64;
    let max_y = (map.height() - 1) as f64;

    let actions = vec![
        Template::new("go_to_position")
            .with_params(vec![
                ParamSpec::continuous("target_x", 0.0, max_x),
                ParamSpec::continuous("target_y", 0.0, max_y),
            ])
            .with_keys(vec![RequiredKey::local(k::SELF_POS)]),
        Template::new("fire_forward")
            .with_keys(vec![RequiredKey::local(k::SELF_FACING), RequiredKey::local(k::SELF_AMMO)]),
        Template::new("fire_lead").with_keys(vec![
            RequiredKey::local(k::ENEMY_VISIBLE),
            RequiredKey::local(k::CLOSEST_ENEMY_POS),
            RequiredKey::local(k::CLOSEST_ENEMY_VEL),
            RequiredKey::local(k::SELF_AMMO),
        ]),
        Template::new("pathfind_closest_enemy")
            .with_params(vec![ParamSpec::continuous("range", 1.0, 10.0)])
            .with_keys(vec![
                RequiredKey::local(k::SELF_POS),
                RequiredKey::local(k::ENEMY_VISIBLE),
                RequiredKey::local(k::CLOSEST_ENEMY),
                RequiredKey::local(k::CLOSEST_ENEMY_POS),
            ]),
        Template::new("move_backward")
            .with_keys(vec![RequiredKey::local(k::SELF_POS), RequiredKey::local(k::SELF_FACING)]),
        Template::new("pathfind_closest_box").with_keys(vec![
            RequiredKey::local(k::SELF_POS),
            RequiredKey::local(k::BOX_AVAILABLE),
            RequiredKey::local(k::CLOSEST_BOX_POS),
        ]),
        Template::new("seek_cover").with_keys(vec![
            RequiredKey::local(k::SELF_POS),
            RequiredKey::local(k::CLOSEST_ENEMY),
            RequiredKey::local(k::CLOSEST_ENEMY_POS),
        ]),
        Template::new("idle"),
    ];

    let conditions = vec![
        Template::new("enemy_in_view").with_keys(vec![RequiredKey::local(k::ENEMY_VISIBLE)]),
        Template::new("low_health")
            .with_params(vec![ParamSpec::continuous("threshold", 0.05, 0.5)])
            .with_keys(vec![RequiredKey::local(k::SELF_HEALTH)]),
        Template::new("low_ammo")
            .with_params(vec![ParamSpec::continuous("threshold", 1.0, 15.0)])
            .with_keys(vec![RequiredKey::local(k::SELF_AMMO)]),
        Template::new("has_shield").with_keys(vec![RequiredKey::local(k::SELF_SHIELD)]),
        Template::new("box_available").with_keys(vec![RequiredKey::local(k::BOX_AVAILABLE)]),
        Template::new("enemy_close")
            .with_params(vec![ParamSpec::continuous("radius", 1.0, 10.0)])
            .with_keys(vec![
                RequiredKey::local(k::ENEMY_VISIBLE),
                RequiredKey::local(k::CLOSEST_ENEMY_POS),
                RequiredKey::local(k::SELF_POS),
            ]),
    ];

    let decorators = vec![
        Template::new("invert").with_decorator(DecoratorKind::Invert),
        Template::new("chance")
            .with_params(vec![ParamSpec::continuous("p", 0.0, 1.0)])
            .with_decorator(DecoratorKind::Chance),
        Template::new("cooldown")
            .with_params(vec![ParamSpec::continuous("seconds", 0.5, 10.0)])
            .with_decorator(DecoratorKind::Cooldown),
        Template::new("shuffle_children").with_decorator(DecoratorKind::ShuffleChildren),
        Template::new("time_limit")
            .with_params(vec![ParamSpec::continuous("seconds", 0.5, 10.0)])
            .with_decorator(DecoratorKind::TimeLimit),
    ];

    TemplateCatalog { actions, conditions, decorators }
}

/// Runtime operation behind an action template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionOp {
    GoToPosition,
    FireForward,
    FireLead,
    PathfindClosestEnemy,
    MoveBackward,
    PathfindClosestBox,
    SeekCover,
    Idle,
}

/// Runtime operation behind a condition template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondOp {
    EnemyInView,
    LowHealth,
    LowAmmo,
    HasShield,
    BoxAvailable,
    EnemyClose,
}

/// Template-index-to-operation tables, aligned with a catalog's sections so
/// a `BoundCall::template` index resolves in O(1).
#[derive(Debug, Clone)]
pub struct OpTables {
    pub actions: Vec<ActionOp>,
    pub conditions: Vec<CondOp>,
}

impl OpTables {
    pub fn from_catalog(catalog: &TemplateCatalog) -> Result<OpTables, String> {
        let actions = catalog
            .section(TemplateKind::Action)
            .iter()
            .map(|t| match t.name.as_str() {
                "go_to_position" => Ok(ActionOp::GoToPosition),
                "fire_forward" => Ok(ActionOp::FireForward),
                "fire_lead" => Ok(ActionOp::FireLead),
                "pathfind_closest_enemy" => Ok(ActionOp::PathfindClosestEnemy),
                "move_backward" => Ok(ActionOp::MoveBackward),
                "pathfind_closest_box" => Ok(ActionOp::PathfindClosestBox),
                "seek_cover" => Ok(ActionOp::SeekCover),
                "idle" => Ok(ActionOp::Idle),
                other => Err(format!("no runtime operation for action template `{other}`")),
            })
            .collect::<Result<_, _>>()?;
        let conditions = catalog
            .section(TemplateKind::Condition)
            .iter()
            .map(|t| match t.name.as_str() {
                "enemy_in_view" => Ok(CondOp::EnemyInView),
                "low_health" => Ok(CondOp::LowHealth),
                "low_ammo" => Ok(CondOp::LowAmmo),
                "has_shield" => Ok(CondOp::HasShield),
                "box_available" => Ok(CondOp::BoxAvailable),
                "enemy_close" => Ok(CondOp::EnemyClose),
                other => Err(format!("no runtime operation for condition template `{other}`")),
            })
            .collect::<Result<_, _>>()?;
        Ok(OpTables { actions, conditions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::world::ArenaConfig;

    #[test]
    fn builtin_catalog_is_well_formed() {
        let map = ArenaConfig::default().map().unwrap();
        let catalog = builtin_catalog(&map);
        catalog.check().expect("catalog passes its own checks");
        assert_eq!(catalog.section(TemplateKind::Action).len(), 8);
        assert_eq!(catalog.section(TemplateKind::Condition).len(), 6);
        assert_eq!(catalog.section(TemplateKind::Decorator).len(), 5);
    }

    #[test]
    fn every_builtin_template_has_a_runtime_op() {
        let map = ArenaConfig::default().map().unwrap();
        let catalog = builtin_catalog(&map);
        let ops = OpTables::from_catalog(&catalog).expect("all templates resolve");
        assert_eq!(ops.actions.len(), 8);
        assert_eq!(ops.conditions.len(), 6);
    }

    #[test]
    fn unknown_templates_are_rejected() {
        let map = ArenaConfig::default().map().unwrap();
        let mut catalog = builtin_catalog(&map);
        catalog.actions.push(Template::new("teleport"));
        let err = OpTables::from_catalog(&catalog).unwrap_err();
        assert!(err.contains("teleport"), "got {err}");
    }
}
