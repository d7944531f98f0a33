//! Difficulty classes: metric normalization, per-class target sampling,
//! target-tracking fitness, and class assignment.
//!
//! Raw round metrics normalize into [0, 1] against per-metric bounds. Each
//! difficulty class owns a closed band per metric in that normalized space;
//! the bands double as classification intervals and as the ranges evolution
//! samples its fitness targets from. Classes are ranked, rank 0 hardest, and
//! classification tries hardest first.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_FITNESS_EPS: f64 = 1e-4;

fn d_weight() -> f64 {
    1.0
}

/// Normalization bounds for one raw metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl MetricSpec {
    pub fn new(name: &str, lo: f64, hi: f64) -> MetricSpec {
        MetricSpec { name: name.to_owned(), lo, hi }
    }

    /// Maps a raw value into [0, 1], clamping outliers to the edges.
    pub fn normalize(&self, raw: f64) -> f64 {
        ((raw - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    /// Maps a normalized value back to raw units.
    pub fn denormalize(&self, n: f64) -> f64 {
        self.lo + n * (self.hi - self.lo)
    }
}

/// One metric's role inside a class: its weight in the fitness sum and the
/// closed normalized band the class accepts (and samples targets from).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassMetric {
    pub metric: String,
    #[serde(default = "d_weight")]
    pub weight: f64,
    /// Closed interval in normalized space: `[band.0, band.1]`.
    pub band: (f64, f64),
}

impl ClassMetric {
    pub fn new(metric: &str, weight: f64, band: (f64, f64)) -> ClassMetric {
        ClassMetric { metric: metric.to_owned(), weight, band }
    }

    pub fn contains(&self, normalized: f64) -> bool {
        (self.band.0..=self.band.1).contains(&normalized)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifficultyClass {
    pub name: String,
    /// 0 is the hardest class; classification tries ranks in order.
    pub rank: usize,
    pub metrics: Vec<ClassMetric>,
}

/// A sampled fitness target for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTarget {
    pub metric: String,
    pub weight: f64,
    /// Target in normalized space.
    pub target: f64,
}

/// The targets one evolution run steers toward.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTargets {
    pub class: String,
    pub targets: Vec<MetricTarget>,
}

/// Draws a target uniformly from each metric band of the class.
pub fn sample_targets(class: &DifficultyClass, rng: &mut ChaCha8Rng) -> ClassTargets {
    let targets = class
        .metrics
        .iter()
        .map(|m| MetricTarget {
            metric: m.metric.clone(),
            weight: m.weight,
            target: if m.band.0 == m.band.1 {
                m.band.0
            } else {
                rng.gen_range(m.band.0..=m.band.1)
            },
        })
        .collect();
    ClassTargets { class: class.name.clone(), targets }
}

/// Target-tracking fitness: the reciprocal of the weighted distance to the
/// targets, `1 / (sum_i w_i * |value_i - target_i| + eps)`. A perfect match
/// scores `1/eps`; farther means strictly smaller.
pub fn fitness(terms: impl IntoIterator<Item = (f64, f64, f64)>, eps: f64) -> f64 {
    let sum: f64 = terms.into_iter().map(|(value, target, weight)| weight * (value - target).abs()).sum();
    1.0 / (sum + eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifficultySpec {
    pub metrics: Vec<MetricSpec>,
    pub classes: Vec<DifficultyClass>,
    pub fitness_eps: f64,
}

impl Default for DifficultySpec {
    /// Bands tuned for the default arena config: aggressive duelists land in
    /// the hard class, passive drifters in the easy one.
    fn default() -> DifficultySpec {
        DifficultySpec {
            metrics: vec![
                MetricSpec::new("kills", 0.0, 10.0),
                MetricSpec::new("deaths", 0.0, 10.0),
                MetricSpec::new("damage_dealt", 0.0, 500.0),
                MetricSpec::new("distance", 0.0, 400.0),
                MetricSpec::new("escapes", 0.0, 5.0),
                MetricSpec::new("low_health_escapes", 0.0, 5.0),
                MetricSpec::new("shield_pickups", 0.0, 5.0),
                MetricSpec::new("weapon_pickups", 0.0, 5.0),
                MetricSpec::new("ammo_pickups", 0.0, 5.0),
                MetricSpec::new("health_pickups", 0.0, 5.0),
                MetricSpec::new("survival_ticks", 0.0, 600.0),
            ],
            classes: vec![
                DifficultyClass {
                    name: "hard".into(),
                    rank: 0,
                    metrics: vec![
                        ClassMetric::new("kills", 2.0, (0.25, 1.0)),
                        ClassMetric::new("damage_dealt", 1.0, (0.2, 1.0)),
                    ],
                },
                DifficultyClass {
                    name: "medium".into(),
                    rank: 1,
                    metrics: vec![
                        ClassMetric::new("kills", 2.0, (0.05, 0.6)),
                        ClassMetric::new("damage_dealt", 1.0, (0.05, 0.7)),
                    ],
                },
                DifficultyClass {
                    name: "easy".into(),
                    rank: 2,
                    metrics: vec![
                        ClassMetric::new("kills", 2.0, (0.0, 0.2)),
                        ClassMetric::new("damage_dealt", 1.0, (0.0, 0.3)),
                    ],
                },
            ],
            fitness_eps: DEFAULT_FITNESS_EPS,
        }
    }
}

impl DifficultySpec {
    pub fn metric(&self, name: &str) -> Option<&MetricSpec> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn class(&self, name: &str) -> Option<&DifficultyClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn class_mut(&mut self, name: &str) -> Option<&mut DifficultyClass> {
        self.classes.iter_mut().find(|c| c.name == name)
    }

    /// Classes sorted hardest first.
    pub fn classes_by_rank(&self) -> Vec<&DifficultyClass> {
        let mut out: Vec<&DifficultyClass> = self.classes.iter().collect();
        out.sort_by_key(|c| c.rank);
        out
    }

    /// The class with the highest rank number (the easiest one).
    pub fn easiest(&self) -> Option<&DifficultyClass> {
        self.classes.iter().max_by_key(|c| c.rank)
    }

    /// Normalizes every known raw metric; unknown names are dropped.
    pub fn normalize_all(&self, raw: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
        raw.iter()
            .filter_map(|(name, &v)| self.metric(name).map(|m| (name.clone(), m.normalize(v))))
            .collect()
    }

    /// Checks internal consistency; errors name the offending piece.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fitness_eps > 0.0) {
            return Err(format!("fitness_eps: must be positive, got {}", self.fitness_eps));
        }
        if self.classes.is_empty() {
            return Err("classes: need at least one".into());
        }
        for m in &self.metrics {
            if !(m.lo < m.hi) {
                return Err(format!("metric {}: lo {} must be below hi {}", m.name, m.lo, m.hi));
            }
        }
        let mut ranks = Vec::new();
        for c in &self.classes {
            if ranks.contains(&c.rank) {
                return Err(format!("class {}: duplicate rank {}", c.name, c.rank));
            }
            ranks.push(c.rank);
            if c.metrics.is_empty() {
                return Err(format!("class {}: needs at least one metric", c.name));
            }
            for cm in &c.metrics {
                if self.metric(&cm.metric).is_none() {
                    return Err(format!(
                        "class {}: metric {} has no normalization bounds",
                        c.name, cm.metric
                    ));
                }
                if !(cm.weight > 0.0) {
                    return Err(format!(
                        "class {}: metric {} weight must be positive, got {}",
                        c.name, cm.metric, cm.weight
                    ));
                }
                if !(0.0..=1.0).contains(&cm.band.0)
                    || !(0.0..=1.0).contains(&cm.band.1)
                    || cm.band.0 > cm.band.1
                {
                    return Err(format!(
                        "class {}: metric {} band [{}, {}] must be an interval inside [0, 1]",
                        c.name, cm.metric, cm.band.0, cm.band.1
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Picks the hardest class whose every metric band contains the individual's
/// normalized value. `None` when no class matches. Callers must not classify
/// crashed individuals; a crash means there is nothing to classify.
pub fn classify<'s>(
    spec: &'s DifficultySpec,
    raw: &BTreeMap<String, f64>,
) -> Option<&'s DifficultyClass> {
    spec.classes_by_rank().into_iter().find(|class| {
        class.metrics.iter().all(|cm| {
            let Some(ms) = spec.metric(&cm.metric) else { return false };
            let value = raw.get(&cm.metric).copied().unwrap_or(0.0);
            cm.contains(ms.normalize(value))
        })
    })
}

/// Shifts both ends of the class's band for `metric` by `step` (normalized
/// units), clamping to [0, 1]. Returns false when the class has no such
/// metric.
pub fn adapt_class(class: &mut DifficultyClass, metric: &str, step: f64) -> bool {
    let Some(cm) = class.metrics.iter_mut().find(|m| m.metric == metric) else {
        return false;
    };
    cm.band.0 = (cm.band.0 + step).clamp(0.0, 1.0);
    cm.band.1 = (cm.band.1 + step).clamp(0.0, 1.0);
    true
}
