//! Template catalog: the interface a game exposes to generated trees.
//!
//! Actions and conditions are implemented by the simulation; decorators are
//! engine-level gates. Each template declares its parameters (with ranges,
//! so generation and mutation know the legal values) and the blackboard keys
//! it reads, which binding checks up front.

use std::collections::BTreeSet;

use rand::Rng;

use crate::blackboard::Scope;

/// Legal values of one template parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    /// Any value in the closed interval `[min, max]`.
    Continuous { min: f64, max: f64 },
    /// One of an explicit value set.
    Discrete(Vec<f64>),
}

impl ParamKind {
    pub fn contains(&self, v: f64) -> bool {
        match self {
            ParamKind::Continuous { min, max } => v >= *min && v <= *max,
            ParamKind::Discrete(values) => values.iter().any(|&d| d == v),
        }
    }

    /// Width of the covered value range (used to normalize parameter
    /// distances); zero for single-valued kinds.
    pub fn range_width(&self) -> f64 {
        match self {
            ParamKind::Continuous { min, max } => max - min,
            ParamKind::Discrete(values) => {
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if values.is_empty() {
                    0.0
                } else {
                    hi - lo
                }
            }
        }
    }

    /// Default when a hand-written tree omits the parameter: interval
    /// midpoint, or the first declared discrete value.
    pub fn default_value(&self) -> f64 {
        match self {
            ParamKind::Continuous { min, max } => 0.5 * (min + max),
            ParamKind::Discrete(values) => values.first().copied().unwrap_or(0.0),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            ParamKind::Continuous { min, max } => rng.gen_range(*min..=*max),
            ParamKind::Discrete(values) => values[rng.gen_range(0..values.len())],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn continuous(name: &str, min: f64, max: f64) -> ParamSpec {
        ParamSpec { name: name.to_owned(), kind: ParamKind::Continuous { min, max } }
    }

    pub fn discrete(name: &str, values: &[f64]) -> ParamSpec {
        ParamSpec { name: name.to_owned(), kind: ParamKind::Discrete(values.to_vec()) }
    }
}

/// A blackboard key a template reads, with its scope.
#[derive(Debug, Clone, PartialEq)]
pub struct RequiredKey {
    pub scope: Scope,
    pub key: String,
}

impl RequiredKey {
    pub fn global(key: &str) -> RequiredKey {
        RequiredKey { scope: Scope::Global, key: key.to_owned() }
    }

    pub fn local(key: &str) -> RequiredKey {
        RequiredKey { scope: Scope::Local, key: key.to_owned() }
    }
}

/// Engine-level semantics of a decorator template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoratorKind {
    /// Swap Success and Failure of the child.
    Invert,
    /// Run the child only when a fresh per-tick dice roll lands under `p`.
    Chance,
    /// Refuse to re-run the child until `seconds` have passed since its last
    /// execution.
    Cooldown,
    /// Evaluate the (composite) child's children in shuffled order this tick.
    ShuffleChildren,
    /// Fail the child when it has been continuously running for longer than
    /// `seconds`.
    TimeLimit,
}

/// One action, condition, or decorator template.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub required_keys: Vec<RequiredKey>,
    /// Only set for decorator templates.
    pub decorator: Option<DecoratorKind>,
}

impl Template {
    pub fn new(name: &str) -> Template {
        Template { name: name.to_owned(), params: Vec::new(), required_keys: Vec::new(), decorator: None }
    }

    pub fn with_params(mut self, params: Vec<ParamSpec>) -> Template {
        self.params = params;
        self
    }

    pub fn with_keys(mut self, keys: Vec<RequiredKey>) -> Template {
        self.required_keys = keys;
        self
    }

    pub fn with_decorator(mut self, kind: DecoratorKind) -> Template {
        self.decorator = Some(kind);
        self
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Which catalog section a template belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateKind {
    Action,
    Condition,
    Decorator,
}

impl TemplateKind {
    pub fn label(self) -> &'static str {
        match self {
            TemplateKind::Action => "action",
            TemplateKind::Condition => "condition",
            TemplateKind::Decorator => "decorator",
        }
    }
}

/// The full set of templates a game exposes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateCatalog {
    pub actions: Vec<Template>,
    pub conditions: Vec<Template>,
    pub decorators: Vec<Template>,
}

impl TemplateCatalog {
    pub fn section(&self, kind: TemplateKind) -> &[Template] {
        match kind {
            TemplateKind::Action => &self.actions,
            TemplateKind::Condition => &self.conditions,
            TemplateKind::Decorator => &self.decorators,
        }
    }

    /// Looks a template up by section and name.
    pub fn resolve(&self, kind: TemplateKind, name: &str) -> Option<(usize, &Template)> {
        self.section(kind).iter().enumerate().find(|(_, t)| t.name == name)
    }

    pub fn template_count(&self) -> usize {
        self.actions.len() + self.conditions.len() + self.decorators.len()
    }

    /// Checks catalog invariants: names unique across all sections, discrete
    /// sets nonempty, continuous ranges nonempty, decorators tagged with
    /// their semantics (and only decorators).
    pub fn check(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        let sections = [
            (TemplateKind::Action, &self.actions),
            (TemplateKind::Condition, &self.conditions),
            (TemplateKind::Decorator, &self.decorators),
        ];
        for (kind, section) in sections {
            for t in section.iter() {
                if !seen.insert(t.name.clone()) {
                    return Err(format!("duplicate template name `{}`", t.name));
                }
                match (kind, t.decorator) {
                    (TemplateKind::Decorator, None) => {
                        return Err(format!("decorator `{}` has no semantics tag", t.name));
                    }
                    (TemplateKind::Decorator, Some(_)) => {}
                    (_, Some(_)) => {
                        return Err(format!("non-decorator `{}` carries decorator semantics", t.name));
                    }
                    (_, None) => {}
                }
                for p in &t.params {
                    match &p.kind {
                        ParamKind::Continuous { min, max } if !(min < max) => {
                            return Err(format!("template `{}` param `{}` has empty range", t.name, p.name));
                        }
                        ParamKind::Discrete(vs) if vs.is_empty() => {
                            return Err(format!("template `{}` param `{}` has empty value set", t.name, p.name));
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_rejects_duplicate_names() {
        let cat = TemplateCatalog {
            actions: vec![Template::new("x")],
            conditions: vec![Template::new("x")],
            decorators: vec![],
        };
        let err = cat.check().unwrap_err();
        assert!(err.contains("duplicate"), "got: {err}");
    }

    #[test]
    fn check_rejects_empty_ranges() {
        let cat = TemplateCatalog {
            actions: vec![Template::new("x").with_params(vec![ParamSpec::continuous("p", 1.0, 1.0)])],
            conditions: vec![],
            decorators: vec![],
        };
        assert!(cat.check().is_err());
    }

    #[test]
    fn check_requires_decorator_semantics() {
        let cat = TemplateCatalog {
            actions: vec![],
            conditions: vec![],
            decorators: vec![Template::new("invert")],
        };
        assert!(cat.check().is_err());
        let ok = TemplateCatalog {
            actions: vec![],
            conditions: vec![],
            decorators: vec![Template::new("invert").with_decorator(DecoratorKind::Invert)],
        };
        assert!(ok.check().is_ok());
    }

    #[test]
    fn params_sample_within_declared_values() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let c = ParamKind::Continuous { min: 0.25, max: 0.75 };
        let d = ParamKind::Discrete(vec![1.0, 2.0, 4.0]);
        for _ in 0..200 {
            assert!(c.contains(c.sample(&mut rng)));
            assert!(d.contains(d.sample(&mut rng)));
        }
        assert_eq!(c.range_width(), 0.5);
        assert_eq!(d.range_width(), 3.0);
    }
}
