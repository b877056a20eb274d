//! Task templates and their JSON file format.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "name": "puttputt",
//!   "arena": { "min": [0, 0], "max": [1, 1] },
//!   "entities": [ { "name": "ball", "type": "Object", "count": 1 } ],
//!   "priors": { "ball.Position": { "dist": "uniform", "params": [0.1, 0.9] } },
//!   "rules": ["friction", "motion", "collisions"],
//!   "reward": "puttputt",
//!   "actions": { "max_force": 1.0 },
//!   "observation": { "mode": "full-state" },
//!   "physics": { "gravity": 10.0 }
//! }
//! ```
//!
//! Factors without a prior get a constant default. A prior on a vec2 factor
//! either applies independently to each component or lists them under
//! `"components"`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::Value;

use super::dist::Distribution;
use crate::env::{ActionSpec, ObsMode, ObservationSpec, RewardKind};
use crate::error::{Error, Result};
use crate::factors::builtin::*;
use crate::factors::{
    Arena, EntityType, EntityTypeRegistry, FactorId, FactorKind, FactorRegistry, Shape, DEFAULT_DT,
};
use crate::physics::{builtin_ruleset, PhysicsConstants};

pub const SCHEMA_VERSION: u64 = 1;
pub const DEFAULT_MAX_STEPS: u32 = 200;

/// Prior over one factor: one scalar distribution per component.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPrior {
    pub components: Vec<Distribution>,
}

impl FactorPrior {
    pub fn constant(values: &[f64]) -> Self {
        FactorPrior {
            components: values.iter().map(|&v| Distribution::constant(v)).collect(),
        }
    }

    pub fn entropy(&self) -> f64 {
        self.components.iter().map(Distribution::entropy).sum()
    }
}

/// Width scaling presets for prior distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Difficulty {
    #[default]
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn width_scale(self) -> f64 {
        match self {
            Difficulty::Easy => 1.0,
            Difficulty::Medium => 2.0,
            Difficulty::Hard => 4.0,
        }
    }

    pub fn parse(s: &str) -> Option<Difficulty> {
        match s {
            "easy" => Some(Difficulty::Easy),
            "medium" => Some(Difficulty::Medium),
            "hard" => Some(Difficulty::Hard),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

/// One entity slot: a type, a prior over how many entities to create and a
/// prior for every factor of the type's basis (in basis order).
#[derive(Debug, Clone)]
pub struct SlotTemplate {
    pub name: String,
    pub etype: Arc<EntityType>,
    pub count: Distribution,
    pub priors: Vec<(FactorId, FactorPrior)>,
}

impl SlotTemplate {
    pub fn prior(&self, factor: FactorId) -> Option<&FactorPrior> {
        self.priors.iter().find(|(f, _)| *f == factor).map(|(_, p)| p)
    }
}

#[derive(Debug, Clone)]
pub struct TaskTemplate {
    pub name: String,
    pub slots: Vec<SlotTemplate>,
    pub rules: Vec<String>,
    pub reward: RewardKind,
    pub actions: ActionSpec,
    pub observation: ObservationSpec,
    pub physics: PhysicsConstants,
    pub arena: Arena,
    pub dt: f64,
    pub max_steps: u32,
    pub difficulty: Difficulty,
    pub registry: Arc<FactorRegistry>,
    pub types: Arc<EntityTypeRegistry>,
}

fn terr(key: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Template {
        key: key.into(),
        reason: reason.into(),
    }
}

fn num(v: &Value, key: &str) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| terr(key, "number out of range")),
        Value::Bool(b) => Ok(if *b { 1.0 } else { 0.0 }),
        Value::String(s) => match s.as_str() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Shape::from_name(other)
                .map(Shape::code)
                .ok_or_else(|| terr(key, format!("expected a number, got {other:?}"))),
        },
        _ => Err(terr(key, format!("expected a number, got {v}"))),
    }
}

fn num_array(v: &Value, key: &str) -> Result<Vec<f64>> {
    match v {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, x)| num(x, &format!("{key}[{i}]")))
            .collect(),
        other => Ok(vec![num(other, key)?]),
    }
}

fn bound(v: &Value, key: &str, default: f64) -> Result<f64> {
    if v.is_null() {
        Ok(default)
    } else {
        num(v, key)
    }
}

/// Parse `{"dist": ..., "params": ...}` into a scalar distribution.
pub fn parse_distribution(v: &Value, key: &str) -> Result<Distribution> {
    let obj = v
        .as_object()
        .ok_or_else(|| terr(key, "expected an object with \"dist\" and \"params\""))?;
    for k in obj.keys() {
        if !matches!(k.as_str(), "dist" | "params" | "truncate") {
            return Err(terr(format!("{key}.{k}"), "unknown field"));
        }
    }
    let name = obj
        .get("dist")
        .and_then(Value::as_str)
        .ok_or_else(|| terr(format!("{key}.dist"), "missing distribution name"))?;
    let pkey = format!("{key}.params");
    let params = obj.get("params").unwrap_or(&Value::Null);
    let dist = match name {
        "constant" => {
            let p = num_array(params, &pkey)?;
            match p.as_slice() {
                [c] => Distribution::constant(*c),
                _ => return Err(terr(pkey, "constant takes one parameter")),
            }
        }
        "uniform" => match num_array(params, &pkey)?.as_slice() {
            [a, b] => Distribution::uniform(*a, *b),
            _ => return Err(terr(pkey, "uniform takes [a, b]")),
        },
        "gaussian" | "normal" => {
            let (mean, std) = match num_array(params, &pkey)?.as_slice() {
                [m, s] => (*m, *s),
                _ => return Err(terr(pkey, "gaussian takes [mean, sigma]")),
            };
            match obj.get("truncate") {
                None | Some(Value::Null) => Distribution::gaussian(mean, std),
                Some(Value::Array(b)) if b.len() == 2 => {
                    let tkey = format!("{key}.truncate");
                    Distribution::truncated_gaussian(
                        mean,
                        std,
                        bound(&b[0], &tkey, f64::NEG_INFINITY)?,
                        bound(&b[1], &tkey, f64::INFINITY)?,
                    )
                }
                Some(_) => return Err(terr(format!("{key}.truncate"), "expected [lo, hi]")),
            }
        }
        "discrete" => {
            let values = params
                .get("values")
                .ok_or_else(|| terr(format!("{pkey}.values"), "missing"))?;
            let weights = params
                .get("weights")
                .ok_or_else(|| terr(format!("{pkey}.weights"), "missing"))?;
            Distribution::discrete(
                num_array(values, &format!("{pkey}.values"))?,
                num_array(weights, &format!("{pkey}.weights"))?,
            )
        }
        other => return Err(terr(format!("{key}.dist"), format!("unknown distribution {other:?}"))),
    };
    dist.validate().map_err(|reason| terr(pkey, reason))?;
    Ok(dist)
}

fn parse_factor_prior(v: &Value, key: &str, kind: FactorKind) -> Result<FactorPrior> {
    let width = kind.width();
    let components = if let Some(comps) = v.get("components") {
        let arr = comps
            .as_array()
            .ok_or_else(|| terr(format!("{key}.components"), "expected an array"))?;
        if arr.len() != width {
            return Err(terr(
                format!("{key}.components"),
                format!("expected {width} components, got {}", arr.len()),
            ));
        }
        arr.iter()
            .enumerate()
            .map(|(i, c)| parse_distribution(c, &format!("{key}.components[{i}]")))
            .collect::<Result<Vec<_>>>()?
    } else {
        let d = parse_distribution(v, key)?;
        vec![d; width]
    };
    for (i, d) in components.iter().enumerate() {
        check_kind_support(d, kind).map_err(|r| terr(format!("{key}[{i}]"), r))?;
    }
    Ok(FactorPrior { components })
}

fn check_kind_support(d: &Distribution, kind: FactorKind) -> std::result::Result<(), String> {
    let allowed: &[f64] = match kind {
        FactorKind::Boolean => &[0.0, 1.0],
        FactorKind::ShapeTag => &[0.0, 1.0],
        _ => return Ok(()),
    };
    let ok = match d {
        Distribution::Constant { value } => allowed.contains(value),
        Distribution::Discrete { values, .. } => values.iter().all(|v| allowed.contains(v)),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{kind} factors need a constant or discrete prior over {allowed:?}"))
    }
}

/// Constant prior used when a template leaves a factor unspecified.
pub fn default_prior(
    factor: FactorId,
    kind: FactorKind,
    etype: &EntityType,
    arena: &Arena,
    physics: &PhysicsConstants,
) -> FactorPrior {
    let c = |v: f64| FactorPrior::constant(&[v]);
    match factor {
        POSITION => FactorPrior::constant(&[
            0.5 * (arena.min[0] + arena.max[0]),
            0.5 * (arena.min[1] + arena.max[1]),
        ]),
        MASS => c(1.0),
        RADIUS => c(if etype.is_named("Object") { 0.04 } else { 0.1 }),
        SHAPE => {
            let square = etype.is_named("Sand") || etype.is_named("Magma") || etype.is_named("Magnet");
            c(if square { Shape::Square.code() } else { Shape::Circle.code() })
        }
        ELASTICITY => c(physics.restitution_default),
        FRICTION => c(0.3),
        HEAT => c(0.5),
        MAGNETISM => c(1.0),
        GOAL_FLAG => c(if etype.is_named("Goal") { 1.0 } else { 0.0 }),
        HOLE_FLAG => c(if etype.is_named("Hole") { 1.0 } else { 0.0 }),
        _ => FactorPrior::constant(&vec![0.0; kind.width()]),
    }
}

fn parse_count(v: &Value, key: &str) -> Result<Distribution> {
    let d = match v {
        Value::Number(_) => Distribution::constant(num(v, key)?),
        Value::Object(o) if o.contains_key("dist") => parse_distribution(v, key)?,
        Value::Object(o) => {
            let values = o.get("values").ok_or_else(|| terr(format!("{key}.values"), "missing"))?;
            let weights = o.get("weights").ok_or_else(|| terr(format!("{key}.weights"), "missing"))?;
            let d = Distribution::discrete(
                num_array(values, &format!("{key}.values"))?,
                num_array(weights, &format!("{key}.weights"))?,
            );
            d.validate().map_err(|r| terr(key, r))?;
            d
        }
        _ => return Err(terr(key, "expected an integer or {values, weights}")),
    };
    let ok = match &d {
        Distribution::Constant { value } => value.fract() == 0.0 && *value >= 0.0,
        Distribution::Discrete { values, .. } => values.iter().all(|v| v.fract() == 0.0 && *v >= 0.0),
        _ => false,
    };
    if !ok {
        return Err(terr(key, "counts must be non-negative integers (constant or discrete)"));
    }
    Ok(d)
}

fn vec2_field(v: &Value, key: &str) -> Result<[f64; 2]> {
    match num_array(v, key)?.as_slice() {
        [x, y] => Ok([*x, *y]),
        _ => Err(terr(key, "expected [x, y]")),
    }
}

const TOP_LEVEL_KEYS: &[&str] = &[
    "schema",
    "name",
    "arena",
    "dt",
    "max_steps",
    "entities",
    "priors",
    "rules",
    "reward",
    "actions",
    "observation",
    "physics",
    "difficulty",
];

impl TaskTemplate {
    /// Parse a template against the built-in factor and entity registries.
    pub fn from_json(text: &str) -> Result<TaskTemplate> {
        Self::from_json_with(
            text,
            Arc::new(FactorRegistry::builtin()),
            Arc::new(EntityTypeRegistry::builtin()),
        )
    }

    pub fn from_json_with(
        text: &str,
        registry: Arc<FactorRegistry>,
        types: Arc<EntityTypeRegistry>,
    ) -> Result<TaskTemplate> {
        let root: Value = serde_json::from_str(text)?;
        let obj = root.as_object().ok_or_else(|| terr("$", "template must be a JSON object"))?;
        for k in obj.keys() {
            if !TOP_LEVEL_KEYS.contains(&k.as_str()) {
                return Err(terr(k.clone(), "unknown top-level key"));
            }
        }
        match obj.get("schema").and_then(Value::as_u64) {
            Some(SCHEMA_VERSION) => {}
            Some(v) => return Err(terr("schema", format!("unsupported schema version {v}"))),
            None => return Err(terr("schema", "missing schema version")),
        }
        let name = obj
            .get("name")
            .and_then(Value::as_str)
            .unwrap_or("unnamed")
            .to_string();

        let arena = match obj.get("arena") {
            None => Arena::default(),
            Some(a) => {
                let min = vec2_field(a.get("min").unwrap_or(&Value::Null), "arena.min")?;
                let max = vec2_field(a.get("max").unwrap_or(&Value::Null), "arena.max")?;
                if !(min[0] < max[0] && min[1] < max[1]) {
                    return Err(terr("arena", "min must be below max on both axes"));
                }
                Arena { min, max }
            }
        };
        let dt = match obj.get("dt") {
            None => DEFAULT_DT,
            Some(v) => {
                let dt = num(v, "dt")?;
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(terr("dt", "must be positive"));
                }
                dt
            }
        };
        let max_steps = match obj.get("max_steps") {
            None => DEFAULT_MAX_STEPS,
            Some(v) => v
                .as_u64()
                .filter(|&n| n > 0 && n <= u32::MAX as u64)
                .ok_or_else(|| terr("max_steps", "expected a positive integer"))?
                as u32,
        };
        let difficulty = match obj.get("difficulty") {
            None => Difficulty::Easy,
            Some(v) => v
                .as_str()
                .and_then(Difficulty::parse)
                .ok_or_else(|| terr("difficulty", "expected easy, medium or hard"))?,
        };

        let physics: PhysicsConstants = match obj.get("physics") {
            None => PhysicsConstants::default(),
            Some(p) => serde_json::from_value(p.clone()).map_err(|e| terr("physics", e.to_string()))?,
        };
        physics.validate()?;

        let rules: Vec<String> = match obj.get("rules") {
            None => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| terr(format!("rules[{i}]"), "expected a rule name"))
                })
                .collect::<Result<_>>()?,
            Some(_) => return Err(terr("rules", "expected an array of rule names")),
        };
        builtin_ruleset(&rules)?;

        let reward = match obj.get("reward") {
            None => RewardKind::None,
            Some(v) => v
                .as_str()
                .and_then(RewardKind::parse)
                .ok_or_else(|| terr("reward", "expected none, puttputt, billiards or invisiball"))?,
        };

        let actions = match obj.get("actions") {
            None => ActionSpec::default(),
            Some(a) => {
                let mut spec = ActionSpec::default();
                if let Some(f) = a.get("max_force") {
                    spec.max_force = num(f, "actions.max_force")?;
                    if !(spec.max_force > 0.0 && spec.max_force.is_finite()) {
                        return Err(terr("actions.max_force", "must be positive"));
                    }
                }
                spec
            }
        };

        let observation = parse_observation(obj.get("observation"), &registry, reward)?;

        // Entity slots.
        let mut slots: Vec<SlotTemplate> = Vec::new();
        let ents = match obj.get("entities") {
            None => &[][..],
            Some(Value::Array(items)) => items.as_slice(),
            Some(_) => return Err(terr("entities", "expected an array")),
        };
        for (i, e) in ents.iter().enumerate() {
            let key = format!("entities[{i}]");
            let sname = e
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| terr(format!("{key}.name"), "missing slot name"))?;
            if slots.iter().any(|s| s.name == sname) {
                return Err(terr(format!("{key}.name"), format!("duplicate slot {sname:?}")));
            }
            let tname = e
                .get("type")
                .and_then(Value::as_str)
                .ok_or_else(|| terr(format!("{key}.type"), "missing entity type"))?;
            let etype = types
                .get(tname)
                .cloned()
                .ok_or_else(|| terr(format!("{key}.type"), format!("unknown entity type {tname:?}")))?;
            let count = match e.get("count") {
                None => Distribution::constant(1.0),
                Some(c) => parse_count(c, &format!("{key}.count"))?,
            };
            let priors = etype
                .basis()
                .iter()
                .map(|&f| {
                    let kind = registry.kind(f).expect("basis factors are registered");
                    (f, default_prior(f, kind, &etype, &arena, &physics))
                })
                .collect();
            slots.push(SlotTemplate {
                name: sname.to_string(),
                etype,
                count,
                priors,
            });
        }

        if let Some(p) = obj.get("priors") {
            let map = p.as_object().ok_or_else(|| terr("priors", "expected an object"))?;
            // Sorted for deterministic error reporting.
            let sorted: BTreeMap<&String, &Value> = map.iter().collect();
            for (k, v) in sorted {
                let key = format!("priors.{k}");
                let (sname, fname) = k
                    .split_once('.')
                    .ok_or_else(|| terr(&key, "expected \"slot.Factor\""))?;
                let slot = slots
                    .iter_mut()
                    .find(|s| s.name == sname)
                    .ok_or_else(|| terr(&key, format!("unknown slot {sname:?}")))?;
                let fty = registry
                    .lookup(fname)
                    .ok_or_else(|| terr(&key, format!("unknown factor {fname:?}")))?;
                let entry = slot
                    .priors
                    .iter_mut()
                    .find(|(f, _)| *f == fty.id)
                    .ok_or_else(|| {
                        terr(&key, format!("{fname} is not in the basis of {}", slot.etype.name()))
                    })?;
                entry.1 = parse_factor_prior(v, &key, fty.kind)?;
            }
        }

        let mut t = TaskTemplate {
            name,
            slots,
            rules,
            reward,
            actions,
            observation,
            physics,
            arena,
            dt,
            max_steps,
            difficulty: Difficulty::Easy,
            registry,
            types,
        };
        t.set_difficulty(difficulty);
        Ok(t)
    }

    /// Rescale every factor prior's width relative to the current difficulty.
    pub fn set_difficulty(&mut self, difficulty: Difficulty) {
        let k = difficulty.width_scale() / self.difficulty.width_scale();
        if k != 1.0 {
            for slot in &mut self.slots {
                for (_, p) in &mut slot.priors {
                    for c in &mut p.components {
                        *c = c.scale_width(k);
                    }
                }
            }
        }
        self.difficulty = difficulty;
    }

    pub fn slot(&self, name: &str) -> Option<&SlotTemplate> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Sum of the entropies of every independent prior: entity counts and
    /// each component of each factor prior.
    pub fn entropy(&self) -> f64 {
        self.slots
            .iter()
            .map(|s| s.count.entropy() + s.priors.iter().map(|(_, p)| p.entropy()).sum::<f64>())
            .sum()
    }
}

fn parse_observation(
    v: Option<&Value>,
    registry: &FactorRegistry,
    reward: RewardKind,
) -> Result<ObservationSpec> {
    let mut spec = ObservationSpec::all(registry);
    spec.hide_controlled_after_first_step = reward == RewardKind::Invisiball;
    let Some(v) = v else { return Ok(spec) };
    let obj = v.as_object().ok_or_else(|| terr("observation", "expected an object"))?;
    for (k, val) in obj {
        let key = format!("observation.{k}");
        match k.as_str() {
            "mode" => {
                spec.mode = val
                    .as_str()
                    .and_then(ObsMode::parse)
                    .ok_or_else(|| terr(&key, "expected full-state, partial-state, pixels or multimodal"))?
            }
            "factors" | "exclude" => {
                let names = val
                    .as_array()
                    .ok_or_else(|| terr(&key, "expected an array of factor names"))?;
                let mut ids = Vec::new();
                for (i, n) in names.iter().enumerate() {
                    let n = n.as_str().ok_or_else(|| terr(format!("{key}[{i}]"), "expected a name"))?;
                    let f = registry
                        .lookup(n)
                        .ok_or_else(|| terr(format!("{key}[{i}]"), format!("unknown factor {n:?}")))?;
                    ids.push(f.id);
                }
                if k == "factors" {
                    spec.observable = ids;
                } else {
                    spec.observable.retain(|f| !ids.contains(f));
                }
            }
            "entities" => {
                let names = val
                    .as_array()
                    .ok_or_else(|| terr(&key, "expected an array of entity type names"))?;
                spec.entity_types = Some(
                    names
                        .iter()
                        .map(|n| n.as_str().map(str::to_string).ok_or_else(|| terr(&key, "expected names")))
                        .collect::<Result<_>>()?,
                );
            }
            "renderer_seed" => {
                spec.renderer_seed = val.as_u64().ok_or_else(|| terr(&key, "expected an unsigned integer"))?
            }
            "resolution" => {
                spec.resolution = val
                    .as_u64()
                    .filter(|r| *r <= 4096)
                    .ok_or_else(|| terr(&key, "expected an integer"))? as u32
            }
            "hide_controlled_after_first_step" => {
                spec.hide_controlled_after_first_step =
                    val.as_bool().ok_or_else(|| terr(&key, "expected a boolean"))?
            }
            _ => return Err(terr(key, "unknown field")),
        }
    }
    spec.validate(registry).map_err(|e| terr("observation", e.to_string()))?;
    Ok(spec)
}
