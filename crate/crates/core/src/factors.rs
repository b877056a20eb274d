//! Factor types, entity types, entities and the flattened state space.
//!
//! A factor is one typed physical property (position, mass, charge, ...).
//! An entity type fixes an ordered basis of factor types, and an entity is
//! a value for every factor in that basis. A [`SimState`] is the product of
//! all entity vectors; [`flatten_state`] lays it out as a plain `f64` vector
//! in a deterministic order.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a registered factor type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactorId(pub u32);

/// Built-in factor types. The registry returned by [`FactorRegistry::builtin`]
/// registers these first, in this order, so their ids are stable constants.
pub mod builtin {
    use super::FactorId;

    pub const POSITION: FactorId = FactorId(0);
    pub const VELOCITY: FactorId = FactorId(1);
    pub const ACCELERATION: FactorId = FactorId(2);
    pub const MASS: FactorId = FactorId(3);
    pub const CHARGE: FactorId = FactorId(4);
    pub const MAGNETISM: FactorId = FactorId(5);
    pub const FRICTION: FactorId = FactorId(6);
    pub const HEAT: FactorId = FactorId(7);
    pub const RADIUS: FactorId = FactorId(8);
    pub const SHAPE: FactorId = FactorId(9);
    pub const ELASTICITY: FactorId = FactorId(10);
    pub const GRAVITY: FactorId = FactorId(11);
    pub const GOAL_FLAG: FactorId = FactorId(12);
    pub const HOLE_FLAG: FactorId = FactorId(13);
    pub const CONTROLLED_FLAG: FactorId = FactorId(14);
    // World constants read by the built-in rules.
    pub const LORENTZ_K: FactorId = FactorId(15);
    pub const COULOMB_K: FactorId = FactorId(16);
    pub const HEAT_K: FactorId = FactorId(17);

    pub(super) const TABLE: &[(&str, super::FactorKind, &str)] = {
        use super::FactorKind::*;
        &[
            ("Position", Vec2, "arena units"),
            ("Velocity", Vec2, "arena units / s"),
            ("Acceleration", Vec2, "arena units / s^2"),
            ("Mass", Scalar, "mass"),
            ("Charge", Scalar, "charge"),
            ("Magnetism", Scalar, "field strength"),
            ("Friction", Scalar, "kinetic coefficient"),
            ("Heat", Scalar, "heat"),
            ("Radius", Scalar, "arena units"),
            ("Shape", ShapeTag, ""),
            ("Elasticity", Scalar, "restitution"),
            ("Gravity", Scalar, "arena units / s^2"),
            ("GoalFlag", Boolean, ""),
            ("HoleFlag", Boolean, ""),
            ("ControlledFlag", Boolean, ""),
            ("LorentzK", Scalar, ""),
            ("CoulombK", Scalar, ""),
            ("HeatK", Scalar, "1 / s"),
        ]
    };
}

/// Value kind of a factor type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorKind {
    Scalar,
    Vec2,
    ShapeTag,
    Boolean,
}

impl FactorKind {
    /// Number of slots a value of this kind occupies in a flattened vector.
    pub fn width(self) -> usize {
        match self {
            FactorKind::Vec2 => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FactorKind::Scalar => "scalar",
            FactorKind::Vec2 => "vec2",
            FactorKind::ShapeTag => "shape-tag",
            FactorKind::Boolean => "boolean",
        };
        f.write_str(s)
    }
}

/// Shape tag. Only circles take part in collisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    Circle,
    /// Axis-aligned square with half-extent equal to the entity's radius.
    Square,
}

impl Shape {
    pub fn code(self) -> f64 {
        match self {
            Shape::Circle => 0.0,
            Shape::Square => 1.0,
        }
    }

    pub fn from_code(code: f64) -> Option<Shape> {
        if code == 0.0 {
            Some(Shape::Circle)
        } else if code == 1.0 {
            Some(Shape::Square)
        } else {
            None
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
        }
    }

    pub fn from_name(name: &str) -> Option<Shape> {
        match name.to_ascii_lowercase().as_str() {
            "circle" => Some(Shape::Circle),
            "square" => Some(Shape::Square),
            _ => None,
        }
    }
}

/// A concrete factor value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorValue {
    Scalar(f64),
    Vec2([f64; 2]),
    Shape(Shape),
    Bool(bool),
}

impl FactorValue {
    pub fn kind(&self) -> FactorKind {
        match self {
            FactorValue::Scalar(_) => FactorKind::Scalar,
            FactorValue::Vec2(_) => FactorKind::Vec2,
            FactorValue::Shape(_) => FactorKind::ShapeTag,
            FactorValue::Bool(_) => FactorKind::Boolean,
        }
    }

    /// Zero value of a kind (`Circle` and `false` for tags).
    pub fn zero(kind: FactorKind) -> FactorValue {
        match kind {
            FactorKind::Scalar => FactorValue::Scalar(0.0),
            FactorKind::Vec2 => FactorValue::Vec2([0.0, 0.0]),
            FactorKind::ShapeTag => FactorValue::Shape(Shape::Circle),
            FactorKind::Boolean => FactorValue::Bool(false),
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match *self {
            FactorValue::Scalar(x) => Some(x),
            _ => None,
        }
    }

    pub fn as_vec2(&self) -> Option<[f64; 2]> {
        match *self {
            FactorValue::Vec2(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            FactorValue::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_shape(&self) -> Option<Shape> {
        match *self {
            FactorValue::Shape(s) => Some(s),
            _ => None,
        }
    }

    /// Append the numeric encoding of this value to `out`.
    pub fn write_components(&self, out: &mut Vec<f64>) {
        match *self {
            FactorValue::Scalar(x) => out.push(x),
            FactorValue::Vec2([x, y]) => {
                out.push(x);
                out.push(y);
            }
            FactorValue::Shape(s) => out.push(s.code()),
            FactorValue::Bool(b) => out.push(if b { 1.0 } else { 0.0 }),
        }
    }

    /// Numeric encoding of one component.
    pub fn component(&self, index: usize) -> f64 {
        match *self {
            FactorValue::Scalar(x) => x,
            FactorValue::Vec2(v) => v[index],
            FactorValue::Shape(s) => s.code(),
            FactorValue::Bool(b) => {
                if b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Decode a value of `kind` from its numeric components.
    pub fn from_components(kind: FactorKind, comps: &[f64]) -> Option<FactorValue> {
        match kind {
            FactorKind::Scalar => comps.first().map(|&x| FactorValue::Scalar(x)),
            FactorKind::Vec2 => match comps {
                [x, y, ..] => Some(FactorValue::Vec2([*x, *y])),
                _ => None,
            },
            FactorKind::ShapeTag => comps
                .first()
                .and_then(|&c| Shape::from_code(c))
                .map(FactorValue::Shape),
            FactorKind::Boolean => match comps.first() {
                Some(&0.0) => Some(FactorValue::Bool(false)),
                Some(&1.0) => Some(FactorValue::Bool(true)),
                _ => None,
            },
        }
    }
}

/// Schema of a factor: its name, value kind and a free-text unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorType {
    pub id: FactorId,
    pub name: String,
    pub kind: FactorKind,
    pub unit: String,
}

/// Registry of factor types. Names are unique; kinds never change once
/// registered.
#[derive(Debug, Clone, Default)]
pub struct FactorRegistry {
    types: Vec<FactorType>,
    by_name: HashMap<String, FactorId>,
}

impl FactorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry pre-populated with the built-in factors of [`builtin`].
    pub fn builtin() -> Self {
        let mut reg = Self::new();
        for &(name, kind, unit) in builtin::TABLE {
            reg.register_with_unit(name, kind, unit)
                .expect("built-in factor names are unique");
        }
        reg
    }

    pub fn register(&mut self, name: &str, kind: FactorKind) -> Result<FactorType> {
        self.register_with_unit(name, kind, "")
    }

    pub fn register_with_unit(
        &mut self,
        name: &str,
        kind: FactorKind,
        unit: &str,
    ) -> Result<FactorType> {
        if self.by_name.contains_key(name) {
            return Err(Error::DuplicateFactor(name.to_string()));
        }
        let id = FactorId(self.types.len() as u32);
        let ty = FactorType {
            id,
            name: name.to_string(),
            kind,
            unit: unit.to_string(),
        };
        self.by_name.insert(name.to_string(), id);
        self.types.push(ty.clone());
        Ok(ty)
    }

    pub fn lookup(&self, name: &str) -> Option<&FactorType> {
        self.by_name.get(name).map(|id| &self.types[id.0 as usize])
    }

    pub fn get(&self, id: FactorId) -> Option<&FactorType> {
        self.types.get(id.0 as usize)
    }

    pub fn name(&self, id: FactorId) -> &str {
        self.get(id).map(|t| t.name.as_str()).unwrap_or("?")
    }

    pub fn kind(&self, id: FactorId) -> Option<FactorKind> {
        self.get(id).map(|t| t.kind)
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FactorType> {
        self.types.iter()
    }
}

/// An entity type: a name, an ordered basis of factor types and an optional
/// parent whose basis is a prefix of this one.
#[derive(Debug, PartialEq, Eq)]
pub struct EntityType {
    name: String,
    basis: Vec<FactorId>,
    parent: Option<Arc<EntityType>>,
}

impl EntityType {
    pub fn root(name: &str, basis: Vec<FactorId>) -> Result<Arc<EntityType>> {
        check_unique_basis(name, &basis)?;
        Ok(Arc::new(EntityType {
            name: name.to_string(),
            basis,
            parent: None,
        }))
    }

    /// Sub-type of `parent`: the parent's basis followed by `extra`.
    pub fn derive(
        parent: &Arc<EntityType>,
        name: &str,
        extra: &[FactorId],
    ) -> Result<Arc<EntityType>> {
        let mut basis = parent.basis.clone();
        basis.extend_from_slice(extra);
        check_unique_basis(name, &basis)?;
        Ok(Arc::new(EntityType {
            name: name.to_string(),
            basis,
            parent: Some(Arc::clone(parent)),
        }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn basis(&self) -> &[FactorId] {
        &self.basis
    }

    pub fn parent(&self) -> Option<&Arc<EntityType>> {
        self.parent.as_ref()
    }

    pub fn has_factor(&self, f: FactorId) -> bool {
        self.basis.contains(&f)
    }

    /// True if the basis contains every factor in `required`.
    pub fn has_all(&self, required: &[FactorId]) -> bool {
        required.iter().all(|f| self.basis.contains(f))
    }

    /// True if `self` is `other` or one of its descendants.
    pub fn is_a(&self, other: &EntityType) -> bool {
        let mut cur = Some(self);
        while let Some(t) = cur {
            if t.name == other.name && t.basis == other.basis {
                return true;
            }
            cur = t.parent.as_deref();
        }
        false
    }

    /// True if this type or an ancestor is called `name`.
    pub fn is_named(&self, name: &str) -> bool {
        let mut cur = Some(self);
        while let Some(t) = cur {
            if t.name == name {
                return true;
            }
            cur = t.parent.as_deref();
        }
        false
    }
}

fn check_unique_basis(name: &str, basis: &[FactorId]) -> Result<()> {
    for (i, f) in basis.iter().enumerate() {
        if basis[..i].contains(f) {
            return Err(Error::InvalidEntityType(format!(
                "{name}: factor {} appears twice in basis",
                f.0
            )));
        }
    }
    Ok(())
}

/// Named entity types. [`EntityTypeRegistry::builtin`] provides the
/// Entity / Thing / Object / Tile hierarchy and the tile variants used by
/// the built-in tasks.
#[derive(Debug, Clone, Default)]
pub struct EntityTypeRegistry {
    types: Vec<Arc<EntityType>>,
}

impl EntityTypeRegistry {
    pub fn builtin() -> Self {
        use builtin::*;
        let mut reg = Self::default();
        let entity = EntityType::root("Entity", vec![]).unwrap();
        let thing = EntityType::derive(&entity, "Thing", &[POSITION, SHAPE, RADIUS]).unwrap();
        let object = EntityType::derive(
            &thing,
            "Object",
            &[
                VELOCITY,
                ACCELERATION,
                MASS,
                CHARGE,
                ELASTICITY,
                CONTROLLED_FLAG,
            ],
        )
        .unwrap();
        let tile = EntityType::derive(&thing, "Tile", &[]).unwrap();
        let sand = EntityType::derive(&tile, "Sand", &[FRICTION]).unwrap();
        let magma = EntityType::derive(&tile, "Magma", &[HEAT]).unwrap();
        let magnet = EntityType::derive(&tile, "Magnet", &[MAGNETISM]).unwrap();
        let goal = EntityType::derive(&tile, "Goal", &[GOAL_FLAG]).unwrap();
        let hole = EntityType::derive(&tile, "Hole", &[HOLE_FLAG]).unwrap();
        // Friction everywhere in the arena: no position, so it overlaps
        // every object.
        let surface = EntityType::derive(&entity, "Surface", &[FRICTION]).unwrap();
        let world = EntityType::root("WorldConstants", vec![GRAVITY, LORENTZ_K, COULOMB_K, HEAT_K])
            .unwrap();
        for t in [
            entity, thing, object, tile, sand, magma, magnet, goal, hole, surface, world,
        ] {
            reg.types.push(t);
        }
        reg
    }

    pub fn insert(&mut self, ty: Arc<EntityType>) -> Result<()> {
        if self.get(ty.name()).is_some() {
            return Err(Error::InvalidEntityType(format!(
                "entity type {} already registered",
                ty.name()
            )));
        }
        self.types.push(ty);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Arc<EntityType>> {
        self.types.iter().find(|t| t.name() == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<EntityType>> {
        self.types.iter()
    }
}

/// Identifier of an entity inside a [`SimState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u64);

/// An instance of an entity type. Values are stored in basis order.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: EntityId,
    etype: Arc<EntityType>,
    values: Vec<FactorValue>,
}

impl Entity {
    /// Build an entity from an assignment that must cover the basis exactly.
    /// Assignment order does not matter.
    pub fn new<I>(
        registry: &FactorRegistry,
        id: EntityId,
        etype: &Arc<EntityType>,
        assignment: I,
    ) -> Result<Entity>
    where
        I: IntoIterator<Item = (FactorId, FactorValue)>,
    {
        let mut slots: Vec<Option<FactorValue>> = vec![None; etype.basis.len()];
        for (factor, value) in assignment {
            let fname = registry.name(factor).to_string();
            let Some(pos) = etype.basis.iter().position(|&b| b == factor) else {
                return Err(Error::ExtraFactor {
                    entity_type: etype.name.clone(),
                    factor: fname,
                });
            };
            let expected = registry
                .kind(factor)
                .ok_or_else(|| Error::UnknownFactor(fname.clone()))?;
            if value.kind() != expected {
                return Err(Error::KindMismatch {
                    factor: fname,
                    expected,
                    found: value.kind(),
                });
            }
            if slots[pos].replace(value).is_some() {
                return Err(Error::DuplicateAssignment(fname));
            }
        }
        let mut values = Vec::with_capacity(slots.len());
        for (slot, &factor) in slots.into_iter().zip(&etype.basis) {
            match slot {
                Some(v) => values.push(v),
                None => {
                    return Err(Error::MissingFactor {
                        entity_type: etype.name.clone(),
                        factor: registry.name(factor).to_string(),
                    })
                }
            }
        }
        Ok(Entity {
            id,
            etype: Arc::clone(etype),
            values,
        })
    }

    pub fn etype(&self) -> &Arc<EntityType> {
        &self.etype
    }

    pub fn values(&self) -> &[FactorValue] {
        &self.values
    }

    pub fn get(&self, factor: FactorId) -> Option<&FactorValue> {
        self.etype
            .basis
            .iter()
            .position(|&b| b == factor)
            .map(|i| &self.values[i])
    }

    pub fn scalar(&self, factor: FactorId) -> Option<f64> {
        self.get(factor).and_then(FactorValue::as_scalar)
    }

    pub fn vec2(&self, factor: FactorId) -> Option<[f64; 2]> {
        self.get(factor).and_then(FactorValue::as_vec2)
    }

    pub fn flag(&self, factor: FactorId) -> bool {
        self.get(factor).and_then(FactorValue::as_bool).unwrap_or(false)
    }

    /// Overwrite a factor. The value must keep the factor's kind.
    pub fn set(&mut self, factor: FactorId, value: FactorValue) -> Result<()> {
        let i = self
            .etype
            .basis
            .iter()
            .position(|&b| b == factor)
            .ok_or_else(|| Error::ExtraFactor {
                entity_type: self.etype.name.clone(),
                factor: format!("#{}", factor.0),
            })?;
        let found = value.kind();
        let expected = self.values[i].kind();
        if found != expected {
            return Err(Error::KindMismatch {
                factor: format!("#{}", factor.0),
                expected,
                found,
            });
        }
        self.values[i] = value;
        Ok(())
    }

    /// Mutable access by factor id; used by the simulator hot path.
    pub(crate) fn get_mut(&mut self, factor: FactorId) -> Option<&mut FactorValue> {
        let i = self.etype.basis.iter().position(|&b| b == factor)?;
        Some(&mut self.values[i])
    }

    pub fn is_thing(&self) -> bool {
        self.etype.has_all(&[builtin::POSITION, builtin::RADIUS])
    }

    /// Objects move and collide: they carry a velocity and a mass.
    pub fn is_object(&self) -> bool {
        self.etype
            .has_all(&[builtin::POSITION, builtin::RADIUS, builtin::VELOCITY, builtin::MASS])
    }

    /// Tiles are things that never move.
    pub fn is_tile(&self) -> bool {
        self.is_thing() && !self.etype.has_factor(builtin::VELOCITY)
    }
}

/// Axis-aligned arena bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Default for Arena {
    fn default() -> Self {
        Arena {
            min: [0.0, 0.0],
            max: [1.0, 1.0],
        }
    }
}

impl Arena {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }
}

pub const DEFAULT_DT: f64 = 0.01;

/// The full simulation state: entities ordered by id, the global-constants
/// entity, arena bounds, the step counter and the timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub entities: Vec<Entity>,
    pub world: Entity,
    pub arena: Arena,
    pub time: u64,
    pub dt: f64,
}

impl SimState {
    pub fn new(world: Entity, arena: Arena, dt: f64) -> SimState {
        SimState {
            entities: Vec::new(),
            world,
            arena,
            time: 0,
            dt,
        }
    }

    /// Id that the next spawned entity will receive.
    pub fn next_id(&self) -> EntityId {
        EntityId(self.entities.last().map(|e| e.id.0 + 1).unwrap_or(0))
    }

    /// Create an entity with a fresh id and append it.
    pub fn spawn<I>(
        &mut self,
        registry: &FactorRegistry,
        etype: &Arc<EntityType>,
        assignment: I,
    ) -> Result<EntityId>
    where
        I: IntoIterator<Item = (FactorId, FactorValue)>,
    {
        let id = self.next_id();
        let e = Entity::new(registry, id, etype, assignment)?;
        self.entities.push(e);
        Ok(id)
    }

    /// Append an already built entity; its id must exceed every existing id.
    pub fn push(&mut self, entity: Entity) -> Result<()> {
        if let Some(last) = self.entities.last() {
            if entity.id <= last.id {
                return Err(Error::InvalidState(format!(
                    "entity id {} not greater than {}",
                    entity.id.0, last.id.0
                )));
            }
        }
        self.entities.push(entity);
        Ok(())
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entities[i])
    }

    pub fn entity_mut(&mut self, id: EntityId) -> Option<&mut Entity> {
        self.entities
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(move |i| &mut self.entities[i])
    }

    /// The unique entity with `ControlledFlag` set, if any.
    pub fn controlled(&self) -> Option<&Entity> {
        self.entities
            .iter()
            .find(|e| e.flag(builtin::CONTROLLED_FLAG))
    }
}

/// One slot of a flattened state vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutSlot {
    pub entity: EntityId,
    pub entity_type: String,
    pub factor: String,
    #[serde(skip)]
    pub factor_id: Option<FactorId>,
    pub component: u8,
}

/// Maps each index of a flattened vector to (entity, factor, component).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StateLayout {
    pub slots: Vec<LayoutSlot>,
}

impl StateLayout {
    pub fn of(state: &SimState, registry: &FactorRegistry) -> StateLayout {
        let mut slots = Vec::new();
        for e in &state.entities {
            for (&f, v) in e.etype.basis.iter().zip(&e.values) {
                for c in 0..v.kind().width() {
                    slots.push(LayoutSlot {
                        entity: e.id,
                        entity_type: e.etype.name.clone(),
                        factor: registry.name(f).to_string(),
                        factor_id: Some(f),
                        component: c as u8,
                    });
                }
            }
        }
        StateLayout { slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// The layout with entity ids dropped: two states with the same entity
    /// multiset in the same order share a structural key.
    pub fn structure(&self) -> Vec<(String, String, u8)> {
        self.slots
            .iter()
            .map(|s| (s.entity_type.clone(), s.factor.clone(), s.component))
            .collect()
    }

    /// Human-readable label of slot `i`, e.g. `3:Object.Position[0]`.
    pub fn label(&self, i: usize) -> String {
        let s = &self.slots[i];
        format!(
            "{}:{}.{}[{}]",
            s.entity.0, s.entity_type, s.factor, s.component
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn from_json(s: &str) -> Result<StateLayout> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Flattened state values: entities by ascending id, factors in basis order.
pub fn state_vector(state: &SimState) -> Vec<f64> {
    let mut out = Vec::new();
    for e in &state.entities {
        for v in &e.values {
            v.write_components(&mut out);
        }
    }
    out
}

/// Flatten a state into a vector and the layout that explains it.
pub fn flatten_state(state: &SimState, registry: &FactorRegistry) -> (Vec<f64>, StateLayout) {
    (state_vector(state), StateLayout::of(state, registry))
}

/// Write a flattened vector back into a state with the given layout.
/// The state must have the structure the layout describes.
pub fn unflatten(state: &mut SimState, layout: &StateLayout, values: &[f64]) -> Result<()> {
    let expected: Vec<(EntityId, &str)> = state
        .entities
        .iter()
        .flat_map(|e| {
            e.values
                .iter()
                .flat_map(move |v| std::iter::repeat_n((e.id, e.etype.name()), v.kind().width()))
        })
        .collect();
    if expected.len() != layout.len() || values.len() != layout.len() {
        return Err(Error::LayoutMismatch(format!(
            "state has {} slots, layout {}, vector {}",
            expected.len(),
            layout.len(),
            values.len()
        )));
    }
    for (slot, (id, tname)) in layout.slots.iter().zip(&expected) {
        if slot.entity != *id || slot.entity_type != *tname {
            return Err(Error::LayoutMismatch(format!(
                "slot for entity {} does not match state entity {}",
                slot.entity.0, id.0
            )));
        }
    }
    let mut cursor = 0;
    for e in &mut state.entities {
        for v in &mut e.values {
            let w = v.kind().width();
            let decoded = FactorValue::from_components(v.kind(), &values[cursor..cursor + w])
                .ok_or_else(|| {
                    Error::LayoutMismatch(format!("slot {cursor} holds an invalid tag value"))
                })?;
            *v = decoded;
            cursor += w;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::builtin::*;
    use super::*;

    fn object_values() -> Vec<(FactorId, FactorValue)> {
        vec![
            (POSITION, FactorValue::Vec2([0.1, -0.1])),
            (MASS, FactorValue::Scalar(0.4)),
            (VELOCITY, FactorValue::Vec2([0.1, 1.0])),
            (SHAPE, FactorValue::Shape(Shape::Circle)),
            (RADIUS, FactorValue::Scalar(0.05)),
            (ACCELERATION, FactorValue::Vec2([0.0, 0.0])),
            (CHARGE, FactorValue::Scalar(0.0)),
            (ELASTICITY, FactorValue::Scalar(1.0)),
            (CONTROLLED_FLAG, FactorValue::Bool(true)),
        ]
    }

    #[test]
    fn register_and_lookup() {
        let mut reg = FactorRegistry::builtin();
        let n = reg.len();
        assert_eq!(reg.lookup("Mass").unwrap().kind, FactorKind::Scalar);
        let wind = reg.register("Wind", FactorKind::Vec2).unwrap();
        assert_eq!(reg.len(), n + 1);
        assert_eq!(reg.lookup("Wind").unwrap().id, wind.id);
    }

    #[test]
    fn duplicate_registration_fails() {
        let mut reg = FactorRegistry::new();
        reg.register("Mass", FactorKind::Scalar).unwrap();
        assert!(matches!(
            reg.register("Mass", FactorKind::Scalar),
            Err(Error::DuplicateFactor(_))
        ));
    }

    #[test]
    fn builtin_ids_match_constants() {
        let reg = FactorRegistry::builtin();
        assert_eq!(reg.lookup("Position").unwrap().id, POSITION);
        assert_eq!(reg.lookup("ControlledFlag").unwrap().id, CONTROLLED_FLAG);
        assert_eq!(reg.lookup("HeatK").unwrap().id, HEAT_K);
    }

    #[test]
    fn make_object_entity() {
        let reg = FactorRegistry::builtin();
        let types = EntityTypeRegistry::builtin();
        let object = types.get("Object").unwrap();
        let e = Entity::new(&reg, EntityId(0), object, object_values()).unwrap();
        assert_eq!(e.scalar(MASS), Some(0.4));
        assert_eq!(e.vec2(VELOCITY), Some([0.1, 1.0]));
    }

    #[test]
    fn missing_extra_and_mismatched_factors() {
        let reg = FactorRegistry::builtin();
        let types = EntityTypeRegistry::builtin();
        let object = types.get("Object").unwrap();
        let no_mass: Vec<_> = object_values().into_iter().filter(|(f, _)| *f != MASS).collect();
        assert!(matches!(
            Entity::new(&reg, EntityId(0), object, no_mass),
            Err(Error::MissingFactor { .. })
        ));

        let tile = types.get("Tile").unwrap();
        let tile_vals = vec![
            (POSITION, FactorValue::Vec2([0.5, 0.5])),
            (SHAPE, FactorValue::Shape(Shape::Square)),
            (RADIUS, FactorValue::Scalar(0.1)),
            (VELOCITY, FactorValue::Vec2([0.0, 0.0])),
        ];
        assert!(matches!(
            Entity::new(&reg, EntityId(0), tile, tile_vals),
            Err(Error::ExtraFactor { .. })
        ));

        let mut bad = object_values();
        bad[1] = (MASS, FactorValue::Vec2([1.0, 1.0]));
        assert!(matches!(
            Entity::new(&reg, EntityId(0), object, bad),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn child_type_is_superset_of_parent() {
        let types = EntityTypeRegistry::builtin();
        let thing = types.get("Thing").unwrap();
        for name in ["Object", "Tile", "Sand", "Magma", "Magnet", "Goal", "Hole"] {
            let t = types.get(name).unwrap();
            assert!(t.has_all(thing.basis()), "{name}");
            assert!(t.is_a(thing));
            assert!(t.is_named("Thing"));
        }
    }

    fn small_state() -> (SimState, FactorRegistry) {
        let mut reg = FactorRegistry::builtin();
        let pm = EntityType::root("PM", vec![POSITION, MASS, VELOCITY]).unwrap();
        let world = EntityType::root("W", vec![]).unwrap();
        let world = Entity::new(&reg, EntityId(u64::MAX), &world, []).unwrap();
        let mut state = SimState::new(world, Arena::default(), DEFAULT_DT);
        let e3 = Entity::new(
            &reg,
            EntityId(3),
            &pm,
            [
                (VELOCITY, FactorValue::Vec2([5.0, 6.0])),
                (POSITION, FactorValue::Vec2([1.0, 2.0])),
                (MASS, FactorValue::Scalar(4.0)),
            ],
        )
        .unwrap();
        let e7 = Entity::new(
            &reg,
            EntityId(7),
            &pm,
            [
                (POSITION, FactorValue::Vec2([7.0, 8.0])),
                (MASS, FactorValue::Scalar(9.0)),
                (VELOCITY, FactorValue::Vec2([10.0, 11.0])),
            ],
        )
        .unwrap();
        state.push(e3).unwrap();
        state.push(e7).unwrap();
        reg.register("Unused", FactorKind::Scalar).unwrap();
        (state, reg)
    }

    #[test]
    fn flatten_orders_entities_then_basis() {
        let (state, reg) = small_state();
        let (v, layout) = flatten_state(&state, &reg);
        assert_eq!(
            v,
            vec![1.0, 2.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0]
        );
        assert_eq!(layout.slots[0].entity, EntityId(3));
        assert_eq!(layout.slots[5].entity, EntityId(7));
        assert_eq!(layout.slots[2].factor, "Mass");
        assert_eq!(layout.slots[4].component, 1);
        assert_eq!(flatten_state(&state, &reg), (v, layout));
    }

    #[test]
    fn push_rejects_non_increasing_ids() {
        let (mut state, _) = small_state();
        let e = state.entities[0].clone();
        assert!(state.push(e).is_err());
    }

    #[test]
    fn layout_json_roundtrip() {
        let (state, reg) = small_state();
        let layout = StateLayout::of(&state, &reg);
        let back = StateLayout::from_json(&layout.to_json()).unwrap();
        assert_eq!(back.structure(), layout.structure());
        assert_eq!(back.slots[6].entity, EntityId(7));
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        let (mut state, reg) = small_state();
        let (v, layout) = flatten_state(&state, &reg);
        assert!(unflatten(&mut state, &layout, &v[..3]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn flatten_unflatten_identity(vals in proptest::collection::vec(-1e6f64..1e6, 10)) {
                let (mut state, reg) = small_state();
                let layout = StateLayout::of(&state, &reg);
                unflatten(&mut state, &layout, &vals).unwrap();
                let (v, l2) = flatten_state(&state, &reg);
                prop_assert_eq!(&v, &vals);
                prop_assert_eq!(l2, layout);
            }

            #[test]
            fn assignment_order_is_irrelevant(seed in any::<u64>()) {
                let reg = FactorRegistry::builtin();
                let types = EntityTypeRegistry::builtin();
                let object = types.get("Object").unwrap();
                let mut vals = object_values();
                // Fisher-Yates driven by the proptest seed.
                let mut s = seed;
                for i in (1..vals.len()).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let j = (s >> 33) as usize % (i + 1);
                    vals.swap(i, j);
                }
                let a = Entity::new(&reg, EntityId(0), object, object_values()).unwrap();
                let b = Entity::new(&reg, EntityId(0), object, vals).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
