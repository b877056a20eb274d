//! Sampling task instances from templates.
//!
//! Every random draw comes from its own ChaCha stream seeded by
//! [`stream_seed`]`(seed, slot, factor)`, so editing the prior of one slot
//! never changes the values drawn for another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::template::TaskTemplate;
use crate::error::{Error, Result};
use crate::factors::builtin::*;
use crate::factors::{
    flatten_state, Entity, EntityId, FactorValue, SimState, StateLayout,
};
use crate::physics::overlaps;

/// Attempts per entity before placement gives up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Stream index used for entity-count draws.
const COUNT_STREAM: u64 = u64::MAX;
/// Domain tag separating per-instance seeds from per-slot streams.
const INSTANCE_TAG: u64 = 0x5345_4741_5253_4554;

/// The splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream for `(seed, a, b)`:
/// `splitmix64(seed ^ splitmix64(a ^ splitmix64(b)))`.
pub fn stream_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(seed ^ splitmix64(a ^ splitmix64(b)))
}

/// Seed of the `index`-th instance in a task set sampled with `set_seed`.
pub fn instance_seed(set_seed: u64, index: u64) -> u64 {
    stream_seed(set_seed, index, INSTANCE_TAG)
}

/// A concrete task: the initial state and its flattening.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub template: String,
    pub seed: u64,
    pub state: SimState,
    /// Template slot index of each entity, parallel to `state.entities`.
    pub slots: Vec<usize>,
    pub vector: Vec<f64>,
    pub layout: StateLayout,
}

/// Serializable summary of an instance; enough to re-create it from the
/// template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: usize,
    pub seed: u64,
    pub entities: Vec<EntityRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: u64,
    pub slot: String,
    #[serde(rename = "type")]
    pub etype: String,
    pub factors: serde_json::Map<String, serde_json::Value>,
}

impl TaskInstance {
    pub fn record(&self, index: usize, template: &TaskTemplate) -> InstanceRecord {
        let entities = self
            .state
            .entities
            .iter()
            .zip(&self.slots)
            .map(|(e, &s)| {
                let mut factors = serde_json::Map::new();
                for (&f, v) in e.etype().basis().iter().zip(e.values()) {
                    let json = match v {
                        FactorValue::Scalar(x) => serde_json::json!(x),
                        FactorValue::Vec2(p) => serde_json::json!(p),
                        FactorValue::Shape(s) => serde_json::json!(s.name()),
                        FactorValue::Bool(b) => serde_json::json!(b),
                    };
                    factors.insert(template.registry.name(f).to_string(), json);
                }
                EntityRecord {
                    id: e.id.0,
                    slot: template.slots[s].name.clone(),
                    etype: e.etype().name().to_string(),
                    factors,
                }
            })
            .collect();
        InstanceRecord {
            index,
            seed: self.seed,
            entities,
        }
    }
}

fn out_of_bounds(template: &TaskTemplate, e: &Entity) -> bool {
    let Some(p) = e.vec2(POSITION) else { return false };
    let a = &template.arena;
    if e.is_object() {
        let r = e.scalar(RADIUS).unwrap_or(0.0);
        (0..2).any(|k| p[k] - r < a.min[k] || p[k] + r > a.max[k])
    } else {
        !a.contains(p)
    }
}

fn same_category(a: &Entity, b: &Entity) -> bool {
    (a.is_object() && b.is_object()) || (a.is_tile() && b.is_tile())
}

fn placement_ok(template: &TaskTemplate, placed: &[Entity], e: &Entity) -> bool {
    if !e.is_thing() {
        return true;
    }
    !out_of_bounds(template, e)
        && !placed
            .iter()
            .any(|o| o.is_thing() && same_category(o, e) && overlaps(o, e))
}

fn draw_value(
    template: &TaskTemplate,
    slot: usize,
    factor: FactorId,
    rng: &mut ChaCha8Rng,
) -> FactorValue {
    let prior = template.slots[slot]
        .prior(factor)
        .expect("every basis factor has a prior");
    let comps: Vec<f64> = prior.components.iter().map(|d| d.sample(rng)).collect();
    let kind = template.registry.kind(factor).expect("registered");
    FactorValue::from_components(kind, &comps).expect("prior support matches factor kind")
}

use crate::factors::FactorId;

/// Sample one instance. Entity counts are drawn first for every slot; then
/// each entity's factors are drawn in basis order, each factor from the
/// stream of its (slot, basis index). Things that leave the arena or overlap
/// an already placed thing of the same category (objects with objects, tiles
/// with tiles) get a fresh position, up to [`MAX_PLACEMENT_ATTEMPTS`] times.
pub fn sample_task(template: &TaskTemplate, seed: u64) -> Result<TaskInstance> {
    let counts: Vec<usize> = template
        .slots
        .iter()
        .enumerate()
        .map(|(si, slot)| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, si as u64, COUNT_STREAM));
            slot.count.sample(&mut rng) as usize
        })
        .collect();

    let world = template.physics.world_entity(&template.registry, &template.types);
    let mut state = SimState::new(world, template.arena, template.dt);
    let mut slots = Vec::new();
    let mut next_id = 0u64;

    for (si, slot) in template.slots.iter().enumerate() {
        let basis = slot.etype.basis();
        let mut rngs: Vec<ChaCha8Rng> = (0..basis.len())
            .map(|fi| ChaCha8Rng::seed_from_u64(stream_seed(seed, si as u64, fi as u64)))
            .collect();
        let pos_index = basis.iter().position(|&f| f == POSITION);
        for _ in 0..counts[si] {
            let assignment: Vec<(FactorId, FactorValue)> = basis
                .iter()
                .zip(rngs.iter_mut())
                .map(|(&f, rng)| (f, draw_value(template, si, f, rng)))
                .collect();
            let mut e = Entity::new(&template.registry, EntityId(next_id), &slot.etype, assignment)?;
            let mut attempts = 1;
            while !placement_ok(template, &state.entities, &e) {
                let Some(pi) = pos_index else { break };
                if attempts >= MAX_PLACEMENT_ATTEMPTS {
                    return Err(Error::Placement {
                        slot: slot.name.clone(),
                        attempts,
                    });
                }
                let v = draw_value(template, si, POSITION, &mut rngs[pi]);
                e.set(POSITION, v)?;
                attempts += 1;
            }
            if pos_index.is_none() && !placement_ok(template, &state.entities, &e) {
                return Err(Error::Placement {
                    slot: slot.name.clone(),
                    attempts,
                });
            }
            state.push(e)?;
            slots.push(si);
            next_id += 1;
        }
    }

    let (vector, layout) = flatten_state(&state, &template.registry);
    Ok(TaskInstance {
        template: template.name.clone(),
        seed,
        state,
        slots,
        vector,
        layout,
    })
}
