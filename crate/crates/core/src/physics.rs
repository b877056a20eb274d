//! Built-in physics: friction, Lorentz force, charge interaction, heat,
//! motion integration and circle collisions.
//!
//! The force rules aggregate into the transient `Acceleration` factor in
//! phase 0; [`motion_rule`] integrates it in phase 1; [`Collisions`] runs
//! after both.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::builtin::*;
use crate::factors::{
    Entity, EntityId, EntityTypeRegistry, FactorRegistry, FactorValue, Shape, SimState,
};
use crate::rules::{PostStep, Rule, RuleOutput, RuleSignature, Ruleset};

/// Friction is ignored below this speed.
pub const VELOCITY_EPSILON: f64 = 1e-6;
/// Heat never takes an object's mass below this value.
pub const MASS_MIN: f64 = 1e-3;
/// Collision handling is discrete; speeds are capped so a body cannot tunnel
/// through another within one step at the default timestep.
pub const SPEED_CAP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConstants {
    pub gravity: f64,
    pub lorentz_k: f64,
    pub coulomb_k: f64,
    pub heat_k: f64,
    pub restitution_default: f64,
}

impl Default for PhysicsConstants {
    fn default() -> Self {
        PhysicsConstants {
            gravity: 10.0,
            lorentz_k: 1.0,
            coulomb_k: 0.1,
            heat_k: 0.5,
            restitution_default: 0.9,
        }
    }
}

impl PhysicsConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gravity", self.gravity),
            ("lorentz_k", self.lorentz_k),
            ("coulomb_k", self.coulomb_k),
            ("heat_k", self.heat_k),
            ("restitution_default", self.restitution_default),
        ];
        for (k, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Template {
                    key: format!("physics.{k}"),
                    reason: format!("must be finite and non-negative, got {v}"),
                });
            }
        }
        if self.restitution_default > 1.0 {
            return Err(Error::Template {
                key: "physics.restitution_default".into(),
                reason: "must lie in [0, 1]".into(),
            });
        }
        Ok(())
    }

    /// The global-constants entity read by the built-in rules.
    pub fn world_entity(&self, reg: &FactorRegistry, types: &EntityTypeRegistry) -> Entity {
        let ty = types
            .get("WorldConstants")
            .expect("built-in type registry has WorldConstants");
        Entity::new(
            reg,
            EntityId(u64::MAX),
            ty,
            [
                (GRAVITY, FactorValue::Scalar(self.gravity)),
                (LORENTZ_K, FactorValue::Scalar(self.lorentz_k)),
                (COULOMB_K, FactorValue::Scalar(self.coulomb_k)),
                (HEAT_K, FactorValue::Scalar(self.heat_k)),
            ],
        )
        .expect("world constants match their type")
    }
}

fn norm(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Friction acceleration on a moving body, or `None` when it is (nearly) at
/// rest. Componentwise `-sign(v) * mu * g * |v| / |v|_2 / m`.
pub fn friction_accel(mass: f64, velocity: [f64; 2], mu: f64, gravity: f64) -> Option<[f64; 2]> {
    let speed = norm(velocity);
    if speed < VELOCITY_EPSILON {
        return None;
    }
    let f_mag = mu * gravity;
    let da = [0, 1].map(|k| -sign(velocity[k]) * f_mag * (velocity[k].abs() / speed) / mass);
    Some(da)
}

/// Lorentz acceleration in the plane with an out-of-plane field:
/// `k * q * B / m * perp(v)` with `perp(x, y) = (-y, x)`.
pub fn lorentz_accel(mass: f64, charge: f64, velocity: [f64; 2], magnetism: f64, k: f64) -> [f64; 2] {
    let w = k * (charge * magnetism / mass);
    [w * -velocity[1], w * velocity[0]]
}

/// Coulomb acceleration on body 1 from body 2. Like charges repel. The
/// separation is clamped below at `r_min`. `None` for coincident positions.
pub fn charge_accel(
    mass1: f64,
    charge1: f64,
    pos1: [f64; 2],
    charge2: f64,
    pos2: [f64; 2],
    k: f64,
    r_min: f64,
) -> Option<[f64; 2]> {
    let r = [pos1[0] - pos2[0], pos1[1] - pos2[1]];
    let d = norm(r);
    if d == 0.0 {
        return None;
    }
    let d_eff = d.max(r_min);
    let mag = k * charge1 * charge2 / (mass1 * d_eff * d_eff);
    Some([mag * r[0] / d, mag * r[1] / d])
}

/// Mass rate of change on a heated tile: `-k * heat * m`, limited so one step
/// of size `dt` never goes below [`MASS_MIN`].
pub fn heat_mass_rate(mass: f64, heat: f64, k: f64, dt: f64) -> f64 {
    let rate = -k * heat * mass;
    rate.max((MASS_MIN - mass) / dt)
}

/// Semi-implicit Euler for one step: returns `(v_new, x_new)`. A step whose
/// acceleration would reverse the direction of travel stops the body instead.
pub fn integrate(position: [f64; 2], velocity: [f64; 2], accel: [f64; 2], dt: f64) -> ([f64; 2], [f64; 2]) {
    let v = integrate_velocity(velocity, accel, dt);
    let x = [position[0] + dt * v[0], position[1] + dt * v[1]];
    (v, x)
}

fn integrate_velocity(velocity: [f64; 2], accel: [f64; 2], dt: f64) -> [f64; 2] {
    let mut v = [velocity[0] + dt * accel[0], velocity[1] + dt * accel[1]];
    if v[0] * velocity[0] + v[1] * velocity[1] < 0.0 {
        v = [0.0, 0.0];
    }
    let s = norm(v);
    if s > SPEED_CAP {
        v = [v[0] * SPEED_CAP / s, v[1] * SPEED_CAP / s];
    }
    v
}

struct Footprint {
    pos: [f64; 2],
    radius: f64,
    shape: Shape,
}

fn footprint(e: &Entity) -> Option<Footprint> {
    Some(Footprint {
        pos: e.vec2(POSITION)?,
        radius: e.scalar(RADIUS)?,
        shape: e
            .get(SHAPE)
            .and_then(FactorValue::as_shape)
            .unwrap_or_default(),
    })
}

/// Do the footprints of two things overlap? Entities without a position are
/// not localized and overlap everything.
pub fn overlaps(a: &Entity, b: &Entity) -> bool {
    match (footprint(a), footprint(b)) {
        (Some(fa), Some(fb)) => footprints_overlap(&fa, &fb),
        _ => true,
    }
}

fn footprints_overlap(a: &Footprint, b: &Footprint) -> bool {
    let dx = b.pos[0] - a.pos[0];
    let dy = b.pos[1] - a.pos[1];
    match (a.shape, b.shape) {
        (Shape::Circle, Shape::Circle) => {
            let r = a.radius + b.radius;
            dx * dx + dy * dy < r * r
        }
        (Shape::Square, Shape::Square) => {
            let r = a.radius + b.radius;
            dx.abs() < r && dy.abs() < r
        }
        (Shape::Circle, Shape::Square) => circle_square(a.pos, a.radius, b.pos, b.radius),
        (Shape::Square, Shape::Circle) => circle_square(b.pos, b.radius, a.pos, a.radius),
    }
}

fn circle_square(c: [f64; 2], r: f64, s: [f64; 2], half: f64) -> bool {
    let qx = c[0].clamp(s[0] - half, s[0] + half) - c[0];
    let qy = c[1].clamp(s[1] - half, s[1] + half) - c[1];
    qx * qx + qy * qy < r * r
}

/// Is point `p` inside the footprint of `e`?
pub fn contains_point(e: &Entity, p: [f64; 2]) -> bool {
    let Some(f) = footprint(e) else { return false };
    let dx = p[0] - f.pos[0];
    let dy = p[1] - f.pos[1];
    match f.shape {
        Shape::Circle => dx * dx + dy * dy <= f.radius * f.radius,
        Shape::Square => dx.abs() <= f.radius && dy.abs() <= f.radius,
    }
}

fn sig(slots: Vec<Vec<crate::factors::FactorId>>, globals: Vec<crate::factors::FactorId>) -> RuleSignature {
    RuleSignature::new(slots, globals).expect("built-in signatures are non-empty")
}

pub fn friction_rule() -> Rule {
    Rule::new(
        "friction",
        sig(vec![vec![MASS, VELOCITY, ACCELERATION], vec![FRICTION]], vec![GRAVITY]),
        |ctx, out| {
            if !overlaps(ctx.entity(0), ctx.entity(1)) {
                return;
            }
            let mu = ctx.scalar(1, FRICTION);
            let g = ctx.global(GRAVITY);
            if let Some(da) = friction_accel(ctx.scalar(0, MASS), ctx.vec2(0, VELOCITY), mu, g) {
                out.push(RuleOutput::aggregate(0, ACCELERATION, FactorValue::Vec2(da)));
            }
        },
    )
}

pub fn lorentz_rule() -> Rule {
    Rule::new(
        "lorentz",
        sig(
            vec![vec![MASS, CHARGE, VELOCITY, ACCELERATION], vec![MAGNETISM]],
            vec![LORENTZ_K],
        ),
        |ctx, out| {
            if !overlaps(ctx.entity(0), ctx.entity(1)) {
                return;
            }
            let da = lorentz_accel(
                ctx.scalar(0, MASS),
                ctx.scalar(0, CHARGE),
                ctx.vec2(0, VELOCITY),
                ctx.scalar(1, MAGNETISM),
                ctx.global(LORENTZ_K),
            );
            out.push(RuleOutput::aggregate(0, ACCELERATION, FactorValue::Vec2(da)));
        },
    )
}

pub fn charge_rule() -> Rule {
    Rule::new(
        "charge",
        sig(
            vec![vec![MASS, CHARGE, POSITION, ACCELERATION], vec![CHARGE, POSITION]],
            vec![COULOMB_K],
        ),
        |ctx, out| {
            let a = ctx.entity(0);
            let b = ctx.entity(1);
            let r_min = a.scalar(RADIUS).unwrap_or(0.0) + b.scalar(RADIUS).unwrap_or(0.0);
            if let Some(da) = charge_accel(
                ctx.scalar(0, MASS),
                ctx.scalar(0, CHARGE),
                ctx.vec2(0, POSITION),
                ctx.scalar(1, CHARGE),
                ctx.vec2(1, POSITION),
                ctx.global(COULOMB_K),
                r_min,
            ) {
                out.push(RuleOutput::aggregate(0, ACCELERATION, FactorValue::Vec2(da)));
            }
        },
    )
}

pub fn heat_rule() -> Rule {
    Rule::new(
        "heat",
        sig(vec![vec![MASS, VELOCITY], vec![HEAT]], vec![HEAT_K]),
        |ctx, out| {
            let heat = ctx.scalar(1, HEAT);
            if heat == 0.0 || !overlaps(ctx.entity(0), ctx.entity(1)) {
                return;
            }
            let rate = heat_mass_rate(ctx.scalar(0, MASS), heat, ctx.global(HEAT_K), ctx.dt);
            out.push(RuleOutput::differential(0, MASS, FactorValue::Scalar(rate)));
        },
    )
}

/// Integrates acceleration into velocity and velocity into position.
pub fn motion_rule() -> Rule {
    Rule::new(
        "motion",
        sig(vec![vec![POSITION, VELOCITY, ACCELERATION]], vec![]),
        |ctx, out| {
            let v = ctx.vec2(0, VELOCITY);
            let a = ctx.vec2(0, ACCELERATION);
            let v_new = integrate_velocity(v, a, ctx.dt);
            // Plain semi-implicit step keeps the velocity update exact.
            let dv = if v_new == [v[0] + ctx.dt * a[0], v[1] + ctx.dt * a[1]] {
                a
            } else {
                [(v_new[0] - v[0]) / ctx.dt, (v_new[1] - v[1]) / ctx.dt]
            };
            out.push(RuleOutput::differential(0, VELOCITY, FactorValue::Vec2(dv)));
            out.push(RuleOutput::differential(0, POSITION, FactorValue::Vec2(v_new)));
        },
    )
    .in_phase(1)
}

/// Keeps every mass at or above [`MASS_MIN`].
#[derive(Debug, Clone, Copy, Default)]
pub struct MassFloor;

impl PostStep for MassFloor {
    fn name(&self) -> &str {
        "mass-floor"
    }

    fn apply(&self, state: &mut SimState) {
        for e in &mut state.entities {
            if let Some(FactorValue::Scalar(m)) = e.get_mut(MASS) {
                if *m < MASS_MIN {
                    *m = MASS_MIN;
                }
            }
        }
    }
}

/// Discrete collision handling for circular objects: object-object contacts
/// and arena walls. Objects whose centre lies inside a hole tile are captured:
/// they stop and no longer collide. Tiles never collide.
#[derive(Debug, Clone, Copy, Default)]
pub struct Collisions;

struct Body {
    idx: usize,
    pos: [f64; 2],
    vel: [f64; 2],
    radius: f64,
    inv_mass: f64,
    elasticity: f64,
}

impl PostStep for Collisions {
    fn name(&self) -> &str {
        "collisions"
    }

    fn apply(&self, state: &mut SimState) {
        resolve_collisions(state);
    }
}

/// Is this object's centre inside any hole tile of `state`?
pub fn in_hole(state: &SimState, e: &Entity) -> bool {
    let Some(p) = e.vec2(POSITION) else { return false };
    state
        .entities
        .iter()
        .any(|h| h.flag(HOLE_FLAG) && contains_point(h, p))
}

pub fn resolve_collisions(state: &mut SimState) {
    let mut bodies: Vec<Body> = Vec::new();
    let mut captured: Vec<usize> = Vec::new();
    for (idx, e) in state.entities.iter().enumerate() {
        if !e.is_object() {
            continue;
        }
        if in_hole(state, e) {
            captured.push(idx);
            continue;
        }
        let shape = e.get(SHAPE).and_then(FactorValue::as_shape).unwrap_or_default();
        if shape != Shape::Circle {
            continue;
        }
        let m = e.scalar(MASS).unwrap_or(1.0);
        bodies.push(Body {
            idx,
            pos: e.vec2(POSITION).unwrap_or_default(),
            vel: e.vec2(VELOCITY).unwrap_or_default(),
            radius: e.scalar(RADIUS).unwrap_or(0.0),
            inv_mass: if m > 0.0 { 1.0 / m } else { 0.0 },
            elasticity: e.scalar(ELASTICITY).unwrap_or(1.0),
        });
    }

    for i in 0..bodies.len() {
        for j in (i + 1)..bodies.len() {
            let (lo, hi) = bodies.split_at_mut(j);
            collide_pair(&mut lo[i], &mut hi[0]);
        }
    }

    let arena = state.arena;
    for b in &mut bodies {
        for k in 0..2 {
            let lo = arena.min[k] + b.radius;
            let hi = arena.max[k] - b.radius;
            if b.pos[k] < lo {
                b.pos[k] = lo;
                if b.vel[k] < 0.0 {
                    b.vel[k] = -b.vel[k] * b.elasticity;
                }
            } else if b.pos[k] > hi {
                b.pos[k] = hi;
                if b.vel[k] > 0.0 {
                    b.vel[k] = -b.vel[k] * b.elasticity;
                }
            }
            // Radius larger than the arena: keep the centre inside at least.
            b.pos[k] = b.pos[k].clamp(arena.min[k], arena.max[k]);
        }
    }

    for b in &bodies {
        let e = &mut state.entities[b.idx];
        *e.get_mut(POSITION).expect("object has position") = FactorValue::Vec2(b.pos);
        *e.get_mut(VELOCITY).expect("object has velocity") = FactorValue::Vec2(b.vel);
    }
    for idx in captured {
        if let Some(v) = state.entities[idx].get_mut(VELOCITY) {
            *v = FactorValue::Vec2([0.0, 0.0]);
        }
    }
}

fn collide_pair(a: &mut Body, b: &mut Body) {
    let d = [b.pos[0] - a.pos[0], b.pos[1] - a.pos[1]];
    let dist2 = d[0] * d[0] + d[1] * d[1];
    let r = a.radius + b.radius;
    if dist2 >= r * r {
        return;
    }
    let w = a.inv_mass + b.inv_mass;
    if w == 0.0 {
        return;
    }
    let dist = dist2.sqrt();
    let n = if dist > 0.0 {
        [d[0] / dist, d[1] / dist]
    } else {
        [1.0, 0.0]
    };
    let pen = r - dist;
    let ca = pen * a.inv_mass / w;
    let cb = pen * b.inv_mass / w;
    a.pos = [a.pos[0] - n[0] * ca, a.pos[1] - n[1] * ca];
    b.pos = [b.pos[0] + n[0] * cb, b.pos[1] + n[1] * cb];

    let vn = (b.vel[0] - a.vel[0]) * n[0] + (b.vel[1] - a.vel[1]) * n[1];
    if vn >= 0.0 {
        return;
    }
    let e = a.elasticity * b.elasticity;
    let j = -(1.0 + e) * vn / w;
    a.vel = [a.vel[0] - j * a.inv_mass * n[0], a.vel[1] - j * a.inv_mass * n[1]];
    b.vel = [b.vel[0] + j * b.inv_mass * n[0], b.vel[1] + j * b.inv_mass * n[1]];
}

pub const RULE_NAMES: &[&str] = &["friction", "lorentz", "charge", "heat", "motion", "collisions"];

/// Assemble a ruleset from built-in rule names. `Acceleration` is always
/// transient. Heat adds the mass floor pass; collisions always run last.
pub fn builtin_ruleset<S: AsRef<str>>(names: &[S]) -> Result<Ruleset> {
    let mut rs = Ruleset {
        transient: vec![ACCELERATION],
        ..Default::default()
    };
    let mut collisions = false;
    for n in names {
        match n.as_ref() {
            "friction" => rs.rules.push(friction_rule()),
            "lorentz" => rs.rules.push(lorentz_rule()),
            "charge" => rs.rules.push(charge_rule()),
            "heat" => {
                rs.rules.push(heat_rule());
                rs.post.push(Arc::new(MassFloor));
            }
            "motion" => rs.rules.push(motion_rule()),
            "collisions" => collisions = true,
            other => {
                return Err(Error::Template {
                    key: "rules".into(),
                    reason: format!("unknown rule {other:?}; known: {}", RULE_NAMES.join(", ")),
                })
            }
        }
    }
    if collisions {
        rs.post.push(Arc::new(Collisions));
    }
    Ok(rs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::{Arena, EntityTypeRegistry, FactorRegistry};
    use crate::rules::{apply_transition, Simulator};

    fn setup() -> (SimState, FactorRegistry, EntityTypeRegistry) {
        let reg = FactorRegistry::builtin();
        let types = EntityTypeRegistry::builtin();
        let consts = PhysicsConstants {
            gravity: 10.0,
            lorentz_k: 1.0,
            coulomb_k: 1.0,
            heat_k: 0.1,
            restitution_default: 1.0,
        };
        let world = consts.world_entity(&reg, &types);
        (SimState::new(world, Arena::default(), 0.01), reg, types)
    }

    fn ball(pos: [f64; 2], vel: [f64; 2], mass: f64) -> Vec<(crate::factors::FactorId, FactorValue)> {
        vec![
            (POSITION, FactorValue::Vec2(pos)),
            (SHAPE, FactorValue::Shape(Shape::Circle)),
            (RADIUS, FactorValue::Scalar(0.05)),
            (VELOCITY, FactorValue::Vec2(vel)),
            (ACCELERATION, FactorValue::Vec2([0.0, 0.0])),
            (MASS, FactorValue::Scalar(mass)),
            (CHARGE, FactorValue::Scalar(0.0)),
            (ELASTICITY, FactorValue::Scalar(1.0)),
            (CONTROLLED_FLAG, FactorValue::Bool(false)),
        ]
    }

    fn tile(pos: [f64; 2], half: f64, factor: crate::factors::FactorId, v: f64) -> Vec<(crate::factors::FactorId, FactorValue)> {
        vec![
            (POSITION, FactorValue::Vec2(pos)),
            (SHAPE, FactorValue::Shape(Shape::Square)),
            (RADIUS, FactorValue::Scalar(half)),
            (factor, FactorValue::Scalar(v)),
        ]
    }

    #[test]
    fn friction_examples() {
        assert_eq!(friction_accel(1.0, [1.0, 0.0], 0.1, 10.0), Some([-1.0, 0.0]));
        let da = friction_accel(2.0, [3.0, 4.0], 0.5, 10.0).unwrap();
        assert!((da[0] + 1.5).abs() < 1e-15 && (da[1] + 2.0).abs() < 1e-15);
        assert_eq!(friction_accel(1.0, [1e-7, 0.0], 0.5, 10.0), None);
    }

    #[test]
    fn lorentz_examples() {
        assert_eq!(lorentz_accel(1.0, 1.0, [1.0, 0.0], 2.0, 1.0), [0.0, 2.0]);
        assert_eq!(lorentz_accel(1.0, 0.0, [1.0, 0.0], 2.0, 1.0), [0.0, 0.0]);
    }

    #[test]
    fn lorentz_requires_overlap() {
        let (mut state, reg, types) = setup();
        let mut vals = ball([0.1, 0.1], [1.0, 0.0], 1.0);
        vals[6] = (CHARGE, FactorValue::Scalar(1.0));
        state.spawn(&reg, types.get("Object").unwrap(), vals).unwrap();
        state
            .spawn(&reg, types.get("Magnet").unwrap(), tile([0.8, 0.8], 0.1, MAGNETISM, 2.0))
            .unwrap();
        let rs = builtin_ruleset(&["lorentz"]).unwrap();
        let next = apply_transition(&state, &rs).unwrap();
        assert_eq!(next.entities[0].vec2(ACCELERATION), Some([0.0, 0.0]));

        state.entities[1].set(POSITION, FactorValue::Vec2([0.12, 0.1])).unwrap();
        let next = apply_transition(&state, &rs).unwrap();
        assert_eq!(next.entities[0].vec2(ACCELERATION), Some([0.0, 2.0]));
    }

    #[test]
    fn charge_examples() {
        let da = charge_accel(1.0, 1.0, [2.0, 0.0], 1.0, [0.0, 0.0], 1.0, 0.1).unwrap();
        assert_eq!(da, [0.25, 0.0]);
        let da = charge_accel(1.0, 1.0, [2.0, 0.0], -1.0, [0.0, 0.0], 1.0, 0.1).unwrap();
        assert!(da[0] < 0.0);
        assert_eq!(
            charge_accel(1.0, 1.0, [2.0, 0.0], 0.0, [0.0, 0.0], 1.0, 0.1).unwrap(),
            [0.0, 0.0]
        );
        // Clamped at the sum of radii.
        let near = charge_accel(1.0, 1.0, [0.01, 0.0], 1.0, [0.0, 0.0], 1.0, 0.1).unwrap();
        assert!((near[0] - 100.0).abs() < 1e-9);
        assert_eq!(charge_accel(1.0, 1.0, [0.0, 0.0], 1.0, [0.0, 0.0], 1.0, 0.1), None);
    }

    #[test]
    fn heat_examples() {
        let dt = 0.01;
        let dm = heat_mass_rate(1.0, 0.5, 0.1, dt) * dt;
        assert!((dm + 5e-4).abs() < 1e-15);
        assert_eq!(heat_mass_rate(1.0, 0.0, 0.1, dt), 0.0);
        assert_eq!(MASS_MIN + dt * heat_mass_rate(MASS_MIN, 0.5, 0.1, dt), MASS_MIN);
    }

    #[test]
    fn heat_rule_through_simulator() {
        let (mut state, reg, types) = setup();
        state
            .spawn(&reg, types.get("Object").unwrap(), ball([0.5, 0.5], [0.0, 0.0], 1.0))
            .unwrap();
        state
            .spawn(&reg, types.get("Magma").unwrap(), tile([0.5, 0.5], 0.2, HEAT, 0.5))
            .unwrap();
        let rs = builtin_ruleset(&["heat"]).unwrap();
        let next = apply_transition(&state, &rs).unwrap();
        let m = next.entities[0].scalar(MASS).unwrap();
        assert!((m - (1.0 - 5e-4)).abs() < 1e-15);

        // Run long enough to hit the floor.
        let mut sim = Simulator::new(rs);
        let mut s = state.clone();
        s.entities[0].set(MASS, FactorValue::Scalar(0.0011)).unwrap();
        for _ in 0..10_000 {
            sim.step(&mut s).unwrap();
        }
        assert_eq!(s.entities[0].scalar(MASS), Some(MASS_MIN));
    }

    #[test]
    fn motion_examples() {
        let (x, v) = {
            let (v, x) = integrate([0.0, 0.0], [1.0, 0.0], [0.0, 0.0], 0.01);
            (x, v)
        };
        assert_eq!(x, [0.01, 0.0]);
        assert_eq!(v, [1.0, 0.0]);
        let (v, x) = integrate([0.0, 0.0], [0.0, 0.0], [0.0, 10.0], 0.01);
        assert_eq!(v, [0.0, 0.1]);
        assert_eq!(x, [0.0, 0.01 * 0.1]);
    }

    #[test]
    fn motion_rule_through_transition() {
        let (mut state, reg, types) = setup();
        state.arena = Arena { min: [-100.0, -100.0], max: [100.0, 100.0] };
        state
            .spawn(&reg, types.get("Object").unwrap(), ball([0.0, 0.0], [1.0, 0.0], 1.0))
            .unwrap();
        let rs = crate::rules::Ruleset::new(vec![motion_rule()]);
        let next = apply_transition(&state, &rs).unwrap();
        assert_eq!(next.entities[0].vec2(POSITION), Some([0.01, 0.0]));

        // Without transient reset, a pre-set acceleration is integrated.
        state.entities[0].set(VELOCITY, FactorValue::Vec2([0.0, 0.0])).unwrap();
        state.entities[0].set(ACCELERATION, FactorValue::Vec2([0.0, 10.0])).unwrap();
        let next = apply_transition(&state, &rs).unwrap();
        assert_eq!(next.entities[0].vec2(VELOCITY), Some([0.0, 0.1]));
        assert_eq!(next.entities[0].vec2(POSITION), Some([0.0, 0.001]));
    }

    #[test]
    fn constant_velocity_is_linear() {
        let (mut state, reg, types) = setup();
        state.arena = Arena { min: [-100.0, -100.0], max: [100.0, 100.0] };
        state
            .spawn(&reg, types.get("Object").unwrap(), ball([0.0, 0.0], [0.5, -0.25], 1.0))
            .unwrap();
        let mut sim = Simulator::new(builtin_ruleset(&["motion"]).unwrap());
        let n = 100;
        for _ in 0..n {
            sim.step(&mut state).unwrap();
        }
        let p = state.entities[0].vec2(POSITION).unwrap();
        assert!((p[0] - n as f64 * 0.01 * 0.5).abs() < 1e-12);
        assert!((p[1] + n as f64 * 0.01 * 0.25).abs() < 1e-12);
    }

    fn two_balls(v1: [f64; 2], m1: f64, v2: [f64; 2], m2: f64) -> SimState {
        let (mut state, reg, types) = setup();
        let o = types.get("Object").unwrap();
        state.spawn(&reg, o, ball([0.46, 0.5], v1, m1)).unwrap();
        state.spawn(&reg, o, ball([0.54, 0.5], v2, m2)).unwrap();
        state
    }

    #[test]
    fn equal_mass_head_on_swaps() {
        let mut s = two_balls([1.0, 0.0], 1.0, [-1.0, 0.0], 1.0);
        resolve_collisions(&mut s);
        assert_eq!(s.entities[0].vec2(VELOCITY), Some([-1.0, 0.0]));
        assert_eq!(s.entities[1].vec2(VELOCITY), Some([1.0, 0.0]));
    }

    #[test]
    fn light_hits_heavy() {
        let mut s = two_balls([1.0, 0.0], 1.0, [0.0, 0.0], 3.0);
        resolve_collisions(&mut s);
        let v1 = s.entities[0].vec2(VELOCITY).unwrap();
        let v2 = s.entities[1].vec2(VELOCITY).unwrap();
        assert!((v1[0] + 0.5).abs() < 1e-12 && v1[1] == 0.0);
        assert!((v2[0] - 0.5).abs() < 1e-12 && v2[1] == 0.0);
    }

    #[test]
    fn wall_reflection() {
        let (mut state, reg, types) = setup();
        state
            .spawn(&reg, types.get("Object").unwrap(), ball([0.5, 0.01], [0.5, -0.3], 1.0))
            .unwrap();
        resolve_collisions(&mut state);
        assert_eq!(state.entities[0].vec2(VELOCITY), Some([0.5, 0.3]));
        assert_eq!(state.entities[0].vec2(POSITION), Some([0.5, 0.05]));
    }

    #[test]
    fn tiles_do_not_collide() {
        let (mut state, reg, types) = setup();
        state
            .spawn(&reg, types.get("Object").unwrap(), ball([0.5, 0.5], [1.0, 0.0], 1.0))
            .unwrap();
        state
            .spawn(&reg, types.get("Sand").unwrap(), tile([0.5, 0.5], 0.2, FRICTION, 0.4))
            .unwrap();
        let before = state.clone();
        resolve_collisions(&mut state);
        assert_eq!(state, before);
    }

    #[test]
    fn captured_ball_stops() {
        let (mut state, reg, types) = setup();
        state
            .spawn(&reg, types.get("Object").unwrap(), ball([0.5, 0.5], [1.0, 0.0], 1.0))
            .unwrap();
        let mut hole = tile([0.5, 0.5], 0.06, HOLE_FLAG, 0.0);
        hole[1] = (SHAPE, FactorValue::Shape(Shape::Circle));
        hole[3] = (HOLE_FLAG, FactorValue::Bool(true));
        state.spawn(&reg, types.get("Hole").unwrap(), hole).unwrap();
        resolve_collisions(&mut state);
        assert_eq!(state.entities[0].vec2(VELOCITY), Some([0.0, 0.0]));
    }

    #[test]
    fn friction_stops_ball_monotonically() {
        let (mut state, reg, types) = setup();
        state.arena = Arena { min: [-100.0, -100.0], max: [100.0, 100.0] };
        state
            .spawn(&reg, types.get("Object").unwrap(), ball([0.0, 0.0], [0.7, -0.4], 1.3))
            .unwrap();
        state
            .spawn(&reg, types.get("Sand").unwrap(), tile([0.0, 0.0], 50.0, FRICTION, 0.3))
            .unwrap();
        let mut sim = Simulator::new(builtin_ruleset(&["friction", "motion", "collisions"]).unwrap());
        let mut last = norm(state.entities[0].vec2(VELOCITY).unwrap());
        let mut stopped = false;
        for _ in 0..10_000 {
            sim.step(&mut state).unwrap();
            let s = norm(state.entities[0].vec2(VELOCITY).unwrap());
            assert!(s <= last);
            last = s;
            if s < VELOCITY_EPSILON {
                stopped = true;
                break;
            }
        }
        assert!(stopped);
    }

    #[test]
    fn lorentz_speed_drift_per_step_is_small() {
        let (mut state, reg, types) = setup();
        state.arena = Arena { min: [-100.0, -100.0], max: [100.0, 100.0] };
        let mut vals = ball([0.0, 0.0], [1.0, 0.0], 1.0);
        vals[6] = (CHARGE, FactorValue::Scalar(1.0));
        state.spawn(&reg, types.get("Object").unwrap(), vals).unwrap();
        state
            .spawn(&reg, types.get("Magnet").unwrap(), tile([0.0, 0.0], 50.0, MAGNETISM, 1.0))
            .unwrap();
        let mut sim = Simulator::new(builtin_ruleset(&["lorentz", "motion"]).unwrap());
        let mut last = 1.0;
        for _ in 0..1000 {
            sim.step(&mut state).unwrap();
            let s = norm(state.entities[0].vec2(VELOCITY).unwrap());
            assert!(((s - last) / last).abs() < 1e-4);
            last = s;
        }
    }

    #[test]
    fn charge_pair_accelerations_are_opposed() {
        let (mut state, reg, types) = setup();
        let o = types.get("Object").unwrap();
        let mut a = ball([0.3, 0.4], [0.0, 0.0], 1.0);
        a[6] = (CHARGE, FactorValue::Scalar(0.7));
        let mut b = ball([0.6, 0.2], [0.0, 0.0], 2.0);
        b[6] = (CHARGE, FactorValue::Scalar(1.2));
        state.spawn(&reg, o, a).unwrap();
        state.spawn(&reg, o, b).unwrap();
        let next = apply_transition(&state, &builtin_ruleset(&["charge"]).unwrap()).unwrap();
        let a1 = next.entities[0].vec2(ACCELERATION).unwrap();
        let a2 = next.entities[1].vec2(ACCELERATION).unwrap();
        let r = [0.3 - 0.6, 0.4 - 0.2];
        let cross = |u: [f64; 2], w: [f64; 2]| u[0] * w[1] - u[1] * w[0];
        assert!(cross(a1, r).abs() < 1e-12 && cross(a2, r).abs() < 1e-12);
        assert!(a1[0] * r[0] + a1[1] * r[1] > 0.0);
        assert!(a2[0] * r[0] + a2[1] * r[1] < 0.0);
    }

    #[test]
    fn unknown_rule_name_rejected() {
        assert!(builtin_ruleset(&["gravity-well"]).is_err());
    }
}
