//! Tasks as partially observed environments: observation filtering, actions,
//! rewards and the episode lifecycle.

mod render;
mod reward;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use render::{encode_png, render, silhouette, FactorSupports, Image};
pub use reward::{compute_reward, RewardKind, RewardOutcome, STEP_COST};

use crate::error::{Error, Result};
use crate::factors::builtin::*;
use crate::factors::{state_vector, FactorId, FactorRegistry, FactorValue, LayoutSlot, SimState, StateLayout};
use crate::init::{sample_task, TaskInstance, TaskTemplate};
use crate::physics::builtin_ruleset;
use crate::rules::Simulator;

pub const DEFAULT_RESOLUTION: u32 = 64;
pub const MIN_RESOLUTION: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObsMode {
    FullState,
    PartialState,
    Pixels,
    Multimodal,
}

impl ObsMode {
    pub fn parse(s: &str) -> Option<ObsMode> {
        match s {
            "full-state" => Some(ObsMode::FullState),
            "partial-state" => Some(ObsMode::PartialState),
            "pixels" => Some(ObsMode::Pixels),
            "multimodal" => Some(ObsMode::Multimodal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObsMode::FullState => "full-state",
            ObsMode::PartialState => "partial-state",
            ObsMode::Pixels => "pixels",
            ObsMode::Multimodal => "multimodal",
        }
    }

    pub fn has_state(self) -> bool {
        !matches!(self, ObsMode::Pixels)
    }

    pub fn has_pixels(self) -> bool {
        matches!(self, ObsMode::Pixels | ObsMode::Multimodal)
    }
}

/// What the agent sees.
///
/// `observable` filters factor types in every mode. `entity_types` restricts
/// which entities appear in partial-state mode; full-state mode shows every
/// entity.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSpec {
    pub mode: ObsMode,
    pub observable: Vec<FactorId>,
    pub entity_types: Option<Vec<String>>,
    pub renderer_seed: u64,
    pub resolution: u32,
    /// Drop the controlled entity's position once the episode has started.
    pub hide_controlled_after_first_step: bool,
}

impl ObservationSpec {
    /// Full-state observation of every registered factor.
    pub fn all(registry: &FactorRegistry) -> ObservationSpec {
        ObservationSpec {
            mode: ObsMode::FullState,
            observable: registry.iter().map(|f| f.id).collect(),
            entity_types: None,
            renderer_seed: 0,
            resolution: DEFAULT_RESOLUTION,
            hide_controlled_after_first_step: false,
        }
    }

    pub fn validate(&self, registry: &FactorRegistry) -> Result<()> {
        if let Some(f) = self.observable.iter().find(|f| registry.get(**f).is_none()) {
            return Err(Error::InvalidObservation(format!("factor #{} is not registered", f.0)));
        }
        if self.resolution < MIN_RESOLUTION {
            return Err(Error::InvalidObservation(format!(
                "resolution {} is below the minimum of {MIN_RESOLUTION}",
                self.resolution
            )));
        }
        if self.mode == ObsMode::PartialState && self.entity_types.is_none() {
            return Err(Error::InvalidObservation(
                "partial-state mode needs an \"entities\" list".into(),
            ));
        }
        Ok(())
    }

    pub fn is_observable(&self, f: FactorId) -> bool {
        self.observable.contains(&f)
    }

    fn entity_visible(&self, e: &crate::factors::Entity) -> bool {
        match (&self.entity_types, self.mode) {
            (Some(types), ObsMode::PartialState) => types.iter().any(|t| e.etype().is_named(t)),
            _ => true,
        }
    }

    /// Is factor `f` of entity `e` visible in `state`?
    pub fn slot_visible(&self, state: &SimState, e: &crate::factors::Entity, f: FactorId) -> bool {
        if !self.is_observable(f) || !self.entity_visible(e) {
            return false;
        }
        !(f == POSITION
            && self.hide_controlled_after_first_step
            && state.time >= 1
            && e.flag(CONTROLLED_FLAG))
    }
}

/// Flattened state restricted to the visible slots, in layout order.
pub fn observe_state(state: &SimState, spec: &ObservationSpec) -> Vec<f64> {
    let mut out = Vec::new();
    for e in &state.entities {
        for (&f, v) in e.etype().basis().iter().zip(e.values()) {
            if spec.slot_visible(state, e, f) {
                v.write_components(&mut out);
            }
        }
    }
    out
}

/// Layout of [`observe_state`]'s output.
pub fn observation_layout(state: &SimState, spec: &ObservationSpec, registry: &FactorRegistry) -> StateLayout {
    let full = StateLayout::of(state, registry);
    let mut slots: Vec<LayoutSlot> = Vec::new();
    for s in full.slots {
        let e = state.entity(s.entity).expect("layout of this state");
        if spec.slot_visible(state, e, s.factor_id.expect("fresh layout")) {
            slots.push(s);
        }
    }
    StateLayout { slots }
}

/// Bounded force applied as an instantaneous impulse to the controlled entity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub max_force: f64,
}

impl Default for ActionSpec {
    fn default() -> Self {
        ActionSpec { max_force: 1.0 }
    }
}

impl ActionSpec {
    /// Scale `a` down onto the disc of radius `max_force`.
    pub fn clip(&self, a: [f64; 2]) -> [f64; 2] {
        let n = (a[0] * a[0] + a[1] * a[1]).sqrt();
        if n > self.max_force {
            [a[0] * self.max_force / n, a[1] * self.max_force / n]
        } else {
            a
        }
    }
}

/// Add the impulse `force / mass` to the controlled entity's velocity.
pub fn apply_action(state: &mut SimState, force: [f64; 2]) -> Result<()> {
    let Some(ctrl) = state.controlled().map(|e| e.id) else {
        return Err(Error::InvalidState("no controlled entity".into()));
    };
    let e = state.entity_mut(ctrl).expect("id just found");
    let m = e
        .scalar(MASS)
        .ok_or_else(|| Error::InvalidState("controlled entity has no mass".into()))?;
    let v = e
        .vec2(VELOCITY)
        .ok_or_else(|| Error::InvalidState("controlled entity has no velocity".into()))?;
    e.set(VELOCITY, FactorValue::Vec2([v[0] + force[0] / m, v[1] + force[1] / m]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: Option<Vec<f64>>,
    pub pixels: Option<Image>,
}

impl Observation {
    /// SHA-256 over the state values (little-endian) followed by the pixels.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        if let Some(s) = &self.state {
            for x in s {
                h.update(x.to_le_bytes());
            }
        }
        if let Some(p) = &self.pixels {
            h.update(p.width.to_le_bytes());
            h.update(p.height.to_le_bytes());
            h.update(&p.rgb);
        }
        hex::encode(h.finalize())
    }
}

/// SHA-256 of the step counter and flattened state.
pub fn state_digest(state: &SimState) -> String {
    let mut h = Sha256::new();
    h.update(state.time.to_le_bytes());
    for x in state_vector(state) {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Ground truth for diagnostics. Agents must not read it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub time: u64,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One line of a trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: u64,
    pub action: [f64; 2],
    pub reward: f64,
    pub done: bool,
    pub obs_digest: String,
    pub state_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<f64>>,
}

/// A template compiled for stepping: its rules and render supports are
/// built once and shared by every episode.
#[derive(Debug, Clone)]
pub struct Env {
    pub template: Arc<TaskTemplate>,
    sim: Simulator,
    supports: FactorSupports,
    state: Option<SimState>,
    steps: u32,
    done: bool,
    episode_return: f64,
}

impl Env {
    pub fn new(template: Arc<TaskTemplate>) -> Result<Env> {
        let ruleset = builtin_ruleset(&template.rules)?;
        let supports = FactorSupports::from_template(&template);
        Ok(Env {
            template,
            sim: Simulator::new(ruleset),
            supports,
            state: None,
            steps: 0,
            done: true,
            episode_return: 0.0,
        })
    }

    /// Sample a fresh instance with `seed` and start an episode on it.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let inst = sample_task(&self.template, seed)?;
        self.reset_to(&inst)
    }

    /// Start an episode from an already sampled instance.
    pub fn reset_to(&mut self, instance: &TaskInstance) -> Result<Observation> {
        let n = instance
            .state
            .entities
            .iter()
            .filter(|e| e.flag(CONTROLLED_FLAG))
            .count();
        if n != 1 {
            return Err(Error::InvalidState(format!(
                "a task needs exactly one controlled entity, found {n}"
            )));
        }
        self.state = Some(instance.state.clone());
        self.steps = 0;
        self.done = false;
        self.episode_return = 0.0;
        Ok(self.observe())
    }

    pub fn state(&self) -> Option<&SimState> {
        self.state.as_ref()
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    pub fn supports(&self) -> &FactorSupports {
        &self.supports
    }

    pub fn observe(&self) -> Observation {
        let state = self.state.as_ref().expect("reset before observing");
        let spec = &self.template.observation;
        Observation {
            state: spec.mode.has_state().then(|| observe_state(state, spec)),
            pixels: spec.mode.has_pixels().then(|| render(state, spec, &self.supports)),
        }
    }

    /// Apply the clipped action as an impulse, advance one transition and
    /// score it.
    pub fn step(&mut self, action: [f64; 2]) -> Result<StepResult> {
        if self.done || self.state.is_none() {
            return Err(Error::EpisodeDone);
        }
        if !(action[0].is_finite() && action[1].is_finite()) {
            return Err(Error::InvalidState("action must be finite".into()));
        }
        let action = self.template.actions.clip(action);
        let prev = self.state.as_ref().expect("checked").clone();
        let mut next = prev.clone();
        apply_action(&mut next, action)?;
        self.sim.step(&mut next)?;
        let outcome = compute_reward(self.template.reward, &prev, action, &next);
        self.steps += 1;
        self.done = outcome.terminal || self.steps >= self.template.max_steps;
        self.episode_return += outcome.reward;
        let info = StepInfo {
            time: next.time,
            state: state_vector(&next),
        };
        self.state = Some(next);
        Ok(StepResult {
            observation: self.observe(),
            reward: outcome.reward,
            done: self.done,
            info,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::flatten_state;
    use crate::init::builtin;

    fn env(text: &str) -> Env {
        Env::new(Arc::new(TaskTemplate::from_json(text).unwrap())).unwrap()
    }

    const LONE_BALL: &str = r#"{"schema": 1,
        "entities": [{"name": "ball", "type": "Object"}],
        "priors": {"ball.Mass": {"dist": "constant", "params": 2},
                   "ball.ControlledFlag": {"dist": "constant", "params": true}},
        "rules": ["friction", "motion", "collisions"],
        "actions": {"max_force": 5}}"#;

    #[test]
    fn zero_action_leaves_state_alone() {
        let mut env = env(LONE_BALL);
        let o0 = env.reset(1).unwrap();
        let r = env.step([0.0, 0.0]).unwrap();
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.observation.state, o0.state);
        assert_eq!(r.info.time, 1);
    }

    #[test]
    fn impulse_is_force_over_mass() {
        let mut state = env(LONE_BALL);
        state.reset(1).unwrap();
        let mut s = state.state().unwrap().clone();
        apply_action(&mut s, [1.0, 0.0]).unwrap();
        assert_eq!(s.entities[0].vec2(VELOCITY), Some([0.5, 0.0]));
    }

    #[test]
    fn actions_are_clipped() {
        let spec = ActionSpec { max_force: 1.0 };
        let c = spec.clip([3.0, 4.0]);
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
        assert_eq!(spec.clip([0.1, 0.2]), [0.1, 0.2]);
    }

    #[test]
    fn reset_is_deterministic() {
        let mut e = Env::new(Arc::new(builtin::puttputt())).unwrap();
        let a = e.reset(9).unwrap();
        let b = e.reset(9).unwrap();
        assert_eq!(a, b);
        let full = flatten_state(e.state().unwrap(), &e.template.registry).0;
        assert_eq!(a.state.unwrap(), full);
    }

    #[test]
    fn step_after_done_fails() {
        let text = LONE_BALL.replace("\"schema\": 1,", "\"schema\": 1, \"max_steps\": 2,");
        let mut e = env(&text);
        e.reset(0).unwrap();
        assert!(!e.step([0.0, 0.0]).unwrap().done);
        assert!(e.step([0.0, 0.0]).unwrap().done);
        assert!(matches!(e.step([0.0, 0.0]), Err(Error::EpisodeDone)));
    }

    #[test]
    fn excluded_factor_has_no_slots() {
        let reg = FactorRegistry::builtin();
        let mut e = Env::new(Arc::new(builtin::puttputt())).unwrap();
        e.reset(3).unwrap();
        let s = e.state().unwrap();
        let mut spec = ObservationSpec::all(&reg);
        spec.observable.retain(|f| *f != MASS);
        let layout = observation_layout(s, &spec, &reg);
        assert!(layout.slots.iter().all(|sl| sl.factor != "Mass"));
        assert_eq!(layout.len(), observe_state(s, &spec).len());
        let full = ObservationSpec::all(&reg);
        assert_eq!(observe_state(s, &full), state_vector(s));
    }

    #[test]
    fn invisiball_hides_ball_after_first_step() {
        let mut e = Env::new(Arc::new(builtin::invisiball())).unwrap();
        let o0 = e.reset(5).unwrap().state.unwrap();
        let s0 = e.state().unwrap().clone();
        let tmpl = Arc::clone(&e.template);
        let reg = &tmpl.registry;
        let l0 = observation_layout(&s0, &tmpl.observation, reg);
        let ball = s0.controlled().unwrap().id;
        assert!(l0.slots.iter().any(|s| s.entity == ball && s.factor == "Position"));
        let o1 = e.step([0.0, 0.0]).unwrap().observation.state.unwrap();
        let s1 = e.state().unwrap();
        let l1 = observation_layout(s1, &tmpl.observation, reg);
        assert!(!l1.slots.iter().any(|s| s.entity == ball && s.factor == "Position"));
        assert!(l1.slots.iter().any(|s| s.entity != ball && s.factor == "Position"));
        assert_eq!(o1.len(), o0.len() - 2);
    }

    #[test]
    fn partial_mode_filters_entities() {
        let reg = FactorRegistry::builtin();
        let mut e = Env::new(Arc::new(builtin::puttputt())).unwrap();
        e.reset(3).unwrap();
        let s = e.state().unwrap();
        let mut spec = ObservationSpec::all(&reg);
        spec.mode = ObsMode::PartialState;
        spec.entity_types = Some(vec!["Object".into()]);
        let layout = observation_layout(s, &spec, &reg);
        assert!(layout.slots.iter().all(|sl| sl.entity_type == "Object"));
        assert!(!layout.is_empty());
    }
}
