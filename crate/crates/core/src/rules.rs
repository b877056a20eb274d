//! Rules, signature matching, conflict resolution and the transition step.
//!
//! A rule declares one factor set per participating entity. Any entity whose
//! basis contains a slot's set can bind to that slot, so a rule written for a
//! type also applies to every sub-type. Rule bodies read an immutable view of
//! the state and emit typed outputs; outputs aimed at the same
//! `(entity, factor)` are merged by [`resolve_conflicts`] with the precedence
//! `SetFactor > Aggregate > Differential`.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::factors::{Arena, Entity, EntityId, EntityType, FactorId, FactorKind, FactorValue, SimState};

/// How a rule output combines with the factor's current value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutputKind {
    /// Summed with other aggregates on the same factor; the prior value is dropped.
    Aggregate,
    /// Summed, scaled by `dt` and added to the prior value.
    Differential,
    /// Sets the factor outright and overrides every other kind.
    SetFactor,
}

/// One typed update emitted by a rule body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleOutput {
    /// Index of the signature slot whose bound entity is targeted.
    pub slot: usize,
    pub factor: FactorId,
    pub kind: OutputKind,
    pub value: FactorValue,
}

impl RuleOutput {
    pub fn aggregate(slot: usize, factor: FactorId, value: FactorValue) -> Self {
        RuleOutput { slot, factor, kind: OutputKind::Aggregate, value }
    }

    pub fn differential(slot: usize, factor: FactorId, value: FactorValue) -> Self {
        RuleOutput { slot, factor, kind: OutputKind::Differential, value }
    }

    pub fn set(slot: usize, factor: FactorId, value: FactorValue) -> Self {
        RuleOutput { slot, factor, kind: OutputKind::SetFactor, value }
    }
}

/// Factor sets a rule needs, one per bound entity, plus the global constants
/// it reads from the world entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSignature {
    slots: Vec<Vec<FactorId>>,
    globals: Vec<FactorId>,
}

impl RuleSignature {
    pub fn new(slots: Vec<Vec<FactorId>>, globals: Vec<FactorId>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::InvalidRule {
                rule: String::new(),
                reason: "signature has no slots".into(),
            });
        }
        if slots.iter().any(Vec::is_empty) {
            return Err(Error::InvalidRule {
                rule: String::new(),
                reason: "signature slot with no factors".into(),
            });
        }
        Ok(RuleSignature { slots, globals })
    }

    pub fn slots(&self) -> &[Vec<FactorId>] {
        &self.slots
    }

    pub fn globals(&self) -> &[FactorId] {
        &self.globals
    }

    /// Total number of required factor types across slots.
    pub fn specificity(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }

    pub fn accepts(&self, slot: usize, etype: &EntityType) -> bool {
        etype.has_all(&self.slots[slot])
    }
}

/// Read-only view handed to a rule body for one binding.
pub struct RuleContext<'a> {
    bound: &'a [&'a Entity],
    pub world: &'a Entity,
    pub dt: f64,
    pub arena: Arena,
}

impl<'a> RuleContext<'a> {
    pub fn new(bound: &'a [&'a Entity], world: &'a Entity, dt: f64, arena: Arena) -> Self {
        RuleContext { bound, world, dt, arena }
    }

    pub fn entity(&self, slot: usize) -> &'a Entity {
        self.bound[slot]
    }

    /// Scalar factor of a bound entity. Panics if absent; factors named in
    /// the slot's signature are always present.
    pub fn scalar(&self, slot: usize, factor: FactorId) -> f64 {
        self.bound[slot]
            .scalar(factor)
            .unwrap_or_else(|| panic!("slot {slot} lacks scalar factor {}", factor.0))
    }

    pub fn vec2(&self, slot: usize, factor: FactorId) -> [f64; 2] {
        self.bound[slot]
            .vec2(factor)
            .unwrap_or_else(|| panic!("slot {slot} lacks vec2 factor {}", factor.0))
    }

    pub fn global(&self, factor: FactorId) -> f64 {
        self.world.scalar(factor).unwrap_or(0.0)
    }
}

type RuleBody = dyn Fn(&RuleContext<'_>, &mut Vec<RuleOutput>) + Send + Sync;

/// A named, pure transition rule.
#[derive(Clone)]
pub struct Rule {
    name: String,
    signature: RuleSignature,
    body: Arc<RuleBody>,
    specificity: usize,
    phase: u8,
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Rule")
            .field("name", &self.name)
            .field("signature", &self.signature)
            .field("specificity", &self.specificity)
            .field("phase", &self.phase)
            .finish()
    }
}

impl Rule {
    pub fn new<F>(name: &str, signature: RuleSignature, body: F) -> Rule
    where
        F: Fn(&RuleContext<'_>, &mut Vec<RuleOutput>) + Send + Sync + 'static,
    {
        let specificity = signature.specificity();
        Rule {
            name: name.to_string(),
            signature,
            body: Arc::new(body),
            specificity,
            phase: 0,
        }
    }

    /// Run this rule in a later phase. Phases execute in ascending order, and
    /// each phase reads the state produced by the previous one.
    pub fn in_phase(mut self, phase: u8) -> Rule {
        self.phase = phase;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn signature(&self) -> &RuleSignature {
        &self.signature
    }

    pub fn specificity(&self) -> usize {
        self.specificity
    }

    pub fn phase(&self) -> u8 {
        self.phase
    }

    pub fn eval(&self, ctx: &RuleContext<'_>, out: &mut Vec<RuleOutput>) {
        (self.body)(ctx, out)
    }
}

/// Work that runs after all rule phases, such as collision handling.
pub trait PostStep: Send + Sync {
    fn name(&self) -> &str;
    fn apply(&self, state: &mut SimState);
}

/// Rules plus the transient factors that are zeroed at the start of each step
/// and the post-step passes that run last.
#[derive(Clone, Default)]
pub struct Ruleset {
    pub rules: Vec<Rule>,
    pub transient: Vec<FactorId>,
    pub post: Vec<Arc<dyn PostStep>>,
}

impl fmt::Debug for Ruleset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ruleset")
            .field("rules", &self.rules.iter().map(Rule::name).collect::<Vec<_>>())
            .field("transient", &self.transient)
            .field("post", &self.post.iter().map(|p| p.name()).collect::<Vec<_>>())
            .finish()
    }
}

impl Ruleset {
    pub fn new(rules: Vec<Rule>) -> Ruleset {
        Ruleset { rules, ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty() && self.transient.is_empty() && self.post.is_empty()
    }

    fn phases(&self) -> Vec<u8> {
        let mut p: Vec<u8> = self.rules.iter().map(Rule::phase).collect();
        p.sort_unstable();
        p.dedup();
        p
    }
}

/// A candidate value for one factor, tagged with its kind and the
/// specificity of the rule that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub kind: OutputKind,
    pub value: FactorValue,
    pub specificity: usize,
}

/// Why [`resolve_conflicts`] failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConflictError {
    /// Two or more SetFactor proposals of maximal specificity disagree.
    AmbiguousSet,
    /// An Aggregate or Differential value that cannot be added to the prior.
    NotAdditive,
}

impl fmt::Display for ConflictError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConflictError::AmbiguousSet => {
                f.write_str("equally specific SetFactor outputs disagree")
            }
            ConflictError::NotAdditive => f.write_str("non-additive value in Aggregate/Differential"),
        }
    }
}

fn value_cmp(a: &FactorValue, b: &FactorValue) -> Ordering {
    let mut ca = Vec::with_capacity(2);
    let mut cb = Vec::with_capacity(2);
    a.write_components(&mut ca);
    b.write_components(&mut cb);
    for (x, y) in ca.iter().zip(&cb) {
        match x.total_cmp(y) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    ca.len().cmp(&cb.len())
}

fn add_into(acc: &mut FactorValue, v: &FactorValue, scale: f64) -> bool {
    match (acc, v) {
        (FactorValue::Scalar(a), FactorValue::Scalar(b)) => {
            *a += scale * b;
            true
        }
        (FactorValue::Vec2(a), FactorValue::Vec2(b)) => {
            a[0] += scale * b[0];
            a[1] += scale * b[1];
            true
        }
        _ => false,
    }
}

/// Combine every proposal aimed at one factor into its next value.
///
/// SetFactor wins outright (the most specific one; equally specific ones must
/// agree). Otherwise aggregates are summed and the prior dropped. Otherwise
/// `prior + dt * sum(differentials)`. Sums are taken in a canonical order so
/// the result does not depend on the order of `proposals`.
pub fn resolve_conflicts(
    proposals: &[Proposal],
    prior: FactorValue,
    dt: f64,
) -> std::result::Result<FactorValue, ConflictError> {
    if proposals.is_empty() {
        return Ok(prior);
    }
    let max_set = proposals
        .iter()
        .filter(|p| p.kind == OutputKind::SetFactor)
        .map(|p| p.specificity)
        .max();
    if let Some(spec) = max_set {
        let mut winners = proposals
            .iter()
            .filter(|p| p.kind == OutputKind::SetFactor && p.specificity == spec);
        let first = winners.next().expect("at least one SetFactor").value;
        if winners.any(|p| p.value != first) {
            return Err(ConflictError::AmbiguousSet);
        }
        return Ok(first);
    }

    let kind = if proposals.iter().any(|p| p.kind == OutputKind::Aggregate) {
        OutputKind::Aggregate
    } else {
        OutputKind::Differential
    };
    let mut values: Vec<FactorValue> = proposals
        .iter()
        .filter(|p| p.kind == kind)
        .map(|p| p.value)
        .collect();
    values.sort_by(value_cmp);

    let mut sum = FactorValue::zero(prior.kind());
    if !matches!(prior.kind(), FactorKind::Scalar | FactorKind::Vec2) {
        return Err(ConflictError::NotAdditive);
    }
    for v in &values {
        if !add_into(&mut sum, v, 1.0) {
            return Err(ConflictError::NotAdditive);
        }
    }
    match kind {
        OutputKind::Aggregate => Ok(sum),
        _ => {
            let mut next = prior;
            add_into(&mut next, &sum, dt);
            Ok(next)
        }
    }
}

/// Indices (into `entities`) of every ordered binding for `sig`, in
/// lexicographic order of entity position. Bound entities are distinct.
fn bindings_for(sig: &RuleSignature, entities: &[Entity]) -> Vec<Vec<usize>> {
    let candidates: Vec<Vec<usize>> = sig
        .slots
        .iter()
        .map(|slot| {
            entities
                .iter()
                .enumerate()
                .filter(|(_, e)| e.etype().has_all(slot))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(candidates.len());
    fn walk(cands: &[Vec<usize>], current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let depth = current.len();
        if depth == cands.len() {
            out.push(current.clone());
            return;
        }
        for &i in &cands[depth] {
            if current.contains(&i) {
                continue;
            }
            current.push(i);
            walk(cands, current, out);
            current.pop();
        }
    }
    walk(&candidates, &mut current, &mut out);
    out
}

fn globals_present(sig: &RuleSignature, world: &Entity) -> bool {
    sig.globals.iter().all(|&g| world.get(g).is_some())
}

/// All ordered bindings of `rule` against `state`, as entity ids.
pub fn match_entities(rule: &Rule, state: &SimState) -> Vec<Vec<EntityId>> {
    if !globals_present(&rule.signature, &state.world) {
        return Vec::new();
    }
    bindings_for(&rule.signature, &state.entities)
        .into_iter()
        .map(|b| b.into_iter().map(|i| state.entities[i].id).collect())
        .collect()
}

/// Cached bindings per rule, valid while the entity list keeps the same ids
/// and types.
#[derive(Debug, Clone, Default)]
struct MatchCache {
    key: Vec<(EntityId, usize)>,
    bindings: Vec<Vec<Vec<usize>>>,
}

fn structure_key(state: &SimState) -> Vec<(EntityId, usize)> {
    state
        .entities
        .iter()
        .map(|e| (e.id, Arc::as_ptr(e.etype()) as usize))
        .collect()
}

/// Steps a state with a fixed ruleset, reusing binding enumeration between
/// steps while the entity structure is unchanged.
#[derive(Debug, Clone)]
pub struct Simulator {
    ruleset: Ruleset,
    phases: Vec<u8>,
    cache: MatchCache,
    proposals: Vec<(usize, FactorId, Proposal)>,
    outputs: Vec<RuleOutput>,
}

impl Simulator {
    pub fn new(ruleset: Ruleset) -> Simulator {
        let phases = ruleset.phases();
        Simulator {
            ruleset,
            phases,
            cache: MatchCache::default(),
            proposals: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn ruleset(&self) -> &Ruleset {
        &self.ruleset
    }

    fn refresh_cache(&mut self, state: &SimState) {
        let key = structure_key(state);
        if key == self.cache.key && self.cache.bindings.len() == self.ruleset.rules.len() {
            return;
        }
        self.cache.bindings = self
            .ruleset
            .rules
            .iter()
            .map(|r| {
                if globals_present(&r.signature, &state.world) {
                    bindings_for(&r.signature, &state.entities)
                } else {
                    Vec::new()
                }
            })
            .collect();
        self.cache.key = key;
    }

    /// Advance `state` by one step in place. On error the state is left
    /// unmodified.
    pub fn step(&mut self, state: &mut SimState) -> Result<()> {
        let mut next = state.clone();
        self.step_inner(&mut next)?;
        *state = next;
        Ok(())
    }

    fn step_inner(&mut self, next: &mut SimState) -> Result<()> {
        self.refresh_cache(next);
        for e in &mut next.entities {
            for &f in &self.ruleset.transient {
                if let Some(v) = e.get_mut(f) {
                    *v = FactorValue::zero(v.kind());
                }
            }
        }

        for phase in self.phases.clone() {
            self.proposals.clear();
            {
                let snapshot: &SimState = next;
                let mut bound: Vec<&Entity> = Vec::with_capacity(4);
                for (ri, rule) in self.ruleset.rules.iter().enumerate() {
                    if rule.phase != phase {
                        continue;
                    }
                    for binding in &self.cache.bindings[ri] {
                        bound.clear();
                        bound.extend(binding.iter().map(|&i| &snapshot.entities[i]));
                        let ctx = RuleContext::new(&bound, &snapshot.world, snapshot.dt, snapshot.arena);
                        self.outputs.clear();
                        rule.eval(&ctx, &mut self.outputs);
                        for out in &self.outputs {
                            let Some(&target) = binding.get(out.slot) else {
                                return Err(Error::InvalidRule {
                                    rule: rule.name.clone(),
                                    reason: format!("output slot {} out of range", out.slot),
                                });
                            };
                            let ent = &snapshot.entities[target];
                            match ent.get(out.factor) {
                                Some(v) if v.kind() == out.value.kind() => {}
                                Some(_) => {
                                    return Err(Error::InvalidRule {
                                        rule: rule.name.clone(),
                                        reason: format!("output kind mismatch on factor {}", out.factor.0),
                                    })
                                }
                                None => {
                                    return Err(Error::InvalidRule {
                                        rule: rule.name.clone(),
                                        reason: format!(
                                            "entity {} has no factor {}",
                                            ent.id.0, out.factor.0
                                        ),
                                    })
                                }
                            }
                            self.proposals.push((
                                target,
                                out.factor,
                                Proposal {
                                    kind: out.kind,
                                    value: out.value,
                                    specificity: rule.specificity,
                                },
                            ));
                        }
                    }
                }
            }
            self.apply_proposals(next)?;
        }

        for post in &self.ruleset.post {
            post.apply(next);
        }
        next.time += 1;
        Ok(())
    }

    fn apply_proposals(&mut self, state: &mut SimState) -> Result<()> {
        self.proposals
            .sort_by_key(|a| (a.0, a.1));
        let mut start = 0;
        let mut group: Vec<Proposal> = Vec::new();
        while start < self.proposals.len() {
            let (ei, f, _) = self.proposals[start];
            let mut end = start;
            group.clear();
            while end < self.proposals.len() && self.proposals[end].0 == ei && self.proposals[end].1 == f {
                group.push(self.proposals[end].2);
                end += 1;
            }
            let dt = state.dt;
            let entity = &mut state.entities[ei];
            let id = entity.id.0;
            let slot = entity.get_mut(f).expect("validated target");
            *slot = resolve_conflicts(&group, *slot, dt).map_err(|e| Error::RuleConflict {
                entity: id,
                factor: format!("#{}", f.0),
                reason: e.to_string(),
            })?;
            start = end;
        }
        Ok(())
    }
}

/// One transition: zero transient factors, evaluate every rule on the
/// snapshot of its phase, resolve, run post-step passes, advance time.
pub fn apply_transition(state: &SimState, ruleset: &Ruleset) -> Result<SimState> {
    let mut sim = Simulator::new(ruleset.clone());
    let mut next = state.clone();
    sim.step_inner(&mut next)?;
    Ok(next)
}
