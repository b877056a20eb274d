use serde::{Deserialize, Serialize};

use crate::factors::builtin::*;
use crate::factors::{Entity, SimState};
use crate::physics::in_hole;

/// Charged on every non-terminal step of a scored task.
pub const STEP_COST: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    None,
    PuttPutt,
    Billiards,
    Invisiball,
}

impl RewardKind {
    pub fn parse(s: &str) -> Option<RewardKind> {
        match s {
            "none" => Some(RewardKind::None),
            "puttputt" => Some(RewardKind::PuttPutt),
            "billiards" => Some(RewardKind::Billiards),
            "invisiball" => Some(RewardKind::Invisiball),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RewardKind::None => "none",
            RewardKind::PuttPutt => "puttputt",
            RewardKind::Billiards => "billiards",
            RewardKind::Invisiball => "invisiball",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardOutcome {
    pub reward: f64,
    pub terminal: bool,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn reached_goal(state: &SimState) -> bool {
    let Some(ball) = state.controlled().and_then(|e| e.vec2(POSITION)) else {
        return false;
    };
    state.entities.iter().filter(|e| e.flag(GOAL_FLAG)).any(|g| {
        match (g.vec2(POSITION), g.scalar(RADIUS)) {
            (Some(p), Some(r)) => dist(ball, p) <= r,
            _ => false,
        }
    })
}

fn balls(state: &SimState) -> impl Iterator<Item = &Entity> {
    state
        .entities
        .iter()
        .filter(|e| e.is_object() && !e.flag(CONTROLLED_FLAG))
}

/// Reward for the transition `prev -> next` under `action`.
///
/// Goal tasks pay +1 and end once the controlled ball is within the goal's
/// radius, and cost [`STEP_COST`] otherwise. Billiards pays +1 per ball that
/// entered a hole during the step minus the step cost; sinking the cueball
/// replaces the step cost with -1 and ends the episode, as does clearing the
/// table.
pub fn compute_reward(kind: RewardKind, prev: &SimState, _action: [f64; 2], next: &SimState) -> RewardOutcome {
    match kind {
        RewardKind::None => RewardOutcome { reward: 0.0, terminal: false },
        RewardKind::PuttPutt | RewardKind::Invisiball => {
            if reached_goal(next) {
                RewardOutcome { reward: 1.0, terminal: true }
            } else {
                RewardOutcome { reward: -STEP_COST, terminal: false }
            }
        }
        RewardKind::Billiards => {
            let sunk = balls(next)
                .filter(|b| in_hole(next, b))
                .filter(|b| prev.entity(b.id).is_some_and(|p| !in_hole(prev, p)))
                .count() as f64;
            let cue_sunk = next.controlled().is_some_and(|c| in_hole(next, c));
            let cleared = balls(next).all(|b| in_hole(next, b));
            if cue_sunk {
                RewardOutcome { reward: sunk - 1.0, terminal: true }
            } else {
                RewardOutcome { reward: sunk - STEP_COST, terminal: cleared }
            }
        }
    }
}
