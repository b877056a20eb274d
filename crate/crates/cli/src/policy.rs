use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

/// Action source for one episode.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Uniform in the square `[-F, F]^2`, clipped to the force disc by the env.
    Random,
    Still,
    /// Forces per step; zero once the list runs out.
    Scripted(Vec<[f64; 2]>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Bare(Vec<[f64; 2]>),
    Wrapped { actions: Vec<[f64; 2]> },
}

impl Policy {
    pub fn parse(spec: &str) -> Result<Policy> {
        match spec {
            "random" => Ok(Policy::Random),
            "still" => Ok(Policy::Still),
            path if Path::new(path).is_file() => {
                let text = fs::read_to_string(path).with_context(|| format!("reading policy {path}"))?;
                let script: ScriptFile =
                    serde_json::from_str(&text).with_context(|| format!("parsing policy {path}"))?;
                let actions = match script {
                    ScriptFile::Bare(a) | ScriptFile::Wrapped { actions: a } => a,
                };
                if actions.iter().flatten().any(|x| !x.is_finite()) {
                    bail!("policy {path}: forces must be finite");
                }
                Ok(Policy::Scripted(actions))
            }
            other => bail!("unknown policy {other:?}; expected random, still or a JSON file of forces"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::Still => "still",
            Policy::Scripted(_) => "scripted",
        }
    }

    pub fn actor(&self, seed: u64, max_force: f64) -> Actor<'_> {
        Actor {
            policy: self,
            rng: ChaCha8Rng::seed_from_u64(seed),
            max_force,
        }
    }
}

pub struct Actor<'a> {
    policy: &'a Policy,
    rng: ChaCha8Rng,
    max_force: f64,
}

impl Actor<'_> {
    pub fn act(&mut self, step: usize) -> [f64; 2] {
        match self.policy {
            Policy::Random => {
                let f = self.max_force;
                [self.rng.random_range(-f..=f), self.rng.random_range(-f..=f)]
            }
            Policy::Still => [0.0, 0.0],
            Policy::Scripted(a) => a.get(step).copied().unwrap_or([0.0, 0.0]),
        }
    }
}
