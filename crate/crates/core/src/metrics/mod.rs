//! Distances and goodness-of-fit statistics over task sets.

pub mod assignment;
pub mod ks;
pub mod transport;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use assignment::{assignment_solve, CostMatrix};
pub use ks::{ks_one_sample, ks_one_sample_cdf, ks_two_sample, ks_two_sample_critical};
pub use transport::{normalize_pair, optimal_transport, wasserstein2, TransportPlan, SOLVER_CAP};

use crate::error::{Error, Result};
use crate::factors::{FactorId, StateLayout};
use crate::init::{instance_seed, sample_task, Distribution, TaskInstance, TaskTemplate};

/// Which prior produced a column: (slot index, factor, component).
pub type ColumnSource = (usize, FactorId, usize);

/// Instances of one template that share a structural layout, with their
/// flattened vectors stacked row-major.
#[derive(Debug, Clone)]
pub struct TaskSet {
    pub template: Arc<TaskTemplate>,
    pub seeds: Vec<u64>,
    pub layout: StateLayout,
    pub matrix: Vec<f64>,
    /// Per column; `None` where instances disagree on the source slot.
    pub sources: Vec<Option<ColumnSource>>,
}

fn column_sources(inst: &TaskInstance) -> Vec<ColumnSource> {
    let mut out = Vec::new();
    for (e, &si) in inst.state.entities.iter().zip(&inst.slots) {
        for (&f, v) in e.etype().basis().iter().zip(e.values()) {
            for c in 0..v.kind().width() {
                out.push((si, f, c));
            }
        }
    }
    out
}

impl TaskSet {
    /// Sample `n` instances; instance `i` uses [`instance_seed`]`(seed, i)`.
    pub fn sample(template: Arc<TaskTemplate>, n: usize, seed: u64) -> Result<TaskSet> {
        let instances = (0..n)
            .map(|i| sample_task(&template, instance_seed(seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        TaskSet::from_instances(template, &instances)
    }

    pub fn from_instances(template: Arc<TaskTemplate>, instances: &[TaskInstance]) -> Result<TaskSet> {
        let Some(first) = instances.first() else {
            return Ok(TaskSet {
                template,
                seeds: Vec::new(),
                layout: StateLayout::default(),
                matrix: Vec::new(),
                sources: Vec::new(),
            });
        };
        let structure = first.layout.structure();
        let mut sources: Vec<Option<ColumnSource>> = column_sources(first).into_iter().map(Some).collect();
        let mut matrix = Vec::with_capacity(instances.len() * first.vector.len());
        for (i, inst) in instances.iter().enumerate() {
            if inst.layout.structure() != structure {
                return Err(Error::LayoutMismatch(format!(
                    "instance {i} has a different entity structure than instance 0"
                )));
            }
            for (s, other) in sources.iter_mut().zip(column_sources(inst)) {
                if *s != Some(other) {
                    *s = None;
                }
            }
            matrix.extend_from_slice(&inst.vector);
        }
        Ok(TaskSet {
            template,
            seeds: instances.iter().map(|i| i.seed).collect(),
            layout: first.layout.clone(),
            matrix,
            sources,
        })
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.matrix[i * d..(i + 1) * d]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.row(i)[k]).collect()
    }

    /// Re-create instance `i` from its seed and check it against the stored
    /// row bit for bit.
    pub fn instance(&self, i: usize) -> Result<TaskInstance> {
        let inst = sample_task(&self.template, self.seeds[i])?;
        let same = inst.vector.len() == self.dim()
            && inst
                .vector
                .iter()
                .zip(self.row(i))
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(Error::Archive(format!(
                "instance {i} does not reproduce from seed {}",
                self.seeds[i]
            )));
        }
        Ok(inst)
    }

    /// The prior that generated column `k`, if known.
    pub fn column_prior(&self, k: usize) -> Option<&Distribution> {
        let (si, f, c) = self.sources.get(k).copied().flatten()?;
        self.template.slots.get(si)?.prior(f)?.components.get(c)
    }
}

fn check_same_layout(a: &TaskSet, b: &TaskSet) -> Result<()> {
    if !a.is_empty() && !b.is_empty() && a.layout.structure() != b.layout.structure() {
        return Err(Error::LayoutMismatch(format!(
            "sets have different structures ({} vs {} columns)",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// W2 between two task sets, optionally on z-scored columns.
pub fn task_set_w2(a: &TaskSet, b: &TaskSet, normalize: bool) -> Result<f64> {
    check_same_layout(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let d = a.dim();
    if d == 0 {
        return Ok(0.0);
    }
    if normalize {
        let (za, zb) = normalize_pair(&a.matrix, &b.matrix, d);
        wasserstein2(&za, &zb, d)
    } else {
        wasserstein2(&a.matrix, &b.matrix, d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorKs {
    pub factor: String,
    /// Against the generating prior; null when the prior is not continuous.
    pub d_one_sample: Option<f64>,
    pub d_two_sample: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSetReport {
    pub w2: f64,
    pub per_factor_ks: Vec<FactorKs>,
    pub entropy: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub normalized: bool,
}

/// Column label with the slot name, e.g. `ball#0.Position[1]`.
pub fn column_label(set: &TaskSet, k: usize) -> String {
    let s = &set.layout.slots[k];
    match set.sources[k] {
        Some((si, _, _)) => format!("{}#{}.{}[{}]", set.template.slots[si].name, s.entity.0, s.factor, s.component),
        None => set.layout.label(k),
    }
}

/// W2 between the sets, per-column KS of A against its priors and of A
/// against B, and the entropy of A's template.
pub fn task_set_report(a: &TaskSet, b: &TaskSet, normalize: bool) -> Result<TaskSetReport> {
    let w2 = task_set_w2(a, b, normalize)?;
    let mut per_factor_ks = Vec::with_capacity(a.dim());
    for k in 0..a.dim() {
        let ca = a.column(k);
        let cb = b.column(k);
        let d_one_sample = match a.column_prior(k) {
            Some(p) => ks_one_sample(&ca, p)?,
            None => None,
        };
        per_factor_ks.push(FactorKs {
            factor: column_label(a, k),
            d_one_sample,
            d_two_sample: ks_two_sample(&ca, &cb)?,
        });
    }
    Ok(TaskSetReport {
        w2,
        per_factor_ks,
        entropy: a.template.entropy(),
        n_a: a.len(),
        n_b: b.len(),
        normalized: normalize,
    })
}
