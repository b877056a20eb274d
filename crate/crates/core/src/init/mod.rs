//! Priors, task templates and instance sampling.

pub mod builtin;
pub mod dist;
pub mod sample;
pub mod template;

pub use dist::Distribution;
pub use sample::{instance_seed, sample_task, stream_seed, InstanceRecord, TaskInstance};
pub use template::{Difficulty, FactorPrior, SlotTemplate, TaskTemplate};
