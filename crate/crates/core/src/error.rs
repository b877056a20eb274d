use thiserror::Error;

use crate::factors::FactorKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("factor type {0} is already registered")]
    DuplicateFactor(String),
    #[error("unknown factor type {0}")]
    UnknownFactor(String),
    #[error("unknown entity type {0}")]
    UnknownEntityType(String),
    #[error("invalid entity type: {0}")]
    InvalidEntityType(String),
    #[error("entity type {entity_type} requires factor {factor}")]
    MissingFactor { entity_type: String, factor: String },
    #[error("factor {factor} is not in the basis of {entity_type}")]
    ExtraFactor { entity_type: String, factor: String },
    #[error("factor {0} assigned twice")]
    DuplicateAssignment(String),
    #[error("factor {factor} expects a {expected} value, got {found}")]
    KindMismatch {
        factor: String,
        expected: FactorKind,
        found: FactorKind,
    },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("invalid rule {rule}: {reason}")]
    InvalidRule { rule: String, reason: String },
    #[error("cannot resolve rule conflict on entity {entity} factor {factor}: {reason}")]
    RuleConflict {
        entity: u64,
        factor: String,
        reason: String,
    },
    #[error("invalid prior at {key}: {reason}")]
    InvalidPrior { key: String, reason: String },
    #[error("could not place {slot} after {attempts} attempts; arena too crowded")]
    Placement { slot: String, attempts: usize },
    #[error("template error at {key}: {reason}")]
    Template { key: String, reason: String },
    #[error("episode is done; call reset before stepping")]
    EpisodeDone,
    #[error("invalid observation spec: {0}")]
    InvalidObservation(String),
    #[error("empty sample")]
    EmptySample,
    #[error("cost matrix is {rows}x{cols}; expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite cost at ({0}, {1})")]
    NonFiniteCost(usize, usize),
    #[error("transport problem of size {n}x{m} exceeds the solver cap of {cap}")]
    TooLarge { n: usize, m: usize, cap: usize },
    #[error("{0}")]
    Archive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
