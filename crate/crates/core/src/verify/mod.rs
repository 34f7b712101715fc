//! Bounded verification of safety, liveness, embedding and alignment
//! reachability by exhaustive enumeration of enactments.

mod checks;
mod graph;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commitment::BindError;
use crate::enactment::{Delivery, TraceRecord, ValuePool};
use crate::protocol::{uod, Adornment, Protocol, Registry, Uod, UodError};
use crate::semantics::SemanticsError;

pub use checks::{
    check_alignment_reachability, check_embedding, check_liveness, check_safety,
    check_safety_liveness, check_theorem1, Preservation, Theorem1Report,
};
pub use graph::{BoundaryId, DedupMode, Explorer, Goal, Move, Node, Settings, StateGraph};

/// Limits and assumptions for an enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bound {
    pub key_values: Vec<String>,
    pub values_per_param: usize,
    pub max_states: usize,
    /// Maximum number of moves along any explored path.
    pub max_steps: Option<usize>,
    pub delivery: Delivery,
    /// Ticks per commitment time unit.
    pub time_scale: u64,
    /// Only let time pass when no message is in flight and no forward is
    /// enabled. Otherwise time may also pass while forwards are pending,
    /// once the original protocol has nothing in flight or enabled.
    pub punctual: bool,
    pub dedup: DedupMode,
}

impl Default for Bound {
    fn default() -> Self {
        Bound {
            key_values: vec!["1".to_string()],
            values_per_param: 1,
            max_states: 200_000,
            max_steps: None,
            delivery: Delivery::Unordered,
            time_scale: 1000,
            punctual: true,
            dedup: DedupMode::Commutative,
        }
    }
}

impl Bound {
    pub fn settings(&self) -> Settings {
        Settings {
            pool: ValuePool {
                key_values: self.key_values.clone(),
                values_per_param: self.values_per_param,
            },
            delivery: self.delivery,
            dedup: self.dedup,
            max_states: self.max_states,
            max_steps: self.max_steps,
            time_scale: self.time_scale,
            punctual: self.punctual,
            depth_first: false,
        }
    }
}

/// A protocol prepared for verification.
#[derive(Debug, Clone)]
pub struct Subject {
    pub name: String,
    pub uod: Uod,
    /// Public `out` parameters that a complete enactment binds.
    pub goal: Vec<String>,
}

impl Subject {
    pub fn new(p: &Protocol, registry: &Registry) -> Result<Self, VerifyError> {
        Ok(Subject {
            name: p.name.clone(),
            uod: uod(p, registry)?,
            goal: p
                .params
                .iter()
                .filter(|x| x.adornment == Adornment::Out)
                .map(|x| x.name.clone())
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Safety,
    Liveness,
    Embedding,
    AlignmentReachability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Holds,
    Fails,
    BoundExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub description: String,
    pub trace: Vec<TraceRecord>,
    /// Ticks reached by each lapse of time in `trace`.
    pub lapses: Vec<u64>,
    /// A continuation of `trace`, where one is part of the evidence.
    pub extension: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub property: Property,
    pub subject: String,
    pub outcome: Outcome,
    pub witness: Option<Witness>,
    pub states_explored: usize,
    pub detail: String,
    /// The timing assumption, for alignment reachability.
    pub punctual: Option<bool>,
}

impl VerificationReport {
    pub fn holds(&self) -> bool {
        self.outcome == Outcome::Holds
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Uod(#[from] UodError),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}
