//! Enactments: message instances, per-role histories and the vector of all
//! roles' histories.
//!
//! Roles communicate only by asynchronous messages. A role's history is the
//! sequence of instances it emitted or received, each stamped with a global
//! tick. What a role knows is exactly what its history contains.

mod model;
mod moves;
mod viability;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{MessageSchema, Uod};

pub use model::{project_model, Model, ModelEntry, ModelError};
pub use moves::{deliverable, enabled_emissions, Delivery, ValuePool};
pub use viability::{check_key_integrity, check_viable, Rule, ViabilityViolation};

pub type Bindings = BTreeMap<String, String>;

/// Whether two key bindings agree on every key they share.
pub fn agree(a: &Bindings, b: &Bindings) -> bool {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .all(|(k, v)| large.get(k).is_none_or(|w| w == v))
}

/// Whether two key bindings share some key and agree on all shared keys.
pub fn related(a: &Bindings, b: &Bindings) -> bool {
    a.keys().any(|k| b.contains_key(k)) && agree(a, b)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageInstance {
    pub schema: String,
    pub sender: String,
    pub receiver: String,
    pub bindings: Bindings,
    pub key_binding: Bindings,
}

impl MessageInstance {
    /// An instance of `schema`; the key binding is projected from
    /// `bindings`.
    pub fn new(schema: &MessageSchema, bindings: Bindings) -> Self {
        let key_binding = schema
            .keys()
            .filter_map(|p| bindings.get(&p.name).map(|v| (p.name.clone(), v.clone())))
            .collect();
        MessageInstance {
            schema: schema.name.clone(),
            sender: schema.sender.clone(),
            receiver: schema.receiver.clone(),
            bindings,
            key_binding,
        }
    }
}

impl std::fmt::Display for MessageInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let args: Vec<String> = self
            .bindings
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        write!(
            f,
            "{}[{} -> {}; {}]",
            self.schema,
            self.sender,
            self.receiver,
            args.join(", ")
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "emit")]
    Emit,
    #[serde(rename = "recv")]
    Receive,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    pub instance: Arc<MessageInstance>,
    pub direction: Direction,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct History {
    pub role: String,
    pub events: Vec<Observation>,
}

impl History {
    pub fn last_tick(&self) -> Option<u64> {
        self.events.last().map(|o| o.tick)
    }

    /// Every instance the role has seen, in order.
    pub fn known(&self) -> impl Iterator<Item = &MessageInstance> {
        self.events.iter().map(|o| o.instance.as_ref())
    }
}

/// Structural faults when extending a history vector.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("no role `{0}` in this vector")]
    UnknownRole(String),
    #[error("tick {tick} does not follow {role}'s last tick {last}")]
    NonIncreasingTick { role: String, tick: u64, last: u64 },
    #[error("{0} is not in flight")]
    NotInFlight(Box<MessageInstance>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct HistoryVector {
    pub histories: BTreeMap<String, History>,
    pub clock: u64,
}

impl HistoryVector {
    pub fn new<S: AsRef<str>>(roles: impl IntoIterator<Item = S>) -> Self {
        let histories = roles
            .into_iter()
            .map(|r| {
                let role = r.as_ref().to_string();
                (
                    role.clone(),
                    History {
                        role,
                        events: Vec::new(),
                    },
                )
            })
            .collect();
        HistoryVector {
            histories,
            clock: 0,
        }
    }

    pub fn for_uod(uod: &Uod) -> Self {
        Self::new(&uod.roles)
    }

    pub fn history(&self, role: &str) -> Option<&History> {
        self.histories.get(role)
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.histories.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.histories.values().map(|h| h.events.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&mut self, role: &str, obs: Observation) -> Result<(), StructureError> {
        let h = self
            .histories
            .get_mut(role)
            .ok_or_else(|| StructureError::UnknownRole(role.to_string()))?;
        if let Some(last) = h.last_tick() {
            if obs.tick <= last {
                return Err(StructureError::NonIncreasingTick {
                    role: role.to_string(),
                    tick: obs.tick,
                    last,
                });
            }
        }
        self.clock = self.clock.max(obs.tick);
        h.events.push(obs);
        Ok(())
    }

    /// Appends an emission to the sender's history. Viability is not
    /// checked here.
    pub fn emit(
        &mut self,
        instance: Arc<MessageInstance>,
        tick: u64,
    ) -> Result<(), StructureError> {
        let role = instance.sender.clone();
        self.push(
            &role,
            Observation {
                instance,
                direction: Direction::Emit,
                tick,
            },
        )
    }

    /// Appends the reception of an in-flight instance.
    pub fn receive(
        &mut self,
        instance: Arc<MessageInstance>,
        tick: u64,
    ) -> Result<(), StructureError> {
        if !self.in_flight().iter().any(|i| **i == *instance) {
            return Err(StructureError::NotInFlight(Box::new((*instance).clone())));
        }
        let role = instance.receiver.clone();
        self.push(
            &role,
            Observation {
                instance,
                direction: Direction::Receive,
                tick,
            },
        )
    }

    /// The tick at which `instance` was emitted, if it was.
    pub fn emission_tick(&self, instance: &MessageInstance) -> Option<u64> {
        self.histories.get(&instance.sender).and_then(|h| {
            h.events
                .iter()
                .find(|o| o.direction == Direction::Emit && *o.instance == *instance)
                .map(|o| o.tick)
        })
    }

    /// Instances emitted but not yet received, in emission order.
    pub fn in_flight(&self) -> Vec<Arc<MessageInstance>> {
        let mut sent: Vec<&Observation> = self
            .histories
            .values()
            .flat_map(|h| h.events.iter().filter(|o| o.direction == Direction::Emit))
            .collect();
        sent.sort_by_key(|o| o.tick);
        let mut out = Vec::new();
        let mut received: BTreeMap<&MessageInstance, usize> = BTreeMap::new();
        for h in self.histories.values() {
            for o in h
                .events
                .iter()
                .filter(|o| o.direction == Direction::Receive)
            {
                *received.entry(o.instance.as_ref()).or_default() += 1;
            }
        }
        for o in sent {
            match received.get_mut(o.instance.as_ref()) {
                Some(n) if *n > 0 => *n -= 1,
                _ => out.push(o.instance.clone()),
            }
        }
        out
    }

    /// All observations in (tick, role) order.
    pub fn observations(&self) -> Vec<(&str, &Observation)> {
        let mut all: Vec<(&str, &Observation)> = self
            .histories
            .iter()
            .flat_map(|(r, h)| h.events.iter().map(move |o| (r.as_str(), o)))
            .collect();
        all.sort_by(|a, b| (a.1.tick, a.1.direction, a.0).cmp(&(b.1.tick, b.1.direction, b.0)));
        all
    }

    /// The vector restricted to observations at or before `tick`.
    pub fn prefix(&self, tick: u64) -> HistoryVector {
        let mut v = self.clone();
        for h in v.histories.values_mut() {
            h.events.retain(|o| o.tick <= tick);
        }
        v.clock = v
            .histories
            .values()
            .filter_map(History::last_tick)
            .max()
            .unwrap_or(0)
            .min(self.clock);
        v
    }

    /// For every key binding emitted so far, the parameters bound for it.
    pub fn bound_params(&self) -> BTreeMap<Bindings, BTreeMap<String, String>> {
        let mut out: BTreeMap<Bindings, BTreeMap<String, String>> = BTreeMap::new();
        for h in self.histories.values() {
            for o in h.events.iter().filter(|o| o.direction == Direction::Emit) {
                let entry = out.entry(o.instance.key_binding.clone()).or_default();
                for (p, v) in &o.instance.bindings {
                    entry.entry(p.clone()).or_insert_with(|| v.clone());
                }
            }
        }
        out
    }

    pub fn to_trace(&self) -> Vec<TraceRecord> {
        self.observations()
            .into_iter()
            .map(|(role, o)| TraceRecord {
                tick: o.tick,
                role: role.to_string(),
                dir: o.direction,
                schema: o.instance.schema.clone(),
                bindings: o.instance.bindings.clone(),
            })
            .collect()
    }

    /// Rebuilds a vector from trace records, which must be in tick order.
    pub fn from_trace(uod: &Uod, records: &[TraceRecord]) -> Result<HistoryVector, TraceError> {
        let mut v = HistoryVector::for_uod(uod);
        for (line, r) in records.iter().enumerate() {
            let schema = uod
                .schema(&r.schema)
                .ok_or_else(|| TraceError::UnknownSchema {
                    line: line + 1,
                    schema: r.schema.clone(),
                })?;
            let instance = Arc::new(MessageInstance::new(schema, r.bindings.clone()));
            let expected = match r.dir {
                Direction::Emit => &schema.sender,
                Direction::Receive => &schema.receiver,
            };
            if *expected != r.role {
                return Err(TraceError::WrongRole {
                    line: line + 1,
                    role: r.role.clone(),
                });
            }
            let result = match r.dir {
                Direction::Emit => v.emit(instance, r.tick),
                Direction::Receive => v.receive(instance, r.tick),
            };
            result.map_err(|source| TraceError::Structure {
                line: line + 1,
                source,
            })?;
        }
        Ok(v)
    }
}

/// One line of the JSON-lines trace format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub role: String,
    pub dir: Direction,
    pub schema: String,
    pub bindings: Bindings,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("record {line}: unknown message `{schema}`")]
    UnknownSchema { line: usize, schema: String },
    #[error("record {line}: role `{role}` cannot observe this message in this direction")]
    WrongRole { line: usize, role: String },
    #[error("record {line}: {source}")]
    Structure {
        line: usize,
        #[source]
        source: StructureError,
    },
}
