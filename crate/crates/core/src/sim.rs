//! Scenario-driven simulation of enactments with per-tick lifecycle and
//! alignment reports.
//!
//! A scenario names protocol and commitment files, optionally asks for the
//! protocol to be composed with synthesized alignment protocols, and picks
//! a policy: a scripted move list, a seeded random scheduler, or a seeded
//! scheduler that sends forwards as soon as they are enabled.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info};

use crate::commitment::{
    bind, parse_commitments, BindError, CommitmentError, CommitmentRegistry, CommitmentSpec,
};
use crate::enactment::{
    check_viable, deliverable, enabled_emissions, Bindings, Delivery, HistoryVector,
    MessageInstance, StructureError, TraceRecord, ValuePool, ViabilityViolation,
};
use crate::protocol::{parse_protocols, uod, Protocol, ProtocolError, Registry, Uod, UodError};
use crate::semantics::{check_alignment, AlignmentReport, SemanticsError};
use crate::synthesis::{
    compose_operationalization, synthesize_alignment_protocol, ForwardingRegistry, SynthesisError,
    SynthesisMode,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedMove {
    pub tick: u64,
    pub role: String,
    /// `emit NAME` or `recv NAME`.
    pub action: String,
    /// Selects among several candidate instances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bindings: Option<Bindings>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Scripted {
        moves: Vec<ScriptedMove>,
    },
    Random {
        seed: u64,
    },
    /// Random, except that enabled forwards are always sent first.
    Aligner {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub label: String,
    pub tick: u64,
}

fn default_scale() -> u64 {
    1
}

fn default_keys() -> Vec<String> {
    vec!["1".to_string()]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    /// Protocol files, relative to the scenario file.
    pub protocols: Vec<PathBuf>,
    /// The protocol to enact; defaults to the last one read.
    #[serde(default)]
    pub protocol: Option<String>,
    #[serde(default)]
    pub commitments: Vec<PathBuf>,
    /// Compose the protocol with alignment protocols for every commitment.
    #[serde(default)]
    pub synthesize: Option<SynthesisMode>,
    /// Ticks per commitment time unit.
    #[serde(default = "default_scale")]
    pub time_scale: u64,
    /// Last tick simulated. Defaults to the last scripted tick.
    #[serde(default)]
    pub horizon: Option<u64>,
    /// Ticks after which an in-flight message must be delivered.
    #[serde(default)]
    pub max_delay: Option<u64>,
    #[serde(default)]
    pub delivery: Delivery,
    #[serde(default = "default_keys")]
    pub key_values: Vec<String>,
    pub policy: Policy,
    #[serde(default)]
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot read {}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no protocol named `{0}`")]
    UnknownProtocol(String),
    #[error("the scenario names no protocol files")]
    NoProtocol,
    #[error(transparent)]
    Uod(#[from] UodError),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error("tick {tick}: {role} cannot {action}")]
    ScriptedMoveNotEnabled {
        tick: u64,
        role: String,
        action: String,
    },
    #[error("tick {tick}: {source}")]
    Structure { tick: u64, source: StructureError },
    #[error("simulated enactment is not viable: {0}")]
    NotViable(ViabilityViolation),
}

fn read(path: &Path) -> Result<String, SimError> {
    std::fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads every protocol in `paths`, in order.
pub fn load_protocols(paths: &[PathBuf]) -> Result<Vec<Protocol>, SimError> {
    let mut out = Vec::new();
    for path in paths {
        let ps = parse_protocols(&read(path)?).map_err(|e: ProtocolError| SimError::File {
            path: path.clone(),
            message: e.to_string(),
        })?;
        out.extend(ps);
    }
    Ok(out)
}

/// Reads every commitment in `paths`; later files may refer to commitments
/// from earlier ones.
pub fn load_commitments(paths: &[PathBuf]) -> Result<Vec<CommitmentSpec>, SimError> {
    let mut registry = CommitmentRegistry::new();
    let mut out = Vec::new();
    for path in paths {
        let cs = parse_commitments(&read(path)?, &registry).map_err(|e: CommitmentError| {
            SimError::File {
                path: path.clone(),
                message: e.to_string(),
            }
        })?;
        for c in cs {
            registry.insert(c.clone());
            out.push(c);
        }
    }
    Ok(out)
}

/// A protocol ready to enact, with the commitments to report on.
#[derive(Debug, Clone)]
pub struct Setup {
    pub protocol: Protocol,
    pub uod: Uod,
    pub commitments: Vec<CommitmentSpec>,
}

/// Loads the scenario's files, resolving paths against `base`, and
/// composes alignment protocols if asked to.
pub fn prepare(s: &Scenario, base: &Path) -> Result<Setup, SimError> {
    let resolve = |ps: &[PathBuf]| ps.iter().map(|p| base.join(p)).collect::<Vec<_>>();
    let protocols = load_protocols(&resolve(&s.protocols))?;
    let commitments = load_commitments(&resolve(&s.commitments))?;
    let mut registry: Registry = protocols.iter().cloned().collect();
    let input = match &s.protocol {
        Some(name) => registry
            .get(name)
            .cloned()
            .ok_or_else(|| SimError::UnknownProtocol(name.clone()))?,
        None => protocols.last().cloned().ok_or(SimError::NoProtocol)?,
    };
    let protocol = match s.synthesize {
        Some(mode) => {
            let mut aligners = Vec::new();
            for c in &commitments {
                aligners.push(synthesize_alignment_protocol(c, &input, &registry, mode)?);
            }
            let composite = compose_operationalization(&input, &aligners, None)?;
            for a in aligners {
                registry.insert(a);
            }
            composite
        }
        None => input,
    };
    let u = uod(&protocol, &registry)?;
    for c in &commitments {
        bind(c, &u)?;
    }
    Ok(Setup {
        protocol,
        uod: u,
        commitments,
    })
}

/// Alignment of every commitment at one tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickRow {
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub commitments: Vec<AlignmentReport>,
}

impl TickRow {
    pub fn aligned(&self) -> bool {
        self.commitments.iter().all(AlignmentReport::aligned)
    }

    pub fn commitment(&self, name: &str) -> Option<&AlignmentReport> {
        self.commitments.iter().find(|c| c.commitment == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub protocol: String,
    pub trace: Vec<TraceRecord>,
    pub rows: Vec<TickRow>,
}

impl SimulationReport {
    pub fn at_label(&self, label: &str) -> Option<&TickRow> {
        self.rows.iter().find(|r| r.label.as_deref() == Some(label))
    }

    /// The trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.trace {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Loads and runs a scenario file.
pub fn run_scenario_file(path: &Path) -> Result<SimulationReport, SimError> {
    let s: Scenario = serde_json::from_str(&read(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let setup = prepare(&s, base)?;
    simulate(&setup, &s)
}

enum Step {
    Emit(Arc<MessageInstance>),
    Receive(Arc<MessageInstance>),
}

fn scripted_step(
    v: &HistoryVector,
    setup: &Setup,
    pool: &ValuePool,
    m: &ScriptedMove,
) -> Option<Step> {
    let (verb, schema) = m.action.split_once(char::is_whitespace)?;
    let schema = schema.trim();
    let fits = |i: &MessageInstance| {
        i.schema == schema
            && m.bindings
                .as_ref()
                .is_none_or(|b| b.iter().all(|(k, x)| i.bindings.get(k) == Some(x)))
    };
    match verb {
        "emit" => enabled_emissions(v, &setup.uod, &m.role, pool)
            .into_iter()
            .find(|i| fits(i))
            .map(|i| Step::Emit(Arc::new(i))),
        "recv" | "receive" => deliverable(v, Delivery::Unordered)
            .into_iter()
            .find(|i| i.receiver == m.role && fits(i))
            .map(Step::Receive),
        _ => None,
    }
}

fn random_step(
    v: &HistoryVector,
    setup: &Setup,
    pool: &ValuePool,
    s: &Scenario,
    tick: u64,
    rng: &mut ChaCha8Rng,
    fwd: &ForwardingRegistry,
) -> Option<Step> {
    let flying = deliverable(v, s.delivery);
    if let Some(limit) = s.max_delay {
        let overdue = flying.iter().find(|i| {
            v.emission_tick(i)
                .is_some_and(|t| tick.saturating_sub(t) >= limit)
        });
        if let Some(i) = overdue {
            return Some(Step::Receive(i.clone()));
        }
    }
    let mut emissions: Vec<MessageInstance> = Vec::new();
    for role in &setup.uod.roles {
        emissions.extend(enabled_emissions(v, &setup.uod, role, pool));
    }
    if matches!(s.policy, Policy::Aligner { .. }) {
        if let Some(i) = emissions.iter().find(|i| fwd.is_forward(&i.schema)) {
            return Some(Step::Emit(Arc::new(i.clone())));
        }
    }
    let choices = emissions.len() + flying.len();
    let pick = rng.random_range(0..=choices);
    if pick < emissions.len() {
        Some(Step::Emit(Arc::new(emissions.swap_remove(pick))))
    } else if pick < choices {
        Some(Step::Receive(flying[pick - emissions.len()].clone()))
    } else {
        None
    }
}

/// Runs a prepared scenario. At most one observation happens per tick.
pub fn simulate(setup: &Setup, s: &Scenario) -> Result<SimulationReport, SimError> {
    let pool = ValuePool {
        key_values: s.key_values.clone(),
        values_per_param: 1,
    };
    let fwd = ForwardingRegistry::from_uod(&setup.uod);
    let scaled: Vec<CommitmentSpec> = setup
        .commitments
        .iter()
        .map(|c| c.scaled(s.time_scale))
        .collect();
    let horizon = s.horizon.unwrap_or(match &s.policy {
        Policy::Scripted { moves } => moves.iter().map(|m| m.tick).max().unwrap_or(0),
        _ => 0,
    });

    let mut v = HistoryVector::for_uod(&setup.uod);
    let mut rng = match s.policy {
        Policy::Random { seed } | Policy::Aligner { seed } => ChaCha8Rng::seed_from_u64(seed),
        Policy::Scripted { .. } => ChaCha8Rng::seed_from_u64(0),
    };
    let mut active: BTreeSet<u64> = BTreeSet::new();
    for tick in 1..=horizon {
        let steps: Vec<Step> = match &s.policy {
            Policy::Scripted { moves } => {
                let mut out = Vec::new();
                for m in moves.iter().filter(|m| m.tick == tick) {
                    let step = scripted_step(&v, setup, &pool, m).ok_or_else(|| {
                        SimError::ScriptedMoveNotEnabled {
                            tick,
                            role: m.role.clone(),
                            action: m.action.clone(),
                        }
                    })?;
                    apply(&mut v, &step, tick)?;
                    out.push(step);
                }
                out
            }
            Policy::Random { .. } | Policy::Aligner { .. } => {
                match random_step(&v, setup, &pool, s, tick, &mut rng, &fwd) {
                    Some(step) => {
                        apply(&mut v, &step, tick)?;
                        vec![step]
                    }
                    None => Vec::new(),
                }
            }
        };
        if !steps.is_empty() {
            active.insert(tick);
        }
    }
    check_viable(&v, &setup.uod).map_err(SimError::NotViable)?;

    let mut ticks: BTreeSet<u64> = active;
    ticks.extend(s.checkpoints.iter().map(|c| c.tick));
    if horizon > 0 {
        ticks.insert(horizon);
    }
    let mut rows = Vec::new();
    for tick in ticks {
        let view = v.prefix(tick);
        let mut commitments = Vec::new();
        for c in &scaled {
            commitments.push(check_alignment(&view, c, tick, &fwd)?);
        }
        let label = s
            .checkpoints
            .iter()
            .find(|c| c.tick == tick)
            .map(|c| c.label.clone());
        rows.push(TickRow {
            tick,
            label,
            commitments,
        });
    }
    info!(protocol = %setup.protocol.name, observations = v.observations().len(), "simulated");
    Ok(SimulationReport {
        protocol: setup.protocol.name.clone(),
        trace: v.to_trace(),
        rows,
    })
}

fn apply(v: &mut HistoryVector, step: &Step, tick: u64) -> Result<(), SimError> {
    let result = match step {
        Step::Emit(i) => {
            debug!(tick, instance = %i, "emit");
            v.emit(i.clone(), tick)
        }
        Step::Receive(i) => {
            debug!(tick, instance = %i, "receive");
            v.receive(i.clone(), tick)
        }
    };
    result.map_err(|source| SimError::Structure { tick, source })
}
