//! Evaluation of event expressions over a role's model, and alignment of a
//! commitment between its debtor and creditor.
//!
//! An expression denotes a set of instances, each carrying the key binding
//! it correlates on and the tick at which it holds. Windows are half-open.
//! `L except R` holds for an `L` instance only once `R` can no longer occur
//! for its key, that is once `R`'s deadline has passed without `R`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commitment::{lifecycle_formula, CommitmentSpec, EventExpr, LifecycleKind, TimeRef};
use crate::enactment::{agree, project_model, Bindings, HistoryVector, Model, ModelError};
use crate::synthesis::ForwardingRegistry;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventInstance {
    pub key_binding: Bindings,
    pub attributes: Bindings,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("`{0}` is not a message of the protocol")]
    UnboundName(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What an expression is evaluated against.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationContext<'a> {
    pub model: &'a Model,
    pub now: u64,
    /// Message names the expression may mention; unchecked when absent.
    pub vocabulary: Option<&'a BTreeSet<String>>,
}

impl<'a> EvaluationContext<'a> {
    pub fn new(model: &'a Model, now: u64) -> Self {
        EvaluationContext {
            model,
            now,
            vocabulary: None,
        }
    }

    pub fn with_vocabulary(mut self, names: &'a BTreeSet<String>) -> Self {
        self.vocabulary = Some(names);
        self
    }
}

/// The instances of `expr` in `ctx`.
pub fn eval(
    expr: &EventExpr,
    ctx: &EvaluationContext<'_>,
) -> Result<Vec<EventInstance>, SemanticsError> {
    let mut out: Vec<EventInstance> = match expr {
        EventExpr::Base(m) => {
            if ctx.vocabulary.is_some_and(|v| !v.contains(m)) {
                return Err(SemanticsError::UnboundName(m.clone()));
            }
            ctx.model
                .named(m)
                .filter(|e| e.time <= ctx.now)
                .map(|e| EventInstance {
                    key_binding: e.key_binding.clone(),
                    attributes: e.bindings.clone(),
                    timestamp: e.time,
                })
                .collect()
        }
        EventExpr::Lifecycle { kind, commitment } => {
            return eval(&lifecycle_formula(*kind, commitment), ctx)
        }
        EventExpr::Window { inner, from, to } => {
            let mut kept = Vec::new();
            for i in eval(inner, ctx)? {
                let lo = resolve_bound(from, &i.key_binding, ctx)?;
                let hi = resolve_bound(to, &i.key_binding, ctx)?;
                if let (Some(lo), Some(hi)) = (lo, hi) {
                    if lo <= i.timestamp && i.timestamp < hi {
                        kept.push(i);
                    }
                }
            }
            kept
        }
        EventExpr::And(l, r) => {
            let rs = eval(r, ctx)?;
            let mut joined = Vec::new();
            for a in eval(l, ctx)? {
                for b in rs.iter().filter(|b| agree(&a.key_binding, &b.key_binding)) {
                    let mut key_binding = a.key_binding.clone();
                    key_binding.extend(b.key_binding.clone());
                    let mut attributes = b.attributes.clone();
                    attributes.extend(a.attributes.clone());
                    joined.push(EventInstance {
                        key_binding,
                        attributes,
                        timestamp: a.timestamp.max(b.timestamp),
                    });
                }
            }
            joined
        }
        EventExpr::Or(l, r) => {
            let mut by_key: BTreeMap<Bindings, EventInstance> = BTreeMap::new();
            for i in eval(l, ctx)?.into_iter().chain(eval(r, ctx)?) {
                match by_key.get(&i.key_binding) {
                    Some(prev)
                        if (prev.timestamp, &prev.attributes) <= (i.timestamp, &i.attributes) => {}
                    _ => {
                        by_key.insert(i.key_binding.clone(), i);
                    }
                }
            }
            by_key.into_values().collect()
        }
        EventExpr::Except(l, r) => {
            let rs = eval(r, ctx)?;
            let mut kept = Vec::new();
            for mut i in eval(l, ctx)? {
                if rs.iter().any(|x| agree(&x.key_binding, &i.key_binding)) {
                    continue;
                }
                if let Some(d) = deadline(r, &i.key_binding, ctx)? {
                    if d <= ctx.now {
                        i.timestamp = i.timestamp.max(d);
                        kept.push(i);
                    }
                }
            }
            kept
        }
    };
    out.sort();
    out.dedup();
    Ok(out)
}

/// The earliest timestamp of an `event` instance agreeing with `key`.
fn earliest(
    event: &EventExpr,
    key: &Bindings,
    ctx: &EvaluationContext<'_>,
) -> Result<Option<u64>, SemanticsError> {
    Ok(eval(event, ctx)?
        .iter()
        .filter(|e| agree(&e.key_binding, key))
        .map(|e| e.timestamp)
        .min())
}

/// Resolves a window bound for `key`. `None` when the bound's event has
/// not occurred; infinity is `u64::MAX`.
pub fn resolve_bound(
    t: &TimeRef,
    key: &Bindings,
    ctx: &EvaluationContext<'_>,
) -> Result<Option<u64>, SemanticsError> {
    Ok(match t {
        TimeRef::Absolute(n) => Some(*n),
        TimeRef::Infinity => Some(u64::MAX),
        TimeRef::After { event, offset } => {
            earliest(event, key, ctx)?.map(|ts| ts.saturating_add(*offset))
        }
    })
}

/// The tick from which `expr` can no longer occur for `key`, if known.
pub fn deadline(
    expr: &EventExpr,
    key: &Bindings,
    ctx: &EvaluationContext<'_>,
) -> Result<Option<u64>, SemanticsError> {
    let present = |e: &EventExpr| -> Result<bool, SemanticsError> {
        Ok(eval(e, ctx)?.iter().any(|i| agree(&i.key_binding, key)))
    };
    Ok(match expr {
        EventExpr::Base(_) => None,
        EventExpr::Lifecycle { kind, commitment } => {
            deadline(&lifecycle_formula(*kind, commitment), key, ctx)?
        }
        EventExpr::Window { inner, to, .. } => {
            let hi = match resolve_bound(to, key, ctx)? {
                Some(u64::MAX) | None => None,
                finite => finite,
            };
            min_defined(hi, deadline(inner, key, ctx)?)
        }
        EventExpr::And(l, r) => {
            if present(l)? {
                deadline(r, key, ctx)?
            } else if present(r)? {
                deadline(l, key, ctx)?
            } else {
                min_defined(deadline(l, key, ctx)?, deadline(r, key, ctx)?)
            }
        }
        EventExpr::Or(l, r) => match (deadline(l, key, ctx)?, deadline(r, key, ctx)?) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        },
        EventExpr::Except(l, _) => deadline(l, key, ctx)?,
    })
}

fn min_defined(a: Option<u64>, b: Option<u64>) -> Option<u64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, None) => a,
        (None, b) => b,
    }
}

pub fn lifecycle_instances(
    kind: LifecycleKind,
    c: &CommitmentSpec,
    ctx: &EvaluationContext<'_>,
) -> Result<Vec<EventInstance>, SemanticsError> {
    eval(&lifecycle_formula(kind, c), ctx)
}

/// Key bindings for which each lifecycle event holds.
pub type LifecycleState = BTreeMap<LifecycleKind, BTreeSet<Bindings>>;

pub fn lifecycle_state(
    c: &CommitmentSpec,
    ctx: &EvaluationContext<'_>,
) -> Result<LifecycleState, SemanticsError> {
    LifecycleKind::ALL
        .into_iter()
        .map(|kind| {
            let keys = lifecycle_instances(kind, c, ctx)?
                .into_iter()
                .map(|i| i.key_binding)
                .collect();
            Ok((kind, keys))
        })
        .collect()
}

/// An instance one party infers and the other does not, where alignment
/// requires the other to infer it too.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Misalignment {
    pub kind: LifecycleKind,
    pub key_binding: Bindings,
    /// The role that does not infer the instance.
    pub lacking: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub commitment: String,
    pub now: u64,
    pub debtor: LifecycleState,
    pub creditor: LifecycleState,
    pub misalignments: Vec<Misalignment>,
}

impl AlignmentReport {
    pub fn aligned(&self) -> bool {
        self.misalignments.is_empty()
    }
}

/// Compares the lifecycle inferences of two models of `c`'s parties.
pub fn compare_states(
    c: &CommitmentSpec,
    debtor: &LifecycleState,
    creditor: &LifecycleState,
) -> Vec<Misalignment> {
    let mut out = Vec::new();
    for kind in LifecycleKind::ALL {
        let (knows, learns, lacking) = if kind.creditor_knows() {
            (&creditor[&kind], &debtor[&kind], &c.debtor)
        } else {
            (&debtor[&kind], &creditor[&kind], &c.creditor)
        };
        for key in knows.difference(learns) {
            out.push(Misalignment {
                kind,
                key_binding: key.clone(),
                lacking: lacking.clone(),
            });
        }
    }
    out
}

/// Whether `v` is aligned with respect to `c` at `now`: everything the
/// creditor infers about creation, detachment and violation the debtor
/// infers too, and everything the debtor infers about discharge and expiry
/// the creditor infers too.
pub fn check_alignment(
    v: &HistoryVector,
    c: &CommitmentSpec,
    now: u64,
    fwd: &ForwardingRegistry,
) -> Result<AlignmentReport, SemanticsError> {
    let dm = project_model(v, &c.debtor, fwd)?;
    let cm = project_model(v, &c.creditor, fwd)?;
    let debtor = lifecycle_state(c, &EvaluationContext::new(&dm, now))?;
    let creditor = lifecycle_state(c, &EvaluationContext::new(&cm, now))?;
    let misalignments = compare_states(c, &debtor, &creditor);
    Ok(AlignmentReport {
        commitment: c.name.clone(),
        now,
        debtor,
        creditor,
        misalignments,
    })
}
