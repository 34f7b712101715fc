use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{related, Bindings, Direction, HistoryVector, MessageInstance};
use crate::protocol::Uod;

/// The condition a history vector broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// An `in` parameter was not known when the message was emitted.
    InUnknown,
    /// An `out` parameter was already known for the key binding.
    OutKnown,
    /// Two values were bound to one parameter for one key binding.
    KeyIntegrity,
    /// A role emitted the same message twice for one key binding.
    Duplicate,
    /// A reception without a matching earlier emission.
    Unsent,
    /// An observation that does not fit its schema or history.
    Malformed,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::InUnknown => "in parameter not known",
            Rule::OutKnown => "out parameter already known",
            Rule::KeyIntegrity => "key integrity",
            Rule::Duplicate => "duplicate emission",
            Rule::Unsent => "received before sent",
            Rule::Malformed => "malformed observation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{rule} at tick {tick} by {role}: {instance} ({detail})")]
pub struct ViabilityViolation {
    pub rule: Rule,
    pub role: String,
    pub tick: u64,
    pub instance: Box<MessageInstance>,
    pub detail: String,
}

fn violation(
    rule: Rule,
    role: &str,
    tick: u64,
    instance: &MessageInstance,
    detail: impl Into<String>,
) -> ViabilityViolation {
    ViabilityViolation {
        rule,
        role: role.to_string(),
        tick,
        instance: Box::new(instance.clone()),
        detail: detail.into(),
    }
}

/// Checks every observation of `v` against `uod`: emissions use only known
/// `in` values, bind fresh `out` values and are not repeated; receptions
/// follow their emission; and no key binding has two values for a
/// parameter.
pub fn check_viable(v: &HistoryVector, uod: &Uod) -> Result<(), ViabilityViolation> {
    for (role, h) in &v.histories {
        let mut last = None;
        for (i, o) in h.events.iter().enumerate() {
            let inst = o.instance.as_ref();
            if last.is_some_and(|t| o.tick <= t) {
                return Err(violation(
                    Rule::Malformed,
                    role,
                    o.tick,
                    inst,
                    "ticks must increase",
                ));
            }
            last = Some(o.tick);
            let Some(schema) = uod.schema(&inst.schema) else {
                return Err(violation(
                    Rule::Malformed,
                    role,
                    o.tick,
                    inst,
                    "unknown message",
                ));
            };
            if inst.sender != schema.sender || inst.receiver != schema.receiver {
                return Err(violation(
                    Rule::Malformed,
                    role,
                    o.tick,
                    inst,
                    "wrong roles",
                ));
            }
            let observer = match o.direction {
                Direction::Emit => &inst.sender,
                Direction::Receive => &inst.receiver,
            };
            if observer != role {
                return Err(violation(
                    Rule::Malformed,
                    role,
                    o.tick,
                    inst,
                    "not a party",
                ));
            }
            if inst.bindings.len() != schema.params.len()
                || schema
                    .params
                    .iter()
                    .any(|p| !inst.bindings.contains_key(&p.name))
            {
                return Err(violation(
                    Rule::Malformed,
                    role,
                    o.tick,
                    inst,
                    "bindings do not match the schema",
                ));
            }
            let expected_keys: Bindings = schema
                .keys()
                .map(|p| (p.name.clone(), inst.bindings[&p.name].clone()))
                .collect();
            if expected_keys != inst.key_binding {
                return Err(violation(
                    Rule::Malformed,
                    role,
                    o.tick,
                    inst,
                    "wrong key binding",
                ));
            }

            match o.direction {
                Direction::Receive => {
                    let sent = v
                        .history(&inst.sender)
                        .map(|s| {
                            s.events
                                .iter()
                                .filter(|e| {
                                    e.direction == Direction::Emit
                                        && e.tick < o.tick
                                        && *e.instance == *inst
                                })
                                .count()
                        })
                        .unwrap_or(0);
                    let received = h.events[..=i]
                        .iter()
                        .filter(|e| e.direction == Direction::Receive && *e.instance == *inst)
                        .count();
                    if received > sent {
                        return Err(violation(
                            Rule::Unsent,
                            role,
                            o.tick,
                            inst,
                            "no earlier emission",
                        ));
                    }
                }
                Direction::Emit => {
                    let prior = &h.events[..i];
                    for p in &schema.params {
                        let value = &inst.bindings[&p.name];
                        let mut knowers = prior.iter().map(|e| e.instance.as_ref()).filter(|k| {
                            related(&k.key_binding, &inst.key_binding)
                                && k.bindings.contains_key(&p.name)
                        });
                        if p.is_in() {
                            if !knowers.any(|k| k.bindings[&p.name] == *value) {
                                return Err(violation(
                                    Rule::InUnknown,
                                    role,
                                    o.tick,
                                    inst,
                                    format!("`{}` not known", p.name),
                                ));
                            }
                        } else if knowers.next().is_some() {
                            return Err(violation(
                                Rule::OutKnown,
                                role,
                                o.tick,
                                inst,
                                format!("`{}` already known", p.name),
                            ));
                        }
                    }
                    if prior.iter().any(|e| {
                        e.direction == Direction::Emit
                            && e.instance.schema == inst.schema
                            && e.instance.key_binding == inst.key_binding
                    }) {
                        return Err(violation(
                            Rule::Duplicate,
                            role,
                            o.tick,
                            inst,
                            "emitted before",
                        ));
                    }
                }
            }
        }
    }
    check_key_integrity(v)
}

/// Checks that across all emissions each key binding has at most one value
/// per parameter.
pub fn check_key_integrity(v: &HistoryVector) -> Result<(), ViabilityViolation> {
    let mut seen: BTreeMap<(&Bindings, &str), &str> = BTreeMap::new();
    for (role, o) in v.observations() {
        if o.direction != Direction::Emit {
            continue;
        }
        let inst = o.instance.as_ref();
        for (p, value) in &inst.bindings {
            match seen.get(&(&inst.key_binding, p.as_str())) {
                Some(prev) if *prev != value.as_str() => {
                    return Err(violation(
                        Rule::KeyIntegrity,
                        role,
                        o.tick,
                        inst,
                        format!("`{p}` bound to both {prev} and {value}"),
                    ));
                }
                Some(_) => {}
                None => {
                    seen.insert((&inst.key_binding, p.as_str()), value.as_str());
                }
            }
        }
    }
    Ok(())
}
