use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{related, Bindings, Direction, HistoryVector, MessageInstance};
use crate::protocol::{MessageSchema, Uod};

/// Values a role may choose for `out` parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValuePool {
    /// Values for `out` key parameters, shared by every role.
    pub key_values: Vec<String>,
    /// Distinct values per role for each non-key `out` parameter.
    pub values_per_param: usize,
}

impl Default for ValuePool {
    fn default() -> Self {
        ValuePool {
            key_values: vec!["1".to_string()],
            values_per_param: 1,
        }
    }
}

impl ValuePool {
    /// Values `role` may bind to `param`. Different roles never pick the
    /// same value, so conflicting bindings are visible.
    pub fn values(&self, param: &str, role: &str) -> Vec<String> {
        if self.values_per_param <= 1 {
            vec![format!("{param}.{role}")]
        } else {
            (1..=self.values_per_param)
                .map(|i| format!("{param}.{role}{i}"))
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delivery {
    /// Messages on one channel arrive in the order they were sent.
    Fifo,
    /// Any in-flight message may arrive next.
    #[default]
    #[serde(alias = "any")]
    Unordered,
}

impl std::str::FromStr for Delivery {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fifo" => Ok(Delivery::Fifo),
            "any" | "unordered" => Ok(Delivery::Unordered),
            other => Err(format!("unknown delivery mode `{other}`")),
        }
    }
}

fn product(choices: Vec<(String, Vec<String>)>) -> Vec<Bindings> {
    let mut out = vec![Bindings::new()];
    for (name, values) in choices {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for b in &out {
            for v in &values {
                let mut b = b.clone();
                b.insert(name.clone(), v.clone());
                next.push(b);
            }
        }
        out = next;
    }
    out
}

/// Every instance `role` could emit next without breaking its local
/// viability conditions. Key integrity across roles is not checked here.
pub fn enabled_emissions(
    v: &HistoryVector,
    uod: &Uod,
    role: &str,
    pool: &ValuePool,
) -> Vec<MessageInstance> {
    let Some(history) = v.history(role) else {
        return Vec::new();
    };
    let known: Vec<&MessageInstance> = history.known().collect();
    let mut out = BTreeSet::new();
    for schema in uod.schemas.iter().filter(|s| s.sender == role) {
        for inst in schema_emissions(schema, history, &known, role, pool) {
            out.insert(inst);
        }
    }
    out.into_iter().collect()
}

fn schema_emissions(
    schema: &MessageSchema,
    history: &super::History,
    known: &[&MessageInstance],
    role: &str,
    pool: &ValuePool,
) -> Vec<MessageInstance> {
    let in_keys: Vec<&str> = schema
        .keys()
        .filter(|p| p.is_in())
        .map(|p| p.name.as_str())
        .collect();
    let out_keys: Vec<(String, Vec<String>)> = schema
        .keys()
        .filter(|p| p.is_out())
        .map(|p| (p.name.clone(), pool.key_values.clone()))
        .collect();

    let in_key_bindings: BTreeSet<Bindings> = if in_keys.is_empty() {
        BTreeSet::from([Bindings::new()])
    } else {
        known
            .iter()
            .filter(|k| in_keys.iter().all(|p| k.bindings.contains_key(*p)))
            .map(|k| {
                in_keys
                    .iter()
                    .map(|p| (p.to_string(), k.bindings[*p].clone()))
                    .collect()
            })
            .collect()
    };

    let mut result = Vec::new();
    for in_part in in_key_bindings {
        for out_part in product(out_keys.clone()) {
            let mut key_binding = in_part.clone();
            key_binding.extend(out_part);

            let emitted = history.events.iter().any(|o| {
                o.direction == Direction::Emit
                    && o.instance.schema == schema.name
                    && o.instance.key_binding == key_binding
            });
            if emitted {
                continue;
            }
            let relevant: Vec<&MessageInstance> = known
                .iter()
                .copied()
                .filter(|k| related(&k.key_binding, &key_binding))
                .collect();

            let mut choices: Vec<(String, Vec<String>)> = Vec::new();
            let mut blocked = false;
            for p in schema.params.iter().filter(|p| !p.key || p.is_out()) {
                let values: BTreeSet<&String> = relevant
                    .iter()
                    .filter_map(|k| k.bindings.get(&p.name))
                    .collect();
                if p.is_in() {
                    if values.is_empty() {
                        blocked = true;
                        break;
                    }
                    choices.push((p.name.clone(), values.into_iter().cloned().collect()));
                } else if !values.is_empty() {
                    blocked = true;
                    break;
                } else if !p.key {
                    choices.push((p.name.clone(), pool.values(&p.name, role)));
                }
            }
            if blocked {
                continue;
            }
            for mut bindings in product(choices) {
                bindings.extend(key_binding.clone());
                result.push(MessageInstance::new(schema, bindings));
            }
        }
    }
    result
}

/// In-flight instances that may be received next.
pub fn deliverable(v: &HistoryVector, delivery: Delivery) -> Vec<Arc<MessageInstance>> {
    let flying = v.in_flight();
    match delivery {
        Delivery::Unordered => flying,
        Delivery::Fifo => {
            let mut heads: BTreeMap<(&str, &str), Arc<MessageInstance>> = BTreeMap::new();
            for i in &flying {
                heads
                    .entry((i.sender.as_str(), i.receiver.as_str()))
                    .or_insert_with(|| i.clone());
            }
            let heads: Vec<Arc<MessageInstance>> = heads.into_values().collect();
            flying
                .into_iter()
                .filter(|i| heads.iter().any(|h| Arc::ptr_eq(h, i)))
                .collect()
        }
    }
}
