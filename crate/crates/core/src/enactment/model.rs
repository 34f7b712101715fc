use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Bindings, HistoryVector};
use crate::synthesis::ForwardingRegistry;

/// A message a role knows about, under the name of the original message,
/// with the tick at which the role first knew it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelEntry {
    pub schema: String,
    pub bindings: Bindings,
    pub key_binding: Bindings,
    pub time: u64,
}

/// A role's view of an enactment with forwards resolved.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Model {
    pub role: String,
    pub entries: Vec<ModelEntry>,
}

impl Model {
    pub fn named<'a>(&'a self, schema: &'a str) -> impl Iterator<Item = &'a ModelEntry> + 'a {
        self.entries.iter().filter(move |e| e.schema == schema)
    }

    /// The entries known at or before `now`.
    pub fn at(&self, now: u64) -> Model {
        Model {
            role: self.role.clone(),
            entries: self
                .entries
                .iter()
                .filter(|e| e.time <= now)
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("no role `{0}` in this vector")]
    UnknownRole(String),
    #[error("`{0}` looks like a forward but is not a known one")]
    UnknownForwardName(String),
}

fn looks_forwarded(name: &str) -> bool {
    name.strip_prefix("fwd")
        .and_then(|rest| rest.chars().next())
        .is_some_and(char::is_uppercase)
}

/// Projects `role`'s history: forwards are renamed to what they forward and
/// lose their identifier, and each underlying instance keeps the earliest
/// tick at which the role saw it.
pub fn project_model(
    v: &HistoryVector,
    role: &str,
    fwd: &ForwardingRegistry,
) -> Result<Model, ModelError> {
    let h = v
        .history(role)
        .ok_or_else(|| ModelError::UnknownRole(role.to_string()))?;
    let mut first: BTreeMap<(String, Bindings), (Bindings, u64)> = BTreeMap::new();
    for o in &h.events {
        let inst = o.instance.as_ref();
        let (schema, bindings) = match fwd.get(&inst.schema) {
            Some(f) => {
                let mut b = inst.bindings.clone();
                b.remove(&f.id_param());
                (f.base.clone(), b)
            }
            None if looks_forwarded(&inst.schema) => {
                return Err(ModelError::UnknownForwardName(inst.schema.clone()))
            }
            None => (inst.schema.clone(), inst.bindings.clone()),
        };
        first
            .entry((schema, bindings))
            .and_modify(|(_, t)| *t = (*t).min(o.tick))
            .or_insert((inst.key_binding.clone(), o.tick));
    }
    let mut entries: Vec<ModelEntry> = first
        .into_iter()
        .map(|((schema, bindings), (key_binding, time))| ModelEntry {
            schema,
            bindings,
            key_binding,
            time,
        })
        .collect();
    entries.sort_by(|a, b| (a.time, &a.schema, &a.bindings).cmp(&(b.time, &b.schema, &b.bindings)));
    Ok(Model {
        role: role.to_string(),
        entries,
    })
}
