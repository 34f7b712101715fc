use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{MessageSchema, Protocol, Reference};

/// Named protocols available for resolving references.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    protocols: BTreeMap<String, Protocol>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a protocol, returning the one it replaced.
    pub fn insert(&mut self, protocol: Protocol) -> Option<Protocol> {
        self.protocols.insert(protocol.name.clone(), protocol)
    }

    pub fn get(&self, name: &str) -> Option<&Protocol> {
        self.protocols.get(name)
    }

    pub fn len(&self) -> usize {
        self.protocols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.protocols.is_empty()
    }
}

impl FromIterator<Protocol> for Registry {
    fn from_iter<T: IntoIterator<Item = Protocol>>(iter: T) -> Self {
        let mut r = Registry::new();
        for p in iter {
            r.insert(p);
        }
        r
    }
}

/// Universe of discourse: a protocol's roles and every message schema it
/// reaches through references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Uod {
    pub roles: Vec<String>,
    pub schemas: Vec<MessageSchema>,
}

impl Uod {
    pub fn schema(&self, name: &str) -> Option<&MessageSchema> {
        self.schemas.iter().find(|s| s.name == name)
    }

    pub fn has_role(&self, role: &str) -> bool {
        self.roles.iter().any(|r| r == role)
    }

    pub fn schema_names(&self) -> impl Iterator<Item = &str> {
        self.schemas.iter().map(|s| s.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UodError {
    #[error("unresolved protocol reference `{0}`")]
    UnresolvedReference(String),
    #[error("cyclic protocol references: {}", .0.join(" -> "))]
    CyclicReference(Vec<String>),
    #[error("reference {reference}: expected {expected} {what} arguments, found {found}")]
    ArityMismatch {
        reference: String,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(
        "reference {reference}: argument `{argument}` is adorned differently from `{declared}`"
    )]
    AdornmentMismatch {
        reference: String,
        argument: String,
        declared: String,
    },
    #[error("message schema `{0}` is defined inconsistently by two references")]
    ConflictingSchema(String),
}

struct Binding<'a> {
    roles: HashMap<&'a str, String>,
    params: HashMap<&'a str, String>,
}

impl Binding<'_> {
    fn role(&self, r: &str) -> String {
        self.roles.get(r).cloned().unwrap_or_else(|| r.to_string())
    }

    fn param(&self, p: &str) -> String {
        self.params.get(p).cloned().unwrap_or_else(|| p.to_string())
    }
}

/// Computes the universe of discourse of `p`, substituting reference
/// arguments positionally into referenced protocols.
pub fn uod(p: &Protocol, registry: &Registry) -> Result<Uod, UodError> {
    let mut schemas: Vec<MessageSchema> = Vec::new();
    let identity = Binding {
        roles: HashMap::new(),
        params: HashMap::new(),
    };
    let mut stack = vec![p.name.clone()];
    collect(p, &identity, registry, &mut stack, &mut schemas)?;

    let mut roles: Vec<String> = p.all_roles().cloned().collect();
    for s in &schemas {
        for r in [&s.sender, &s.receiver] {
            if !roles.contains(r) {
                roles.push(r.clone());
            }
        }
    }
    Ok(Uod { roles, schemas })
}

fn collect(
    p: &Protocol,
    binding: &Binding<'_>,
    registry: &Registry,
    stack: &mut Vec<String>,
    out: &mut Vec<MessageSchema>,
) -> Result<(), UodError> {
    for reference in &p.references {
        match reference {
            Reference::Schema(s) => {
                let schema = MessageSchema {
                    name: s.name.clone(),
                    sender: binding.role(&s.sender),
                    receiver: binding.role(&s.receiver),
                    params: s
                        .params
                        .iter()
                        .map(|q| {
                            let mut q = q.clone();
                            q.name = binding.param(&q.name);
                            q
                        })
                        .collect(),
                };
                match out.iter().find(|o| o.name == schema.name) {
                    Some(existing) if *existing == schema => {}
                    Some(_) => return Err(UodError::ConflictingSchema(schema.name)),
                    None => out.push(schema),
                }
            }
            Reference::Protocol(r) => {
                if stack.contains(&r.name) {
                    let mut cycle = stack.clone();
                    cycle.push(r.name.clone());
                    return Err(UodError::CyclicReference(cycle));
                }
                let target = registry
                    .get(&r.name)
                    .ok_or_else(|| UodError::UnresolvedReference(r.name.clone()))?;
                if r.roles.len() != target.roles.len() {
                    return Err(UodError::ArityMismatch {
                        reference: r.name.clone(),
                        what: "role",
                        expected: target.roles.len(),
                        found: r.roles.len(),
                    });
                }
                if r.params.len() != target.params.len() {
                    return Err(UodError::ArityMismatch {
                        reference: r.name.clone(),
                        what: "parameter",
                        expected: target.params.len(),
                        found: r.params.len(),
                    });
                }
                let mut inner = Binding {
                    roles: HashMap::new(),
                    params: HashMap::new(),
                };
                for (declared, arg) in target.roles.iter().zip(&r.roles) {
                    inner.roles.insert(declared.as_str(), binding.role(arg));
                }
                for (declared, arg) in target.params.iter().zip(&r.params) {
                    if declared.adornment != arg.adornment {
                        return Err(UodError::AdornmentMismatch {
                            reference: r.name.clone(),
                            argument: arg.name.clone(),
                            declared: declared.name.clone(),
                        });
                    }
                    inner
                        .params
                        .insert(declared.name.as_str(), binding.param(&arg.name));
                }
                stack.push(r.name.clone());
                collect(target, &inner, registry, stack, out)?;
                stack.pop();
            }
        }
    }
    Ok(())
}
