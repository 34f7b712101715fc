//! Information protocols: abstract syntax, well-formedness, surface syntax
//! and the universe of discourse.
//!
//! A protocol declares roles and adorned parameters and references message
//! schemas or other protocols. Adornments drive enactment: an `in` parameter
//! must be known before a message is emitted, an `out` parameter is bound by
//! the emission. Protocol key parameters are keys of every message they
//! appear in.

mod parse;
mod print;
mod uod;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::syntax::ParseError;

pub use parse::{parse_protocol, parse_protocols};
pub use print::print_protocol;
pub use uod::{uod, Registry, Uod, UodError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adornment {
    In,
    Out,
}

impl fmt::Display for Adornment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Adornment::In => "in",
            Adornment::Out => "out",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub adornment: Adornment,
    pub key: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, adornment: Adornment, key: bool) -> Self {
        Parameter {
            name: name.into(),
            adornment,
            key,
        }
    }

    pub fn is_in(&self) -> bool {
        self.adornment == Adornment::In
    }

    pub fn is_out(&self) -> bool {
        self.adornment == Adornment::Out
    }
}

/// An atomic two-role protocol `sender -> receiver: name[params]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MessageSchema {
    pub name: String,
    pub sender: String,
    pub receiver: String,
    pub params: Vec<Parameter>,
}

impl MessageSchema {
    pub fn keys(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter().filter(|p| p.key)
    }

    pub fn key_names(&self) -> Vec<String> {
        self.keys().map(|p| p.name.clone()).collect()
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// A use of another protocol with positional role and parameter arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProtocolReference {
    pub name: String,
    pub roles: Vec<String>,
    pub params: Vec<Parameter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reference {
    Schema(MessageSchema),
    Protocol(ProtocolReference),
}

impl Reference {
    pub fn name(&self) -> &str {
        match self {
            Reference::Schema(s) => &s.name,
            Reference::Protocol(r) => &r.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Protocol {
    pub name: String,
    pub roles: Vec<String>,
    pub private_roles: Vec<String>,
    pub params: Vec<Parameter>,
    pub private_params: Vec<Parameter>,
    pub references: Vec<Reference>,
}

/// Violations of the structural conditions on protocols.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WellFormednessError {
    #[error("protocol {protocol}: role `{role}` declared twice")]
    DuplicateRole { protocol: String, role: String },
    #[error("protocol {protocol}: parameter `{param}` declared twice")]
    DuplicateParameter { protocol: String, param: String },
    #[error("protocol {protocol}: reference name `{name}` used twice")]
    DuplicateReference { protocol: String, name: String },
    #[error("schema {schema}: sender equals receiver ({role})")]
    SenderIsReceiver { schema: String, role: String },
    #[error("{reference}: role `{role}` is not declared by {protocol}")]
    UndeclaredRole {
        protocol: String,
        reference: String,
        role: String,
    },
    #[error("{reference}: parameter `{param}` is not declared by {protocol}")]
    UndeclaredParameter {
        protocol: String,
        reference: String,
        param: String,
    },
    #[error("{reference}: parameter `{param}` appears twice")]
    RepeatedArgument { reference: String, param: String },
    #[error("{reference}: `{param}` is marked key but is not a key of {protocol}")]
    NotAProtocolKey {
        protocol: String,
        reference: String,
        param: String,
    },
    #[error("schema {schema}: no key parameter")]
    MissingKey { schema: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("ill-formed protocol: {0}")]
    WellFormedness(#[from] WellFormednessError),
}

impl Protocol {
    pub fn new(name: impl Into<String>) -> Self {
        Protocol {
            name: name.into(),
            roles: Vec::new(),
            private_roles: Vec::new(),
            params: Vec::new(),
            private_params: Vec::new(),
            references: Vec::new(),
        }
    }

    pub fn key_names(&self) -> BTreeSet<String> {
        self.params
            .iter()
            .filter(|p| p.key)
            .map(|p| p.name.clone())
            .collect()
    }

    pub fn all_roles(&self) -> impl Iterator<Item = &String> {
        self.roles.iter().chain(self.private_roles.iter())
    }

    pub fn all_params(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter().chain(self.private_params.iter())
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.all_params().find(|p| p.name == name)
    }

    pub fn schemas(&self) -> impl Iterator<Item = &MessageSchema> {
        self.references.iter().filter_map(|r| match r {
            Reference::Schema(s) => Some(s),
            Reference::Protocol(_) => None,
        })
    }

    pub fn protocol_references(&self) -> impl Iterator<Item = &ProtocolReference> {
        self.references.iter().filter_map(|r| match r {
            Reference::Protocol(p) => Some(p),
            Reference::Schema(_) => None,
        })
    }

    /// Marks every schema or reference argument that is a protocol key as a
    /// key. Explicit `key` markings on anything else are left for
    /// [`Protocol::validate`] to reject.
    pub fn inherit_keys(&mut self) {
        let keys = self.key_names();
        for reference in &mut self.references {
            let params = match reference {
                Reference::Schema(s) => &mut s.params,
                Reference::Protocol(r) => &mut r.params,
            };
            for p in params {
                if keys.contains(&p.name) {
                    p.key = true;
                }
            }
        }
    }

    /// Checks the structural conditions every accepted protocol satisfies.
    pub fn validate(&self) -> Result<(), WellFormednessError> {
        let mut roles = BTreeSet::new();
        for role in self.all_roles() {
            if !roles.insert(role.as_str()) {
                return Err(WellFormednessError::DuplicateRole {
                    protocol: self.name.clone(),
                    role: role.clone(),
                });
            }
        }
        let mut params = BTreeSet::new();
        for p in self.all_params() {
            if !params.insert(p.name.as_str()) {
                return Err(WellFormednessError::DuplicateParameter {
                    protocol: self.name.clone(),
                    param: p.name.clone(),
                });
            }
        }
        let keys = self.key_names();
        let mut names = BTreeSet::new();
        for reference in &self.references {
            if !names.insert(reference.name()) {
                return Err(WellFormednessError::DuplicateReference {
                    protocol: self.name.clone(),
                    name: reference.name().to_string(),
                });
            }
            let (ref_roles, ref_params): (Vec<&String>, &[Parameter]) = match reference {
                Reference::Schema(s) => {
                    if s.sender == s.receiver {
                        return Err(WellFormednessError::SenderIsReceiver {
                            schema: s.name.clone(),
                            role: s.sender.clone(),
                        });
                    }
                    (vec![&s.sender, &s.receiver], &s.params)
                }
                Reference::Protocol(r) => (r.roles.iter().collect(), &r.params),
            };
            for role in ref_roles {
                if !roles.contains(role.as_str()) {
                    return Err(WellFormednessError::UndeclaredRole {
                        protocol: self.name.clone(),
                        reference: reference.name().to_string(),
                        role: role.clone(),
                    });
                }
            }
            let mut seen = BTreeSet::new();
            for p in ref_params {
                if !seen.insert(p.name.as_str()) {
                    return Err(WellFormednessError::RepeatedArgument {
                        reference: reference.name().to_string(),
                        param: p.name.clone(),
                    });
                }
                if !params.contains(p.name.as_str()) {
                    return Err(WellFormednessError::UndeclaredParameter {
                        protocol: self.name.clone(),
                        reference: reference.name().to_string(),
                        param: p.name.clone(),
                    });
                }
                if p.key != keys.contains(&p.name) {
                    return Err(WellFormednessError::NotAProtocolKey {
                        protocol: self.name.clone(),
                        reference: reference.name().to_string(),
                        param: p.name.clone(),
                    });
                }
            }
            if let Reference::Schema(s) = reference {
                if s.keys().next().is_none() {
                    return Err(WellFormednessError::MissingKey {
                        schema: s.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Copy with roles, parameters and references sorted, used to compare
    /// protocols independently of declaration order.
    pub fn canonical(&self) -> Protocol {
        fn sort_params(params: &mut [Parameter]) {
            params.sort_by(|a, b| {
                (!a.key, a.adornment, &a.name).cmp(&(!b.key, b.adornment, &b.name))
            });
        }
        let mut p = self.clone();
        p.roles.sort();
        p.private_roles.sort();
        sort_params(&mut p.params);
        sort_params(&mut p.private_params);
        for reference in &mut p.references {
            if let Reference::Schema(s) = reference {
                sort_params(&mut s.params);
            }
        }
        p.references.sort_by(|a, b| a.name().cmp(b.name()));
        p
    }
}
