//! Synthesis of alignment protocols.
//!
//! Each commitment is decomposed into alignment instructions `al(a, E, b)`:
//! role `a` must let role `b` learn about event `E`. Instructions are
//! rewritten until every formula is a single message, and each remaining
//! instruction whose learner does not already see the message yields a
//! forwarding schema. The forwarding schemas of one commitment form its
//! alignment protocol; composing those with the input protocol gives the
//! operationalization protocol.

mod build;
mod rewrite;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commitment::{BindError, EventExpr};
use crate::protocol::{Adornment, MessageSchema, Parameter, Uod, UodError, WellFormednessError};

pub use build::{
    compose_operationalization, forwards_for, synthesize_alignment_protocol, DEFAULT_COMPOSITE_NAME,
};
pub use rewrite::{decompose_commitment, reduce, reduce_with_fuel, DEFAULT_FUEL};

/// `al(knower, formula, learner)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlignmentInstruction {
    pub knower: String,
    pub formula: EventExpr,
    pub learner: String,
}

impl AlignmentInstruction {
    pub fn new(knower: impl Into<String>, formula: EventExpr, learner: impl Into<String>) -> Self {
        AlignmentInstruction {
            knower: knower.into(),
            formula,
            learner: learner.into(),
        }
    }
}

impl fmt::Display for AlignmentInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "al({}, {}, {})", self.knower, self.formula, self.learner)
    }
}

/// Which forwarding schemas an atomic instruction produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthesisMode {
    /// Only the original sender forwards, straight to the learner.
    Literal,
    /// Additionally the sender forwards to the knower, and the knower
    /// relays to the learner.
    #[default]
    Complete,
}

impl std::str::FromStr for SynthesisMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(SynthesisMode::Literal),
            "complete" => Ok(SynthesisMode::Complete),
            other => Err(format!("unknown synthesis mode `{other}`")),
        }
    }
}

/// Names the forward of `base` from `forwarder` to `recipient`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ForwardingName {
    pub forwarder: String,
    pub recipient: String,
    pub base: String,
}

impl ForwardingName {
    pub fn new(
        forwarder: impl Into<String>,
        recipient: impl Into<String>,
        base: impl Into<String>,
    ) -> Self {
        ForwardingName {
            forwarder: forwarder.into(),
            recipient: recipient.into(),
            base: base.into(),
        }
    }

    /// `fwd` + forwarder + recipient + capitalized base name.
    pub fn name(&self) -> String {
        let mut chars = self.base.chars();
        let capitalized: String = match chars.next() {
            Some(c) => c.to_uppercase().chain(chars).collect(),
            None => String::new(),
        };
        format!("fwd{}{}{}", self.forwarder, self.recipient, capitalized)
    }

    pub fn id_param(&self) -> String {
        format!("{}ID", self.name())
    }

    /// The forwarding schema for `base`: every parameter of the forwarded
    /// message becomes `in` (keys stay keys) and a fresh `out` identifier is
    /// appended.
    pub fn schema(&self, base: &MessageSchema) -> MessageSchema {
        let mut params: Vec<Parameter> = base
            .params
            .iter()
            .map(|p| Parameter::new(p.name.clone(), Adornment::In, p.key))
            .collect();
        params.push(Parameter::new(self.id_param(), Adornment::Out, false));
        MessageSchema {
            name: self.name(),
            sender: self.forwarder.clone(),
            receiver: self.recipient.clone(),
            params,
        }
    }
}

/// Maps forwarding schema names back to what they forward.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardingRegistry {
    entries: BTreeMap<String, ForwardingName>,
}

impl ForwardingRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, f: ForwardingName) {
        self.entries.insert(f.name(), f);
    }

    pub fn get(&self, schema: &str) -> Option<&ForwardingName> {
        self.entries.get(schema)
    }

    pub fn is_forward(&self, schema: &str) -> bool {
        self.entries.contains_key(schema)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Recognizes forwarding schemas in `uod` by their name and shape.
    pub fn from_uod(uod: &Uod) -> Self {
        let mut registry = ForwardingRegistry::new();
        for s in &uod.schemas {
            for base in &uod.schemas {
                if base.name == s.name {
                    continue;
                }
                let f = ForwardingName::new(&s.sender, &s.receiver, &base.name);
                if f.name() == s.name && f.schema(base) == *s {
                    registry.insert(f);
                    break;
                }
            }
        }
        registry
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Uod(#[from] UodError),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error("no schema for message `{0}` in the protocol")]
    UnknownMessage(String),
    #[error("synthesized name `{0}` collides with an existing name")]
    NameClash(String),
    #[error("rewriting did not finish within {0} steps")]
    FuelExhausted(usize),
    #[error("synthesized protocol is ill-formed: {0}")]
    WellFormedness(#[from] WellFormednessError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forwarding_names() {
        let f = ForwardingName::new("S", "E", "ship");
        assert_eq!(f.name(), "fwdSEShip");
        assert_eq!(f.id_param(), "fwdSEShipID");
        assert_eq!(
            ForwardingName::new("C", "M", "payEscrow").name(),
            "fwdCMPayEscrow"
        );
    }

    #[test]
    fn forward_schema_shape() {
        let base = MessageSchema {
            name: "payEscrow".into(),
            sender: "C".into(),
            receiver: "E".into(),
            params: vec![
                Parameter::new("oID", Adornment::In, true),
                Parameter::new("pID", Adornment::Out, false),
            ],
        };
        let s = ForwardingName::new("C", "M", "payEscrow").schema(&base);
        assert_eq!(
            s.to_string(),
            "C -> M: fwdCMPayEscrow[in oID, in pID, out fwdCMPayEscrowID]"
        );
        assert!(s.params[0].key);
    }
}
