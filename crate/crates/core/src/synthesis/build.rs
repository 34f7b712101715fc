use std::collections::{BTreeMap, BTreeSet};

use tracing::debug;

use super::{
    decompose_commitment, reduce, AlignmentInstruction, ForwardingName, SynthesisError,
    SynthesisMode,
};
use crate::commitment::{bind, CommitmentSpec, EventExpr};
use crate::protocol::{
    uod, Adornment, MessageSchema, Parameter, Protocol, ProtocolReference, Reference, Registry, Uod,
};

pub const DEFAULT_COMPOSITE_NAME: &str = "OperationalizationProtocol";

/// Forwarding schemas needed so the learner of an atomic instruction sees
/// the message.
pub fn forwards_for(
    instr: &AlignmentInstruction,
    uod: &Uod,
    mode: SynthesisMode,
) -> Result<Vec<MessageSchema>, SynthesisError> {
    let EventExpr::Base(m) = &instr.formula else {
        return Ok(Vec::new());
    };
    let base = uod
        .schema(m)
        .ok_or_else(|| SynthesisError::UnknownMessage(m.clone()))?;
    let (a, b) = (&instr.knower, &instr.learner);
    let (s, r) = (&base.sender, &base.receiver);
    let mut names = Vec::new();
    if b != s && b != r {
        names.push(ForwardingName::new(s, b, m));
    }
    if mode == SynthesisMode::Complete {
        if a != s && a != r {
            names.push(ForwardingName::new(s, a, m));
        }
        if b != s && b != r && a != s && a != b {
            names.push(ForwardingName::new(a, b, m));
        }
    }
    Ok(names.iter().map(|f| f.schema(base)).collect())
}

/// Builds the alignment protocol of `c` over `input`, named after `c` with
/// an `Al` suffix. It is empty when no forwarding is needed.
pub fn synthesize_alignment_protocol(
    c: &CommitmentSpec,
    input: &Protocol,
    registry: &Registry,
    mode: SynthesisMode,
) -> Result<Protocol, SynthesisError> {
    let u = uod(input, registry)?;
    bind(c, &u)?;

    let mut schemas: BTreeMap<String, MessageSchema> = BTreeMap::new();
    let mut origins: BTreeMap<String, ForwardingName> = BTreeMap::new();
    for instr in decompose_commitment(c) {
        for atomic in reduce(&instr)? {
            for s in forwards_for(&atomic, &u, mode)? {
                let EventExpr::Base(m) = &atomic.formula else {
                    unreachable!("reduce yields atomic instructions")
                };
                let origin = ForwardingName::new(&s.sender, &s.receiver, m);
                if let Some(previous) = origins.get(&s.name) {
                    if *previous != origin {
                        return Err(SynthesisError::NameClash(s.name));
                    }
                }
                debug!(instruction = %atomic, schema = %s.name, "forward");
                origins.insert(s.name.clone(), origin);
                schemas.insert(s.name.clone(), s);
            }
        }
    }

    let taken: BTreeSet<&str> = u
        .schemas
        .iter()
        .flat_map(|s| s.params.iter().map(|p| p.name.as_str()))
        .chain(input.all_params().map(|p| p.name.as_str()))
        .collect();
    for s in schemas.values() {
        if u.schema(&s.name).is_some() {
            return Err(SynthesisError::NameClash(s.name.clone()));
        }
        let id = &s.params.last().expect("forwards carry an id").name;
        if taken.contains(id.as_str()) {
            return Err(SynthesisError::NameClash(id.clone()));
        }
    }

    let mut al = Protocol::new(format!("{}Al", c.name));
    let roles: BTreeSet<&String> = schemas
        .values()
        .flat_map(|s| [&s.sender, &s.receiver])
        .collect();
    al.roles = roles.into_iter().cloned().collect();

    let mut ins: BTreeMap<&str, &Parameter> = BTreeMap::new();
    for s in schemas.values() {
        for p in s.params.iter().filter(|p| p.is_in()) {
            ins.entry(&p.name).or_insert(p);
        }
    }
    let declared: Vec<&str> = input
        .all_params()
        .map(|p| p.name.as_str())
        .chain(
            u.schemas
                .iter()
                .flat_map(|s| s.params.iter().map(|p| p.name.as_str())),
        )
        .collect();
    let mut order: Vec<&str> = Vec::new();
    for name in declared {
        if ins.contains_key(name) && !order.contains(&name) {
            order.push(name);
        }
    }
    order.sort_by_key(|n| !ins[n].key);
    al.params = order
        .into_iter()
        .map(|n| Parameter::new(n, Adornment::In, ins[n].key))
        .collect();
    for s in schemas.values() {
        let id = s.params.last().expect("forwards carry an id");
        al.params.push(id.clone());
    }
    al.references = schemas.into_values().map(Reference::Schema).collect();
    al.validate()?;
    Ok(al)
}

fn reference_to(p: &Protocol) -> Reference {
    Reference::Protocol(ProtocolReference {
        name: p.name.clone(),
        roles: p.roles.clone(),
        params: p.params.clone(),
    })
}

/// Composes `input` with its alignment protocols. Aligners with fewer than
/// two roles contribute nothing and are left out.
pub fn compose_operationalization(
    input: &Protocol,
    aligners: &[Protocol],
    name: Option<&str>,
) -> Result<Protocol, SynthesisError> {
    let mut composite = Protocol::new(name.unwrap_or(DEFAULT_COMPOSITE_NAME));
    composite.roles = input.roles.clone();
    composite.private_roles = input.private_roles.clone();
    composite.params = input.params.clone();
    composite.private_params = input.private_params.clone();
    composite.references.push(reference_to(input));

    for al in aligners.iter().filter(|al| al.roles.len() >= 2) {
        if al.name == input.name || composite.references.iter().any(|r| r.name() == al.name) {
            return Err(SynthesisError::NameClash(al.name.clone()));
        }
        for p in al.params.iter().filter(|p| p.is_out()) {
            if input.param(&p.name).is_some() {
                return Err(SynthesisError::NameClash(p.name.clone()));
            }
            if composite.param(&p.name).is_none() {
                composite
                    .params
                    .push(Parameter::new(p.name.clone(), Adornment::Out, false));
            }
        }
        composite.references.push(reference_to(al));
    }
    composite.validate()?;
    Ok(composite)
}
