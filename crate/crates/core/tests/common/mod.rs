#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use tosca::commitment::{
    parse_commitment, print_commitments, CommitmentRegistry, CommitmentSpec, EventExpr, TimeRef,
};
use tosca::enactment::{check_viable, Bindings, Delivery, HistoryVector, Model, ModelEntry};
use tosca::protocol::{
    parse_protocol, print_protocol, Adornment, MessageSchema, Parameter, Protocol, Reference,
    Registry,
};
use tosca::semantics::{eval, EvaluationContext};
use tosca::sim::{load_commitments, load_protocols, simulate, Policy, Scenario, Setup};
use tosca::synthesis::{
    compose_operationalization, decompose_commitment, reduce_with_fuel,
    synthesize_alignment_protocol, SynthesisMode,
};
use tosca::verify::Subject;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn protocols(names: &[&str]) -> Vec<Protocol> {
    load_protocols(&names.iter().map(|n| fixture(n)).collect::<Vec<_>>())
        .expect("fixture protocols load")
}

pub fn commitments(names: &[&str]) -> Vec<CommitmentSpec> {
    load_commitments(&names.iter().map(|n| fixture(n)).collect::<Vec<_>>())
        .expect("fixture commitments load")
}

pub fn protocol(name: &str) -> Protocol {
    protocols(&[name]).remove(0)
}

/// The input protocol, its composition with one aligner per commitment,
/// and subjects for both.
pub struct Composition {
    pub input: Protocol,
    pub aligners: Vec<Protocol>,
    pub composite: Protocol,
    pub input_subject: Subject,
    pub subject: Subject,
}

pub fn compose(input: &Protocol, cs: &[CommitmentSpec], modes: &[SynthesisMode]) -> Composition {
    let registry: Registry = [input.clone()].into_iter().collect();
    let aligners: Vec<Protocol> = cs
        .iter()
        .zip(modes.iter().cycle())
        .map(|(c, m)| {
            synthesize_alignment_protocol(c, input, &registry, *m).expect("synthesis succeeds")
        })
        .collect();
    let composite =
        compose_operationalization(input, &aligners, None).expect("composition succeeds");
    let mut full = registry.clone();
    for a in &aligners {
        full.insert(a.clone());
    }
    Composition {
        input: input.clone(),
        input_subject: Subject::new(input, &registry).expect("input resolves"),
        subject: Subject::new(&composite, &full).expect("composite resolves"),
        aligners,
        composite,
    }
}

pub fn schemas(p: &Protocol) -> Vec<&MessageSchema> {
    p.references
        .iter()
        .filter_map(|r| match r {
            Reference::Schema(s) => Some(s),
            Reference::Protocol(_) => None,
        })
        .collect()
}

/// `name[in a, out b, ...]` with parameters in declaration order.
pub fn signature(s: &MessageSchema) -> String {
    let ps: Vec<String> = s
        .params
        .iter()
        .map(|p| format!("{} {}", p.adornment, p.name))
        .collect();
    format!("{}[{}]", s.name, ps.join(", "))
}

// ---------------------------------------------------------------------
// Random protocols

#[derive(Debug, Clone)]
pub struct ProtocolPlan {
    roles: usize,
    params: usize,
    private_role: bool,
    private_param: bool,
    protocol_out: Vec<bool>,
    schemas: Vec<SchemaPlan>,
}

/// Sender, receiver offset, parameters with their `out` flag, and whether
/// the key is `out`.
type SchemaPlan = (usize, usize, Vec<(usize, bool)>, bool);

pub fn protocol_plan() -> impl Strategy<Value = ProtocolPlan> {
    (2usize..5, 1usize..5, any::<bool>(), any::<bool>())
        .prop_flat_map(|(roles, params, private_role, private_param)| {
            let schema = (
                0..roles,
                1..roles,
                prop::collection::vec((0..params, any::<bool>()), 0..4),
                any::<bool>(),
            );
            (
                Just(roles),
                Just(params),
                Just(private_role),
                Just(private_param),
                prop::collection::vec(any::<bool>(), params),
                prop::collection::vec(schema, 1..6),
            )
        })
        .prop_map(
            |(roles, params, private_role, private_param, protocol_out, schemas)| ProtocolPlan {
                roles,
                params,
                private_role,
                private_param,
                protocol_out,
                schemas,
            },
        )
}

pub fn build_protocol(plan: &ProtocolPlan) -> Protocol {
    let role = |i: usize| format!("R{i}");
    let mut p = Protocol::new("Generated");
    p.roles = (0..plan.roles).map(role).collect();
    if plan.private_role {
        p.private_roles.push("Hidden".into());
    }
    p.params.push(Parameter::new("k", Adornment::Out, true));
    for (i, out) in plan.protocol_out.iter().enumerate().take(plan.params) {
        let a = if *out { Adornment::Out } else { Adornment::In };
        p.params.push(Parameter::new(format!("p{i}"), a, false));
    }
    if plan.private_param {
        p.private_params
            .push(Parameter::new("scratch", Adornment::Out, false));
    }
    for (n, (s, offset, ps, key_out)) in plan.schemas.iter().enumerate() {
        let sender = *s % plan.roles;
        let receiver = (sender + offset) % plan.roles;
        let mut params = vec![Parameter::new(
            "k",
            if *key_out {
                Adornment::Out
            } else {
                Adornment::In
            },
            true,
        )];
        let mut seen = BTreeSet::new();
        for (i, out) in ps {
            if seen.insert(*i) {
                let a = if *out { Adornment::Out } else { Adornment::In };
                params.push(Parameter::new(format!("p{i}"), a, false));
            }
        }
        p.references.push(Reference::Schema(MessageSchema {
            name: format!("m{n}"),
            sender: role(sender),
            receiver: role(receiver),
            params,
        }));
    }
    p
}

pub fn check_protocol_round_trip(plan: &ProtocolPlan) -> Result<(), TestCaseError> {
    let p = build_protocol(plan);
    p.validate()
        .map_err(|e| TestCaseError::fail(format!("generator produced {e}")))?;
    let text = print_protocol(&p);
    let q = parse_protocol(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
    prop_assert_eq!(&q, &p);
    prop_assert_eq!(print_protocol(&q), text);
    Ok(())
}

// ---------------------------------------------------------------------
// Random formulas

pub const NAMES: [&str; 4] = ["quote", "pay", "requestShip", "ship"];

fn name() -> impl Strategy<Value = String> {
    prop::sample::select(NAMES.to_vec()).prop_map(String::from)
}

fn bound(lower: bool) -> impl Strategy<Value = TimeRef> {
    let fallback = if lower {
        TimeRef::Absolute(0)
    } else {
        TimeRef::Infinity
    };
    prop_oneof![
        Just(fallback),
        (0u64..15).prop_map(TimeRef::Absolute),
        (name(), 0u64..12).prop_map(|(n, off)| TimeRef::after(EventExpr::base(n), off)),
    ]
}

/// Base events, possibly windowed.
pub fn leaf() -> impl Strategy<Value = EventExpr> {
    prop_oneof![
        name().prop_map(EventExpr::base),
        (name(), bound(true), bound(false)).prop_map(|(n, lo, hi)| EventExpr::window(
            EventExpr::base(n),
            lo,
            hi
        )),
    ]
}

/// Formulas over all three operators, at most `depth` levels deep.
pub fn formula(depth: u32) -> impl Strategy<Value = EventExpr> {
    leaf().prop_recursive(depth, 64, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| EventExpr::and(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| EventExpr::or(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| EventExpr::except(l, r)),
        ]
    })
}

/// Formulas without `except`.
pub fn positive_formula(depth: u32) -> impl Strategy<Value = EventExpr> {
    leaf().prop_recursive(depth, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| EventExpr::and(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| EventExpr::or(l, r)),
        ]
    })
}

pub fn commitment_with(
    create: EventExpr,
    detach: EventExpr,
    discharge: EventExpr,
) -> CommitmentSpec {
    CommitmentSpec {
        name: "Generated".into(),
        debtor: "M".into(),
        creditor: "C".into(),
        create,
        detach,
        discharge,
    }
}

pub fn check_reduce(c: &CommitmentSpec) -> Result<(), TestCaseError> {
    let run = || -> Result<Vec<String>, TestCaseError> {
        let mut out = Vec::new();
        for instr in decompose_commitment(c) {
            let (atoms, _) = reduce_with_fuel(&instr, 100_000)
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            for a in atoms {
                prop_assert!(a.formula.is_base(), "not atomic: {}", a);
                prop_assert_ne!(&a.knower, &a.learner);
                out.push(a.to_string());
            }
        }
        Ok(out)
    };
    let first = run()?;
    prop_assert_eq!(first, run()?);
    Ok(())
}

pub fn check_commitment_round_trip(c: &CommitmentSpec) -> Result<(), TestCaseError> {
    let text = print_commitments([c]);
    let back = parse_commitment(&text, &CommitmentRegistry::new())
        .map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
    prop_assert_eq!(&back, c);
    Ok(())
}

// ---------------------------------------------------------------------
// Models and the brute-force evaluation oracle

pub fn model(max: usize) -> impl Strategy<Value = Model> {
    prop::collection::vec((0usize..NAMES.len(), 1u8..3, 0u64..20), 0..=max).prop_map(|es| Model {
        role: "X".into(),
        entries: es
            .into_iter()
            .map(|(n, k, t)| {
                let key: Bindings = [("oID".to_string(), k.to_string())].into();
                ModelEntry {
                    schema: NAMES[n].into(),
                    bindings: key.clone(),
                    key_binding: key,
                    time: t,
                }
            })
            .collect(),
    })
}

/// A base event restricted to a window.
#[derive(Debug, Clone)]
struct Atom {
    name: String,
    lo: TimeRef,
    hi: TimeRef,
}

fn dnf(e: &EventExpr) -> Vec<Vec<Atom>> {
    match e {
        EventExpr::Base(n) => vec![vec![Atom {
            name: n.clone(),
            lo: TimeRef::Absolute(0),
            hi: TimeRef::Infinity,
        }]],
        EventExpr::Window { inner, from, to } => match inner.as_ref() {
            EventExpr::Base(n) => vec![vec![Atom {
                name: n.clone(),
                lo: from.clone(),
                hi: to.clone(),
            }]],
            _ => panic!("oracle handles windows over base events only"),
        },
        EventExpr::And(l, r) => {
            let (l, r) = (dnf(l), dnf(r));
            let mut out = Vec::new();
            for a in &l {
                for b in &r {
                    out.push(a.iter().chain(b).cloned().collect());
                }
            }
            out
        }
        EventExpr::Or(l, r) => dnf(l).into_iter().chain(dnf(r)).collect(),
        _ => panic!("oracle handles and, or and windows only"),
    }
}

fn visible<'a>(
    m: &'a Model,
    now: u64,
    name: &'a str,
    key: &'a str,
) -> impl Iterator<Item = &'a ModelEntry> + 'a {
    m.entries
        .iter()
        .filter(move |e| e.schema == name && e.key_binding["oID"] == key && e.time <= now)
}

fn bound_value(t: &TimeRef, m: &Model, now: u64, key: &str) -> Option<u64> {
    match t {
        TimeRef::Absolute(n) => Some(*n),
        TimeRef::Infinity => Some(u64::MAX),
        TimeRef::After { event, offset } => {
            let EventExpr::Base(n) = event.as_ref() else {
                panic!("oracle handles base bound events only")
            };
            visible(m, now, n, key)
                .map(|e| e.time)
                .min()
                .map(|t| t + offset)
        }
    }
}

/// For every key value, the earliest tick at which `e` holds, found by
/// trying every tuple of model entries against every disjunct.
pub fn oracle_earliest(e: &EventExpr, m: &Model, now: u64) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    let keys: BTreeSet<String> = m
        .entries
        .iter()
        .map(|e| e.key_binding["oID"].clone())
        .collect();
    for key in keys {
        for conj in dnf(e) {
            let candidates: Vec<Vec<u64>> = conj
                .iter()
                .map(|a| {
                    let lo = bound_value(&a.lo, m, now, &key);
                    let hi = bound_value(&a.hi, m, now, &key);
                    visible(m, now, &a.name, &key)
                        .map(|e| e.time)
                        .filter(|t| matches!((lo, hi), (Some(lo), Some(hi)) if lo <= *t && *t < hi))
                        .collect()
                })
                .collect();
            let mut tuple = Vec::new();
            enumerate(&candidates, &mut tuple, &mut |ts: &[u64]| {
                let at = ts.iter().copied().max().unwrap_or(0);
                let slot = out.entry(key.clone()).or_insert(u64::MAX);
                *slot = (*slot).min(at);
            });
        }
    }
    out
}

fn enumerate(candidates: &[Vec<u64>], tuple: &mut Vec<u64>, visit: &mut dyn FnMut(&[u64])) {
    if tuple.len() == candidates.len() {
        visit(tuple);
        return;
    }
    for t in &candidates[tuple.len()] {
        tuple.push(*t);
        enumerate(candidates, tuple, visit);
        tuple.pop();
    }
}

pub fn eval_earliest(e: &EventExpr, m: &Model, now: u64) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for i in eval(e, &EvaluationContext::new(m, now)).expect("evaluation succeeds") {
        let slot = out.entry(i.key_binding["oID"].clone()).or_insert(u64::MAX);
        *slot = (*slot).min(i.timestamp);
    }
    out
}

pub fn check_eval_oracle(e: &EventExpr, m: &Model, now: u64) -> Result<(), TestCaseError> {
    prop_assert_eq!(
        eval_earliest(e, m, now),
        oracle_earliest(e, m, now),
        "formula {}",
        e
    );
    Ok(())
}

// ---------------------------------------------------------------------
// Simulator runs

pub fn setup(
    protocol_files: &[&str],
    commitment_files: &[&str],
    mode: Option<SynthesisMode>,
) -> (Setup, Scenario) {
    let scenario = Scenario {
        protocols: protocol_files.iter().map(PathBuf::from).collect(),
        protocol: None,
        commitments: commitment_files.iter().map(PathBuf::from).collect(),
        synthesize: mode,
        time_scale: 10,
        horizon: Some(40),
        max_delay: Some(4),
        delivery: Delivery::Unordered,
        key_values: vec!["1".into(), "2".into()],
        policy: Policy::Random { seed: 0 },
        checkpoints: Vec::new(),
    };
    let s = tosca::sim::prepare(&scenario, &fixture("")).expect("scenario prepares");
    (s, scenario)
}

/// Every prefix of a random run is viable.
pub fn check_prefix_closure(
    setup: &Setup,
    scenario: &Scenario,
    seed: u64,
) -> Result<(), TestCaseError> {
    let mut s = scenario.clone();
    s.policy = if seed.is_multiple_of(2) {
        Policy::Random { seed }
    } else {
        Policy::Aligner { seed }
    };
    let report = simulate(setup, &s).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let v = HistoryVector::from_trace(&setup.uod, &report.trace)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let mut ticks: Vec<u64> = report.trace.iter().map(|r| r.tick).collect();
    ticks.dedup();
    for t in ticks {
        check_viable(&v.prefix(t), &setup.uod)
            .map_err(|e| TestCaseError::fail(format!("prefix {t}: {e}")))?;
    }
    Ok(())
}
