//! Commitments and the event expressions they are built from.
//!
//! A commitment `c(debtor, creditor, Cre, Det, Dis)` is created when `Cre`
//! holds, detached when `Det` also holds, and discharged by `Dis`. Event
//! expressions combine message names with time windows and the `and`, `or`
//! and `except` operators; lifecycle events of other commitments may be
//! nested anywhere an event may appear.

mod parse;
mod print;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::Uod;
use crate::syntax::ParseError;

pub use parse::{parse_commitment, parse_commitments, CommitmentRegistry};
pub use print::print_commitments;

/// A window bound. `After` resolves per key binding to the timestamp of the
/// bound event plus the offset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeRef {
    Absolute(u64),
    Infinity,
    After { event: Box<EventExpr>, offset: u64 },
}

impl TimeRef {
    pub fn after(event: EventExpr, offset: u64) -> Self {
        TimeRef::After {
            event: Box::new(event),
            offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifecycleKind {
    Created,
    Detached,
    Discharged,
    Expired,
    Violated,
}

impl LifecycleKind {
    pub const ALL: [LifecycleKind; 5] = [
        LifecycleKind::Created,
        LifecycleKind::Detached,
        LifecycleKind::Discharged,
        LifecycleKind::Expired,
        LifecycleKind::Violated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LifecycleKind::Created => "created",
            LifecycleKind::Detached => "detached",
            LifecycleKind::Discharged => "discharged",
            LifecycleKind::Expired => "expired",
            LifecycleKind::Violated => "violated",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == name)
    }

    /// Whether the creditor is the party expected to learn first. For these
    /// kinds alignment demands that whatever the creditor infers the debtor
    /// infers too; for the other two it is the reverse.
    pub fn creditor_knows(self) -> bool {
        matches!(
            self,
            LifecycleKind::Created | LifecycleKind::Detached | LifecycleKind::Violated
        )
    }
}

impl fmt::Display for LifecycleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventExpr {
    Base(String),
    Lifecycle {
        kind: LifecycleKind,
        commitment: Box<CommitmentSpec>,
    },
    Window {
        inner: Box<EventExpr>,
        from: TimeRef,
        to: TimeRef,
    },
    And(Box<EventExpr>, Box<EventExpr>),
    Or(Box<EventExpr>, Box<EventExpr>),
    Except(Box<EventExpr>, Box<EventExpr>),
}

impl EventExpr {
    pub fn base(name: impl Into<String>) -> Self {
        EventExpr::Base(name.into())
    }

    pub fn window(inner: EventExpr, from: TimeRef, to: TimeRef) -> Self {
        EventExpr::Window {
            inner: Box::new(inner),
            from,
            to,
        }
    }

    pub fn and(l: EventExpr, r: EventExpr) -> Self {
        EventExpr::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: EventExpr, r: EventExpr) -> Self {
        EventExpr::Or(Box::new(l), Box::new(r))
    }

    pub fn except(l: EventExpr, r: EventExpr) -> Self {
        EventExpr::Except(Box::new(l), Box::new(r))
    }

    pub fn lifecycle(kind: LifecycleKind, c: &CommitmentSpec) -> Self {
        EventExpr::Lifecycle {
            kind,
            commitment: Box::new(c.clone()),
        }
    }

    pub fn is_base(&self) -> bool {
        matches!(self, EventExpr::Base(_))
    }

    /// Number of nodes, counting nested commitments and window bounds.
    pub fn size(&self) -> usize {
        match self {
            EventExpr::Base(_) => 1,
            EventExpr::Lifecycle { commitment, .. } => {
                1 + commitment.create.size()
                    + commitment.detach.size()
                    + commitment.discharge.size()
            }
            EventExpr::Window { inner, from, to } => {
                1 + inner.size() + time_size(from) + time_size(to)
            }
            EventExpr::And(l, r) | EventExpr::Or(l, r) | EventExpr::Except(l, r) => {
                1 + l.size() + r.size()
            }
        }
    }

    /// Every message name mentioned, including inside bounds and nested
    /// commitments.
    pub fn base_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_bases(&mut |n| {
            out.insert(n.to_string());
        });
        out
    }

    fn visit_bases(&self, f: &mut impl FnMut(&str)) {
        match self {
            EventExpr::Base(n) => f(n),
            EventExpr::Lifecycle { commitment, .. } => {
                commitment.create.visit_bases(f);
                commitment.detach.visit_bases(f);
                commitment.discharge.visit_bases(f);
            }
            EventExpr::Window { inner, from, to } => {
                inner.visit_bases(f);
                for t in [from, to] {
                    if let TimeRef::After { event, .. } = t {
                        event.visit_bases(f);
                    }
                }
            }
            EventExpr::And(l, r) | EventExpr::Or(l, r) | EventExpr::Except(l, r) => {
                l.visit_bases(f);
                r.visit_bases(f);
            }
        }
    }

    /// Multiplies every absolute instant and offset by `factor`.
    pub fn scaled(&self, factor: u64) -> EventExpr {
        match self {
            EventExpr::Base(_) => self.clone(),
            EventExpr::Lifecycle { kind, commitment } => EventExpr::Lifecycle {
                kind: *kind,
                commitment: Box::new(commitment.scaled(factor)),
            },
            EventExpr::Window { inner, from, to } => EventExpr::Window {
                inner: Box::new(inner.scaled(factor)),
                from: scale_time(from, factor),
                to: scale_time(to, factor),
            },
            EventExpr::And(l, r) => EventExpr::and(l.scaled(factor), r.scaled(factor)),
            EventExpr::Or(l, r) => EventExpr::or(l.scaled(factor), r.scaled(factor)),
            EventExpr::Except(l, r) => EventExpr::except(l.scaled(factor), r.scaled(factor)),
        }
    }

    /// Key parameters on which instances of this expression are correlated.
    pub fn keys(&self, uod: &Uod) -> BTreeSet<String> {
        match self {
            EventExpr::Base(n) => uod
                .schema(n)
                .map(|s| s.key_names().into_iter().collect())
                .unwrap_or_default(),
            EventExpr::Lifecycle { kind, commitment } => {
                lifecycle_formula(*kind, commitment).keys(uod)
            }
            EventExpr::Window { inner, .. } => inner.keys(uod),
            EventExpr::And(l, r) => &l.keys(uod) | &r.keys(uod),
            EventExpr::Or(l, r) => &l.keys(uod) & &r.keys(uod),
            EventExpr::Except(l, _) => l.keys(uod),
        }
    }
}

fn time_size(t: &TimeRef) -> usize {
    match t {
        TimeRef::After { event, .. } => event.size(),
        _ => 0,
    }
}

fn scale_time(t: &TimeRef, factor: u64) -> TimeRef {
    match t {
        TimeRef::Absolute(n) => TimeRef::Absolute(n.saturating_mul(factor)),
        TimeRef::Infinity => TimeRef::Infinity,
        TimeRef::After { event, offset } => TimeRef::After {
            event: Box::new(event.scaled(factor)),
            offset: offset.saturating_mul(factor),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommitmentSpec {
    pub name: String,
    pub debtor: String,
    pub creditor: String,
    pub create: EventExpr,
    pub detach: EventExpr,
    pub discharge: EventExpr,
}

impl CommitmentSpec {
    pub fn scaled(&self, factor: u64) -> CommitmentSpec {
        CommitmentSpec {
            name: self.name.clone(),
            debtor: self.debtor.clone(),
            creditor: self.creditor.clone(),
            create: self.create.scaled(factor),
            detach: self.detach.scaled(factor),
            discharge: self.discharge.scaled(factor),
        }
    }

    pub fn base_names(&self) -> BTreeSet<String> {
        let mut names = self.create.base_names();
        names.extend(self.detach.base_names());
        names.extend(self.discharge.base_names());
        names
    }

    /// Commitments nested through lifecycle events, innermost first, each
    /// listed once.
    pub fn nested(&self) -> Vec<&CommitmentSpec> {
        fn walk<'a>(e: &'a EventExpr, out: &mut Vec<&'a CommitmentSpec>) {
            match e {
                EventExpr::Base(_) => {}
                EventExpr::Lifecycle { commitment, .. } => {
                    for part in [
                        &commitment.create,
                        &commitment.detach,
                        &commitment.discharge,
                    ] {
                        walk(part, out);
                    }
                    if !out.iter().any(|c| c.name == commitment.name) {
                        out.push(commitment);
                    }
                }
                EventExpr::Window { inner, from, to } => {
                    walk(inner, out);
                    for t in [from, to] {
                        if let TimeRef::After { event, .. } = t {
                            walk(event, out);
                        }
                    }
                }
                EventExpr::And(l, r) | EventExpr::Or(l, r) | EventExpr::Except(l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
            }
        }
        let mut out = Vec::new();
        for part in [&self.create, &self.detach, &self.discharge] {
            walk(part, &mut out);
        }
        out
    }
}

/// The condition under which a lifecycle event of `c` occurs.
pub fn lifecycle_formula(kind: LifecycleKind, c: &CommitmentSpec) -> EventExpr {
    let cre = || c.create.clone();
    let det = || c.detach.clone();
    let dis = || c.discharge.clone();
    match kind {
        LifecycleKind::Created => cre(),
        LifecycleKind::Detached => EventExpr::and(cre(), det()),
        LifecycleKind::Discharged => {
            EventExpr::or(EventExpr::and(cre(), dis()), EventExpr::and(det(), dis()))
        }
        LifecycleKind::Expired => EventExpr::except(cre(), det()),
        LifecycleKind::Violated => EventExpr::except(EventExpr::and(cre(), det()), dis()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommitmentError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("{line}:{column}: unknown commitment `{name}`")]
    UnknownCommitmentReference {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("commitment {0}: debtor and creditor are the same role")]
    DebtorIsCreditor(String),
}

/// Failures relating a commitment to a protocol's universe of discourse.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("commitment {commitment}: `{name}` is not a message of the protocol")]
    UnknownBaseEvent { commitment: String, name: String },
    #[error("commitment {commitment}: `{role}` is not a role of the protocol")]
    UnknownRole { commitment: String, role: String },
    #[error("commitment {commitment}: the sides of a disjunction share no key")]
    DisjointDisjunction { commitment: String },
}

/// Checks that `c` and every commitment nested in it refer only to roles and
/// messages of `uod`, and that every disjunction correlates on some key.
pub fn bind(c: &CommitmentSpec, uod: &Uod) -> Result<(), BindError> {
    for spec in c.nested().into_iter().chain(std::iter::once(c)) {
        for role in [&spec.debtor, &spec.creditor] {
            if !uod.has_role(role) {
                return Err(BindError::UnknownRole {
                    commitment: spec.name.clone(),
                    role: role.clone(),
                });
            }
        }
        for name in spec.base_names() {
            if uod.schema(&name).is_none() {
                return Err(BindError::UnknownBaseEvent {
                    commitment: spec.name.clone(),
                    name,
                });
            }
        }
        for part in [&spec.create, &spec.detach, &spec.discharge] {
            check_disjunctions(part, uod, &spec.name)?;
        }
    }
    Ok(())
}

fn check_disjunctions(e: &EventExpr, uod: &Uod, name: &str) -> Result<(), BindError> {
    match e {
        EventExpr::Base(_) | EventExpr::Lifecycle { .. } => Ok(()),
        EventExpr::Window { inner, from, to } => {
            check_disjunctions(inner, uod, name)?;
            for t in [from, to] {
                if let TimeRef::After { event, .. } = t {
                    check_disjunctions(event, uod, name)?;
                }
            }
            Ok(())
        }
        EventExpr::Or(l, r) => {
            if l.keys(uod).is_disjoint(&r.keys(uod)) {
                return Err(BindError::DisjointDisjunction {
                    commitment: name.to_string(),
                });
            }
            check_disjunctions(l, uod, name)?;
            check_disjunctions(r, uod, name)
        }
        EventExpr::And(l, r) | EventExpr::Except(l, r) => {
            check_disjunctions(l, uod, name)?;
            check_disjunctions(r, uod, name)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{parse_protocol, uod, Registry};

    const PURCHASE: &str = "commitment Purchase M to C
        create quote
        detach pay[,quote + 10]
        discharge ship[,pay + 5]";

    fn purchase() -> CommitmentSpec {
        parse_commitment(PURCHASE, &CommitmentRegistry::new()).unwrap()
    }

    #[test]
    fn formulas_follow_the_lifecycle() {
        let c = purchase();
        let pay = c.detach.clone();
        let ship = c.discharge.clone();
        let quote = EventExpr::base("quote");
        assert_eq!(lifecycle_formula(LifecycleKind::Created, &c), quote);
        assert_eq!(
            lifecycle_formula(LifecycleKind::Detached, &c).to_string(),
            "quote and pay[, quote + 10]"
        );
        assert_eq!(
            lifecycle_formula(LifecycleKind::Violated, &c),
            EventExpr::except(EventExpr::and(quote.clone(), pay.clone()), ship.clone())
        );
        assert_eq!(
            lifecycle_formula(LifecycleKind::Discharged, &c),
            EventExpr::or(
                EventExpr::and(quote.clone(), ship.clone()),
                EventExpr::and(pay.clone(), ship)
            )
        );
        assert_eq!(
            lifecycle_formula(LifecycleKind::Expired, &c),
            EventExpr::except(quote, pay)
        );
    }

    #[test]
    fn scaling_touches_offsets_only() {
        let c = purchase().scaled(10);
        match &c.detach {
            EventExpr::Window { from, to, .. } => {
                assert_eq!(*from, TimeRef::Absolute(0));
                assert!(matches!(to, TimeRef::After { offset: 100, .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn binding_checks_names() {
        let ordering = parse_protocol(
            "Ordering { roles M, C, S parameters out oID key, out item, out price, out pID, out rID, out sID
             M -> C: quote[out oID, out item, out price]
             C -> M: pay[in oID, out pID]
             M -> S: requestShip[in oID, out rID]
             S -> C: ship[in oID, out sID] }",
        )
        .unwrap();
        let u = uod(&ordering, &Registry::new()).unwrap();
        assert_eq!(bind(&purchase(), &u), Ok(()));

        let mut wrong = purchase();
        wrong.create = EventExpr::base("offer");
        assert!(matches!(
            bind(&wrong, &u),
            Err(BindError::UnknownBaseEvent { name, .. }) if name == "offer"
        ));
        wrong = purchase();
        wrong.debtor = "E".into();
        assert!(matches!(
            bind(&wrong, &u),
            Err(BindError::UnknownRole { .. })
        ));
    }

    #[test]
    fn disjoint_disjunction_rejected() {
        let p = parse_protocol(
            "P { roles A, B parameters out j key, out k key
             A -> B: x[out j]
             B -> A: y[out k] }",
        )
        .unwrap();
        let u = uod(&p, &Registry::new()).unwrap();
        let c = CommitmentSpec {
            name: "D".into(),
            debtor: "A".into(),
            creditor: "B".into(),
            create: EventExpr::or(EventExpr::base("x"), EventExpr::base("y")),
            detach: EventExpr::base("x"),
            discharge: EventExpr::base("y"),
        };
        assert!(matches!(
            bind(&c, &u),
            Err(BindError::DisjointDisjunction { .. })
        ));
    }
}
