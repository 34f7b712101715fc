use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use tracing::debug;

use super::graph::{DedupMode, Explorer, Move, Node, StateGraph};
use super::{Bound, Outcome, Property, Subject, VerificationReport, VerifyError, Witness};
use crate::commitment::{bind, CommitmentSpec};
use crate::enactment::{agree, Direction, TraceRecord};
use crate::semantics::check_alignment;

fn report(
    property: Property,
    subject: &Subject,
    outcome: Outcome,
    witness: Option<Witness>,
    states: usize,
    detail: impl Into<String>,
) -> VerificationReport {
    VerificationReport {
        property,
        subject: subject.name.clone(),
        outcome,
        witness,
        states_explored: states,
        detail: detail.into(),
        punctual: None,
    }
}

fn witness(node: &Node, description: impl Into<String>) -> Witness {
    Witness {
        description: description.into(),
        trace: node.vector.to_trace(),
        lapses: node.floors.clone(),
        extension: Vec::new(),
    }
}

fn extension(from: &Node, to: &Node) -> Vec<TraceRecord> {
    let before = from.vector.to_trace();
    to.vector
        .to_trace()
        .into_iter()
        .filter(|r| !before.contains(r))
        .collect()
}

fn exceeded_detail(g: &StateGraph, bound: &Bound) -> String {
    if g.exceeded {
        format!("stopped after {} states", bound.max_states)
    } else {
        format!("paths cut at {} steps", bound.max_steps.unwrap_or(0))
    }
}

/// Whether every enactment key is initiated and binds every goal parameter.
fn complete(node: &Node, goal: &[String]) -> bool {
    let bound = node.vector.bound_params();
    !bound.is_empty()
        && bound.keys().all(|kb| {
            let mut params: BTreeSet<&String> = BTreeSet::new();
            for (other, ps) in &bound {
                if agree(kb, other) {
                    params.extend(ps.keys());
                }
            }
            goal.iter().all(|p| params.contains(p))
        })
}

fn explore_plain(subject: &Subject, bound: &Bound) -> StateGraph {
    let mut ex = Explorer::new(&subject.uod, bound.settings(), Vec::new());
    ex.explore(&|_, _| true, None)
}

fn safety_of(subject: &Subject, bound: &Bound, g: &StateGraph) -> VerificationReport {
    if let Some(bad) = g.nodes.iter().find(|n| !n.viable) {
        return report(
            Property::Safety,
            subject,
            Outcome::Fails,
            Some(witness(
                bad,
                "two values bound to one parameter for one key binding",
            )),
            g.len(),
            "key integrity violated",
        );
    }
    if !g.complete() {
        return report(
            Property::Safety,
            subject,
            Outcome::BoundExceeded,
            None,
            g.len(),
            exceeded_detail(g, bound),
        );
    }
    report(
        Property::Safety,
        subject,
        Outcome::Holds,
        None,
        g.len(),
        "every reachable state has integral keys",
    )
}

fn liveness_of(subject: &Subject, bound: &Bound, g: &StateGraph) -> VerificationReport {
    if subject.uod.schemas.is_empty() {
        return report(
            Property::Liveness,
            subject,
            Outcome::Holds,
            None,
            g.len(),
            "no messages: holds vacuously",
        );
    }
    if !g.complete() {
        return report(
            Property::Liveness,
            subject,
            Outcome::BoundExceeded,
            None,
            g.len(),
            exceeded_detail(g, bound),
        );
    }
    let goal: Vec<bool> = g.nodes.iter().map(|n| complete(n, &subject.goal)).collect();
    let live = g.co_reachable(&goal);
    match live.iter().position(|ok| !ok) {
        Some(stuck) => {
            let terminal = (stuck..g.len())
                .find(|i| !live[*i] && g.edges[*i].is_empty())
                .unwrap_or(stuck);
            report(
                Property::Liveness,
                subject,
                Outcome::Fails,
                Some(witness(
                    &g.nodes[terminal],
                    "no continuation binds every public out parameter",
                )),
                g.len(),
                format!("goal parameters: {}", subject.goal.join(", ")),
            )
        }
        None => report(
            Property::Liveness,
            subject,
            Outcome::Holds,
            None,
            g.len(),
            "every reachable state can be completed",
        ),
    }
}

/// Checks that no reachable state binds two values to a parameter for one
/// key binding.
pub fn check_safety(subject: &Subject, bound: &Bound) -> VerificationReport {
    safety_of(subject, bound, &explore_plain(subject, bound))
}

/// Checks that from every reachable state some continuation binds every
/// public `out` parameter of the protocol.
pub fn check_liveness(subject: &Subject, bound: &Bound) -> VerificationReport {
    liveness_of(subject, bound, &explore_plain(subject, bound))
}

/// Safety and liveness from a single enumeration.
pub fn check_safety_liveness(
    subject: &Subject,
    bound: &Bound,
) -> (VerificationReport, VerificationReport) {
    let g = explore_plain(subject, bound);
    debug!(subject = %subject.name, states = g.len(), "enumerated");
    (
        safety_of(subject, bound, &g),
        liveness_of(subject, bound, &g),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preservation {
    pub input: VerificationReport,
    pub composed: VerificationReport,
    /// False only when the input has the property and the composition
    /// provably lacks it.
    pub preserved: bool,
}

impl Preservation {
    fn new(input: VerificationReport, composed: VerificationReport) -> Self {
        let preserved = !(input.holds() && composed.outcome == Outcome::Fails);
        Preservation {
            input,
            composed,
            preserved,
        }
    }

    pub fn conclusive(&self) -> bool {
        self.input.outcome != Outcome::BoundExceeded
            && self.composed.outcome != Outcome::BoundExceeded
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub safety: Preservation,
    pub liveness: Preservation,
}

impl Theorem1Report {
    pub fn holds(&self) -> bool {
        self.safety.preserved
            && self.liveness.preserved
            && self.safety.conclusive()
            && self.liveness.conclusive()
    }
}

/// Compares safety and liveness of a protocol and its composition with
/// alignment protocols.
pub fn check_theorem1(input: &Subject, composed: &Subject, bound: &Bound) -> Theorem1Report {
    let (is, il) = check_safety_liveness(input, bound);
    let (cs, cl) = check_safety_liveness(composed, bound);
    Theorem1Report {
        safety: Preservation::new(is, cs),
        liveness: Preservation::new(il, cl),
    }
}

type Signature = BTreeMap<String, Vec<(String, crate::enactment::Bindings, Direction)>>;

fn signature(node: &Node, input: &Subject) -> Signature {
    node.vector
        .histories
        .iter()
        .map(|(role, h)| {
            let obs = h
                .events
                .iter()
                .filter(|o| input.uod.schema(&o.instance.schema).is_some())
                .map(|o| {
                    (
                        o.instance.schema.clone(),
                        o.instance.bindings.clone(),
                        o.direction,
                    )
                })
                .collect();
            (role.clone(), obs)
        })
        .collect()
}

/// Checks that every complete enactment of `input` can be replayed in
/// `composed`: each role sees the same input messages in the same order,
/// with forwards interleaved freely.
pub fn check_embedding(input: &Subject, composed: &Subject, bound: &Bound) -> VerificationReport {
    let ordered = Bound {
        dedup: DedupMode::Ordered,
        ..bound.clone()
    };
    let g = explore_plain(input, &ordered);
    if !g.complete() {
        return report(
            Property::Embedding,
            composed,
            Outcome::BoundExceeded,
            None,
            g.len(),
            exceeded_detail(&g, bound),
        );
    }
    let mut targets: BTreeMap<Signature, usize> = BTreeMap::new();
    for (i, n) in g.nodes.iter().enumerate() {
        if g.edges[i].is_empty() && n.viable {
            targets.entry(signature(n, input)).or_insert(i);
        }
    }
    let mut explored = g.len();
    for (checked, (sig, origin)) in targets.iter().enumerate() {
        let mut ex = Explorer::new(&composed.uod, bound.settings(), Vec::new());
        let allow = |node: &Node, m: &Move| {
            let (inst, role, dir) = match m {
                Move::Emit(i) => (i, &i.sender, Direction::Emit),
                Move::Receive(i) => (i, &i.receiver, Direction::Receive),
                Move::Lapse(_) => return false,
            };
            if input.uod.schema(&inst.schema).is_none() {
                return true;
            }
            let done = node.vector.histories[role]
                .events
                .iter()
                .filter(|o| input.uod.schema(&o.instance.schema).is_some())
                .count();
            sig.get(role)
                .and_then(|expected| expected.get(done))
                .is_some_and(|(s, b, d)| *s == inst.schema && *b == inst.bindings && *d == dir)
        };
        let goal = |node: &Node, _: bool| signature(node, input) == *sig;
        let h = ex.explore(&allow, Some(&goal));
        explored += h.len();
        if h.found.is_none() {
            let outcome = if h.complete() {
                Outcome::Fails
            } else {
                Outcome::BoundExceeded
            };
            let w = (outcome == Outcome::Fails).then(|| {
                witness(
                    &g.nodes[*origin],
                    "this enactment has no counterpart in the composition",
                )
            });
            return report(
                Property::Embedding,
                composed,
                outcome,
                w,
                explored,
                format!("{checked} of {} enactments replayed", targets.len()),
            );
        }
    }
    report(
        Property::Embedding,
        composed,
        Outcome::Holds,
        None,
        explored,
        format!(
            "{} complete enactments of {} replayed",
            targets.len(),
            input.name
        ),
    )
}

/// For each commitment, checks that from every reachable state of
/// `subject` some continuation is aligned.
pub fn check_alignment_reachability(
    subject: &Subject,
    commitments: &[CommitmentSpec],
    bound: &Bound,
) -> Result<Vec<VerificationReport>, VerifyError> {
    let mut out = Vec::new();
    for c in commitments {
        bind(c, &subject.uod)?;
        let mut settings = bound.settings();
        settings.depth_first = !bound.punctual;
        let mut ex = Explorer::new(&subject.uod, settings, vec![c.scaled(bound.time_scale)]);
        let fwd = ex.forwarding().clone();
        let scaled = ex.commitments()[0].clone();
        // A misaligned state without moves can never become aligned.
        let dead_end = |n: &Node, terminal: bool| {
            terminal
                && check_alignment(&n.vector, &scaled, n.now(), &fwd).is_ok_and(|r| !r.aligned())
        };
        let g = ex.explore(&|_, _| true, Some(&dead_end));
        let mut misaligned = Vec::with_capacity(g.len());
        for n in &g.nodes {
            misaligned.push(check_alignment(&n.vector, &scaled, n.now(), &fwd)?.misalignments);
        }
        let mut r = report(
            Property::AlignmentReachability,
            subject,
            Outcome::Holds,
            None,
            g.len(),
            "",
        );
        r.punctual = Some(bound.punctual);
        r.detail = format!("commitment {}", c.name);
        if !g.complete() && g.found.is_none() {
            r.outcome = Outcome::BoundExceeded;
            r.detail = format!("commitment {}: {}", c.name, exceeded_detail(&g, bound));
            out.push(r);
            continue;
        }
        let aligned: Vec<bool> = misaligned.iter().map(Vec::is_empty).collect();
        let reach = g.co_reachable(&aligned);
        if let Some(bad) = g.found.or_else(|| (0..g.len()).find(|i| !reach[*i])) {
            let found = &misaligned[bad];
            let text: Vec<String> = found
                .iter()
                .map(|m| {
                    format!(
                        "{} {:?} not inferred by {}",
                        m.kind, m.key_binding, m.lacking
                    )
                })
                .collect();
            r.outcome = Outcome::Fails;
            r.witness = Some(witness(
                &g.nodes[bad],
                format!("no continuation is aligned: {}", text.join("; ")),
            ));
        } else if let Some(worst) = (0..g.len())
            .filter(|i| !aligned[*i])
            .max_by_key(|i| (misaligned[*i].len(), std::cmp::Reverse(*i)))
        {
            let fix = g
                .nearest(worst, |i| aligned[i])
                .expect("co-reachability found an aligned continuation");
            let mut w = witness(
                &g.nodes[worst],
                format!(
                    "{} misalignments resolved by continuing",
                    misaligned[worst].len()
                ),
            );
            w.extension = extension(&g.nodes[worst], &g.nodes[fix]);
            r.witness = Some(w);
        }
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{parse_protocol, Registry};

    fn subject(src: &str) -> Subject {
        Subject::new(&parse_protocol(src).unwrap(), &Registry::new()).unwrap()
    }

    #[test]
    fn single_message() {
        let s = subject("A { roles X, Y parameters out id key, out v  X -> Y: m[out id, out v] }");
        let (safe, live) = check_safety_liveness(&s, &Bound::default());
        assert!(safe.holds());
        assert!(live.holds());
        assert_eq!(safe.states_explored, 3);
    }

    #[test]
    fn ordering_is_safe_and_live() {
        let s = Subject {
            name: "Ordering".into(),
            uod: crate::enactment::tests::ordering_uod(),
            goal: ["oID", "item", "price", "pID", "rID", "sID"]
                .map(String::from)
                .to_vec(),
        };
        let (safe, live) = check_safety_liveness(&s, &Bound::default());
        assert!(safe.holds(), "{safe:?}");
        assert!(live.holds(), "{live:?}");
    }

    #[test]
    fn two_producers_break_integrity() {
        let s = subject(
            "U { roles X, Y parameters out id key, out v
               X -> Y: a[out id, out v]
               Y -> X: b[out id, out v] }",
        );
        let safe = check_safety(&s, &Bound::default());
        assert_eq!(safe.outcome, Outcome::Fails);
        assert!(!safe.witness.unwrap().trace.is_empty());
    }

    #[test]
    fn unbindable_parameter_is_not_live() {
        let s = subject(
            "U { roles X, Y parameters out id key, out v, out w
               X -> Y: a[out id, out v]
               Y -> X: b[in id, in w, out v] }",
        );
        let live = check_liveness(&s, &Bound::default());
        assert_eq!(live.outcome, Outcome::Fails);
    }

    #[test]
    fn empty_protocol_is_vacuous() {
        let s = subject("E { roles X parameters out id key }");
        assert!(check_liveness(&s, &Bound::default()).holds());
        assert!(check_safety(&s, &Bound::default()).holds());
    }

    #[test]
    fn state_limit_is_reported() {
        let s = Subject {
            name: "Ordering".into(),
            uod: crate::enactment::tests::ordering_uod(),
            goal: vec![],
        };
        let bound = Bound {
            max_states: 4,
            ..Bound::default()
        };
        assert_eq!(check_safety(&s, &bound).outcome, Outcome::BoundExceeded);
    }
}
