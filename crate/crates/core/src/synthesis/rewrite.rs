use std::collections::{HashSet, VecDeque};

use super::{AlignmentInstruction, SynthesisError};
use crate::commitment::{lifecycle_formula, CommitmentSpec, EventExpr, LifecycleKind, TimeRef};

/// Generous enough for any formula a person would write.
pub const DEFAULT_FUEL: usize = 1_000_000;

/// The five instructions a commitment starts from: the creditor informs the
/// debtor of creation, detachment and violation, and the debtor informs the
/// creditor of discharge and expiry.
pub fn decompose_commitment(c: &CommitmentSpec) -> Vec<AlignmentInstruction> {
    LifecycleKind::ALL
        .into_iter()
        .map(|kind| {
            let (knower, learner) = if kind.creditor_knows() {
                (&c.creditor, &c.debtor)
            } else {
                (&c.debtor, &c.creditor)
            };
            AlignmentInstruction::new(knower, EventExpr::lifecycle(kind, c), learner)
        })
        .collect()
}

/// Rewrites `instr` to atomic instructions, each over a single message.
pub fn reduce(instr: &AlignmentInstruction) -> Result<Vec<AlignmentInstruction>, SynthesisError> {
    reduce_with_fuel(instr, DEFAULT_FUEL).map(|(out, _)| out)
}

/// As [`reduce`], failing after `fuel` rewrite steps. Also returns the
/// number of steps taken.
pub fn reduce_with_fuel(
    instr: &AlignmentInstruction,
    fuel: usize,
) -> Result<(Vec<AlignmentInstruction>, usize), SynthesisError> {
    let mut seen: HashSet<AlignmentInstruction> = HashSet::new();
    let mut queue = VecDeque::from([instr.clone()]);
    let mut out = Vec::new();
    let mut steps = 0;

    while let Some(al) = queue.pop_front() {
        if al.knower == al.learner || !seen.insert(al.clone()) {
            continue;
        }
        if steps == fuel {
            return Err(SynthesisError::FuelExhausted(fuel));
        }
        steps += 1;
        let AlignmentInstruction {
            knower: a,
            formula,
            learner: b,
        } = al;
        match formula {
            EventExpr::Base(_) => out.push(AlignmentInstruction::new(a, formula, b)),
            EventExpr::Window { inner, from, to } => {
                queue.push_back(AlignmentInstruction::new(&a, *inner, &b));
                for bound in [from, to] {
                    if let TimeRef::After { event, .. } = bound {
                        queue.push_back(AlignmentInstruction::new(&a, *event, &b));
                    }
                }
            }
            EventExpr::And(l, r) | EventExpr::Or(l, r) => {
                queue.push_back(AlignmentInstruction::new(&a, *l, &b));
                queue.push_back(AlignmentInstruction::new(&a, *r, &b));
            }
            EventExpr::Except(l, r) => {
                queue.push_back(AlignmentInstruction::new(&a, *l, &b));
                queue.push_back(AlignmentInstruction::new(&b, *r, &a));
            }
            EventExpr::Lifecycle { kind, commitment } => {
                queue.push_back(AlignmentInstruction::new(
                    &a,
                    lifecycle_formula(kind, &commitment),
                    &b,
                ));
            }
        }
    }
    Ok((out, steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commitment::{parse_commitment, CommitmentRegistry};

    fn al(a: &str, m: &str, b: &str) -> AlignmentInstruction {
        AlignmentInstruction::new(a, EventExpr::base(m), b)
    }

    fn sorted(mut v: Vec<AlignmentInstruction>) -> Vec<String> {
        let mut out: Vec<String> = v.drain(..).map(|i| i.to_string()).collect();
        out.sort();
        out
    }

    #[test]
    fn decomposition_directions() {
        let c = parse_commitment(
            "commitment Purchase M to C create quote detach pay[,quote + 10] discharge ship[,pay + 5]",
            &CommitmentRegistry::new(),
        )
        .unwrap();
        let got: Vec<String> = decompose_commitment(&c)
            .iter()
            .map(|i| i.to_string())
            .collect();
        assert_eq!(
            got,
            [
                "al(C, created(Purchase), M)",
                "al(C, detached(Purchase), M)",
                "al(M, discharged(Purchase), C)",
                "al(M, expired(Purchase), C)",
                "al(C, violated(Purchase), M)",
            ]
        );
    }

    #[test]
    fn window_reduces_to_message_and_bound() {
        let w = EventExpr::window(
            EventExpr::base("payEscrow"),
            TimeRef::Absolute(0),
            TimeRef::after(EventExpr::base("quote"), 10),
        );
        let got = reduce(&AlignmentInstruction::new("C", w, "M")).unwrap();
        assert_eq!(sorted(got), ["al(C, payEscrow, M)", "al(C, quote, M)"]);
    }

    #[test]
    fn exception_flips_direction() {
        let window = |m: &str, s: &str| {
            EventExpr::window(
                EventExpr::base(m),
                TimeRef::Absolute(0),
                TimeRef::after(EventExpr::base(s), 5),
            )
        };
        let f = EventExpr::except(
            window("ship", "requestShip"),
            window("reportDamage", "ship"),
        );
        let got = reduce(&AlignmentInstruction::new("S", f, "M")).unwrap();
        assert_eq!(
            sorted(got),
            [
                "al(M, reportDamage, S)",
                "al(M, ship, S)",
                "al(S, requestShip, M)",
                "al(S, ship, M)",
            ]
        );
    }

    #[test]
    fn atomic_is_fixpoint() {
        assert_eq!(reduce(&al("C", "m", "M")).unwrap(), [al("C", "m", "M")]);
    }

    #[test]
    fn fuel_is_checked() {
        let f = EventExpr::and(EventExpr::base("a"), EventExpr::base("b"));
        let err = reduce_with_fuel(&AlignmentInstruction::new("A", f.clone(), "B"), 2).unwrap_err();
        assert_eq!(err, SynthesisError::FuelExhausted(2));
        let (_, steps) = reduce_with_fuel(&AlignmentInstruction::new("A", f, "B"), 3).unwrap();
        assert_eq!(steps, 3);
    }
}
