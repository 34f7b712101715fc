//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use tosca::commitment::LifecycleKind;
use tosca::enactment::Bindings;
use tosca::protocol::{parse_protocol, Adornment, Protocol, Reference, Registry};
use tosca::sim::run_scenario_file;
use tosca::synthesis::{synthesize_alignment_protocol, SynthesisMode};
use tosca::verify::{
    check_alignment_reachability, check_embedding, check_theorem1, Bound, Outcome, Subject,
};

const TIME_BUDGET: Duration = Duration::from_secs(60);
const ROUND_TRIP_CASES: u32 = 200;
const REDUCE_CASES: u32 = 200;
const REDUCE_DEPTH: u32 = 6;
const EVAL_CASES: u32 = 500;
const EVAL_MAX_ENTRIES: usize = 8;
const PREFIX_CASES: u32 = 200;

const ESCROW_PURCHASE_AL: &str = "EscrowPurchaseAl {
  roles C, M
  parameters in oID key, in pID, out fwdCMPayEscrowID

  C -> M: fwdCMPayEscrow[in oID, in pID, out fwdCMPayEscrowID] }";

const ESCROW_TRANSFER_AL: [&str; 4] = [
    "fwdMEQuote[in oID, in item, in price, out fwdMEQuoteID]",
    "fwdCMPayEscrow[in oID, in pID, out fwdCMPayEscrowID]",
    "fwdSEShip[in oID, in sID, out fwdSEShipID]",
    "fwdMEShip[in oID, in sID, out fwdMEShipID]",
];

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn escrow() -> (Protocol, Registry) {
    let p = protocol("escrow_ordering.bspl");
    let r: Registry = [p.clone()].into_iter().collect();
    (p, r)
}

fn golden_literal() -> Check {
    let (p, r) = escrow();
    let c = &commitments(&["escrow_purchase.cupid"])[0];
    let got = synthesize_alignment_protocol(c, &p, &r, SynthesisMode::Literal)
        .map_err(|e| e.to_string())?;
    let want = parse_protocol(ESCROW_PURCHASE_AL).map_err(|e| e.to_string())?;
    ensure(got.canonical() == want.canonical(), format!("got {got:?}"))?;
    Ok("EscrowPurchaseAl matches".into())
}

fn golden_complete() -> Check {
    let (p, r) = escrow();
    let c = &commitments(&["escrow_purchase.cupid", "escrow_transfer.cupid"])[1];
    let got = synthesize_alignment_protocol(c, &p, &r, SynthesisMode::Complete)
        .map_err(|e| e.to_string())?;
    let sigs: BTreeSet<String> = schemas(&got).into_iter().map(signature).collect();
    for want in ESCROW_TRANSFER_AL {
        ensure(sigs.contains(want), format!("missing {want} in {sigs:?}"))?;
    }
    Ok(format!(
        "{} schemas, all 4 expected signatures present",
        sigs.len()
    ))
}

fn composition() -> Check {
    let (p, _) = escrow();
    let cs = commitments(&["escrow_purchase.cupid", "escrow_transfer.cupid"]);
    let comp = compose(&p, &cs, &[SynthesisMode::Literal, SynthesisMode::Complete]);
    let q = &comp.composite;
    ensure(
        q.references.len() == 3,
        format!("{} references", q.references.len()),
    )?;
    ensure(
        q.references
            .iter()
            .all(|r| matches!(r, Reference::Protocol(_))),
        "non-protocol reference",
    )?;
    let roles: BTreeSet<&str> = q.all_roles().map(String::as_str).collect();
    ensure(
        roles == BTreeSet::from(["M", "C", "E", "S"]),
        format!("roles {roles:?}"),
    )?;
    ensure(
        q.key_names() == BTreeSet::from(["oID".to_string()]),
        "key is not oID",
    )?;
    let mut want: BTreeSet<String> = p.params.iter().map(|x| x.name.clone()).collect();
    ensure(want.len() == 7, "input has 7 parameters")?;
    for a in &comp.aligners {
        want.extend(
            a.params
                .iter()
                .filter(|x| x.adornment == Adornment::Out)
                .map(|x| x.name.clone()),
        );
    }
    let out: Vec<&str> = q
        .params
        .iter()
        .filter(|x| x.adornment == Adornment::Out)
        .map(|x| x.name.as_str())
        .collect();
    let out_set: BTreeSet<String> = out.iter().map(|s| s.to_string()).collect();
    ensure(out_set == want, format!("out {out_set:?}, want {want:?}"))?;
    ensure(
        out.len() == q.params.len(),
        "composite declares non-out parameters",
    )?;
    let n = out.iter().filter(|x| **x == "fwdCMPayEscrowID").count();
    ensure(n == 1, format!("fwdCMPayEscrowID declared {n} times"))?;
    Ok(format!("{} out parameters", out.len()))
}

fn key() -> Bindings {
    [("oID".to_string(), "1".to_string())].into()
}

fn scenario(name: &str, expect: &[(&str, &str, bool)]) -> Check {
    let r = run_scenario_file(&fixture(&format!("scenarios/{name}"))).map_err(|e| e.to_string())?;
    let mut seen = Vec::new();
    for (label, commitment, aligned) in expect {
        let row = r
            .at_label(label)
            .ok_or(format!("no row for dash {label}"))?;
        let a = row
            .commitment(commitment)
            .ok_or(format!("no {commitment} at dash {label}"))?;
        ensure(
            a.aligned() == *aligned,
            format!(
                "{commitment} at dash {label}: aligned={} {:?}",
                a.aligned(),
                a.misalignments
            ),
        )?;
        seen.push(format!(
            "{label}:{}",
            if *aligned { "aligned" } else { "misaligned" }
        ));
    }
    Ok(seen.join(" "))
}

fn figure_1a() -> Check {
    let s = scenario(
        "fig1a.json",
        &[
            ("1", "Purchase", true),
            ("2", "Purchase", false),
            ("3", "Purchase", true),
            ("4", "Purchase", true),
        ],
    )?;
    let r = run_scenario_file(&fixture("scenarios/fig1a.json")).map_err(|e| e.to_string())?;
    let row = r.at_label("2").unwrap().commitment("Purchase").unwrap();
    ensure(
        row.creditor[&LifecycleKind::Detached].contains(&key())
            && !row.debtor[&LifecycleKind::Detached].contains(&key()),
        "dash 2 misalignment is not on detached",
    )?;
    let row = r.at_label("4").unwrap().commitment("Purchase").unwrap();
    ensure(
        row.creditor[&LifecycleKind::Discharged].contains(&key()),
        "dash 4 not discharged for the customer",
    )?;
    Ok(s)
}

fn figure_1b() -> Check {
    scenario(
        "fig1b.json",
        &[
            ("5", "EscrowPurchase", false),
            ("6", "EscrowPurchase", true),
        ],
    )
}

fn figure_2() -> Check {
    let r = run_scenario_file(&fixture("scenarios/fig2.json")).map_err(|e| e.to_string())?;
    let detached = |label: &str| -> Result<(bool, bool), String> {
        let a = r
            .at_label(label)
            .and_then(|row| row.commitment("EscrowTransfer"))
            .ok_or(format!("no EscrowTransfer row at dash {label}"))?;
        Ok((
            a.creditor[&LifecycleKind::Detached].contains(&key()),
            a.debtor[&LifecycleKind::Detached].contains(&key()),
        ))
    };
    let (m7, e7) = detached("7")?;
    let (m8, e8) = detached("8")?;
    ensure(m7 && !e7, format!("dash 7: M={m7} E={e7}"))?;
    ensure(m8 && e8, format!("dash 8: M={m8} E={e8}"))?;
    Ok("dash 7 M only, dash 8 both".into())
}

fn preservation() -> Check {
    let bound = Bound::default();
    let mut notes = Vec::new();
    let cases = [
        ("Ordering", "ordering.bspl", vec!["purchase.cupid"]),
        (
            "EscrowOrdering",
            "escrow_ordering.bspl",
            vec!["escrow_purchase.cupid", "escrow_transfer.cupid"],
        ),
    ];
    for (name, file, cupid) in cases {
        let p = protocol(file);
        let comp = compose(&p, &commitments(&cupid), &[SynthesisMode::Complete]);
        let t = check_theorem1(&comp.input_subject, &comp.subject, &bound);
        for (what, r) in [
            ("input safety", &t.safety.input),
            ("composite safety", &t.safety.composed),
            ("input liveness", &t.liveness.input),
            ("composite liveness", &t.liveness.composed),
        ] {
            ensure(
                r.holds(),
                format!("{name} {what}: {:?} {}", r.outcome, r.detail),
            )?;
        }
        notes.push(format!(
            "{name} {}/{} states",
            t.safety.input.states_explored, t.safety.composed.states_explored
        ));
    }
    Ok(notes.join(", "))
}

fn reachability() -> Check {
    let bound = Bound::default();
    let (p, r) = escrow();
    let cs = commitments(&["escrow_purchase.cupid", "escrow_transfer.cupid"]);
    let comp = compose(&p, &cs, &[SynthesisMode::Complete]);
    let reports =
        check_alignment_reachability(&comp.subject, &cs, &bound).map_err(|e| e.to_string())?;
    for rep in &reports {
        ensure(
            rep.holds(),
            format!("composite {}: {:?}", rep.detail, rep.outcome),
        )?;
    }
    let bare = Subject::new(&p, &r).map_err(|e| e.to_string())?;
    let rep = check_alignment_reachability(&bare, &cs[..1], &bound)
        .map_err(|e| e.to_string())?
        .remove(0);
    ensure(
        rep.outcome == Outcome::Fails,
        format!("bare EscrowOrdering: {:?}", rep.outcome),
    )?;
    let w = rep.witness.as_ref().ok_or("no witness")?;
    ensure(
        w.trace.iter().any(|t| t.schema == "payEscrow"),
        "witness does not pay the escrow",
    )?;
    Ok(format!(
        "composite holds for {} commitments; bare input fails with a {}-step witness",
        reports.len(),
        w.trace.len()
    ))
}

fn embedding() -> Check {
    let p = protocol("ordering.bspl");
    let comp = compose(
        &p,
        &commitments(&["purchase.cupid"]),
        &[SynthesisMode::Complete],
    );
    let r = check_embedding(&comp.input_subject, &comp.subject, &Bound::default());
    ensure(r.holds(), format!("{:?} {}", r.outcome, r.detail))?;
    Ok(format!("{} states", r.states_explored))
}

fn run_suite<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn property_suites() -> Check {
    run_suite(ROUND_TRIP_CASES, protocol_plan(), |plan| {
        check_protocol_round_trip(&plan)
    })
    .map_err(|e| format!("round trip: {e}"))?;
    run_suite(
        REDUCE_CASES,
        (
            formula(REDUCE_DEPTH),
            formula(REDUCE_DEPTH),
            formula(REDUCE_DEPTH),
        ),
        |(a, b, c)| check_reduce(&commitment_with(a, b, c)),
    )
    .map_err(|e| format!("reduce: {e}"))?;
    run_suite(
        EVAL_CASES,
        (positive_formula(3), model(EVAL_MAX_ENTRIES), 0u64..5),
        |(e, m, slack)| {
            let now = m.entries.iter().map(|x| x.time).max().unwrap_or(0) + slack;
            check_eval_oracle(&e, &m, now)
        },
    )
    .map_err(|e| format!("eval oracle: {e}"))?;
    let setups = [
        setup(&["ordering.bspl"], &["purchase.cupid"], None),
        setup(
            &["escrow_ordering.bspl"],
            &["escrow_purchase.cupid"],
            Some(SynthesisMode::Literal),
        ),
        setup(
            &["escrow_ordering.bspl"],
            &["escrow_purchase.cupid", "escrow_transfer.cupid"],
            Some(SynthesisMode::Complete),
        ),
    ];
    run_suite(
        PREFIX_CASES,
        (any::<u64>(), 0usize..setups.len()),
        |(seed, i)| check_prefix_closure(&setups[i].0, &setups[i].1, seed),
    )
    .map_err(|e| format!("prefix closure: {e}"))?;
    Ok(format!(
        "{ROUND_TRIP_CASES} round trips, {REDUCE_CASES} reductions at depth {REDUCE_DEPTH}, \
         {EVAL_CASES} oracle cases, {PREFIX_CASES} runs"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("literal synthesis of EscrowPurchase", golden_literal),
        ("complete synthesis of EscrowTransfer", golden_complete),
        ("composition structure", composition),
        ("timeline, ordering with direct payment", figure_1a),
        ("timeline, escrow payment forwarded", figure_1b),
        ("timeline, nested commitment", figure_2),
        ("safety and liveness preserved", preservation),
        ("alignment reachable", reachability),
        ("input traces embed into the composite", embedding),
        ("property suites", property_suites),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail} ({secs:.2}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail} ({secs:.2}s)", i + 1);
            }
        }
    }
    let total = start.elapsed();
    if total > TIME_BUDGET {
        failed += 1;
        println!(
            "FAIL [time] {:.2}s exceeds {}s",
            total.as_secs_f64(),
            TIME_BUDGET.as_secs()
        );
    } else {
        println!(
            "PASS [time] {:.2}s within {}s",
            total.as_secs_f64(),
            TIME_BUDGET.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
