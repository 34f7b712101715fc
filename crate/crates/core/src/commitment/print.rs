use std::fmt;

use super::{CommitmentSpec, EventExpr, TimeRef};

fn precedence(e: &EventExpr) -> u8 {
    match e {
        EventExpr::Except(..) => 1,
        EventExpr::Or(..) => 2,
        EventExpr::And(..) => 3,
        _ => 4,
    }
}

struct Operand<'a>(&'a EventExpr, u8);

impl fmt::Display for Operand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if precedence(self.0) < self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

struct Bound<'a>(&'a TimeRef, bool);

impl fmt::Display for Bound<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lower = self.1;
        match self.0 {
            TimeRef::Absolute(0) if lower => Ok(()),
            TimeRef::Absolute(n) => write!(f, "{n}"),
            TimeRef::Infinity if lower => f.write_str("inf"),
            TimeRef::Infinity => Ok(()),
            TimeRef::After { event, offset } => {
                write!(f, "{} + {offset}", Operand(event, 4))
            }
        }
    }
}

impl fmt::Display for EventExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = precedence(self);
        match self {
            EventExpr::Base(n) => f.write_str(n),
            EventExpr::Lifecycle { kind, commitment } => write!(f, "{kind}({})", commitment.name),
            EventExpr::Window { inner, from, to } => {
                let lo = Bound(from, true).to_string();
                let hi = Bound(to, false).to_string();
                let sep = if hi.is_empty() { "," } else { ", " };
                write!(f, "{}[{lo}{sep}{hi}]", Operand(inner, 4))
            }
            EventExpr::And(l, r) => write!(f, "{} and {}", Operand(l, p), Operand(r, p + 1)),
            EventExpr::Or(l, r) => write!(f, "{} or {}", Operand(l, p), Operand(r, p + 1)),
            EventExpr::Except(l, r) => {
                write!(f, "{} except {}", Operand(l, p), Operand(r, p + 1))
            }
        }
    }
}

impl fmt::Display for CommitmentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "commitment {} {} to {}",
            self.name, self.debtor, self.creditor
        )?;
        writeln!(f, "  create {}", self.create)?;
        writeln!(f, "  detach {}", self.detach)?;
        writeln!(f, "  discharge {}", self.discharge)
    }
}

/// Prints commitments, preceding each with any nested commitment it
/// references that has not been printed yet, so that the output parses on
/// its own.
pub fn print_commitments<'a>(specs: impl IntoIterator<Item = &'a CommitmentSpec>) -> String {
    let mut printed: Vec<&str> = Vec::new();
    let mut out = String::new();
    for spec in specs {
        for c in spec.nested().into_iter().chain(std::iter::once(spec)) {
            if !printed.contains(&c.name.as_str()) {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&c.to_string());
                printed.push(&c.name);
            }
        }
    }
    out
}
