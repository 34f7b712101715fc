use std::collections::BTreeMap;

use super::{CommitmentError, CommitmentSpec, EventExpr, LifecycleKind, TimeRef};
use crate::syntax::{Cursor, ParseError, Tok};

const KEYWORDS: &[&str] = &[
    "commitment",
    "to",
    "create",
    "detach",
    "discharge",
    "and",
    "or",
    "except",
    "inf",
];

/// Commitments available to `created(Name)`-style references.
#[derive(Debug, Clone, Default)]
pub struct CommitmentRegistry {
    specs: BTreeMap<String, CommitmentSpec>,
}

impl CommitmentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, spec: CommitmentSpec) -> Option<CommitmentSpec> {
        self.specs.insert(spec.name.clone(), spec)
    }

    pub fn get(&self, name: &str) -> Option<&CommitmentSpec> {
        self.specs.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CommitmentSpec> {
        self.specs.values()
    }
}

impl FromIterator<CommitmentSpec> for CommitmentRegistry {
    fn from_iter<T: IntoIterator<Item = CommitmentSpec>>(iter: T) -> Self {
        let mut r = CommitmentRegistry::new();
        for c in iter {
            r.insert(c);
        }
        r
    }
}

/// Parses a single commitment. Lifecycle references resolve in `registry`.
pub fn parse_commitment(
    source: &str,
    registry: &CommitmentRegistry,
) -> Result<CommitmentSpec, CommitmentError> {
    let mut p = Parser {
        cur: Cursor::new(source)?,
        registry,
        local: BTreeMap::new(),
    };
    let c = p.commitment()?;
    if *p.cur.peek() != Tok::Eof {
        return Err(p.cur.unexpected("end of input").into());
    }
    Ok(c)
}

/// Parses a sequence of commitments. Each may refer to those before it in
/// the same source as well as to `registry`.
pub fn parse_commitments(
    source: &str,
    registry: &CommitmentRegistry,
) -> Result<Vec<CommitmentSpec>, CommitmentError> {
    let mut p = Parser {
        cur: Cursor::new(source)?,
        registry,
        local: BTreeMap::new(),
    };
    let mut out = Vec::new();
    while *p.cur.peek() != Tok::Eof {
        let c = p.commitment()?;
        p.local.insert(c.name.clone(), c.clone());
        out.push(c);
    }
    Ok(out)
}

struct Parser<'a> {
    cur: Cursor,
    registry: &'a CommitmentRegistry,
    local: BTreeMap<String, CommitmentSpec>,
}

impl Parser<'_> {
    fn name(&mut self, what: &str) -> Result<String, ParseError> {
        let pos = self.cur.pos();
        let name = self.cur.ident(what)?;
        if KEYWORDS.contains(&name.as_str()) {
            return Err(ParseError::at(
                pos,
                format!("expected {what}, found keyword `{name}`"),
            ));
        }
        Ok(name)
    }

    fn commitment(&mut self) -> Result<CommitmentSpec, CommitmentError> {
        self.cur.expect_keyword("commitment")?;
        let name = self.name("commitment name")?;
        let debtor = self.name("debtor role")?;
        self.cur.expect_keyword("to")?;
        let creditor = self.name("creditor role")?;
        if debtor == creditor {
            return Err(CommitmentError::DebtorIsCreditor(name));
        }
        self.cur.expect_keyword("create")?;
        let create = self.expr()?;
        self.cur.expect_keyword("detach")?;
        let detach = self.expr()?;
        self.cur.expect_keyword("discharge")?;
        let discharge = self.expr()?;
        Ok(CommitmentSpec {
            name,
            debtor,
            creditor,
            create,
            detach,
            discharge,
        })
    }

    // Precedence from loosest: except, or, and. All left-associative.
    fn expr(&mut self) -> Result<EventExpr, CommitmentError> {
        let mut l = self.disjunction()?;
        while self.cur.eat_keyword("except") || self.cur.eat(&Tok::Minus) {
            l = EventExpr::except(l, self.disjunction()?);
        }
        Ok(l)
    }

    fn disjunction(&mut self) -> Result<EventExpr, CommitmentError> {
        let mut l = self.conjunction()?;
        while self.cur.eat_keyword("or") || self.cur.eat(&Tok::Join) {
            l = EventExpr::or(l, self.conjunction()?);
        }
        Ok(l)
    }

    fn conjunction(&mut self) -> Result<EventExpr, CommitmentError> {
        let mut l = self.windowed()?;
        while self.cur.eat_keyword("and") || self.cur.eat(&Tok::Meet) {
            l = EventExpr::and(l, self.windowed()?);
        }
        Ok(l)
    }

    fn windowed(&mut self) -> Result<EventExpr, CommitmentError> {
        let mut e = self.primary()?;
        while self.cur.eat(&Tok::LBracket) {
            let from = if *self.cur.peek() == Tok::Comma {
                TimeRef::Absolute(0)
            } else {
                self.time()?
            };
            self.cur.expect(&Tok::Comma)?;
            let to = if *self.cur.peek() == Tok::RBracket {
                TimeRef::Infinity
            } else {
                self.time()?
            };
            self.cur.expect(&Tok::RBracket)?;
            e = EventExpr::window(e, from, to);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<EventExpr, CommitmentError> {
        if self.cur.eat(&Tok::LParen) {
            let e = self.expr()?;
            self.cur.expect(&Tok::RParen)?;
            return Ok(e);
        }
        let pos = self.cur.pos();
        let name = self.name("event")?;
        if let (Some(kind), Tok::LParen) = (LifecycleKind::from_name(&name), self.cur.peek()) {
            self.cur.bump();
            let pos = self.cur.pos();
            let target = self.name("commitment name")?;
            self.cur.expect(&Tok::RParen)?;
            let spec = self
                .local
                .get(&target)
                .or_else(|| self.registry.get(&target))
                .ok_or(CommitmentError::UnknownCommitmentReference {
                    name: target.clone(),
                    line: pos.line,
                    column: pos.column,
                })?;
            return Ok(EventExpr::lifecycle(kind, spec));
        }
        if LifecycleKind::from_name(&name).is_some() {
            return Err(ParseError::at(pos, format!("expected `(` after `{name}`")).into());
        }
        Ok(EventExpr::Base(name))
    }

    fn time(&mut self) -> Result<TimeRef, CommitmentError> {
        if let Tok::Number(_) = self.cur.peek() {
            return Ok(TimeRef::Absolute(self.cur.number("instant")?));
        }
        if self.cur.eat_keyword("inf") {
            return Ok(TimeRef::Infinity);
        }
        let event = self.windowed()?;
        let offset = if self.cur.eat(&Tok::Plus) {
            self.cur.number("offset")?
        } else {
            0
        };
        Ok(TimeRef::after(event, offset))
    }
}
