use std::fmt;

use super::{MessageSchema, Parameter, Protocol, ProtocolReference, Reference};

struct Decl<'a>(&'a Parameter);

impl fmt::Display for Decl<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.0.adornment, self.0.name)?;
        if self.0.key {
            f.write_str(" key")?;
        }
        Ok(())
    }
}

/// Schema and reference arguments omit `key`: it is inherited from the
/// enclosing protocol.
struct Arg<'a>(&'a Parameter);

impl fmt::Display for Arg<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.0.adornment, self.0.name)
    }
}

fn join<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl fmt::Display for MessageSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} -> {}: {}[{}]",
            self.sender,
            self.receiver,
            self.name,
            join(self.params.iter().map(Arg))
        )
    }
}

impl fmt::Display for ProtocolReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args = self
            .roles
            .iter()
            .map(|r| r.to_string())
            .chain(self.params.iter().map(|p| Arg(p).to_string()));
        write!(f, "{}({})", self.name, join(args))
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Schema(s) => s.fmt(f),
            Reference::Protocol(r) => r.fmt(f),
        }
    }
}

fn clause(f: &mut fmt::Formatter<'_>, keyword: &str, items: &str) -> fmt::Result {
    if items.is_empty() {
        writeln!(f, "  {keyword}")
    } else {
        writeln!(f, "  {keyword} {items}")
    }
}

/// Canonical text: one clause per line, declaration order preserved.
impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {{", self.name)?;
        clause(f, "roles", &join(&self.roles))?;
        if !self.private_roles.is_empty() {
            clause(f, "private", &join(&self.private_roles))?;
        }
        clause(f, "parameters", &join(self.params.iter().map(Decl)))?;
        if !self.private_params.is_empty() {
            clause(f, "private", &join(self.private_params.iter().map(Decl)))?;
        }
        for reference in &self.references {
            writeln!(f, "  {reference}")?;
        }
        f.write_str("}\n")
    }
}

/// Prints a protocol in canonical surface syntax.
pub fn print_protocol(p: &Protocol) -> String {
    p.to_string()
}
