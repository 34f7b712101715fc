use super::{
    Adornment, MessageSchema, Parameter, Protocol, ProtocolError, ProtocolReference, Reference,
};
use crate::syntax::{Cursor, ParseError, Tok};

const KEYWORDS: &[&str] = &["roles", "parameters", "private", "in", "out", "key"];

/// Parses exactly one protocol.
pub fn parse_protocol(source: &str) -> Result<Protocol, ProtocolError> {
    let mut cur = Cursor::new(source)?;
    let protocol = protocol(&mut cur)?;
    if *cur.peek() != Tok::Eof {
        return Err(cur.unexpected("end of input").into());
    }
    finish(protocol)
}

/// Parses a file of flat top-level protocol definitions.
pub fn parse_protocols(source: &str) -> Result<Vec<Protocol>, ProtocolError> {
    let mut cur = Cursor::new(source)?;
    let mut out = Vec::new();
    while *cur.peek() != Tok::Eof {
        out.push(finish(protocol(&mut cur)?)?);
    }
    Ok(out)
}

fn finish(mut protocol: Protocol) -> Result<Protocol, ProtocolError> {
    protocol.inherit_keys();
    protocol.validate()?;
    Ok(protocol)
}

fn name(cur: &mut Cursor, what: &str) -> Result<String, ParseError> {
    let pos = cur.pos();
    let name = cur.ident(what)?;
    if KEYWORDS.contains(&name.as_str()) {
        return Err(ParseError::at(
            pos,
            format!("expected {what}, found keyword `{name}`"),
        ));
    }
    Ok(name)
}

fn protocol(cur: &mut Cursor) -> Result<Protocol, ParseError> {
    let mut p = Protocol::new(name(cur, "protocol name")?);
    cur.expect(&Tok::LBrace)?;
    cur.expect_keyword("roles")?;
    p.roles = role_list(cur)?;
    if cur.eat_keyword("private") {
        p.private_roles = role_list(cur)?;
    }
    cur.expect_keyword("parameters")?;
    p.params = param_list(cur)?;
    if cur.eat_keyword("private") {
        p.private_params = param_list(cur)?;
    }
    while !cur.eat(&Tok::RBrace) {
        p.references.push(reference(cur)?);
    }
    Ok(p)
}

fn role_list(cur: &mut Cursor) -> Result<Vec<String>, ParseError> {
    let mut roles = Vec::new();
    if !matches!(cur.peek(), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str())) {
        return Ok(roles);
    }
    // A role list never ends in a schema: `A, B C -> D` must not swallow C.
    loop {
        roles.push(name(cur, "role name")?);
        if !cur.eat(&Tok::Comma) {
            return Ok(roles);
        }
    }
}

fn param_list(cur: &mut Cursor) -> Result<Vec<Parameter>, ParseError> {
    let mut params = Vec::new();
    if !(cur.at_keyword("in") || cur.at_keyword("out")) {
        return Ok(params);
    }
    loop {
        params.push(param(cur)?);
        if !cur.eat(&Tok::Comma) {
            return Ok(params);
        }
    }
}

fn param(cur: &mut Cursor) -> Result<Parameter, ParseError> {
    let adornment = if cur.eat_keyword("in") {
        Adornment::In
    } else if cur.eat_keyword("out") {
        Adornment::Out
    } else {
        return Err(cur.unexpected("`in` or `out`"));
    };
    let name = name(cur, "parameter name")?;
    let key = cur.eat_keyword("key");
    Ok(Parameter {
        name,
        adornment,
        key,
    })
}

fn reference(cur: &mut Cursor) -> Result<Reference, ParseError> {
    let first = name(cur, "schema or protocol reference")?;
    match cur.peek() {
        Tok::Arrow => {
            cur.bump();
            let receiver = name(cur, "receiver role")?;
            cur.expect(&Tok::Colon)?;
            let schema = name(cur, "message name")?;
            cur.expect(&Tok::LBracket)?;
            let mut params = vec![param(cur)?];
            while cur.eat(&Tok::Comma) {
                params.push(param(cur)?);
            }
            cur.expect(&Tok::RBracket)?;
            Ok(Reference::Schema(MessageSchema {
                name: schema,
                sender: first,
                receiver,
                params,
            }))
        }
        Tok::LParen => {
            cur.bump();
            let mut roles = Vec::new();
            let mut params = Vec::new();
            loop {
                if cur.at_keyword("in") || cur.at_keyword("out") {
                    params.push(param(cur)?);
                } else if params.is_empty() {
                    roles.push(name(cur, "role argument")?);
                } else {
                    return Err(cur.unexpected("parameter argument"));
                }
                if !cur.eat(&Tok::Comma) {
                    break;
                }
            }
            cur.expect(&Tok::RParen)?;
            Ok(Reference::Protocol(ProtocolReference {
                name: first,
                roles,
                params,
            }))
        }
        _ => Err(cur.unexpected("`->` or `(`")),
    }
}
