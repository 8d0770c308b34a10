//! Parser and pretty-printer for the protocol description language.
//!
//! ```text
//! hash h1, h2;                      // register hash-key families
//! tag t1;                          // register protocol tags
//! protocol NSLp {
//!   role i {
//!     const nip; param nr; var nrp;
//!     create 1 (i);
//!     send 2 (i,r, {nip,i,nr}pk(r));
//!     read 3 (r,i, {nip,nrp,r}pk(i));
//!     send 4 (i,r, {nrp}pk(r));
//!     claim 8 (i, secret, nip);
//!     end 5 (i);
//!   }
//!   role r { ... }
//! }
//! ```
//!
//! Tupling is binary and right-associated; `{x,y}k` encrypts the tuple
//! `(x,y)` with key `k`; `pk(A)`, `sk(A)`, `k(A,B)`, `h(t)` are function
//! applications. A bare name is a role if the protocol declares that
//! role, otherwise an identifier.

use crate::proto::{ClaimKind, Event, EventKind, Label, Protocol, RoleSpec, WfError};
use crate::symbol::Sym;
use crate::term::{IdentKind, KeyTable, Term, TermData, Typing};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: expected {expected}, found {found}")]
    Unexpected { line: u32, col: u32, expected: String, found: String },
    #[error("{line}:{col}: unknown claim kind `{0}`", .name)]
    BadClaimKind { line: u32, col: u32, name: String },
    #[error("{line}:{col}: duplicate typing declaration for `{0}`", .name)]
    DuplicateDecl { line: u32, col: u32, name: String },
    #[error("{line}:{col}: unexpected end of input, expected {expected}")]
    Eof { line: u32, col: u32, expected: String },
    #[error("empty input: no protocol definition found")]
    Empty,
    #[error("encryption key uses undeclared function `{key}` in protocol {proto}; declare it with `hash {key};` or `tag {key};`")]
    UnknownKeyFn { proto: Sym, key: Sym },
    #[error(transparent)]
    Wf(#[from] WfError),
}

/// Result of parsing one source file.
#[derive(Debug, Default)]
pub struct ParsedFile {
    pub protocols: Vec<Protocol>,
    pub hash_decls: Vec<Sym>,
    pub tag_decls: Vec<Sym>,
}

impl ParsedFile {
    /// Key table with the file's hash/tag families registered.
    pub fn key_table(&self) -> KeyTable {
        let mut kt = KeyTable::default();
        for &h in self.hash_decls.iter().chain(self.tag_decls.iter()) {
            kt.register_public(h);
        }
        kt
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Name(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
}

struct Lexer {
    toks: Vec<(Tok, u32, u32)>,
    pos: usize,
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '\'')
}

fn lex(src: &str) -> Result<Lexer, ParseError> {
    let mut toks = Vec::new();
    let mut line = 1u32;
    let mut col = 1u32;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (l, co) = (line, col);
        let bump = |c: char, line: &mut u32, col: &mut u32| {
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                chars.next();
                bump(c, &mut line, &mut col);
            }
            '#' => {
                while let Some(&c2) = chars.peek() {
                    chars.next();
                    bump(c2, &mut line, &mut col);
                    if c2 == '\n' {
                        break;
                    }
                }
            }
            '/' => {
                chars.next();
                bump('/', &mut line, &mut col);
                if chars.peek() == Some(&'/') {
                    while let Some(&c2) = chars.peek() {
                        chars.next();
                        bump(c2, &mut line, &mut col);
                        if c2 == '\n' {
                            break;
                        }
                    }
                } else {
                    return Err(ParseError::Unexpected {
                        line: l,
                        col: co,
                        expected: "`//` comment".into(),
                        found: "`/`".into(),
                    });
                }
            }
            '{' | '}' | '(' | ')' | ',' | ';' => {
                chars.next();
                bump(c, &mut line, &mut col);
                let t = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    _ => Tok::Semi,
                };
                toks.push((t, l, co));
            }
            c if is_name_char(c) => {
                let mut s = String::new();
                while let Some(&c2) = chars.peek() {
                    if is_name_char(c2) {
                        s.push(c2);
                        chars.next();
                        bump(c2, &mut line, &mut col);
                    } else {
                        break;
                    }
                }
                toks.push((Tok::Name(s), l, co));
            }
            other => {
                return Err(ParseError::Unexpected {
                    line: l,
                    col: co,
                    expected: "token".into(),
                    found: format!("`{other}`"),
                })
            }
        }
    }
    Ok(Lexer { toks, pos: 0 })
}

impl Lexer {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn loc(&self) -> (u32, u32) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|&(_, l, c)| (l, c))
            .unwrap_or((1, 1))
    }

    fn next(&mut self, expected: &str) -> Result<Tok, ParseError> {
        let (l, c) = self.loc();
        match self.toks.get(self.pos) {
            Some((t, _, _)) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(ParseError::Eof { line: l, col: c, expected: expected.into() }),
        }
    }

    fn expect(&mut self, want: Tok, expected: &str) -> Result<(), ParseError> {
        let (l, c) = self.loc();
        let got = self.next(expected)?;
        if got == want {
            Ok(())
        } else {
            Err(ParseError::Unexpected { line: l, col: c, expected: expected.into(), found: format!("{got:?}") })
        }
    }

    fn name(&mut self, expected: &str) -> Result<String, ParseError> {
        let (l, c) = self.loc();
        match self.next(expected)? {
            Tok::Name(s) => Ok(s),
            t => Err(ParseError::Unexpected { line: l, col: c, expected: expected.into(), found: format!("{t:?}") }),
        }
    }
}

/// Raw term with unresolved leaves; names are resolved to roles or
/// identifiers once the protocol's role set is known.
#[derive(Clone, Debug)]
enum RawTerm {
    Leaf(String),
    Func(String, Vec<RawTerm>),
    Tuple(Box<RawTerm>, Box<RawTerm>),
    Enc(Box<RawTerm>, Box<RawTerm>),
}

impl RawTerm {
    fn resolve(&self, roles: &[Sym]) -> Term {
        match self {
            RawTerm::Leaf(n) => {
                let s = Sym::new(n);
                if roles.contains(&s) {
                    Term::role(s)
                } else {
                    Term::ident(s)
                }
            }
            RawTerm::Func(f, args) => {
                Term::func(Sym::new(f), args.iter().map(|a| a.resolve(roles)).collect())
            }
            RawTerm::Tuple(a, b) => Term::tuple(a.resolve(roles), b.resolve(roles)),
            RawTerm::Enc(a, b) => Term::enc(a.resolve(roles), b.resolve(roles)),
        }
    }
}

fn parse_term(lx: &mut Lexer) -> Result<RawTerm, ParseError> {
    let items = parse_term_list(lx)?;
    Ok(fold_tuple(items))
}

fn fold_tuple(mut items: Vec<RawTerm>) -> RawTerm {
    let last = items.pop().expect("nonempty term list");
    items
        .into_iter()
        .rev()
        .fold(last, |acc, t| RawTerm::Tuple(Box::new(t), Box::new(acc)))
}

fn parse_term_list(lx: &mut Lexer) -> Result<Vec<RawTerm>, ParseError> {
    let mut items = vec![parse_term_item(lx)?];
    while lx.peek() == Some(&Tok::Comma) {
        lx.next(",")?;
        items.push(parse_term_item(lx)?);
    }
    Ok(items)
}

fn parse_term_item(lx: &mut Lexer) -> Result<RawTerm, ParseError> {
    let (l, c) = lx.loc();
    match lx.peek() {
        Some(Tok::LBrace) => {
            lx.next("{")?;
            let body = parse_term(lx)?;
            lx.expect(Tok::RBrace, "`}`")?;
            let key = parse_term_item(lx)?;
            Ok(RawTerm::Enc(Box::new(body), Box::new(key)))
        }
        Some(Tok::LParen) => {
            lx.next("(")?;
            let inner = parse_term(lx)?;
            lx.expect(Tok::RParen, "`)`")?;
            Ok(inner)
        }
        Some(Tok::Name(_)) => {
            let name = lx.name("term")?;
            if lx.peek() == Some(&Tok::LParen) {
                lx.next("(")?;
                let args = if lx.peek() == Some(&Tok::RParen) {
                    Vec::new()
                } else {
                    parse_term_list(lx)?
                };
                lx.expect(Tok::RParen, "`)`")?;
                Ok(RawTerm::Func(name, args))
            } else {
                Ok(RawTerm::Leaf(name))
            }
        }
        other => Err(ParseError::Unexpected {
            line: l,
            col: c,
            expected: "term".into(),
            found: format!("{other:?}"),
        }),
    }
}

struct RawEvent {
    label: Label,
    kind: RawEventKind,
}

enum RawEventKind {
    Create(String),
    Send(String, String, RawTerm),
    Read(String, String, RawTerm),
    Claim(String, ClaimKind, Option<RawTerm>),
    End(String),
}

fn parse_role(lx: &mut Lexer) -> Result<(Sym, Vec<RawEvent>, Typing), ParseError> {
    let role = Sym::new(&lx.name("role name")?);
    lx.expect(Tok::LBrace, "`{`")?;
    let mut typing = Typing::new();
    let mut events = Vec::new();
    loop {
        let (l, c) = lx.loc();
        match lx.peek() {
            Some(Tok::RBrace) => {
                lx.next("}")?;
                break;
            }
            Some(Tok::Name(kw)) => {
                let kw = kw.clone();
                match kw.as_str() {
                    "const" | "param" | "var" => {
                        lx.next("declaration")?;
                        let kind = match kw.as_str() {
                            "const" => IdentKind::Const,
                            "param" => IdentKind::Param,
                            _ => IdentKind::Var,
                        };
                        loop {
                            let (dl, dc) = lx.loc();
                            let n = lx.name("identifier")?;
                            if typing.insert(Sym::new(&n), kind).is_some() {
                                return Err(ParseError::DuplicateDecl { line: dl, col: dc, name: n });
                            }
                            match lx.next("`,` or `;`")? {
                                Tok::Comma => continue,
                                Tok::Semi => break,
                                t => {
                                    return Err(ParseError::Unexpected {
                                        line: dl,
                                        col: dc,
                                        expected: "`,` or `;`".into(),
                                        found: format!("{t:?}"),
                                    })
                                }
                            }
                        }
                    }
                    "create" | "send" | "read" | "claim" | "end" => {
                        lx.next("event")?;
                        let label = Label::new(&lx.name("label")?);
                        lx.expect(Tok::LParen, "`(`")?;
                        let kind = match kw.as_str() {
                            "create" => RawEventKind::Create(lx.name("role")?),
                            "end" => RawEventKind::End(lx.name("role")?),
                            "send" | "read" => {
                                let from = lx.name("role")?;
                                lx.expect(Tok::Comma, "`,`")?;
                                let to = lx.name("role")?;
                                lx.expect(Tok::Comma, "`,`")?;
                                let term = parse_term(lx)?;
                                if kw == "send" {
                                    RawEventKind::Send(from, to, term)
                                } else {
                                    RawEventKind::Read(from, to, term)
                                }
                            }
                            _ => {
                                let role = lx.name("role")?;
                                lx.expect(Tok::Comma, "`,`")?;
                                let (kl, kc) = lx.loc();
                                let kind_name = lx.name("claim kind")?;
                                let kind = ClaimKind::parse(&kind_name).ok_or(
                                    ParseError::BadClaimKind { line: kl, col: kc, name: kind_name },
                                )?;
                                let arg = if lx.peek() == Some(&Tok::Comma) {
                                    lx.next(",")?;
                                    Some(parse_term(lx)?)
                                } else {
                                    None
                                };
                                RawEventKind::Claim(role, kind, arg)
                            }
                        };
                        lx.expect(Tok::RParen, "`)`")?;
                        lx.expect(Tok::Semi, "`;`")?;
                        events.push(RawEvent { label, kind });
                    }
                    other => {
                        return Err(ParseError::Unexpected {
                            line: l,
                            col: c,
                            expected: "declaration or event".into(),
                            found: format!("`{other}`"),
                        })
                    }
                }
            }
            other => {
                return Err(ParseError::Unexpected {
                    line: l,
                    col: c,
                    expected: "declaration, event or `}`".into(),
                    found: format!("{other:?}"),
                })
            }
        }
    }
    Ok((role, events, typing))
}

/// Parse one source file into protocols plus key-family declarations.
/// Parsed protocols satisfy all well-formedness invariants.
pub fn parse_file(src: &str) -> Result<ParsedFile, ParseError> {
    let mut lx = lex(src)?;
    let mut out = ParsedFile::default();
    loop {
        let (l, c) = lx.loc();
        match lx.peek() {
            None => break,
            Some(Tok::Name(kw)) if kw == "hash" || kw == "tag" => {
                let is_hash = kw == "hash";
                lx.next("declaration")?;
                loop {
                    let n = Sym::new(&lx.name("function name")?);
                    if is_hash {
                        out.hash_decls.push(n);
                    } else {
                        out.tag_decls.push(n);
                    }
                    match lx.next("`,` or `;`")? {
                        Tok::Comma => continue,
                        Tok::Semi => break,
                        t => {
                            return Err(ParseError::Unexpected {
                                line: l,
                                col: c,
                                expected: "`,` or `;`".into(),
                                found: format!("{t:?}"),
                            })
                        }
                    }
                }
            }
            Some(Tok::Name(kw)) if kw == "protocol" => {
                lx.next("protocol")?;
                let name = Sym::new(&lx.name("protocol name")?);
                lx.expect(Tok::LBrace, "`{`")?;
                let mut raw_roles = Vec::new();
                loop {
                    let (rl, rc) = lx.loc();
                    match lx.peek() {
                        Some(Tok::RBrace) => {
                            lx.next("}")?;
                            break;
                        }
                        Some(Tok::Name(kw)) if kw == "role" => {
                            lx.next("role")?;
                            raw_roles.push(parse_role(&mut lx)?);
                        }
                        other => {
                            return Err(ParseError::Unexpected {
                                line: rl,
                                col: rc,
                                expected: "`role` or `}`".into(),
                                found: format!("{other:?}"),
                            })
                        }
                    }
                }
                let role_names: Vec<Sym> = raw_roles.iter().map(|(r, _, _)| *r).collect();
                let mut roles = BTreeMap::new();
                for (role, raw_events, typing) in raw_roles {
                    let events = raw_events
                        .iter()
                        .map(|ev| Event {
                            label: ev.label,
                            kind: match &ev.kind {
                                RawEventKind::Create(r) => EventKind::Create(Sym::new(r)),
                                RawEventKind::End(r) => EventKind::End(Sym::new(r)),
                                RawEventKind::Send(f, t, m) => EventKind::Send {
                                    from: Sym::new(f),
                                    to: Sym::new(t),
                                    msg: m.resolve(&role_names),
                                },
                                RawEventKind::Read(f, t, m) => EventKind::Read {
                                    from: Sym::new(f),
                                    to: Sym::new(t),
                                    pattern: m.resolve(&role_names),
                                },
                                RawEventKind::Claim(r, k, a) => EventKind::Claim {
                                    role: Sym::new(r),
                                    kind: *k,
                                    arg: a.as_ref().map(|t| t.resolve(&role_names)),
                                },
                            },
                        })
                        .collect();
                    roles.insert(role, RoleSpec { role, events, typing });
                }
                out.protocols.push(Protocol { name, roles });
            }
            Some(t) => {
                return Err(ParseError::Unexpected {
                    line: l,
                    col: c,
                    expected: "`protocol`, `hash` or `tag`".into(),
                    found: format!("{t:?}"),
                })
            }
        }
    }
    if out.protocols.is_empty() {
        return Err(ParseError::Empty);
    }
    let kt = out.key_table();
    for p in &out.protocols {
        p.validate()?;
        check_key_functions(p, &kt)?;
    }
    Ok(out)
}

/// Every function symbol used in key position must be pk/sk/k or a
/// declared hash/tag family, otherwise decryptability is ill-defined.
fn check_key_functions(p: &Protocol, kt: &KeyTable) -> Result<(), ParseError> {
    fn walk(t: Term, p: &Protocol, kt: &KeyTable) -> Result<(), ParseError> {
        match t.data() {
            TermData::Enc(body, key) => {
                if let TermData::Func(f, _) = key.data() {
                    if !kt.is_known_fn(f) {
                        return Err(ParseError::UnknownKeyFn { proto: p.name, key: f });
                    }
                }
                walk(body, p, kt)?;
                walk(key, p, kt)
            }
            TermData::Tuple(a, b) => {
                walk(a, p, kt)?;
                walk(b, p, kt)
            }
            TermData::Func(_, args) => args.iter().try_for_each(|&a| walk(a, p, kt)),
            _ => Ok(()),
        }
    }
    for rs in p.roles.values() {
        for ev in &rs.events {
            if let Some(t) = ev.term() {
                walk(t, p, kt)?;
            }
        }
    }
    Ok(())
}

/// Render a term in surface syntax (role-term leaves only).
pub fn term_to_dsl(t: Term) -> String {
    fn item(t: Term, out: &mut String) {
        match t.data() {
            TermData::Tuple(..) => {
                out.push('(');
                cat(t, out);
                out.push(')');
            }
            _ => cat(t, out),
        }
    }
    fn cat(t: Term, out: &mut String) {
        match t.data() {
            TermData::Role(r) => out.push_str(r.as_str()),
            TermData::Ident(x) => out.push_str(x.as_str()),
            TermData::Agent(a) => out.push_str(a.as_str()),
            TermData::Nonce(x, rid) => out.push_str(&format!("{x}#{rid}")),
            TermData::IntruderNonce(i) => out.push_str(&format!("it{i}")),
            TermData::Func(f, args) => {
                out.push_str(f.as_str());
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    item(*a, out);
                }
                out.push(')');
            }
            TermData::Tuple(a, b) => {
                item(a, out);
                out.push(',');
                cat(b, out);
            }
            TermData::Enc(body, key) => {
                out.push('{');
                cat(body, out);
                out.push('}');
                item(key, out);
            }
        }
    }
    let mut s = String::new();
    cat(t, &mut s);
    s
}

/// Pretty-print a protocol back to the surface syntax. Parsing the output
/// yields the identical model.
pub fn protocol_to_dsl(p: &Protocol, kt: &KeyTable) -> String {
    let mut out = String::new();
    // Non-builtin public function families used by this protocol.
    let builtin = Sym::new("h");
    let mut hashes: Vec<Sym> = Vec::new();
    let mut tags: Vec<Sym> = Vec::new();
    for rs in p.roles.values() {
        for ev in &rs.events {
            if let Some(t) = ev.term() {
                collect_public_fns(t, kt, builtin, &mut hashes, &mut tags);
            }
        }
    }
    if !hashes.is_empty() {
        out.push_str(&format!(
            "hash {};\n",
            hashes.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        ));
    }
    if !tags.is_empty() {
        out.push_str(&format!(
            "tag {};\n",
            tags.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        ));
    }
    if !out.is_empty() {
        out.push('\n');
    }
    out.push_str(&format!("protocol {} {{\n", p.name));
    for (role, rs) in &p.roles {
        out.push_str(&format!("  role {role} {{\n"));
        for kind in [IdentKind::Const, IdentKind::Param, IdentKind::Var] {
            let names: Vec<&str> = rs
                .typing
                .iter()
                .filter(|(_, k)| **k == kind)
                .map(|(s, _)| s.as_str())
                .collect();
            if !names.is_empty() {
                let kw = match kind {
                    IdentKind::Const => "const",
                    IdentKind::Param => "param",
                    IdentKind::Var => "var",
                };
                out.push_str(&format!("    {kw} {};\n", names.join(", ")));
            }
        }
        for ev in &rs.events {
            let line = match &ev.kind {
                EventKind::Create(r) => format!("create {} ({r})", ev.label),
                EventKind::End(r) => format!("end {} ({r})", ev.label),
                EventKind::Send { from, to, msg } => {
                    format!("send {} ({from},{to}, {})", ev.label, term_to_dsl(*msg))
                }
                EventKind::Read { from, to, pattern } => {
                    format!("read {} ({from},{to}, {})", ev.label, term_to_dsl(*pattern))
                }
                EventKind::Claim { role, kind, arg } => match arg {
                    Some(m) => format!("claim {} ({role}, {kind}, {})", ev.label, term_to_dsl(*m)),
                    None => format!("claim {} ({role}, {kind})", ev.label),
                },
            };
            out.push_str(&format!("    {line};\n"));
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    out
}

fn collect_public_fns(t: Term, kt: &KeyTable, builtin: Sym, hashes: &mut Vec<Sym>, tags: &mut Vec<Sym>) {
    match t.data() {
        TermData::Func(f, args) => {
            if kt.is_public_fn(f) && f != builtin {
                let bucket = if args.is_empty() { &mut *tags } else { &mut *hashes };
                if !bucket.contains(&f) {
                    bucket.push(f);
                }
            }
            for a in args {
                collect_public_fns(a, kt, builtin, hashes, tags);
            }
        }
        TermData::Tuple(a, b) | TermData::Enc(a, b) => {
            collect_public_fns(a, kt, builtin, hashes, tags);
            collect_public_fns(b, kt, builtin, hashes, tags);
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Term;

    #[test]
    fn parses_nsl_prime() {
        let p = crate::test_protos::nsl_prime();
        assert_eq!(p.roles.len(), 2);
        let i = Sym::new("i");
        let r = Sym::new("r");
        assert_eq!(p.roles[&i].typing[&Sym::new("nr")], IdentKind::Param);
        assert_eq!(p.roles[&r].typing[&Sym::new("nr")], IdentKind::Param);
        assert_eq!(p.roles[&i].typing[&Sym::new("nip")], IdentKind::Const);
        assert_eq!(p.roles[&r].typing[&Sym::new("nip")], IdentKind::Var);
        // send 2 message is {nip,i,nr}pk(r)
        let msg = p.roles[&i].events[1].term().unwrap();
        let want = Term::enc(
            Term::tuple_of(&[Term::ident("nip"), Term::role("i"), Term::ident("nr")]),
            Term::func("pk", vec![Term::role("r")]),
        );
        assert_eq!(msg, want);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_file(""), Err(ParseError::Empty)));
    }

    #[test]
    fn missing_end_is_wf_error() {
        let src = "protocol X { role a { const n; create 1 (a); send 2 (a,b, n); } role b { var n; create 3 (b); read 2 (a,b, n); end 4 (b); } }";
        match parse_file(src) {
            Err(ParseError::Wf(WfError::MissingEnd { .. })) => {}
            other => panic!("expected missing-end error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_label_is_reported() {
        let src = "protocol X { role a { const n; create 1 (a); send 2 (a,b, n); send 2 (a,b, n); end 3 (a); } role b { create 4 (b); end 5 (b); } }";
        match parse_file(src) {
            Err(ParseError::Wf(WfError::DuplicateLabel { .. })) => {}
            other => panic!("expected duplicate-label error, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_carries_position() {
        let src = "protocol X {\n  role a ???\n}";
        match parse_file(src) {
            Err(ParseError::Unexpected { line: 2, .. }) => {}
            other => panic!("expected position error, got {other:?}"),
        }
    }

    #[test]
    fn undeclared_key_function_is_rejected() {
        let src = "protocol X { role a { const n; create 1 (a); send 2 (a,b, {n}g(a)); end 3 (a); } role b { var n; create 4 (b); read 2 (a,b, {n}g(a)); end 5 (b); } }";
        match parse_file(src) {
            Err(ParseError::UnknownKeyFn { .. }) => {}
            other => panic!("expected unknown-key error, got {other:?}"),
        }
    }

    #[test]
    fn roundtrip_through_printer() {
        for p in [
            crate::test_protos::nsl(),
            crate::test_protos::nsl_prime(),
            crate::test_protos::wimax_q(),
        ] {
            let kt = {
                let mut kt = KeyTable::default();
                for f in ["h1", "h2", "h3"] {
                    kt.register_public(Sym::new(f));
                }
                kt
            };
            let printed = protocol_to_dsl(&p, &kt);
            let reparsed = parse_file(&printed).unwrap();
            assert_eq!(reparsed.protocols.len(), 1);
            let q = &reparsed.protocols[0];
            assert_eq!(p.name, q.name);
            assert_eq!(p.roles.len(), q.roles.len());
            for (r, rs) in &p.roles {
                let qs = &q.roles[r];
                assert_eq!(rs.typing, qs.typing);
                assert_eq!(rs.events, qs.events);
            }
        }
    }
}
