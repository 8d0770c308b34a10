//! Protocol and role-specification model: events, well-formedness, the
//! causal preorder, the `establishes` check, and the protocol
//! transformers (chaining composition, reveal, tagging).

use crate::symbol::Sym;
use crate::term::{IdentKind, Inst, Term, TermData, Typing};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// Event label, unique within a protocol except for matching send/read
/// pairs. Composition prefixes labels with the component protocol name.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, serde::Serialize, serde::Deserialize)]
pub struct Label(pub Sym);

impl Label {
    pub fn new(s: &str) -> Label {
        Label(Sym::new(s))
    }
    pub fn prefixed(self, prefix: Sym) -> Label {
        Label(Sym::new(&format!("{}.{}", prefix, self.0)))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum ClaimKind {
    Secret,
    SessionUnique,
    DataAgree,
    SessionKey,
    WeakSessionKey,
    Nisynch,
    Isynch,
}

impl ClaimKind {
    pub fn name(self) -> &'static str {
        match self {
            ClaimKind::Secret => "secret",
            ClaimKind::SessionUnique => "session-unique",
            ClaimKind::DataAgree => "data-agree",
            ClaimKind::SessionKey => "session-key",
            ClaimKind::WeakSessionKey => "weak-session-key",
            ClaimKind::Nisynch => "nisynch",
            ClaimKind::Isynch => "isynch",
        }
    }

    pub fn parse(s: &str) -> Option<ClaimKind> {
        match s {
            "secret" => Some(ClaimKind::Secret),
            "session-unique" => Some(ClaimKind::SessionUnique),
            "data-agree" => Some(ClaimKind::DataAgree),
            "session-key" => Some(ClaimKind::SessionKey),
            "weak-session-key" | "wsession-key" => Some(ClaimKind::WeakSessionKey),
            "nisynch" => Some(ClaimKind::Nisynch),
            "isynch" => Some(ClaimKind::Isynch),
            _ => None,
        }
    }

    pub fn takes_arg(self) -> bool {
        !matches!(self, ClaimKind::Nisynch | ClaimKind::Isynch)
    }

    /// Protocol-centric properties can be evaluated on the protocol's own
    /// events alone, up to nonce renaming.
    pub fn is_protocol_centric(self) -> bool {
        matches!(
            self,
            ClaimKind::SessionUnique | ClaimKind::DataAgree | ClaimKind::Nisynch | ClaimKind::Isynch
        )
    }
}

impl fmt::Display for ClaimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum EventKind {
    Create(Sym),
    Send { from: Sym, to: Sym, msg: Term },
    Read { from: Sym, to: Sym, pattern: Term },
    Claim { role: Sym, kind: ClaimKind, arg: Option<Term> },
    End(Sym),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Event {
    pub label: Label,
    pub kind: EventKind,
}

impl Event {
    pub fn term(&self) -> Option<Term> {
        match self.kind {
            EventKind::Send { msg, .. } => Some(msg),
            EventKind::Read { pattern, .. } => Some(pattern),
            EventKind::Claim { arg, .. } => arg,
            _ => None,
        }
    }

    fn map_term(&self, f: impl Fn(Term) -> Term) -> Event {
        let kind = match self.kind {
            EventKind::Send { from, to, msg } => EventKind::Send { from, to, msg: f(msg) },
            EventKind::Read { from, to, pattern } => EventKind::Read { from, to, pattern: f(pattern) },
            EventKind::Claim { role, kind, arg } => EventKind::Claim { role, kind, arg: arg.map(f) },
            ref k => k.clone(),
        };
        Event { label: self.label, kind }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            EventKind::Create(r) => write!(f, "create {} ({r})", self.label),
            EventKind::Send { from, to, msg } => write!(f, "send {} ({from},{to}, {msg})", self.label),
            EventKind::Read { from, to, pattern } => {
                write!(f, "read {} ({from},{to}, {pattern})", self.label)
            }
            EventKind::Claim { role, kind, arg } => match arg {
                Some(m) => write!(f, "claim {} ({role}, {kind}, {m})", self.label),
                None => write!(f, "claim {} ({role}, {kind})", self.label),
            },
            EventKind::End(r) => write!(f, "end {} ({r})", self.label),
        }
    }
}

/// A role specification: ordered event list plus identifier typing.
#[derive(Clone, Debug)]
pub struct RoleSpec {
    pub role: Sym,
    pub events: Vec<Event>,
    pub typing: Typing,
}

impl RoleSpec {
    /// Identifiers bound for a fresh run: the role's parameters.
    pub fn params(&self) -> Vec<Sym> {
        self.typing
            .iter()
            .filter(|(_, k)| **k == IdentKind::Param)
            .map(|(s, _)| *s)
            .collect()
    }
}

/// A protocol: a partial map from role names to role specifications.
#[derive(Clone, Debug)]
pub struct Protocol {
    pub name: Sym,
    pub roles: BTreeMap<Sym, RoleSpec>,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum WfError {
    #[error("protocol {proto}: role {role} has no events")]
    EmptyRole { proto: Sym, role: Sym },
    #[error("protocol {proto}: role {role} must start with a create event")]
    MissingCreate { proto: Sym, role: Sym },
    #[error("protocol {proto}: role {role} must terminate with an end event")]
    MissingEnd { proto: Sym, role: Sym },
    #[error("protocol {proto}: role {role}: create/end occurs in the middle of the event list")]
    MisplacedCreateEnd { proto: Sym, role: Sym },
    #[error("protocol {proto}: role {role}: event {label} names role {found}, expected {role}")]
    RoleNameMismatch { proto: Sym, role: Sym, label: Label, found: Sym },
    #[error("protocol {proto}: duplicate label {label}")]
    DuplicateLabel { proto: Sym, label: Label },
    #[error("protocol {proto}: label {label} is shared but not a matching send/read pair")]
    BadSharedLabel { proto: Sym, label: Label },
    #[error("protocol {proto}: role {role}: identifier {ident} has no const/param/var declaration")]
    UntypedIdent { proto: Sym, role: Sym, ident: Sym },
    #[error("protocol {proto}: role {role}: event {label} references unknown role {found}")]
    UnknownRole { proto: Sym, role: Sym, label: Label, found: Sym },
    #[error("protocol {proto}: role {role}: event {label} uses identifier {ident} before it is bound")]
    UnboundUse { proto: Sym, role: Sym, label: Label, ident: Sym },
    #[error("protocol {proto}: role {role}: claim {label} of kind {kind} requires an argument")]
    MissingClaimArg { proto: Sym, role: Sym, label: Label, kind: ClaimKind },
}

impl Protocol {
    /// All identifiers appearing in the protocol, `I(P)`.
    pub fn idents(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        for rs in self.roles.values() {
            for ev in &rs.events {
                if let Some(t) = ev.term() {
                    out.extend(t.idents());
                }
            }
            out.extend(rs.typing.keys().copied());
        }
        out
    }

    pub fn labels(&self) -> BTreeSet<Label> {
        self.roles
            .values()
            .flat_map(|rs| rs.events.iter().map(|e| e.label))
            .collect()
    }

    pub fn has_label(&self, l: Label) -> bool {
        self.roles
            .values()
            .any(|rs| rs.events.iter().any(|e| e.label == l))
    }

    /// All claim events as (role, index, label, kind, arg).
    pub fn claims(&self) -> Vec<(Sym, usize, Label, ClaimKind, Option<Term>)> {
        let mut out = Vec::new();
        for (&r, rs) in &self.roles {
            for (i, ev) in rs.events.iter().enumerate() {
                if let EventKind::Claim { kind, arg, .. } = ev.kind {
                    out.push((r, i, ev.label, kind, arg));
                }
            }
        }
        out
    }

    /// Well-formedness: create/end placement, role-name discipline, label
    /// uniqueness with identical shared send/read pairs, total typing, and
    /// dataflow (no event uses an identifier before it can be bound).
    pub fn validate(&self) -> Result<(), WfError> {
        let proto = self.name;
        let mut seen: BTreeMap<Label, Vec<(Sym, usize)>> = BTreeMap::new();
        for (&role, rs) in &self.roles {
            if rs.events.is_empty() {
                return Err(WfError::EmptyRole { proto, role });
            }
            match rs.events.first().map(|e| &e.kind) {
                Some(EventKind::Create(r)) if *r == role => {}
                Some(EventKind::Create(r)) => {
                    return Err(WfError::RoleNameMismatch {
                        proto,
                        role,
                        label: rs.events[0].label,
                        found: *r,
                    })
                }
                _ => return Err(WfError::MissingCreate { proto, role }),
            }
            match rs.events.last().map(|e| &e.kind) {
                Some(EventKind::End(r)) if *r == role => {}
                Some(EventKind::End(r)) => {
                    return Err(WfError::RoleNameMismatch {
                        proto,
                        role,
                        label: rs.events.last().unwrap().label,
                        found: *r,
                    })
                }
                _ => return Err(WfError::MissingEnd { proto, role }),
            }
            // No create/end in the interior.
            for ev in &rs.events[1..rs.events.len() - 1] {
                if matches!(ev.kind, EventKind::Create(_) | EventKind::End(_)) {
                    return Err(WfError::MisplacedCreateEnd { proto, role });
                }
            }
            // Role-name discipline and known roles.
            for (ei, ev) in rs.events.iter().enumerate() {
                seen.entry(ev.label).or_default().push((role, ei));
                match &ev.kind {
                    EventKind::Send { from, to, .. } => {
                        if *from != role {
                            return Err(WfError::RoleNameMismatch {
                                proto,
                                role,
                                label: ev.label,
                                found: *from,
                            });
                        }
                        if !self.roles.contains_key(to) {
                            return Err(WfError::UnknownRole { proto, role, label: ev.label, found: *to });
                        }
                    }
                    EventKind::Read { from, to, .. } => {
                        if *to != role {
                            return Err(WfError::RoleNameMismatch {
                                proto,
                                role,
                                label: ev.label,
                                found: *to,
                            });
                        }
                        if !self.roles.contains_key(from) {
                            return Err(WfError::UnknownRole { proto, role, label: ev.label, found: *from });
                        }
                    }
                    EventKind::Claim { role: r, kind, arg } => {
                        if *r != role {
                            return Err(WfError::RoleNameMismatch { proto, role, label: ev.label, found: *r });
                        }
                        if kind.takes_arg() && arg.is_none() {
                            return Err(WfError::MissingClaimArg { proto, role, label: ev.label, kind: *kind });
                        }
                    }
                    _ => {}
                }
                if let Some(t) = ev.term() {
                    for r in t.roles() {
                        if !self.roles.contains_key(&r) {
                            return Err(WfError::UnknownRole { proto, role, label: ev.label, found: r });
                        }
                    }
                    for x in t.idents() {
                        if !rs.typing.contains_key(&x) {
                            return Err(WfError::UntypedIdent { proto, role, ident: x });
                        }
                    }
                }
            }
            // Dataflow: consts and params are bound from the start, vars
            // become bound by the first read whose pattern contains them.
            let mut bound: BTreeSet<Sym> = rs
                .typing
                .iter()
                .filter(|(_, k)| matches!(k, IdentKind::Const | IdentKind::Param))
                .map(|(s, _)| *s)
                .collect();
            for ev in &rs.events {
                match &ev.kind {
                    EventKind::Send { msg, .. } => {
                        for x in msg.idents() {
                            if !bound.contains(&x) {
                                return Err(WfError::UnboundUse { proto, role, label: ev.label, ident: x });
                            }
                        }
                    }
                    EventKind::Claim { arg: Some(m), .. } => {
                        for x in m.idents() {
                            if !bound.contains(&x) {
                                return Err(WfError::UnboundUse { proto, role, label: ev.label, ident: x });
                            }
                        }
                    }
                    EventKind::Read { pattern, .. } => {
                        bound.extend(pattern.idents());
                    }
                    _ => {}
                }
            }
        }
        // Label discipline: unique, except a shared label must be exactly
        // one send and one read with identical endpoints and contents.
        for (label, occs) in &seen {
            if occs.len() == 1 {
                continue;
            }
            if occs.len() != 2 || occs[0].0 == occs[1].0 {
                return Err(WfError::DuplicateLabel { proto, label: *label });
            }
            let ev_of = |&(role, idx): &(Sym, usize)| self.roles[&role].events[idx].clone();
            let (e1, e2) = (ev_of(&occs[0]), ev_of(&occs[1]));
            let ok = match (&e1.kind, &e2.kind) {
                (
                    EventKind::Send { from: f1, to: t1, msg: m1 },
                    EventKind::Read { from: f2, to: t2, pattern: m2 },
                )
                | (
                    EventKind::Read { from: f2, to: t2, pattern: m2 },
                    EventKind::Send { from: f1, to: t1, msg: m1 },
                ) => f1 == f2 && t1 == t2 && m1 == m2,
                _ => false,
            };
            if !ok {
                return Err(WfError::BadSharedLabel { proto, label: *label });
            }
        }
        Ok(())
    }

    /// A protocol establishes `c` when, by syntactic dataflow, every role
    /// has `c` bound at its end event: declared const or param, or bound
    /// by some read pattern.
    pub fn establishes(&self, c: Sym) -> bool {
        self.roles.values().all(|rs| match rs.typing.get(&c) {
            Some(IdentKind::Const) | Some(IdentKind::Param) => true,
            Some(IdentKind::Var) => rs.events.iter().any(|ev| {
                matches!(&ev.kind, EventKind::Read { pattern, .. } if pattern.idents().contains(&c))
            }),
            None => false,
        })
    }

    pub fn is_param_in_all_roles(&self, d: Sym) -> bool {
        self.roles
            .values()
            .all(|rs| rs.typing.get(&d) == Some(&IdentKind::Param))
    }

    /// Apply the instantiation to one event, producing the run-event view.
    pub fn instantiate_event(&self, role: Sym, idx: usize, inst: &Inst) -> Option<RunEventView> {
        let rs = self.roles.get(&role)?;
        let ev = rs.events.get(idx)?;
        Some(RunEventView {
            label: ev.label,
            kind: ev.kind.clone(),
            inst_term: ev.term().and_then(|t| inst.apply(t, &rs.typing).ok()),
        })
    }
}

/// An event together with its instantiated payload, for reporting.
pub struct RunEventView {
    pub label: Label,
    pub kind: EventKind,
    pub inst_term: Option<Term>,
}

/// Reference to one event occurrence inside a protocol.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct EventRef {
    pub role: Sym,
    pub idx: usize,
}

/// The causal preorder `⪯` of a protocol: transitive closure of the
/// per-role event orders extended with send-before-read per shared label.
pub struct CausalOrder {
    nodes: Vec<(Sym, usize)>,
    reach: Vec<Vec<bool>>,
}

impl CausalOrder {
    pub fn of(p: &Protocol) -> CausalOrder {
        let mut nodes = Vec::new();
        let mut node_id = BTreeMap::new();
        for (&r, rs) in &p.roles {
            for i in 0..rs.events.len() {
                node_id.insert((r, i), nodes.len());
                nodes.push((r, i));
            }
        }
        let n = nodes.len();
        let mut adj = vec![Vec::new(); n];
        for (&r, rs) in &p.roles {
            for i in 1..rs.events.len() {
                adj[node_id[&(r, i - 1)]].push(node_id[&(r, i)]);
            }
            // send_l -> read_l edges
            for (i, ev) in rs.events.iter().enumerate() {
                if let EventKind::Send { .. } = ev.kind {
                    for (&r2, rs2) in &p.roles {
                        for (j, ev2) in rs2.events.iter().enumerate() {
                            if ev2.label == ev.label && matches!(ev2.kind, EventKind::Read { .. }) {
                                adj[node_id[&(r, i)]].push(node_id[&(r2, j)]);
                            }
                        }
                    }
                }
            }
        }
        // Reflexive-transitive closure by BFS from each node.
        let mut reach = vec![vec![false; n]; n];
        for s in 0..n {
            let mut stack = vec![s];
            reach[s][s] = true;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !reach[s][v] {
                        reach[s][v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        CausalOrder { nodes, reach }
    }

    fn id(&self, e: EventRef) -> Option<usize> {
        self.nodes.iter().position(|&(r, i)| r == e.role && i == e.idx)
    }

    /// `a ⪯ b`
    pub fn preceq(&self, a: EventRef, b: EventRef) -> bool {
        match (self.id(a), self.id(b)) {
            (Some(x), Some(y)) => self.reach[x][y],
            _ => false,
        }
    }
}

/// Correspondence between component labels and composed-protocol labels.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct LabelMap {
    pub entries: BTreeMap<(Sym, Label), Label>,
}

impl LabelMap {
    pub fn forward(&self, proto: Sym, l: Label) -> Option<Label> {
        self.entries.get(&(proto, l)).copied()
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ComposeError {
    #[error("role sets differ: {p} has roles {{{proles}}}, {q} has {{{qroles}}}")]
    RoleMismatch { p: Sym, q: Sym, proles: String, qroles: String },
    #[error("identifier sets overlap on {{{overlap}}}")]
    IdentOverlap { overlap: String },
    #[error("{p} does not establish {c}")]
    NotEstablished { p: Sym, c: Sym },
    #[error("{d} is not a parameter in every role of {q}")]
    NotParam { q: Sym, d: Sym },
    #[error("reveal transform needs at least two roles")]
    TooFewRoles,
}

/// Sequential (chaining) composition `P·Q[c/d]`: per role, P's events
/// without its end, then Q's events without its create with `d` renamed
/// to `c`. Labels are prefixed by the component protocol name and the
/// correspondence is returned for claim-label translation.
pub fn chain_compose(
    p: &Protocol,
    q: &Protocol,
    c: Sym,
    d: Sym,
    name: Option<&str>,
) -> Result<(Protocol, LabelMap), ComposeError> {
    if p.roles.keys().ne(q.roles.keys()) {
        return Err(ComposeError::RoleMismatch {
            p: p.name,
            q: q.name,
            proles: p.roles.keys().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
            qroles: q.roles.keys().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
        });
    }
    // d itself is substituted away, so it may coincide with identifiers
    // of P (the NSL chaining instantiates c = d = nr).
    let p_ids = p.idents();
    let mut q_ids = q.idents();
    q_ids.remove(&d);
    let overlap: Vec<_> = p_ids.intersection(&q_ids).collect();
    if !overlap.is_empty() {
        return Err(ComposeError::IdentOverlap {
            overlap: overlap.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
        });
    }
    if !p.establishes(c) {
        return Err(ComposeError::NotEstablished { p: p.name, c });
    }
    if !q.is_param_in_all_roles(d) {
        return Err(ComposeError::NotParam { q: q.name, d });
    }

    let default_name = format!("{}-{}", p.name, q.name);
    let name = Sym::new(name.unwrap_or(&default_name));
    let mut map = LabelMap::default();
    let mut roles = BTreeMap::new();
    for (&r, prs) in &p.roles {
        let qrs = &q.roles[&r];
        let mut events = Vec::new();
        for ev in &prs.events[..prs.events.len() - 1] {
            let new = ev.label.prefixed(p.name);
            map.entries.insert((p.name, ev.label), new);
            events.push(Event { label: new, kind: ev.kind.clone() });
        }
        for ev in &qrs.events[1..] {
            let new = ev.label.prefixed(q.name);
            map.entries.insert((q.name, ev.label), new);
            events.push(Event { label: new, kind: ev.map_term(|t| t.rename_ident(d, c)).kind });
        }
        // Merged typing: first component wins where both are defined.
        let mut typing = prs.typing.clone();
        for (&x, &k) in &qrs.typing {
            let x = if x == d { c } else { x };
            typing.entry(x).or_insert(k);
        }
        roles.insert(r, RoleSpec { role: r, events, typing });
    }
    let out = Protocol { name, roles };
    out.validate().expect("composition of well-formed protocols is well-formed");
    Ok((out, map))
}

/// `P↑reveal c`: before each role's end, insert a send of `c` addressed
/// to `ν(r)` — the lexicographically first role other than `r` itself
/// (picking between the two first roles of the protocol).
pub fn reveal_transform(p: &Protocol, c: Sym, name: Option<&str>) -> Result<Protocol, ComposeError> {
    if p.roles.len() < 2 {
        return Err(ComposeError::TooFewRoles);
    }
    if !p.establishes(c) {
        return Err(ComposeError::NotEstablished { p: p.name, c });
    }
    let mut role_names: Vec<Sym> = p.roles.keys().copied().collect();
    role_names.sort();
    let (r0, r1) = (role_names[0], role_names[1]);
    let default_name = format!("{}-reveal-{}", p.name, c);
    let name = Sym::new(name.unwrap_or(&default_name));
    let mut roles = BTreeMap::new();
    for (&r, rs) in &p.roles {
        let nu = if r != r0 { r0 } else { r1 };
        let mut events = rs.events.clone();
        let end = events.pop().expect("well-formed role has an end");
        events.push(Event {
            label: Label::new(&format!("reveal-{r}")),
            kind: EventKind::Send { from: r, to: nu, msg: Term::ident(c) },
        });
        events.push(end);
        let mut typing = rs.typing.clone();
        typing.entry(c).or_insert(IdentKind::Var);
        roles.insert(r, RoleSpec { role: r, events, typing });
    }
    let out = Protocol { name, roles };
    out.validate().expect("reveal transform preserves well-formedness");
    Ok(out)
}

/// Embed `tag` (a nullary function) as first tuple component of every
/// encryption body, in sends, reads and claim arguments alike.
/// Already-tagged encryptions are left alone, so the transform is
/// idempotent for a fixed tag.
pub fn tag_transform(p: &Protocol, tag: Sym, name: Option<&str>) -> Protocol {
    let tag_term = Term::func(tag, vec![]);
    fn tag_rec(t: Term, tag: Term) -> Term {
        match t.data() {
            TermData::Enc(body, key) => {
                let already = matches!(body.data(), TermData::Tuple(first, _) if first == tag);
                let inner = if already {
                    let TermData::Tuple(first, rest) = body.data() else { unreachable!() };
                    Term::tuple(first, tag_rec(rest, tag))
                } else {
                    Term::tuple(tag, tag_rec(body, tag))
                };
                Term::enc(inner, tag_rec(key, tag))
            }
            TermData::Tuple(a, b) => Term::tuple(tag_rec(a, tag), tag_rec(b, tag)),
            TermData::Func(f, args) => Term::func(f, args.into_iter().map(|a| tag_rec(a, tag)).collect()),
            _ => t,
        }
    }
    let default_name = format!("{}-tag-{}", p.name, tag);
    let name = Sym::new(name.unwrap_or(&default_name));
    let roles = p
        .roles
        .iter()
        .map(|(&r, rs)| {
            let events = rs.events.iter().map(|e| e.map_term(|t| tag_rec(t, tag_term))).collect();
            (r, RoleSpec { role: r, events, typing: rs.typing.clone() })
        })
        .collect();
    Protocol { name, roles }
}

/// How a protocol's input parameter receives its value within a set, or
/// which identifier it offers as output.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub enum IoAnnotation {
    /// `Π↑c`: marks the producer of c.
    Out { c: Sym },
    /// `Π↑reveal c`: producer whose roles additionally reveal c (the
    /// protocol is expected to already carry the reveal sends).
    OutReveal { c: Sym },
    /// `Π↓(c,d)`: d takes a value recorded at an earlier end event of a
    /// ρ-compatible producer run.
    In { c: Sym, d: Sym },
    /// `Π↓!(c,d)`: as `In`, but each producing run feeds at most one run.
    InUnique { c: Sym, d: Sym },
    /// `Π↓secret d`: the input-equivalence class shares a fresh value.
    InSecret { d: Sym },
    /// `Π↓session d`: secret input forming a session: one run per role.
    InSession { d: Sym },
    /// `Π↓adv d`: d takes any value derivable by the adversary.
    InAdversary { d: Sym },
}

impl IoAnnotation {
    pub fn param(&self) -> Option<Sym> {
        match *self {
            IoAnnotation::In { d, .. }
            | IoAnnotation::InUnique { d, .. }
            | IoAnnotation::InSecret { d }
            | IoAnnotation::InSession { d }
            | IoAnnotation::InAdversary { d } => Some(d),
            _ => None,
        }
    }
}

impl fmt::Display for IoAnnotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoAnnotation::Out { c } => write!(f, "out {c}"),
            IoAnnotation::OutReveal { c } => write!(f, "out-reveal {c}"),
            IoAnnotation::In { c, d } => write!(f, "in {c} {d}"),
            IoAnnotation::InUnique { c, d } => write!(f, "in! {c} {d}"),
            IoAnnotation::InSecret { d } => write!(f, "secret {d}"),
            IoAnnotation::InSession { d } => write!(f, "session {d}"),
            IoAnnotation::InAdversary { d } => write!(f, "adv {d}"),
        }
    }
}

/// A protocol together with its trace-restriction annotations.
#[derive(Clone, Debug)]
pub struct AnnotatedProtocol {
    pub proto: Protocol,
    pub annotations: Vec<IoAnnotation>,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum SetError {
    #[error("duplicate protocol name {0} in set")]
    DuplicateName(Sym),
    #[error("protocol {proto}: annotation out {c}: protocol does not establish {c}")]
    OutNotEstablished { proto: Sym, c: Sym },
    #[error("protocol {proto}: annotation on {d}: not a parameter in every role")]
    NotParamAnnotated { proto: Sym, d: Sym },
    #[error("annotation in({c},{d}) on {proto}: no protocol in the set is annotated out {c}")]
    NoProducer { proto: Sym, c: Sym, d: Sym },
    #[error(transparent)]
    Wf(#[from] WfError),
}

/// A set of annotated protocols, the unit the engine explores.
#[derive(Clone, Debug, Default)]
pub struct ProtocolSet {
    pub items: Vec<AnnotatedProtocol>,
}

impl ProtocolSet {
    pub fn new(items: Vec<AnnotatedProtocol>) -> Result<ProtocolSet, SetError> {
        let set = ProtocolSet { items };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), SetError> {
        let mut names = BTreeSet::new();
        for item in &self.items {
            item.proto.validate()?;
            if !names.insert(item.proto.name) {
                return Err(SetError::DuplicateName(item.proto.name));
            }
        }
        for item in &self.items {
            for ann in &item.annotations {
                match *ann {
                    IoAnnotation::Out { c } | IoAnnotation::OutReveal { c } => {
                        if !item.proto.establishes(c) {
                            return Err(SetError::OutNotEstablished { proto: item.proto.name, c });
                        }
                    }
                    IoAnnotation::In { c, d } | IoAnnotation::InUnique { c, d } => {
                        if !item.proto.is_param_in_all_roles(d) {
                            return Err(SetError::NotParamAnnotated { proto: item.proto.name, d });
                        }
                        let has_producer = self.items.iter().any(|other| {
                            other.annotations.iter().any(|a| {
                                matches!(*a, IoAnnotation::Out { c: c2 } | IoAnnotation::OutReveal { c: c2 } if c2 == c)
                            })
                        });
                        if !has_producer {
                            return Err(SetError::NoProducer { proto: item.proto.name, c, d });
                        }
                    }
                    IoAnnotation::InSecret { d } | IoAnnotation::InSession { d } | IoAnnotation::InAdversary { d } => {
                        if !item.proto.is_param_in_all_roles(d) {
                            return Err(SetError::NotParamAnnotated { proto: item.proto.name, d });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn find(&self, name: Sym) -> Option<&AnnotatedProtocol> {
        self.items.iter().find(|i| i.proto.name == name)
    }

    /// Which protocol (by index) holds the given label.
    pub fn proto_of_label(&self, l: Label) -> Option<usize> {
        self.items.iter().position(|i| i.proto.has_label(l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Term;

    fn nslprime() -> Protocol {
        crate::test_protos::nsl_prime()
    }

    #[test]
    fn nslprime_is_well_formed() {
        nslprime().validate().unwrap();
    }

    #[test]
    fn causal_order_within_role() {
        let p = nslprime();
        let co = CausalOrder::of(&p);
        let i = Sym::new("i");
        // create(0) .. send2(1) .. read3(2) .. send4(3)
        assert!(co.preceq(EventRef { role: i, idx: 1 }, EventRef { role: i, idx: 2 }));
        assert!(co.preceq(EventRef { role: i, idx: 2 }, EventRef { role: i, idx: 3 }));
        assert!(!co.preceq(EventRef { role: i, idx: 3 }, EventRef { role: i, idx: 1 }));
    }

    #[test]
    fn causal_order_send_precedes_read() {
        let p = nslprime();
        let co = CausalOrder::of(&p);
        let (i, r) = (Sym::new("i"), Sym::new("r"));
        // i's send_2 at index 1 precedes r's read_2 at index 1.
        assert!(co.preceq(EventRef { role: i, idx: 1 }, EventRef { role: r, idx: 1 }));
        // creates of distinct roles are incomparable.
        assert!(!co.preceq(EventRef { role: i, idx: 0 }, EventRef { role: r, idx: 0 }));
        assert!(!co.preceq(EventRef { role: r, idx: 0 }, EventRef { role: i, idx: 0 }));
    }

    #[test]
    fn nslprime_establishes() {
        let p = nslprime();
        assert!(p.establishes(Sym::new("nrp"))); // const in r, read-bound in i
        assert!(p.establishes(Sym::new("nr"))); // param in both
        assert!(!p.establishes(Sym::new("nosuch")));
    }

    #[test]
    fn chain_compose_nsl() {
        let nsl = crate::test_protos::nsl();
        let nslp = nslprime();
        let nr = Sym::new("nr");
        let (pq, map) = chain_compose(&nsl, &nslp, nr, nr, None).unwrap();
        pq.validate().unwrap();
        // Fig. 1 right: the second initiator message is {nip,i,nr}pk(r),
        // carrying the nonce from the first instance.
        let i = Sym::new("i");
        let rs = &pq.roles[&i];
        let msg4 = rs
            .events
            .iter()
            .find(|e| e.label == Label::new("NSLp.2"))
            .and_then(|e| e.term())
            .unwrap();
        let want = Term::enc(
            Term::tuple_of(&[Term::ident("nip"), Term::role("i"), Term::ident("nr")]),
            Term::func("pk", vec![Term::role("r")]),
        );
        assert_eq!(msg4, want);
        // nr stayed a var of NSL's i role (first component wins).
        assert_eq!(rs.typing.get(&nr), Some(&IdentKind::Var));
        // Correspondence is a bijection over non-end/non-create labels.
        let n_expected: usize = nsl.roles.values().map(|r| r.events.len() - 1).sum::<usize>()
            + nslp.roles.values().map(|r| r.events.len() - 1).sum::<usize>();
        // Shared send/read labels appear once per role, so count label
        // instances rather than unique labels.
        let composed_events: usize = pq.roles.values().map(|r| r.events.len()).sum();
        assert_eq!(composed_events, n_expected);
        let composed_labels = pq.labels();
        for new in map.entries.values() {
            assert!(composed_labels.contains(new));
        }
    }

    #[test]
    fn chain_compose_rejects_ident_overlap() {
        let nsl = crate::test_protos::nsl();
        let mut other = crate::test_protos::nsl();
        other.name = Sym::new("NSL2");
        // Same identifiers, no substitution hides them.
        let err = chain_compose(&nsl, &other, Sym::new("nr"), Sym::new("ni"), None);
        assert!(matches!(err, Err(ComposeError::IdentOverlap { .. })));
    }

    #[test]
    fn reveal_transform_adds_sends() {
        let p = nslprime();
        let out = reveal_transform(&p, Sym::new("nrp"), None).unwrap();
        let i = Sym::new("i");
        let r = Sym::new("r");
        // Role i's second-to-last event sends nrp to r, and vice versa.
        let ev_i = &out.roles[&i].events[out.roles[&i].events.len() - 2];
        assert!(matches!(ev_i.kind, EventKind::Send { from, to, msg }
            if from == i && to == r && msg == Term::ident("nrp")));
        let ev_r = &out.roles[&r].events[out.roles[&r].events.len() - 2];
        assert!(matches!(ev_r.kind, EventKind::Send { from, to, msg }
            if from == r && to == i && msg == Term::ident("nrp")));
        // Dataflow is preserved.
        assert!(out.establishes(Sym::new("nrp")));
    }

    #[test]
    fn reveal_transform_needs_two_roles() {
        let p = nslprime();
        let mut single = Protocol { name: Sym::new("single"), roles: BTreeMap::new() };
        let i = Sym::new("i");
        let mut rs = p.roles[&i].clone();
        // Strip events that reference role r.
        rs.events = vec![rs.events[0].clone(), rs.events.last().unwrap().clone()];
        single.roles.insert(i, rs);
        assert!(matches!(reveal_transform(&single, Sym::new("nip"), None), Err(ComposeError::TooFewRoles)));
    }

    #[test]
    fn tag_transform_prefixes_and_is_idempotent() {
        let p = crate::test_protos::nsl();
        let t1 = Sym::new("t1");
        let tagged = tag_transform(&p, t1, None);
        let i = Sym::new("i");
        let msg1 = tagged.roles[&i].events[1].term().unwrap();
        let want = Term::enc(
            Term::tuple(
                Term::func("t1", vec![]),
                Term::tuple(Term::ident("ni"), Term::role("i")),
            ),
            Term::func("pk", vec![Term::role("r")]),
        );
        assert_eq!(msg1, want);
        let twice = tag_transform(&tagged, t1, None);
        for (r, rs) in &twice.roles {
            for (e1, e2) in rs.events.iter().zip(tagged.roles[r].events.iter()) {
                assert_eq!(e1.term(), e2.term());
            }
        }
    }
}
