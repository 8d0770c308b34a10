//! The term algebra: role terms and run terms, the subterm relation, key
//! inversion, instantiation and the match predicate.
//!
//! A single hash-consed `Term` type covers both flavors. Role terms may
//! contain `Role` and `Ident` leaves; run terms may contain `Agent`,
//! `Nonce` and `IntruderNonce` leaves. `Func`, `Tuple` and `Enc` nodes
//! appear in both. Flavor discipline is checked where it matters
//! (instantiation, matching) rather than being split into two parallel
//! type hierarchies, since those operations share all structure.

use crate::symbol::Sym;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{OnceLock, RwLock};
use thiserror::Error;

/// Run identifier. Allocated sequentially by the execution engine.
pub type RunId = u32;

/// Handle to a hash-consed term. Equality is structural and O(1).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term(u32);

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum TermData {
    /// Role name leaf (role-term flavor).
    Role(Sym),
    /// Identifier leaf; its kind (const/param/var) is relative to a role
    /// specification's typing function (role-term flavor).
    Ident(Sym),
    /// Agent name leaf (run-term flavor).
    Agent(Sym),
    /// Identifier made unique by a run id, e.g. `nr#3` (run-term flavor).
    Nonce(Sym, RunId),
    /// Element of the intruder-generated nonce pool (run-term flavor).
    IntruderNonce(u32),
    /// Uninterpreted function application: long-term keys, hash keys,
    /// certificates, protocol tags.
    Func(Sym, Vec<Term>),
    Tuple(Term, Term),
    /// `Enc(body, key)` — encryption, signature or MAC depending on key.
    Enc(Term, Term),
}

struct Store {
    nodes: Vec<TermData>,
    index: HashMap<TermData, u32>,
}

fn store() -> &'static RwLock<Store> {
    static STORE: OnceLock<RwLock<Store>> = OnceLock::new();
    STORE.get_or_init(|| {
        RwLock::new(Store {
            nodes: Vec::new(),
            index: HashMap::new(),
        })
    })
}

fn intern(data: TermData) -> Term {
    {
        let st = store().read().unwrap();
        if let Some(&id) = st.index.get(&data) {
            return Term(id);
        }
    }
    let mut st = store().write().unwrap();
    if let Some(&id) = st.index.get(&data) {
        return Term(id);
    }
    let id = st.nodes.len() as u32;
    st.nodes.push(data.clone());
    st.index.insert(data, id);
    Term(id)
}

impl Term {
    pub fn role(name: impl Into<Sym>) -> Term {
        intern(TermData::Role(name.into()))
    }
    pub fn ident(name: impl Into<Sym>) -> Term {
        intern(TermData::Ident(name.into()))
    }
    pub fn agent(name: impl Into<Sym>) -> Term {
        intern(TermData::Agent(name.into()))
    }
    pub fn nonce(name: impl Into<Sym>, rid: RunId) -> Term {
        intern(TermData::Nonce(name.into(), rid))
    }
    pub fn intruder_nonce(i: u32) -> Term {
        intern(TermData::IntruderNonce(i))
    }
    pub fn func(name: impl Into<Sym>, args: Vec<Term>) -> Term {
        intern(TermData::Func(name.into(), args))
    }
    pub fn tuple(a: Term, b: Term) -> Term {
        intern(TermData::Tuple(a, b))
    }
    /// Right-associated tuple of one or more terms.
    pub fn tuple_of(items: &[Term]) -> Term {
        assert!(!items.is_empty());
        let mut it = items.iter().rev();
        let mut acc = *it.next().unwrap();
        for &t in it {
            acc = Term::tuple(t, acc);
        }
        acc
    }
    pub fn enc(body: Term, key: Term) -> Term {
        intern(TermData::Enc(body, key))
    }

    pub fn data(self) -> TermData {
        store().read().unwrap().nodes[self.0 as usize].clone()
    }

    pub fn is_nonce_run_term(self) -> bool {
        matches!(
            self.data(),
            TermData::Nonce(..) | TermData::IntruderNonce(..)
        )
    }

    /// True if the term contains only run-term leaves.
    pub fn is_run_term(self) -> bool {
        match self.data() {
            TermData::Role(_) | TermData::Ident(_) => false,
            TermData::Agent(_) | TermData::Nonce(..) | TermData::IntruderNonce(_) => true,
            TermData::Func(_, args) => args.iter().all(|a| a.is_run_term()),
            TermData::Tuple(a, b) | TermData::Enc(a, b) => a.is_run_term() && b.is_run_term(),
        }
    }

    /// True if the term contains only role-term leaves.
    pub fn is_role_term(self) -> bool {
        match self.data() {
            TermData::Agent(_) | TermData::Nonce(..) | TermData::IntruderNonce(_) => false,
            TermData::Role(_) | TermData::Ident(_) => true,
            TermData::Func(_, args) => args.iter().all(|a| a.is_role_term()),
            TermData::Tuple(a, b) | TermData::Enc(a, b) => a.is_role_term() && b.is_role_term(),
        }
    }

    /// The subterm relation `x ⊑ y`: reflexive-transitive closure of the
    /// five generation rules (components of tuples and encryptions).
    /// Function arguments are deliberately not subterms.
    pub fn subterm_of(self, other: Term) -> bool {
        if self == other {
            return true;
        }
        match other.data() {
            TermData::Tuple(a, b) | TermData::Enc(a, b) => {
                self.subterm_of(a) || self.subterm_of(b)
            }
            _ => false,
        }
    }

    /// All encryption nodes that are subterms of `self` (including itself).
    pub fn enc_subterms(self) -> Vec<Term> {
        let mut out = Vec::new();
        self.collect_enc_subterms(&mut out);
        out
    }

    fn collect_enc_subterms(self, out: &mut Vec<Term>) {
        match self.data() {
            TermData::Tuple(a, b) => {
                a.collect_enc_subterms(out);
                b.collect_enc_subterms(out);
            }
            TermData::Enc(a, b) => {
                if !out.contains(&self) {
                    out.push(self);
                }
                a.collect_enc_subterms(out);
                b.collect_enc_subterms(out);
            }
            _ => {}
        }
    }

    /// All identifier leaves occurring anywhere in the term, including
    /// under function applications.
    pub fn idents(self) -> Vec<Sym> {
        let mut out = Vec::new();
        self.walk(&mut |d| {
            if let TermData::Ident(x) = d {
                if !out.contains(x) {
                    out.push(*x);
                }
            }
        });
        out
    }

    /// All role leaves occurring anywhere in the term.
    pub fn roles(self) -> Vec<Sym> {
        let mut out = Vec::new();
        self.walk(&mut |d| {
            if let TermData::Role(r) = d {
                if !out.contains(r) {
                    out.push(*r);
                }
            }
        });
        out
    }

    /// All nonce run terms occurring anywhere in the term.
    pub fn nonce_run_terms(self) -> Vec<Term> {
        let mut out = Vec::new();
        self.collect_nonces(&mut out);
        out
    }

    fn collect_nonces(self, out: &mut Vec<Term>) {
        match self.data() {
            TermData::Nonce(..) | TermData::IntruderNonce(_) => {
                if !out.contains(&self) {
                    out.push(self);
                }
            }
            TermData::Func(_, args) => {
                for a in args {
                    a.collect_nonces(out);
                }
            }
            TermData::Tuple(a, b) | TermData::Enc(a, b) => {
                a.collect_nonces(out);
                b.collect_nonces(out);
            }
            _ => {}
        }
    }

    fn walk(self, f: &mut impl FnMut(&TermData)) {
        let d = self.data();
        f(&d);
        match d {
            TermData::Func(_, args) => {
                for a in args {
                    a.walk(f);
                }
            }
            TermData::Tuple(a, b) | TermData::Enc(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    /// Replace every `Ident(from)` leaf by `Ident(to)`.
    pub fn rename_ident(self, from: Sym, to: Sym) -> Term {
        match self.data() {
            TermData::Ident(x) if x == from => Term::ident(to),
            TermData::Func(f, args) => {
                Term::func(f, args.iter().map(|a| a.rename_ident(from, to)).collect())
            }
            TermData::Tuple(a, b) => Term::tuple(a.rename_ident(from, to), b.rename_ident(from, to)),
            TermData::Enc(a, b) => Term::enc(a.rename_ident(from, to), b.rename_ident(from, to)),
            _ => self,
        }
    }

    /// Prefix every encryption body with `tag` as first tuple component.
    pub fn tag_encryptions(self, tag: Term) -> Term {
        match self.data() {
            TermData::Enc(body, key) => {
                let body = body.tag_encryptions(tag);
                let key = key.tag_encryptions(tag);
                Term::enc(Term::tuple(tag, body), key)
            }
            TermData::Tuple(a, b) => {
                Term::tuple(a.tag_encryptions(tag), b.tag_encryptions(tag))
            }
            TermData::Func(f, args) => {
                Term::func(f, args.iter().map(|a| a.tag_encryptions(tag)).collect())
            }
            _ => self,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.data() {
            TermData::Role(r) => write!(f, "{r}"),
            TermData::Ident(x) => write!(f, "{x}"),
            TermData::Agent(a) => write!(f, "{a}"),
            TermData::Nonce(x, rid) => write!(f, "{x}#{rid}"),
            TermData::IntruderNonce(i) => write!(f, "it{i}"),
            TermData::Func(g, args) => {
                write!(f, "{g}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            TermData::Tuple(a, b) => write!(f, "{a},{b}"),
            TermData::Enc(body, key) => match key.data() {
                TermData::Tuple(..) | TermData::Enc(..) => write!(f, "{{{body}}}({key})"),
                _ => write!(f, "{{{body}}}{key}"),
            },
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Identifier kind relative to one role specification.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub enum IdentKind {
    Const,
    Param,
    Var,
}

/// Per-role identifier typing function.
pub type Typing = BTreeMap<Sym, IdentKind>;

/// Key inversion table. `pk`/`sk` and the self-inverse `k` are built in;
/// hash families, certificates and protocol tags are registered as public
/// functions: no inverse exists, and applications to derivable arguments
/// are derivable.
#[derive(Clone, Debug)]
pub struct KeyTable {
    asym: BTreeMap<Sym, Sym>,
    symmetric: Vec<Sym>,
    public: Vec<Sym>,
}

impl Default for KeyTable {
    fn default() -> Self {
        let mut asym = BTreeMap::new();
        asym.insert(Sym::new("pk"), Sym::new("sk"));
        asym.insert(Sym::new("sk"), Sym::new("pk"));
        KeyTable {
            asym,
            symmetric: vec![Sym::new("k")],
            public: vec![Sym::new("h")],
        }
    }
}

impl KeyTable {
    pub fn register_public(&mut self, name: Sym) {
        if !self.public.contains(&name) {
            self.public.push(name);
        }
    }

    pub fn is_public_fn(&self, name: Sym) -> bool {
        self.public.contains(&name)
    }

    pub fn is_known_fn(&self, name: Sym) -> bool {
        self.asym.contains_key(&name)
            || self.symmetric.contains(&name)
            || self.public.contains(&name)
    }

    pub fn public_fns(&self) -> &[Sym] {
        &self.public
    }

    /// The inverse key `k⁻¹`, or `None` for keys nobody can invert
    /// (hash-family applications). Non-function terms used as keys are
    /// symmetric, hence self-inverse.
    pub fn invert(&self, key: Term) -> Option<Term> {
        match key.data() {
            TermData::Func(f, args) => {
                if let Some(&g) = self.asym.get(&f) {
                    Some(Term::func(g, args))
                } else if self.symmetric.contains(&f) {
                    Some(key)
                } else {
                    None
                }
            }
            _ => Some(key),
        }
    }
}

/// An instantiation `(rid, ρ, σ)`: run id, role-to-agent map and
/// identifier-to-run-term map. σ only ever binds nonce run terms.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Inst {
    pub rid: RunId,
    pub rho: BTreeMap<Sym, Sym>,
    pub sigma: BTreeMap<Sym, Term>,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum InstError {
    #[error("term has free variables in this context: {0}")]
    FreeVariables(Sym),
    #[error("role {0} is not mapped by rho")]
    UnboundRole(Sym),
    #[error("identifier {0} has no kind in this role specification")]
    UntypedIdent(Sym),
}

impl Inst {
    pub fn new(rid: RunId, rho: BTreeMap<Sym, Sym>, sigma: BTreeMap<Sym, Term>) -> Inst {
        debug_assert!(sigma.values().all(|t| t.is_nonce_run_term()));
        Inst { rid, rho, sigma }
    }

    /// Apply the instantiation to a role term: constants become nonces
    /// stamped with this run id, parameters and variables go through σ,
    /// roles through ρ; structure is preserved.
    pub fn apply(&self, x: Term, typing: &Typing) -> Result<Term, InstError> {
        match x.data() {
            TermData::Role(r) => match self.rho.get(&r) {
                Some(&a) => Ok(Term::agent(a)),
                None => Err(InstError::UnboundRole(r)),
            },
            TermData::Ident(c) => match typing.get(&c) {
                Some(IdentKind::Const) => Ok(Term::nonce(c, self.rid)),
                Some(IdentKind::Param) | Some(IdentKind::Var) => match self.sigma.get(&c) {
                    Some(&t) => Ok(t),
                    None => Err(InstError::FreeVariables(c)),
                },
                None => Err(InstError::UntypedIdent(c)),
            },
            TermData::Func(f, args) => {
                let args = args
                    .iter()
                    .map(|&a| self.apply(a, typing))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Term::func(f, args))
            }
            TermData::Tuple(a, b) => Ok(Term::tuple(self.apply(a, typing)?, self.apply(b, typing)?)),
            TermData::Enc(a, b) => Ok(Term::enc(self.apply(a, typing)?, self.apply(b, typing)?)),
            TermData::Agent(_) | TermData::Nonce(..) | TermData::IntruderNonce(_) => Ok(x),
        }
    }

    /// The match predicate: extend σ with bindings for the free variables
    /// of `pattern` so that the instantiated pattern equals `candidate`.
    /// New bindings are nonce run terms only (typed matching).
    pub fn match_term(&self, pattern: Term, candidate: Term, typing: &Typing) -> Option<Inst> {
        let mut ext = self.clone();
        if ext.match_into(pattern, candidate, typing) {
            Some(ext)
        } else {
            None
        }
    }

    fn match_into(&mut self, pattern: Term, candidate: Term, typing: &Typing) -> bool {
        match pattern.data() {
            TermData::Role(r) => match self.rho.get(&r) {
                Some(&a) => candidate == Term::agent(a),
                None => false,
            },
            TermData::Ident(c) => match typing.get(&c) {
                Some(IdentKind::Const) => candidate == Term::nonce(c, self.rid),
                Some(IdentKind::Param) | Some(IdentKind::Var) => match self.sigma.get(&c) {
                    Some(&t) => candidate == t,
                    None => {
                        if candidate.is_nonce_run_term() {
                            self.sigma.insert(c, candidate);
                            true
                        } else {
                            false
                        }
                    }
                },
                None => false,
            },
            TermData::Func(f, args) => match candidate.data() {
                TermData::Func(g, cargs) if f == g && args.len() == cargs.len() => args
                    .iter()
                    .zip(cargs.iter())
                    .all(|(&p, &c)| self.match_into(p, c, typing)),
                _ => false,
            },
            TermData::Tuple(a, b) => match candidate.data() {
                TermData::Tuple(ca, cb) => {
                    self.match_into(a, ca, typing) && self.match_into(b, cb, typing)
                }
                _ => false,
            },
            TermData::Enc(a, b) => match candidate.data() {
                TermData::Enc(ca, cb) => {
                    self.match_into(a, ca, typing) && self.match_into(b, cb, typing)
                }
                _ => false,
            },
            TermData::Agent(_) | TermData::Nonce(..) | TermData::IntruderNonce(_) => {
                pattern == candidate
            }
        }
    }

    /// Unbound variables of a role term under this instantiation.
    pub fn free_vars(&self, x: Term, typing: &Typing) -> Vec<Sym> {
        x.idents()
            .into_iter()
            .filter(|c| {
                matches!(typing.get(c), Some(IdentKind::Param) | Some(IdentKind::Var))
                    && !self.sigma.contains_key(c)
            })
            .collect()
    }
}

impl fmt::Display for Inst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{{", self.rid)?;
        for (i, (r, a)) in self.rho.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{r}->{a}")?;
        }
        write!(f, "}},{{")?;
        for (i, (x, t)) in self.sigma.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}->{t}")?;
        }
        write!(f, "}})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn typing(pairs: &[(&str, IdentKind)]) -> Typing {
        pairs.iter().map(|(n, k)| (Sym::new(n), *k)).collect()
    }

    fn rho(pairs: &[(&str, &str)]) -> BTreeMap<Sym, Sym> {
        pairs
            .iter()
            .map(|(r, a)| (Sym::new(r), Sym::new(a)))
            .collect()
    }

    #[test]
    fn subterm_reflexive() {
        let ni = Term::ident("ni");
        assert!(ni.subterm_of(ni));
    }

    #[test]
    fn subterm_through_enc_and_tuple() {
        // ni ⊑ {ni,i}pk(r) — the first message sent by the initiator.
        let ni = Term::ident("ni");
        let msg = Term::enc(
            Term::tuple(ni, Term::role("i")),
            Term::func("pk", vec![Term::role("r")]),
        );
        assert!(ni.subterm_of(msg));
    }

    #[test]
    fn subterm_distinct_leaves() {
        let pk_r = Term::func("pk", vec![Term::role("r")]);
        assert!(!pk_r.subterm_of(Term::ident("ni")));
    }

    #[test]
    fn func_args_are_not_subterms() {
        let r = Term::role("r");
        let pk_r = Term::func("pk", vec![r]);
        assert!(!r.subterm_of(pk_r));
    }

    #[test]
    fn instantiate_nsl_message() {
        // inst = (42, {i->a, r->b}, {ni -> ni#41}) applied to {ni,nr,r}pk(i)
        // yields {ni#41, nr#42, b}pk(a) when nr is a constant of this role.
        let ty = typing(&[("ni", IdentKind::Var), ("nr", IdentKind::Const)]);
        let inst = Inst::new(
            42,
            rho(&[("i", "a"), ("r", "b")]),
            [(Sym::new("ni"), Term::nonce("ni", 41))].into_iter().collect(),
        );
        let msg = Term::enc(
            Term::tuple_of(&[Term::ident("ni"), Term::ident("nr"), Term::role("r")]),
            Term::func("pk", vec![Term::role("i")]),
        );
        let got = inst.apply(msg, &ty).unwrap();
        let want = Term::enc(
            Term::tuple_of(&[Term::nonce("ni", 41), Term::nonce("nr", 42), Term::agent("b")]),
            Term::func("pk", vec![Term::agent("a")]),
        );
        assert_eq!(got, want);
    }

    #[test]
    fn instantiate_role_leaf() {
        let inst = Inst::new(7, rho(&[("i", "a")]), BTreeMap::new());
        assert_eq!(
            inst.apply(Term::role("i"), &Typing::new()).unwrap(),
            Term::agent("a")
        );
    }

    #[test]
    fn instantiate_unbound_var_is_error() {
        let ty = typing(&[("v", IdentKind::Var)]);
        let inst = Inst::new(7, rho(&[("i", "a")]), BTreeMap::new());
        assert_eq!(
            inst.apply(Term::ident("v"), &ty),
            Err(InstError::FreeVariables(Sym::new("v")))
        );
    }

    #[test]
    fn match_binds_free_variable() {
        // Match(inst, {ni,nr,r}pk(i), {ni#42,nr#12,b}pk(a)) binds nr -> nr#12.
        let ty = typing(&[("ni", IdentKind::Const), ("nr", IdentKind::Var)]);
        let inst = Inst::new(42, rho(&[("i", "a"), ("r", "b")]), BTreeMap::new());
        let pattern = Term::enc(
            Term::tuple_of(&[Term::ident("ni"), Term::ident("nr"), Term::role("r")]),
            Term::func("pk", vec![Term::role("i")]),
        );
        let candidate = Term::enc(
            Term::tuple_of(&[Term::nonce("ni", 42), Term::nonce("nr", 12), Term::agent("b")]),
            Term::func("pk", vec![Term::agent("a")]),
        );
        let inst2 = inst.match_term(pattern, candidate, &ty).unwrap();
        assert_eq!(inst2.sigma.get(&Sym::new("nr")), Some(&Term::nonce("nr", 12)));
        // Match soundness: the extended instantiation reproduces the candidate.
        assert_eq!(inst2.apply(pattern, &ty).unwrap(), candidate);
    }

    #[test]
    fn match_ground_pattern_unchanged() {
        let ty = typing(&[("ni", IdentKind::Const)]);
        let inst = Inst::new(3, rho(&[("i", "a"), ("r", "b")]), BTreeMap::new());
        let pattern = Term::enc(
            Term::tuple(Term::ident("ni"), Term::role("i")),
            Term::func("pk", vec![Term::role("r")]),
        );
        let candidate = inst.apply(pattern, &ty).unwrap();
        let inst2 = inst.match_term(pattern, candidate, &ty).unwrap();
        assert_eq!(inst2, inst);
    }

    #[test]
    fn match_rejects_non_nonce_binding() {
        // Typed matching: a variable never binds a tuple.
        let ty = typing(&[("v", IdentKind::Var)]);
        let inst = Inst::new(1, rho(&[]), BTreeMap::new());
        let candidate = Term::tuple(Term::agent("a"), Term::agent("b"));
        assert!(inst.match_term(Term::ident("v"), candidate, &ty).is_none());
    }

    #[test]
    fn invert_declared_pair() {
        let kt = KeyTable::default();
        let a = Term::agent("a");
        assert_eq!(
            kt.invert(Term::func("pk", vec![a])),
            Some(Term::func("sk", vec![a]))
        );
        assert_eq!(
            kt.invert(Term::func("sk", vec![a])),
            Some(Term::func("pk", vec![a]))
        );
    }

    #[test]
    fn invert_symmetric_self() {
        let kt = KeyTable::default();
        let k_ab = Term::func("k", vec![Term::agent("a"), Term::agent("b")]);
        assert_eq!(kt.invert(k_ab), Some(k_ab));
    }

    #[test]
    fn invert_hash_family_none() {
        // Hash keys have no inverse known by anyone.
        let kt = KeyTable::default();
        let h = Term::func("h", vec![Term::ident("salt")]);
        assert_eq!(kt.invert(h), None);
    }

    #[test]
    fn invert_involution() {
        let kt = KeyTable::default();
        for key in [
            Term::func("pk", vec![Term::agent("a")]),
            Term::func("sk", vec![Term::agent("b")]),
            Term::func("k", vec![Term::agent("a"), Term::agent("b")]),
            Term::nonce("sess", 4),
        ] {
            let inv = kt.invert(key).unwrap();
            assert_eq!(kt.invert(inv), Some(key));
        }
    }

    #[test]
    fn tagging_prefixes_every_encryption() {
        let tag = Term::func("t1", vec![]);
        let msg = Term::enc(
            Term::tuple(Term::ident("ni"), Term::role("i")),
            Term::func("pk", vec![Term::role("r")]),
        );
        let tagged = msg.tag_encryptions(tag);
        let want = Term::enc(
            Term::tuple(tag, Term::tuple(Term::ident("ni"), Term::role("i"))),
            Term::func("pk", vec![Term::role("r")]),
        );
        assert_eq!(tagged, want);
    }

    #[test]
    fn structure_preservation() {
        fn outline(t: Term) -> String {
            match t.data() {
                TermData::Tuple(a, b) => format!("({},{})", outline(a), outline(b)),
                TermData::Enc(a, b) => format!("{{{}}}{}", outline(a), outline(b)),
                TermData::Func(f, args) => {
                    format!("{f}[{}]", args.iter().map(|a| outline(*a)).collect::<Vec<_>>().join(","))
                }
                _ => ".".into(),
            }
        }
        let ty = typing(&[("ni", IdentKind::Const), ("nr", IdentKind::Var)]);
        let inst = Inst::new(
            5,
            rho(&[("i", "a"), ("r", "b")]),
            [(Sym::new("nr"), Term::nonce("x", 9))].into_iter().collect(),
        );
        let msg = Term::enc(
            Term::tuple_of(&[Term::ident("ni"), Term::ident("nr"), Term::role("r")]),
            Term::func("pk", vec![Term::role("i")]),
        );
        let out = inst.apply(msg, &ty).unwrap();
        assert_eq!(outline(msg), outline(out));
    }
}
