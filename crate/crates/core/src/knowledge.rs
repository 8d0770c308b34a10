//! Intruder knowledge with a finite-basis representation.
//!
//! The basis is kept minimal and decryption-saturated: tuples are split,
//! encryptions whose inverse key is derivable are opened transitively,
//! and elements synthesizable from smaller ones are dropped. A term is
//! derivable when it can be synthesized from basis elements by tupling,
//! encryption with derivable keys, and application of public (hash-like)
//! functions.

use crate::proto::ProtocolSet;
use crate::symbol::Sym;
use crate::term::{KeyTable, Term, TermData};
use std::cell::RefCell;
use std::collections::HashMap;

#[derive(Debug, Default)]
pub struct Knowledge {
    basis: Vec<Term>,
    // Derivability cache. True entries survive growth (knowledge is
    // monotone); false entries are dropped whenever the basis changes.
    memo: RefCell<HashMap<Term, bool>>,
    nonce_cache: RefCell<Option<Vec<Term>>>,
}

impl Clone for Knowledge {
    fn clone(&self) -> Self {
        Knowledge {
            basis: self.basis.clone(),
            memo: RefCell::new(self.memo.borrow().clone()),
            nonce_cache: RefCell::new(self.nonce_cache.borrow().clone()),
        }
    }
}

impl PartialEq for Knowledge {
    fn eq(&self, other: &Self) -> bool {
        self.basis == other.basis
    }
}
impl Eq for Knowledge {}

impl Knowledge {
    pub fn empty() -> Knowledge {
        Knowledge::default()
    }

    pub fn from_terms(kt: &KeyTable, terms: impl IntoIterator<Item = Term>) -> Knowledge {
        let mut k = Knowledge::empty();
        for t in terms {
            k.add(kt, t);
        }
        k
    }

    pub fn basis(&self) -> &[Term] {
        &self.basis
    }

    fn contains(&self, t: Term) -> bool {
        self.basis.binary_search(&t).is_ok()
    }

    fn insert(&mut self, t: Term) -> bool {
        match self.basis.binary_search(&t) {
            Ok(_) => false,
            Err(i) => {
                self.basis.insert(i, t);
                true
            }
        }
    }

    fn remove(&mut self, t: Term) {
        if let Ok(i) = self.basis.binary_search(&t) {
            self.basis.remove(i);
        }
    }

    /// Add a term and re-saturate: tuples split, newly decryptable
    /// encryptions opened transitively, synthesizable elements dropped.
    pub fn add(&mut self, kt: &KeyTable, t: Term) {
        let mut work = vec![t];
        let mut changed = false;
        while let Some(t) = work.pop() {
            match t.data() {
                TermData::Tuple(a, b) => {
                    work.push(a);
                    work.push(b);
                }
                _ => {
                    changed |= self.insert(t);
                }
            }
        }
        if !changed {
            return;
        }
        self.invalidate();
        // Open encryptions whose inverse key became derivable.
        loop {
            let mut opened = Vec::new();
            for &e in &self.basis {
                if let TermData::Enc(body, key) = e.data() {
                    if !self.contains_open(body)
                        && kt.invert(key).is_some_and(|ik| self.derivable(kt, ik))
                    {
                        opened.push(body);
                    }
                }
            }
            if opened.is_empty() {
                break;
            }
            let mut any = false;
            for body in opened {
                let mut work = vec![body];
                while let Some(t) = work.pop() {
                    match t.data() {
                        TermData::Tuple(a, b) => {
                            work.push(a);
                            work.push(b);
                        }
                        _ => any |= self.insert(t),
                    }
                }
            }
            if !any {
                break;
            }
            self.invalidate();
        }
        // Drop elements now synthesizable from the rest.
        let snapshot = self.basis.clone();
        for e in snapshot {
            let droppable = match e.data() {
                TermData::Enc(body, key) => {
                    self.derivable_without(kt, body, e) && self.derivable_without(kt, key, e)
                }
                TermData::Func(f, args) => {
                    kt.is_public_fn(f) && args.iter().all(|&a| self.derivable_without(kt, a, e))
                }
                _ => false,
            };
            if droppable {
                self.remove(e);
                self.invalidate();
            }
        }
    }

    // After opening {body}key, all non-tuple pieces of body are in the
    // basis; checks whether the body was already absorbed.
    fn contains_open(&self, body: Term) -> bool {
        match body.data() {
            TermData::Tuple(a, b) => self.contains_open(a) && self.contains_open(b),
            _ => self.contains(body),
        }
    }

    fn invalidate(&mut self) {
        self.memo.get_mut().retain(|_, v| *v);
        *self.nonce_cache.get_mut() = None;
    }

    /// `t ∈ ⌈basis⌉`: membership in the closure, by recursive synthesis.
    pub fn derivable(&self, kt: &KeyTable, t: Term) -> bool {
        if self.contains(t) {
            return true;
        }
        if let Some(&hit) = self.memo.borrow().get(&t) {
            return hit;
        }
        let out = match t.data() {
            TermData::Tuple(a, b) => self.derivable(kt, a) && self.derivable(kt, b),
            TermData::Enc(a, b) => self.derivable(kt, a) && self.derivable(kt, b),
            TermData::Func(f, args) => {
                kt.is_public_fn(f) && args.iter().all(|&a| self.derivable(kt, a))
            }
            _ => false,
        };
        self.memo.borrow_mut().insert(t, out);
        out
    }

    // Synthesis check that may not use `excl` as a basis element.
    fn derivable_without(&self, kt: &KeyTable, t: Term, excl: Term) -> bool {
        if t != excl && self.contains(t) {
            return true;
        }
        match t.data() {
            TermData::Tuple(a, b) | TermData::Enc(a, b) => {
                self.derivable_without(kt, a, excl) && self.derivable_without(kt, b, excl)
            }
            TermData::Func(f, args) => {
                kt.is_public_fn(f) && args.iter().all(|&a| self.derivable_without(kt, a, excl))
            }
            _ => false,
        }
    }

    /// All nonce run terms occurring anywhere inside basis elements —
    /// the complete candidate pool for typed read matching.
    pub fn nonce_pool(&self) -> Vec<Term> {
        if let Some(cached) = self.nonce_cache.borrow().as_ref() {
            return cached.clone();
        }
        let mut out = Vec::new();
        for &t in &self.basis {
            for n in t.nonce_run_terms() {
                if !out.contains(&n) {
                    out.push(n);
                }
            }
        }
        out.sort();
        *self.nonce_cache.borrow_mut() = Some(out.clone());
        out
    }
}

/// Agent universe for a bounded verification session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentUniverse {
    pub trusted: Vec<Sym>,
    pub untrusted: Vec<Sym>,
}

impl Default for AgentUniverse {
    fn default() -> Self {
        AgentUniverse {
            trusted: vec![Sym::new("a"), Sym::new("b")],
            untrusted: vec![Sym::new("e")],
        }
    }
}

impl AgentUniverse {
    pub fn all(&self) -> Vec<Sym> {
        let mut v = self.trusted.clone();
        v.extend(self.untrusted.iter().copied());
        v
    }

    pub fn is_trusted(&self, a: Sym) -> bool {
        self.trusted.contains(&a)
    }
}

/// Initial intruder knowledge `IK₀`: all agent names, every public key,
/// the long-term keys of untrusted agents, and the intruder nonce pool.
/// Hash-family keys over public material need no enumeration: public
/// function applications to derivable arguments are derivable.
pub fn initial_knowledge(
    _set: &ProtocolSet,
    kt: &KeyTable,
    agents: &AgentUniverse,
    intruder_nonces: u32,
) -> Knowledge {
    let mut terms = Vec::new();
    let all = agents.all();
    for &x in &all {
        terms.push(Term::agent(x));
        terms.push(Term::func("pk", vec![Term::agent(x)]));
    }
    for &e in &agents.untrusted {
        terms.push(Term::func("sk", vec![Term::agent(e)]));
        for &x in &all {
            terms.push(Term::func("k", vec![Term::agent(e), Term::agent(x)]));
            terms.push(Term::func("k", vec![Term::agent(x), Term::agent(e)]));
        }
    }
    for i in 0..intruder_nonces {
        terms.push(Term::intruder_nonce(i));
    }
    Knowledge::from_terms(kt, terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kt() -> KeyTable {
        KeyTable::default()
    }

    #[test]
    fn tuple_rule() {
        let kt = kt();
        let u = Term::nonce("u", 1);
        let v = Term::nonce("v", 2);
        let k = Knowledge::from_terms(&kt, [Term::tuple(u, v)]);
        assert!(k.derivable(&kt, u));
        assert!(k.derivable(&kt, v));
        assert!(k.derivable(&kt, Term::tuple(u, v)));
        assert!(k.derivable(&kt, Term::tuple(v, u)));
    }

    #[test]
    fn decryption_saturation_is_retroactive() {
        let kt = kt();
        let n = Term::nonce("n", 1);
        let key = Term::func("k", vec![Term::agent("a"), Term::agent("b")]);
        let mut k = Knowledge::from_terms(&kt, [Term::enc(n, key)]);
        assert!(!k.derivable(&kt, n));
        k.add(&kt, key);
        assert!(k.derivable(&kt, n));
    }

    #[test]
    fn asymmetric_decryption() {
        let kt = kt();
        let n = Term::nonce("n", 3);
        let pk_e = Term::func("pk", vec![Term::agent("e")]);
        let sk_e = Term::func("sk", vec![Term::agent("e")]);
        let k = Knowledge::from_terms(&kt, [sk_e, Term::enc(n, pk_e)]);
        assert!(k.derivable(&kt, n));
    }

    #[test]
    fn signature_contents_are_visible() {
        // A term signed with sk(a) is opened with the public key.
        let kt = kt();
        let n = Term::nonce("n", 3);
        let pk_a = Term::func("pk", vec![Term::agent("a")]);
        let sk_a = Term::func("sk", vec![Term::agent("a")]);
        let k = Knowledge::from_terms(&kt, [pk_a, Term::enc(n, sk_a)]);
        assert!(k.derivable(&kt, n));
        // ...but new signatures cannot be forged.
        assert!(!k.derivable(&kt, Term::enc(Term::agent("a"), sk_a)));
    }

    #[test]
    fn hash_keyed_terms_stay_sealed() {
        let kt = kt();
        let n = Term::nonce("n", 1);
        let d = Term::nonce("d", 2);
        let key = Term::func("h", vec![d]);
        let k = Knowledge::from_terms(&kt, [Term::enc(n, key)]);
        assert!(!k.derivable(&kt, n));
        // The ciphertext itself remains replayable.
        assert!(k.derivable(&kt, Term::enc(n, key)));
    }

    #[test]
    fn public_function_synthesis() {
        let kt = kt();
        let salt = Term::nonce("salt", 1);
        let k = Knowledge::from_terms(&kt, [salt]);
        assert!(k.derivable(&kt, Term::func("h", vec![salt])));
        assert!(!k.derivable(&kt, Term::func("h", vec![Term::nonce("other", 2)])));
        // pk is not a public-function family; unknown pk terms are not mintable.
        assert!(!k.derivable(&kt, Term::func("pk", vec![Term::agent("zz")])));
    }

    #[test]
    fn adding_derivable_term_is_idempotent() {
        let kt = kt();
        let u = Term::nonce("u", 1);
        let v = Term::nonce("v", 2);
        let mut k = Knowledge::from_terms(&kt, [u, v]);
        let before = k.basis().to_vec();
        k.add(&kt, Term::tuple(u, v));
        k.add(&kt, Term::enc(u, v));
        assert_eq!(k.basis(), &before[..]);
    }

    #[test]
    fn synthesizable_encryptions_are_dropped() {
        let kt = kt();
        let n = Term::nonce("n", 1);
        let key = Term::func("k", vec![Term::agent("a"), Term::agent("b")]);
        let mut k = Knowledge::from_terms(&kt, [Term::enc(n, key)]);
        assert!(k.basis().contains(&Term::enc(n, key)));
        k.add(&kt, key);
        // Once the key is known the ciphertext is synthesizable and the
        // basis keeps only the pieces.
        assert!(!k.basis().contains(&Term::enc(n, key)));
        assert!(k.derivable(&kt, Term::enc(n, key)));
    }

    #[test]
    fn empty_basis_derives_nothing() {
        let kt = kt();
        let k = Knowledge::empty();
        assert!(!k.derivable(&kt, Term::nonce("x", 1)));
        assert!(!k.derivable(&kt, Term::agent("a")));
    }

    #[test]
    fn initial_knowledge_contents() {
        let kt = kt();
        let set = ProtocolSet::default();
        let k = initial_knowledge(&set, &kt, &AgentUniverse::default(), 2);
        for name in ["a", "b", "e"] {
            assert!(k.derivable(&kt, Term::agent(name)));
            assert!(k.derivable(&kt, Term::func("pk", vec![Term::agent(name)])));
        }
        assert!(k.derivable(&kt, Term::func("sk", vec![Term::agent("e")])));
        assert!(!k.derivable(&kt, Term::func("sk", vec![Term::agent("a")])));
        assert!(k.derivable(&kt, Term::func("k", vec![Term::agent("e"), Term::agent("a")])));
        assert!(!k.derivable(&kt, Term::func("k", vec![Term::agent("a"), Term::agent("b")])));
        assert!(k.derivable(&kt, Term::intruder_nonce(0)));
        assert!(k.derivable(&kt, Term::intruder_nonce(1)));
        assert!(!k.derivable(&kt, Term::intruder_nonce(2)));
    }

    #[test]
    fn nonce_pool_includes_sealed_nonces() {
        let kt = kt();
        let n = Term::nonce("n", 7);
        let key = Term::func("h", vec![Term::nonce("d", 1)]);
        let k = Knowledge::from_terms(&kt, [Term::enc(n, key)]);
        assert!(k.nonce_pool().contains(&n));
        assert!(k.nonce_pool().contains(&Term::nonce("d", 1)));
    }
}
