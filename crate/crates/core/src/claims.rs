//! Cast enumeration and evaluation of the security-claim predicates over
//! bounded trace sets, with trusted-agent filtering and attack
//! extraction.
//!
//! Synchronization and data-agreement are evaluated against the events
//! preceding the claim occurrence (its strictest valid prefix), secrecy
//! and session-uniqueness against the maximal trace; this matches
//! quantification over all valid traces without enumerating prefixes.

use crate::engine::{self, ExploreConfig, ExploreStats, Visit};
use crate::knowledge::{initial_knowledge, Knowledge};
use crate::proto::{CausalOrder, ClaimKind, EventKind, EventRef, Label, ProtocolSet};
use crate::symbol::Sym;
use crate::term::{Inst, KeyTable, RunId, Term};
use crate::trace::Trace;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::sync::atomic::AtomicU64;

/// One claim event occurrence inside a trace.
#[derive(Clone, Debug)]
pub struct ClaimOcc {
    pub trace_idx: usize,
    pub proto: usize,
    pub role: Sym,
    pub event_idx: usize,
    pub label: Label,
    pub kind: ClaimKind,
    pub arg: Option<Term>,
    pub inst: Inst,
}

pub fn claim_occurrences(set: &ProtocolSet, trace: &Trace) -> Vec<ClaimOcc> {
    let mut out = Vec::new();
    for (i, ev) in trace.events.iter().enumerate() {
        let rs = &set.items[ev.proto].proto.roles[&ev.role];
        if let EventKind::Claim { kind, arg, .. } = rs.events[ev.idx].kind {
            out.push(ClaimOcc {
                trace_idx: i,
                proto: ev.proto,
                role: ev.role,
                event_idx: ev.idx,
                label: ev.label,
                kind,
                arg,
                inst: ev.inst.clone(),
            });
        }
    }
    out
}

/// The instantiated claim argument.
pub fn claim_value(set: &ProtocolSet, occ: &ClaimOcc) -> Option<Term> {
    let rs = &set.items[occ.proto].proto.roles[&occ.role];
    occ.arg.and_then(|m| occ.inst.apply(m, &rs.typing).ok())
}

/// All casts for protocol `proto` in the trace: maps role → run id such
/// that each role has a create event with that run id and one shared ρ.
pub fn casts(set: &ProtocolSet, proto: usize, trace: &Trace) -> Vec<BTreeMap<Sym, RunId>> {
    let p = &set.items[proto].proto;
    let roles: Vec<Sym> = p.roles.keys().copied().collect();
    let mut by_rho: BTreeMap<BTreeMap<Sym, Sym>, BTreeMap<Sym, Vec<RunId>>> = BTreeMap::new();
    for ev in &trace.events {
        if ev.proto == proto && ev.idx == 0 {
            by_rho
                .entry(ev.inst.rho.clone())
                .or_default()
                .entry(ev.role)
                .or_default()
                .push(ev.inst.rid);
        }
    }
    let mut out = Vec::new();
    for (_, runs_by_role) in by_rho {
        let mut partial: Vec<BTreeMap<Sym, RunId>> = vec![BTreeMap::new()];
        for &r in &roles {
            let Some(cands) = runs_by_role.get(&r) else {
                partial.clear();
                break;
            };
            let mut next = Vec::with_capacity(partial.len() * cands.len());
            for cast in &partial {
                for &rid in cands {
                    let mut cast = cast.clone();
                    cast.insert(r, rid);
                    next.push(cast);
                }
            }
            partial = next;
        }
        out.extend(partial);
    }
    out
}

/// f_secret: the claimed run term is not derivable from the intruder
/// knowledge at the end of the trace.
pub fn eval_secret(set: &ProtocolSet, kt: &KeyTable, final_knowledge: &Knowledge, occ: &ClaimOcc) -> bool {
    match claim_value(set, occ) {
        Some(v) => !final_knowledge.derivable(kt, v),
        None => false,
    }
}

/// f_session-unique: no other occurrence of the same claim label carries
/// the same instantiated value.
pub fn eval_session_unique(set: &ProtocolSet, trace: &Trace, occ: &ClaimOcc) -> bool {
    let Some(v) = claim_value(set, occ) else { return false };
    for (i, ev) in trace.events.iter().enumerate() {
        if i == occ.trace_idx || ev.label != occ.label || ev.proto != occ.proto {
            continue;
        }
        let rs = &set.items[ev.proto].proto.roles[&ev.role];
        if !matches!(rs.events[ev.idx].kind, EventKind::Claim { .. }) {
            continue;
        }
        let other = occ.arg.and_then(|m| ev.inst.apply(m, &rs.typing).ok());
        if other == Some(v) {
            return false;
        }
    }
    true
}

/// f_data-agree: some cast (sharing the claimant's ρ and containing the
/// claimant) has, for every role, an event at or before the claim whose
/// run carries the same value for the claimed term.
pub fn eval_data_agree(set: &ProtocolSet, trace: &Trace, occ: &ClaimOcc) -> bool {
    let Some(v) = claim_value(set, occ) else { return false };
    let Some(m) = occ.arg else { return false };
    let p = &set.items[occ.proto].proto;
    for (&r, rs) in &p.roles {
        if r == occ.role {
            continue;
        }
        let mut satisfied = false;
        for ev in &trace.events[..=occ.trace_idx] {
            let is_create = ev.proto == occ.proto && ev.role == r && ev.idx == 0;
            if !is_create || ev.inst.rho != occ.inst.rho {
                continue;
            }
            let agrees = trace.events[..=occ.trace_idx].iter().any(|e2| {
                e2.inst.rid == ev.inst.rid
                    && e2.proto == occ.proto
                    && e2.inst.apply(m, &rs.typing).ok() == Some(v)
            });
            if agrees {
                satisfied = true;
                break;
            }
        }
        if !satisfied {
            return false;
        }
    }
    true
}

/// The matching conditions of synchronization for one candidate cast:
/// every shared label whose read causally precedes the claim must have a
/// send at j and a read at k with j < k < i, equal instantiated
/// contents, executed by the cast runs of the label's owner roles.
fn cast_synchronizes(
    set: &ProtocolSet,
    trace: &Trace,
    occ: &ClaimOcc,
    co: &CausalOrder,
    cast: &BTreeMap<Sym, RunId>,
) -> bool {
    let p = &set.items[occ.proto].proto;
    let claim_ref = EventRef { role: occ.role, idx: occ.event_idx };
    for (&r2, rs2) in &p.roles {
        for (k_idx, ev2) in rs2.events.iter().enumerate() {
            let EventKind::Read { .. } = ev2.kind else { continue };
            let in_claimant_role = p.roles[&occ.role].events.iter().any(|e| e.label == ev2.label);
            if !in_claimant_role {
                continue;
            }
            if !co.preceq(EventRef { role: r2, idx: k_idx }, claim_ref) {
                continue;
            }
            let Some(send_role) = p.roles.iter().find_map(|(&sr, srs)| {
                srs.events
                    .iter()
                    .any(|e| e.label == ev2.label && matches!(e.kind, EventKind::Send { .. }))
                    .then_some(sr)
            }) else {
                continue;
            };
            let (Some(&send_rid), Some(&read_rid)) = (cast.get(&send_role), cast.get(&r2)) else {
                return false;
            };
            let mut found = false;
            'pairs: for j in 0..occ.trace_idx {
                let evj = &trace.events[j];
                if evj.inst.rid != send_rid
                    || evj.label != ev2.label
                    || evj.proto != occ.proto
                    || !matches!(trace.event_kind(set, j), EventKind::Send { .. })
                {
                    continue;
                }
                for k in (j + 1)..occ.trace_idx {
                    let evk = &trace.events[k];
                    if evk.inst.rid != read_rid
                        || evk.label != ev2.label
                        || evk.proto != occ.proto
                        || !matches!(trace.event_kind(set, k), EventKind::Read { .. })
                    {
                        continue;
                    }
                    if trace.message(set, j) == trace.message(set, k) {
                        found = true;
                        break 'pairs;
                    }
                }
            }
            if !found {
                return false;
            }
        }
    }
    true
}

/// Casts containing the claimant that satisfy the matching conditions;
/// `create_cutoff` bounds which create events may populate the other
/// slots.
fn synchronizing_casts(
    set: &ProtocolSet,
    trace: &Trace,
    occ: &ClaimOcc,
    co: &CausalOrder,
    create_cutoff: usize,
) -> Vec<BTreeMap<Sym, RunId>> {
    let p = &set.items[occ.proto].proto;
    let mut casts: Vec<BTreeMap<Sym, RunId>> = vec![BTreeMap::new()];
    for &r in p.roles.keys() {
        let cands: Vec<RunId> = if r == occ.role {
            vec![occ.inst.rid]
        } else {
            let hi = create_cutoff.min(trace.len().saturating_sub(1));
            trace.events[..=hi]
                .iter()
                .filter(|ev| {
                    ev.proto == occ.proto && ev.role == r && ev.idx == 0 && ev.inst.rho == occ.inst.rho
                })
                .map(|ev| ev.inst.rid)
                .collect()
        };
        let mut next = Vec::with_capacity(casts.len() * cands.len());
        for cast in &casts {
            for &rid in &cands {
                let mut cast = cast.clone();
                cast.insert(r, rid);
                next.push(cast);
            }
        }
        casts = next;
    }
    casts
        .into_iter()
        .filter(|cast| cast_synchronizes(set, trace, occ, co, cast))
        .collect()
}

/// f_nisynch: some cast synchronizes up to the claim.
pub fn eval_nisynch(set: &ProtocolSet, trace: &Trace, occ: &ClaimOcc, co: &CausalOrder) -> bool {
    !synchronizing_casts(set, trace, occ, co, occ.trace_idx).is_empty()
}

/// f_isynch: exactly one cast synchronizes. Existence is checked against
/// the claim's prefix, uniqueness against the maximal trace (the cast
/// set only grows with extensions).
pub fn eval_isynch(set: &ProtocolSet, trace: &Trace, occ: &ClaimOcc, co: &CausalOrder) -> bool {
    if synchronizing_casts(set, trace, occ, co, occ.trace_idx).len() != 1 {
        return false;
    }
    synchronizing_casts(set, trace, occ, co, trace.len().saturating_sub(1)).len() == 1
}

/// Evaluate a claim occurrence; session claims decompose into their
/// component predicates.
pub fn eval_claim(
    set: &ProtocolSet,
    kt: &KeyTable,
    trace: &Trace,
    final_knowledge: &Knowledge,
    occ: &ClaimOcc,
    co: &CausalOrder,
) -> bool {
    match occ.kind {
        ClaimKind::Secret => eval_secret(set, kt, final_knowledge, occ),
        ClaimKind::SessionUnique => eval_session_unique(set, trace, occ),
        ClaimKind::DataAgree => eval_data_agree(set, trace, occ),
        ClaimKind::SessionKey => {
            eval_secret(set, kt, final_knowledge, occ)
                && eval_session_unique(set, trace, occ)
                && eval_data_agree(set, trace, occ)
        }
        ClaimKind::WeakSessionKey => {
            eval_secret(set, kt, final_knowledge, occ) && eval_session_unique(set, trace, occ)
        }
        ClaimKind::Nisynch => eval_nisynch(set, trace, occ, co),
        ClaimKind::Isynch => eval_isynch(set, trace, occ, co),
    }
}

fn failure_detail(
    set: &ProtocolSet,
    kt: &KeyTable,
    trace: &Trace,
    k: &Knowledge,
    occ: &ClaimOcc,
    co: &CausalOrder,
) -> String {
    match occ.kind {
        ClaimKind::Secret => format!(
            "claimed term {} is derivable by the intruder",
            claim_value(set, occ).map(|t| t.to_string()).unwrap_or_default()
        ),
        ClaimKind::SessionUnique => format!(
            "value {} occurs in another claim with the same label",
            claim_value(set, occ).map(|t| t.to_string()).unwrap_or_default()
        ),
        ClaimKind::DataAgree => "no cast agrees on the claimed value".into(),
        ClaimKind::Nisynch => "no cast matches all causally preceding send/read pairs".into(),
        ClaimKind::Isynch => {
            let n = synchronizing_casts(set, trace, occ, co, trace.len().saturating_sub(1)).len();
            if n == 0 {
                "no cast matches all causally preceding send/read pairs".into()
            } else {
                format!("{n} casts synchronize; injectivity requires exactly one")
            }
        }
        ClaimKind::SessionKey | ClaimKind::WeakSessionKey => {
            let mut parts = Vec::new();
            if !eval_secret(set, kt, k, occ) {
                parts.push("secret");
            }
            if !eval_session_unique(set, trace, occ) {
                parts.push("session-unique");
            }
            if occ.kind == ClaimKind::SessionKey && !eval_data_agree(set, trace, occ) {
                parts.push("data-agree");
            }
            format!("failed components: {}", parts.join(", "))
        }
    }
}

/// Verdict for one claim label at a bound.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ClaimVerdict {
    pub proto: Sym,
    pub label: Label,
    pub role: Sym,
    pub kind: ClaimKind,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, serde::Serialize)]
pub enum Outcome {
    HoldsAtBound,
    Attack {
        #[serde(skip)]
        trace: Trace,
        rendered_trace: String,
        detail: String,
    },
    BoundExhausted,
}

impl Outcome {
    pub fn holds(&self) -> bool {
        matches!(self, Outcome::HoldsAtBound)
    }
    pub fn is_attack(&self) -> bool {
        matches!(self, Outcome::Attack { .. })
    }
}

#[derive(Debug)]
pub struct VerifyReport {
    pub verdicts: Vec<ClaimVerdict>,
    pub stats: ExploreStats,
}

impl VerifyReport {
    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.outcome.holds())
    }
    pub fn verdict(&self, proto: Sym, label: Label) -> Option<&ClaimVerdict> {
        self.verdicts.iter().find(|v| v.proto == proto && v.label == label)
    }
}

/// Claim labels selected for verification; `None` selects every claim in
/// the set.
pub type Selection = Option<Vec<(Sym, Label)>>;

/// Verify the selected claims over all traces within bounds. Claim
/// occurrences whose ρ-image contains an untrusted agent are skipped.
/// The first failing occurrence (in deterministic exploration order)
/// becomes the claim's attack verdict, and its trace re-validates
/// through the derivation rules.
pub fn satisfies_at_bound(
    set: &ProtocolSet,
    kt: &KeyTable,
    config: &ExploreConfig,
    selection: &Selection,
) -> VerifyReport {
    let mut selected: Vec<(usize, Sym, Label, ClaimKind)> = Vec::new();
    for (pi, item) in set.items.iter().enumerate() {
        for (role, _, label, kind, _) in item.proto.claims() {
            let wanted = match selection {
                None => true,
                Some(list) => list.iter().any(|&(p, l)| p == item.proto.name && l == label),
            };
            if wanted {
                selected.push((pi, role, label, kind));
            }
        }
    }

    let config = ExploreConfig { trusted_filter: true, ..config.clone() };
    let scenarios = engine::scenarios(set, &config);
    let budget = AtomicU64::new(0);
    let causal: Vec<CausalOrder> = set.items.iter().map(|i| CausalOrder::of(&i.proto)).collect();

    struct ScenarioResult {
        attacks: BTreeMap<(usize, Label), (Trace, String)>,
        stats: ExploreStats,
    }

    let run_one = |sc: &engine::Scenario| -> ScenarioResult {
        let mut attacks: BTreeMap<(usize, Label), (Trace, String)> = BTreeMap::new();
        let mut visitor = |trace: &Trace, k: &Knowledge| {
            for occ in claim_occurrences(set, trace) {
                if !occ.inst.rho.values().all(|&a| config.bounds.agents.is_trusted(a)) {
                    continue;
                }
                let key = (occ.proto, occ.label);
                if attacks.contains_key(&key)
                    || !selected.iter().any(|&(p, _, l, _)| p == occ.proto && l == occ.label)
                {
                    continue;
                }
                let co = &causal[occ.proto];
                if !eval_claim(set, kt, trace, k, &occ, co) {
                    let detail = failure_detail(set, kt, trace, k, &occ, co);
                    attacks.insert(key, (trace.clone(), detail));
                }
            }
            if attacks.len() == selected.len() {
                Visit::Stop
            } else {
                Visit::Continue
            }
        };
        let stats = engine::explore_scenario(set, kt, &config, sc, &budget, &mut visitor);
        ScenarioResult { attacks, stats }
    };

    // Scenarios are independent; process them in order-preserving
    // parallel blocks so the reported attacks are the first in scenario
    // order.
    let block = (rayon::current_num_threads() * 4).max(4);
    let mut merged: BTreeMap<(usize, Label), (Trace, String)> = BTreeMap::new();
    let mut stats = ExploreStats::default();
    'blocks: for chunk in scenarios.chunks(block) {
        let results: Vec<ScenarioResult> = chunk.par_iter().map(run_one).collect();
        for r in results {
            let exhausted = r.stats.exhausted;
            stats.merge(r.stats);
            for (key, val) in r.attacks {
                merged.entry(key).or_insert(val);
            }
            if exhausted {
                break 'blocks;
            }
        }
        if merged.len() == selected.len() {
            break;
        }
    }

    let ik0 = initial_knowledge(set, kt, &config.bounds.agents, config.bounds.intruder_nonces);
    let verdicts = selected
        .iter()
        .map(|&(pi, role, label, kind)| {
            let outcome = match merged.get(&(pi, label)) {
                Some((trace, detail)) => {
                    crate::trace::replay(set, kt, &ik0, trace)
                        .expect("attack traces re-validate through the derivation rules");
                    Outcome::Attack {
                        rendered_trace: trace.render(set),
                        trace: trace.clone(),
                        detail: detail.clone(),
                    }
                }
                None if stats.exhausted => Outcome::BoundExhausted,
                None => Outcome::HoldsAtBound,
            };
            ClaimVerdict { proto: set.items[pi].proto.name, label, role, kind, outcome }
        })
        .collect();
    VerifyReport { verdicts, stats }
}

/// Remove all events not belonging to `proto` (the projection π_P).
pub fn project(trace: &Trace, proto: usize) -> Trace {
    Trace { events: trace.events.iter().filter(|e| e.proto == proto).cloned().collect() }
}

/// Apply a renaming of nonce run terms to every instantiation.
pub fn rename_nonces(trace: &Trace, f: &impl Fn(Term) -> Term) -> Trace {
    Trace {
        events: trace
            .events
            .iter()
            .map(|ev| {
                let mut inst = ev.inst.clone();
                inst.sigma = inst.sigma.iter().map(|(&k, &v)| (k, f(v))).collect();
                crate::trace::TraceEvent { inst, ..ev.clone() }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Bounds;
    use crate::knowledge::AgentUniverse;
    use crate::proto::AnnotatedProtocol;

    fn set_of(src: &str, annotations: Vec<crate::proto::IoAnnotation>) -> (ProtocolSet, KeyTable) {
        let f = crate::parse::parse_file(src).unwrap();
        let kt = f.key_table();
        let set = ProtocolSet::new(
            f.protocols
                .into_iter()
                .map(|p| AnnotatedProtocol { proto: p, annotations: annotations.clone() })
                .collect(),
        )
        .unwrap();
        (set, kt)
    }

    fn honest_bounds(n: u32) -> Bounds {
        Bounds {
            max_runs_per_role: n,
            agents: AgentUniverse { trusted: vec![Sym::new("a"), Sym::new("b")], untrusted: vec![] },
            ..Default::default()
        }
    }

    #[test]
    fn nsl_prime_two_initiators_give_two_casts() {
        let (set, kt) = set_of(crate::corpus::NSL_PRIME, vec![]);
        let config = ExploreConfig {
            bounds: honest_bounds(2),
            symmetry: false,
            trusted_filter: false,
            ..Default::default()
        };
        let mut found = false;
        engine::explore(&set, &kt, &config, &mut |t, k| {
            let creates_i = t.events.iter().filter(|e| e.idx == 0 && e.role == Sym::new("i")).count();
            let creates_r = t.events.iter().filter(|e| e.idx == 0 && e.role == Sym::new("r")).count();
            let same_rho = t
                .events
                .iter()
                .filter(|e| e.idx == 0)
                .map(|e| e.inst.rho.clone())
                .collect::<std::collections::BTreeSet<_>>()
                .len()
                == 1;
            if creates_i == 2 && creates_r == 1 && same_rho {
                let cs = casts(&set, 0, t);
                assert_eq!(cs.len(), 2, "one responder pairs with each initiator");
                for occ in claim_occurrences(&set, t) {
                    if occ.kind == ClaimKind::Secret {
                        let co = CausalOrder::of(&set.items[occ.proto].proto);
                        assert!(eval_claim(&set, &kt, t, k, &occ, &co));
                    }
                }
                found = true;
                return Visit::Stop;
            }
            Visit::Continue
        });
        assert!(found, "expected a two-initiator/one-responder trace");
    }

    #[test]
    fn no_creates_for_role_means_no_casts() {
        let (set, kt) = set_of(crate::corpus::NSL_PRIME, vec![]);
        let config = ExploreConfig {
            bounds: honest_bounds(1),
            symmetry: false,
            trusted_filter: false,
            ..Default::default()
        };
        let mut checked = false;
        engine::explore(&set, &kt, &config, &mut |t, _| {
            let roles: std::collections::BTreeSet<Sym> =
                t.events.iter().filter(|e| e.idx == 0).map(|e| e.role).collect();
            if roles.len() == 1 {
                assert!(casts(&set, 0, t).is_empty());
                checked = true;
            }
            Visit::Continue
        });
        assert!(checked);
    }

    #[test]
    fn nsl_all_claims_hold_at_small_bound() {
        let (set, kt) = set_of(crate::corpus::NSL, vec![]);
        let config = ExploreConfig { bounds: honest_bounds(1), ..Default::default() };
        let report = satisfies_at_bound(&set, &kt, &config, &None);
        assert!(report.all_hold(), "{:#?}", report.verdicts);
    }

    #[test]
    fn plaintext_secret_claim_fails() {
        let src = "protocol LEAK { role x { const n; create 1 (x); send 2 (x,y, n); claim c1 (x, secret, n); end 3 (x); } role y { var n; create 4 (y); read 2 (x,y, n); end 5 (y); } }";
        let (set, kt) = set_of(src, vec![]);
        let config = ExploreConfig { bounds: honest_bounds(1), ..Default::default() };
        let report = satisfies_at_bound(&set, &kt, &config, &None);
        let v = report.verdict(Sym::new("LEAK"), Label::new("c1")).unwrap();
        assert!(v.outcome.is_attack(), "{v:#?}");
    }

    #[test]
    fn single_claim_occurrence_is_session_unique() {
        let (set, kt) = set_of(crate::corpus::NSL, vec![]);
        let config = ExploreConfig {
            bounds: honest_bounds(1),
            symmetry: false,
            trusted_filter: false,
            ..Default::default()
        };
        let mut checked = false;
        engine::explore(&set, &kt, &config, &mut |t, _| {
            for occ in claim_occurrences(&set, t) {
                if occ.kind == ClaimKind::Secret {
                    let occ = ClaimOcc { kind: ClaimKind::SessionUnique, ..occ.clone() };
                    assert!(eval_session_unique(&set, t, &occ));
                    checked = true;
                }
            }
            if checked {
                Visit::Stop
            } else {
                Visit::Continue
            }
        });
        assert!(checked);
    }
}
