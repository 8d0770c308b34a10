//! Bounded trace exploration: states, the five derivation rules, trace
//! restrictions enforced at run creation, and a DFS over the trace tree.
//!
//! Exploration is finitized by per-role run bounds, a fixed agent
//! universe and an intruder nonce pool. With reductions enabled
//! (default), claim and end events fire eagerly after their run's
//! preceding step and runs of protocols whose inputs do not depend on
//! the trace are created up front in canonical order; both collapse
//! interleavings without changing any claim verdict, and can be turned
//! off for cross-checks at small bounds.

use crate::knowledge::{initial_knowledge, AgentUniverse, Knowledge};
use crate::proto::{EventKind, IoAnnotation, ProtocolSet};
use crate::symbol::Sym;
use crate::term::{IdentKind, Inst, KeyTable, Term, Typing};
use crate::trace::{Trace, TraceEvent};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

/// Finitization bounds for exploration.
#[derive(Clone, Debug)]
pub struct Bounds {
    /// Maximum number of runs per (protocol, role).
    pub max_runs_per_role: u32,
    /// Size of the intruder-generated nonce pool `IT`.
    pub intruder_nonces: u32,
    pub agents: AgentUniverse,
    /// Cap on total executed run events across the exploration.
    pub max_events: u64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            max_runs_per_role: 2,
            intruder_nonces: 2,
            agents: AgentUniverse::default(),
            max_events: 10_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExploreConfig {
    pub bounds: Bounds,
    /// Eager claim/end execution and up-front creation of trace-independent runs.
    pub reduce: bool,
    /// Quotient root scenarios by permutations of trusted agents.
    pub symmetry: bool,
    /// Skip root scenarios that cannot produce a trusted claim occurrence.
    /// Only sound when the exploration is used for claim checking.
    pub trusted_filter: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            bounds: Bounds::default(),
            reduce: true,
            symmetry: true,
            trusted_filter: false,
        }
    }
}

/// A planned up-front run creation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct PlannedRun {
    pub proto: usize,
    pub role: Sym,
    pub rho: BTreeMap<Sym, Sym>,
    /// Session/secret input classes are encoded as the index of the
    /// planned run whose fresh value is shared (self-index for a new
    /// class); resolved to concrete nonces once run ids are assigned.
    pub param_sources: BTreeMap<Sym, usize>,
}

/// One root of the exploration: the canonical multiset of up-front runs.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Scenario {
    pub creates: Vec<PlannedRun>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExploreStats {
    pub scenarios: u64,
    pub traces: u64,
    pub events: u64,
    pub exhausted: bool,
    /// The visitor asked to stop early.
    pub stopped: bool,
}

impl ExploreStats {
    pub fn merge(&mut self, other: ExploreStats) {
        self.scenarios += other.scenarios;
        self.traces += other.traces;
        self.events += other.events;
        self.exhausted |= other.exhausted;
        self.stopped |= other.stopped;
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Visit {
    Continue,
    Stop,
}

/// Whether every input of the protocol is independent of the trace:
/// such runs can be created up front.
fn is_static_input(set: &ProtocolSet, proto: usize) -> bool {
    let item = &set.items[proto];
    item.proto.roles.values().all(|rs| {
        rs.params().iter().all(|&d| {
            item.annotations.iter().any(|a| {
                matches!(*a, IoAnnotation::InSecret { d: x } | IoAnnotation::InSession { d: x } if x == d)
            })
        })
    })
}

fn rho_choices(set: &ProtocolSet, proto: usize, agents: &AgentUniverse) -> Vec<BTreeMap<Sym, Sym>> {
    let roles: Vec<Sym> = set.items[proto].proto.roles.keys().copied().collect();
    let universe = agents.all();
    let mut out = vec![BTreeMap::new()];
    for &r in &roles {
        let mut next = Vec::with_capacity(out.len() * universe.len());
        for rho in &out {
            for &a in &universe {
                let mut rho = rho.clone();
                rho.insert(r, a);
                next.push(rho);
            }
        }
        out = next;
    }
    out
}

/// The value an instantiation assigns to identifier `c` in the context
/// of its role specification.
pub fn value_of(inst: &Inst, typing: &Typing, c: Sym) -> Option<Term> {
    match typing.get(&c)? {
        IdentKind::Const => Some(Term::nonce(c, inst.rid)),
        IdentKind::Param | IdentKind::Var => inst.sigma.get(&c).copied(),
    }
}

/// Enumerate root scenarios: canonical multisets of up-front runs for
/// static-input protocols, including input-class structures for
/// session/secret parameters.
pub fn scenarios(set: &ProtocolSet, config: &ExploreConfig) -> Vec<Scenario> {
    let mut slots: Vec<(usize, Sym)> = Vec::new();
    if config.reduce {
        for (pi, item) in set.items.iter().enumerate() {
            if is_static_input(set, pi) {
                for &r in item.proto.roles.keys() {
                    slots.push((pi, r));
                }
            }
        }
    }
    let mut out = Vec::new();
    let mut acc: Vec<PlannedRun> = Vec::new();
    enumerate_slots(set, config, &slots, 0, &mut acc, &mut out);
    if config.symmetry {
        out.retain(|s| is_canonical_under_agent_symmetry(s, &config.bounds.agents));
    }
    if config.trusted_filter {
        let any_dynamic = set
            .items
            .iter()
            .enumerate()
            .any(|(pi, _)| !is_static_input(set, pi) || !config.reduce);
        out.retain(|s| {
            any_dynamic
                || s.creates.iter().any(|c| {
                    c.rho.values().all(|&a| config.bounds.agents.is_trusted(a))
                })
        });
    }
    out
}

fn enumerate_slots(
    set: &ProtocolSet,
    config: &ExploreConfig,
    slots: &[(usize, Sym)],
    slot: usize,
    acc: &mut Vec<PlannedRun>,
    out: &mut Vec<Scenario>,
) {
    if slot == slots.len() {
        out.push(Scenario { creates: acc.clone() });
        return;
    }
    let (proto, _role) = slots[slot];
    let rhos = rho_choices(set, proto, &config.bounds.agents);
    // Multisets of at most max_runs ρ-choices, non-decreasing by index,
    // with all input-class assignments for each choice vector.
    fn pick(
        set: &ProtocolSet,
        config: &ExploreConfig,
        slots: &[(usize, Sym)],
        slot: usize,
        rhos: &[BTreeMap<Sym, Sym>],
        min_rho: usize,
        remaining: u32,
        acc: &mut Vec<PlannedRun>,
        out: &mut Vec<Scenario>,
    ) {
        enumerate_slots(set, config, slots, slot + 1, acc, out);
        if remaining == 0 {
            return;
        }
        let (proto, role) = slots[slot];
        for ri in min_rho..rhos.len() {
            let sources = param_source_choices(set, proto, role, &rhos[ri], acc);
            for srcs in sources {
                acc.push(PlannedRun { proto, role, rho: rhos[ri].clone(), param_sources: srcs });
                pick(set, config, slots, slot, rhos, ri, remaining - 1, acc, out);
                acc.pop();
            }
        }
    }
    pick(set, config, slots, slot, &rhos, 0, config.bounds.max_runs_per_role, acc, out);
}

/// Valid input-class choices for a new planned run's parameters.
/// Secret inputs may share any earlier class of the same restriction;
/// session inputs additionally require a ρ-compatible class from the
/// same protocol with the new run's role not yet present.
fn param_source_choices(
    set: &ProtocolSet,
    proto: usize,
    role: Sym,
    rho: &BTreeMap<Sym, Sym>,
    acc: &[PlannedRun],
) -> Vec<BTreeMap<Sym, usize>> {
    let item = &set.items[proto];
    let params = item.proto.roles[&role].params();
    let self_idx = acc.len();
    let mut out = vec![BTreeMap::new()];
    for d in params {
        let ann = item
            .annotations
            .iter()
            .find(|a| a.param() == Some(d))
            .expect("static-input protocols have annotated params");
        let mut choices: Vec<usize> = vec![self_idx];
        match *ann {
            IoAnnotation::InSecret { .. } => {
                for (j, run) in acc.iter().enumerate() {
                    if run.param_sources.get(&d) == Some(&j)
                        && has_same_annotation(set, run.proto, d, false)
                    {
                        choices.push(j);
                    }
                }
            }
            IoAnnotation::InSession { .. } => {
                for (j, run) in acc.iter().enumerate() {
                    let class_ok = run.proto == proto
                        && run.param_sources.get(&d) == Some(&j)
                        && run.rho == *rho;
                    if !class_ok {
                        continue;
                    }
                    // One run per role within a session class.
                    let role_taken = acc.iter().any(|r2| {
                        r2.proto == proto
                            && r2.role == role
                            && r2.rho == *rho
                            && r2.param_sources.get(&d) == Some(&j)
                    }) || run.role == role;
                    if !role_taken {
                        choices.push(j);
                    }
                }
            }
            _ => unreachable!(),
        }
        let mut next = Vec::with_capacity(out.len() * choices.len());
        for srcs in &out {
            for &c in &choices {
                let mut srcs = srcs.clone();
                srcs.insert(d, c);
                next.push(srcs);
            }
        }
        out = next;
    }
    out
}

fn has_same_annotation(set: &ProtocolSet, proto: usize, d: Sym, session: bool) -> bool {
    set.items[proto].annotations.iter().any(|a| match *a {
        IoAnnotation::InSecret { d: x } => !session && x == d,
        IoAnnotation::InSession { d: x } => session && x == d,
        _ => false,
    })
}

fn is_canonical_under_agent_symmetry(s: &Scenario, agents: &AgentUniverse) -> bool {
    // Quotient by transpositions of trusted agents (the initial knowledge
    // is symmetric in them). Enough for the default two-agent universe;
    // larger universes are only partially reduced, which is still sound.
    for i in 0..agents.trusted.len() {
        for j in (i + 1)..agents.trusted.len() {
            let (x, y) = (agents.trusted[i], agents.trusted[j]);
            let swap = |a: Sym| {
                if a == x {
                    y
                } else if a == y {
                    x
                } else {
                    a
                }
            };
            let mapped: Vec<PlannedRun> = s
                .creates
                .iter()
                .map(|c| PlannedRun {
                    proto: c.proto,
                    role: c.role,
                    rho: c.rho.iter().map(|(&r, &a)| (r, swap(a))).collect(),
                    param_sources: c.param_sources.clone(),
                })
                .collect();
            if mapped < s.creates {
                return false;
            }
        }
    }
    true
}

struct RunState {
    proto: usize,
    role: Sym,
    inst: Inst,
    pc: usize,
}

struct Ctx<'a> {
    set: &'a ProtocolSet,
    kt: &'a KeyTable,
    config: &'a ExploreConfig,
    budget: &'a AtomicU64,
    trace: Vec<TraceEvent>,
    stats: ExploreStats,
    stop: bool,
}

struct State {
    runs: Vec<RunState>,
    knowledge: Knowledge,
    next_rid: u32,
}

impl Clone for RunState {
    fn clone(&self) -> Self {
        RunState { proto: self.proto, role: self.role, inst: self.inst.clone(), pc: self.pc }
    }
}

impl Clone for State {
    fn clone(&self) -> Self {
        State { runs: self.runs.clone(), knowledge: self.knowledge.clone(), next_rid: self.next_rid }
    }
}

/// Explore every valid trace of one scenario, invoking the visitor on
/// each maximal trace together with its final intruder knowledge.
pub fn explore_scenario<F>(
    set: &ProtocolSet,
    kt: &KeyTable,
    config: &ExploreConfig,
    scenario: &Scenario,
    budget: &AtomicU64,
    visitor: &mut F,
) -> ExploreStats
where
    F: FnMut(&Trace, &Knowledge) -> Visit,
{
    let ik0 = initial_knowledge(set, kt, &config.bounds.agents, config.bounds.intruder_nonces);
    let mut ctx = Ctx {
        set,
        kt,
        config,
        budget,
        trace: Vec::new(),
        stats: ExploreStats { scenarios: 1, ..Default::default() },
        stop: false,
    };
    let mut state = State { runs: Vec::new(), knowledge: ik0, next_rid: 1 };
    // Up-front creations in canonical order; rid = position + 1.
    for planned in &scenario.creates {
        let rid = state.next_rid;
        let mut sigma = BTreeMap::new();
        for (&d, &src) in &planned.param_sources {
            sigma.insert(d, Term::nonce(d, src as u32 + 1));
        }
        let inst = Inst::new(rid, planned.rho.clone(), sigma);
        create_run(&mut ctx, &mut state, planned.proto, planned.role, inst);
    }
    dfs(&mut ctx, state, visitor);
    ctx.stats
}

fn create_run(ctx: &mut Ctx, state: &mut State, proto: usize, role: Sym, inst: Inst) {
    let rid = inst.rid;
    debug_assert_eq!(rid, state.next_rid);
    state.next_rid += 1;
    push_event(ctx, state, proto, role, 0, inst.clone());
    state.runs.push(RunState { proto, role, inst, pc: 1 });
    let _ = rid;
}

fn push_event(ctx: &mut Ctx, state: &State, proto: usize, role: Sym, idx: usize, inst: Inst) {
    let _ = state;
    ctx.stats.events += 1;
    if ctx.budget.fetch_add(1, Ordering::Relaxed) >= ctx.config.bounds.max_events {
        ctx.stats.exhausted = true;
        ctx.stop = true;
    }
    ctx.trace.push(TraceEvent {
        proto,
        proto_name: ctx.set.items[proto].proto.name,
        role,
        idx,
        label: ctx.set.items[proto].proto.roles[&role].events[idx].label,
        inst,
    });
}

/// Fire all pending claim and end events (deterministically, lowest run
/// id first). They never affect enabledness of other runs, so eager
/// execution preserves all claim verdicts.
fn auto_steps(ctx: &mut Ctx, state: &mut State) {
    if !ctx.config.reduce {
        return;
    }
    loop {
        let mut fired = false;
        for i in 0..state.runs.len() {
            let (proto, role, pc) = {
                let r = &state.runs[i];
                (r.proto, r.role, r.pc)
            };
            let rs = &ctx.set.items[proto].proto.roles[&role];
            if pc >= rs.events.len() {
                continue;
            }
            match rs.events[pc].kind {
                EventKind::Claim { .. } | EventKind::End(_) => {
                    let inst = state.runs[i].inst.clone();
                    push_event(ctx, state, proto, role, pc, inst);
                    state.runs[i].pc += 1;
                    fired = true;
                }
                _ => {}
            }
        }
        if !fired {
            break;
        }
    }
}

enum Transition {
    Create { proto: usize, role: Sym, rho: BTreeMap<Sym, Sym>, sigma: BTreeMap<Sym, Term> },
    Send { run: usize },
    Read { run: usize, inst: Inst },
    /// Only with reductions off: claims/ends as ordinary interleaved steps.
    Local { run: usize },
}

fn enabled_transitions(ctx: &Ctx, state: &State) -> Vec<Transition> {
    let mut out = Vec::new();
    // Run steps in ascending run order.
    for (i, run) in state.runs.iter().enumerate() {
        let rs = &ctx.set.items[run.proto].proto.roles[&run.role];
        if run.pc >= rs.events.len() {
            continue;
        }
        match &rs.events[run.pc].kind {
            EventKind::Send { msg, .. } => {
                if run.inst.free_vars(*msg, &rs.typing).is_empty() {
                    out.push(Transition::Send { run: i });
                }
            }
            EventKind::Read { pattern, .. } => {
                let mut cands = Vec::new();
                read_candidates(&run.inst, *pattern, &rs.typing, &state.knowledge, ctx.kt, &mut cands);
                cands.sort();
                cands.dedup();
                for inst in cands {
                    out.push(Transition::Read { run: i, inst });
                }
            }
            EventKind::Claim { .. } | EventKind::End(_) if !ctx.config.reduce => {
                out.push(Transition::Local { run: i });
            }
            _ => {}
        }
    }
    // Creations of dynamic-input protocols (all protocols when
    // reductions are off).
    for (pi, item) in ctx.set.items.iter().enumerate() {
        if ctx.config.reduce && is_static_input(ctx.set, pi) {
            continue;
        }
        for (&role, rs) in &item.proto.roles {
            let count = state
                .runs
                .iter()
                .filter(|r| r.proto == pi && r.role == role)
                .count() as u32;
            if count >= ctx.config.bounds.max_runs_per_role {
                continue;
            }
            for rho in rho_choices(ctx.set, pi, &ctx.config.bounds.agents) {
                for sigma in dynamic_sigma_choices(ctx, state, pi, role, &rho, rs.params()) {
                    out.push(Transition::Create { proto: pi, role, rho: rho.clone(), sigma });
                }
            }
        }
    }
    out
}

/// Parameter values for a dynamically created run, per the protocol's
/// trace-restriction annotations.
fn dynamic_sigma_choices(
    ctx: &Ctx,
    state: &State,
    proto: usize,
    role: Sym,
    rho: &BTreeMap<Sym, Sym>,
    params: Vec<Sym>,
) -> Vec<BTreeMap<Sym, Term>> {
    let item = &ctx.set.items[proto];
    let mut out = vec![BTreeMap::new()];
    for d in params {
        let ann = item.annotations.iter().find(|a| a.param() == Some(d));
        let mut choices: Vec<Term> = Vec::new();
        match ann {
            Some(IoAnnotation::In { c, d: _ }) | Some(IoAnnotation::InUnique { c, d: _ }) => {
                let unique = matches!(ann, Some(IoAnnotation::InUnique { .. }));
                for v in producer_end_values(ctx, *c, rho) {
                    if !unique || io_unique_capacity(ctx, *c, d, rho, v) {
                        choices.push(v);
                    }
                }
            }
            Some(IoAnnotation::InSecret { .. }) | Some(IoAnnotation::InSession { .. }) => {
                let session = matches!(ann, Some(IoAnnotation::InSession { .. }));
                choices.push(Term::nonce(d, state.next_rid));
                for ev in ctx.trace.iter().filter(|e| e.idx == 0) {
                    if !has_same_annotation(ctx.set, ev.proto, d, session) {
                        continue;
                    }
                    // Only class representatives (value = own fresh nonce)
                    // seed joinable classes.
                    let Some(&v) = ev.inst.sigma.get(&d) else { continue };
                    if v != Term::nonce(d, ev.inst.rid) {
                        continue;
                    }
                    if session {
                        if ev.proto != proto || ev.inst.rho != *rho {
                            continue;
                        }
                        let role_taken = ctx.trace.iter().filter(|e2| e2.idx == 0).any(|e2| {
                            e2.proto == proto
                                && e2.role == role
                                && e2.inst.rho == *rho
                                && e2.inst.sigma.get(&d) == Some(&v)
                        });
                        if role_taken {
                            continue;
                        }
                    }
                    if !choices.contains(&v) {
                        choices.push(v);
                    }
                }
            }
            Some(IoAnnotation::InAdversary { .. }) => {
                choices.extend(derivable_nonces(state));
            }
            _ => {
                // Unannotated input: the semantics allows any nonce run
                // term. Finitized to a fresh unknown, values passed
                // out-of-band from earlier runs of the same parameter,
                // and anything the adversary can supply.
                choices.push(Term::nonce(d, state.next_rid));
                for ev in ctx.trace.iter().filter(|e| e.idx == 0) {
                    if let Some(&v) = ev.inst.sigma.get(&d) {
                        if !choices.contains(&v) {
                            choices.push(v);
                        }
                    }
                }
                for v in derivable_nonces(state) {
                    if !choices.contains(&v) {
                        choices.push(v);
                    }
                }
            }
        }
        let mut next = Vec::with_capacity(out.len() * choices.len());
        for sigma in &out {
            for &v in &choices {
                let mut sigma = sigma.clone();
                sigma.insert(d, v);
                next.push(sigma);
            }
        }
        out = next;
    }
    out
}

fn derivable_nonces(state: &State) -> Vec<Term> {
    state
        .knowledge
        .basis()
        .iter()
        .copied()
        .filter(|t| t.is_nonce_run_term())
        .collect()
}

/// Values of `c` recorded at end events of producer runs with the same ρ.
fn producer_end_values(ctx: &Ctx, c: Sym, rho: &BTreeMap<Sym, Sym>) -> Vec<Term> {
    let mut out = Vec::new();
    for ev in &ctx.trace {
        let item = &ctx.set.items[ev.proto];
        let is_end = matches!(
            item.proto.roles[&ev.role].events[ev.idx].kind,
            EventKind::End(_)
        );
        if !is_end {
            continue;
        }
        let produces = item.annotations.iter().any(|a| {
            matches!(*a, IoAnnotation::Out { c: x } | IoAnnotation::OutReveal { c: x } if x == c)
        });
        if !produces || ev.inst.rho != *rho {
            continue;
        }
        if let Some(v) = value_of(&ev.inst, &item.proto.roles[&ev.role].typing, c) {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

/// χ_IO!: at most one consuming run per producing run. Feasible iff the
/// number of prior consuming creates of this value/ρ class stays below
/// the number of matching producer ends.
fn io_unique_capacity(ctx: &Ctx, c: Sym, d: Sym, rho: &BTreeMap<Sym, Sym>, v: Term) -> bool {
    let mut ends = 0usize;
    let mut creates = 0usize;
    for ev in &ctx.trace {
        let item = &ctx.set.items[ev.proto];
        let kind = &item.proto.roles[&ev.role].events[ev.idx].kind;
        match kind {
            EventKind::End(_) => {
                let produces = item.annotations.iter().any(|a| {
                    matches!(*a, IoAnnotation::Out { c: x } | IoAnnotation::OutReveal { c: x } if x == c)
                });
                if produces
                    && ev.inst.rho == *rho
                    && value_of(&ev.inst, &item.proto.roles[&ev.role].typing, c) == Some(v)
                {
                    ends += 1;
                }
            }
            EventKind::Create(_) => {
                let consumes = item.annotations.iter().any(|a| {
                    matches!(*a, IoAnnotation::In { c: x, d: y } | IoAnnotation::InUnique { c: x, d: y } if x == c && y == d)
                });
                if consumes && ev.inst.rho == *rho && ev.inst.sigma.get(&d) == Some(&v) {
                    creates += 1;
                }
            }
            _ => {}
        }
    }
    creates < ends
}

/// σ-extensions of `inst` under which the instantiated pattern is
/// derivable. Complete relative to typed matching: a derivable message
/// is either a basis element (unify structurally) or synthesized from
/// derivable parts (split and recurse).
pub fn read_candidates(
    inst: &Inst,
    pattern: Term,
    typing: &Typing,
    knowledge: &Knowledge,
    kt: &KeyTable,
    out: &mut Vec<Inst>,
) {
    use crate::term::TermData;
    if inst.free_vars(pattern, typing).is_empty() {
        if let Ok(t) = inst.apply(pattern, typing) {
            if knowledge.derivable(kt, t) {
                out.push(inst.clone());
            }
        }
        return;
    }
    for &b in knowledge.basis() {
        if let Some(ext) = inst.match_term(pattern, b, typing) {
            out.push(ext);
        }
    }
    match pattern.data() {
        TermData::Tuple(p1, p2) | TermData::Enc(p1, p2) => {
            let mut firsts = Vec::new();
            read_candidates(inst, p1, typing, knowledge, kt, &mut firsts);
            firsts.sort();
            firsts.dedup();
            for f in firsts {
                read_candidates(&f, p2, typing, knowledge, kt, out);
            }
        }
        TermData::Func(f, args) if kt.is_public_fn(f) => {
            let mut acc = vec![inst.clone()];
            for &a in &args {
                let mut next = Vec::new();
                for i2 in &acc {
                    read_candidates(i2, a, typing, knowledge, kt, &mut next);
                }
                next.sort();
                next.dedup();
                acc = next;
            }
            out.extend(acc);
        }
        _ => {}
    }
}

fn dfs<F>(ctx: &mut Ctx, mut state: State, visitor: &mut F)
where
    F: FnMut(&Trace, &Knowledge) -> Visit,
{
    if ctx.stop {
        return;
    }
    let before = ctx.trace.len();
    auto_steps(ctx, &mut state);
    if ctx.stop {
        ctx.trace.truncate(before);
        return;
    }
    let transitions = enabled_transitions(ctx, &state);
    if transitions.is_empty() {
        ctx.stats.traces += 1;
        let trace = Trace { events: std::mem::take(&mut ctx.trace) };
        let v = visitor(&trace, &state.knowledge);
        ctx.trace = trace.events;
        if v == Visit::Stop {
            ctx.stop = true;
            ctx.stats.stopped = true;
        }
        ctx.trace.truncate(before);
        return;
    }
    for t in transitions {
        if ctx.stop {
            break;
        }
        let mark = ctx.trace.len();
        let mut next = state.clone();
        match t {
            Transition::Create { proto, role, rho, sigma } => {
                let inst = Inst::new(next.next_rid, rho, sigma);
                create_run(ctx, &mut next, proto, role, inst);
            }
            Transition::Send { run } => {
                let (proto, role, pc, inst) = {
                    let r = &next.runs[run];
                    (r.proto, r.role, r.pc, r.inst.clone())
                };
                let rs = &ctx.set.items[proto].proto.roles[&role];
                let EventKind::Send { msg, .. } = rs.events[pc].kind else { unreachable!() };
                let m = inst.apply(msg, &rs.typing).expect("send checked for free vars");
                next.knowledge.add(ctx.kt, m);
                push_event(ctx, &next, proto, role, pc, inst);
                next.runs[run].pc += 1;
            }
            Transition::Read { run, inst } => {
                let (proto, role, pc) = {
                    let r = &next.runs[run];
                    (r.proto, r.role, r.pc)
                };
                push_event(ctx, &next, proto, role, pc, inst.clone());
                next.runs[run].inst = inst;
                next.runs[run].pc += 1;
            }
            Transition::Local { run } => {
                let (proto, role, pc, inst) = {
                    let r = &next.runs[run];
                    (r.proto, r.role, r.pc, r.inst.clone())
                };
                push_event(ctx, &next, proto, role, pc, inst);
                next.runs[run].pc += 1;
            }
        }
        dfs(ctx, next, visitor);
        ctx.trace.truncate(mark);
    }
}

/// Sequentially explore all scenarios of a set.
pub fn explore<F>(set: &ProtocolSet, kt: &KeyTable, config: &ExploreConfig, visitor: &mut F) -> ExploreStats
where
    F: FnMut(&Trace, &Knowledge) -> Visit,
{
    let budget = AtomicU64::new(0);
    let mut stats = ExploreStats::default();
    for sc in scenarios(set, config) {
        let s = explore_scenario(set, kt, config, &sc, &budget, visitor);
        let stop = s.exhausted || s.stopped;
        stats.merge(s);
        if stop {
            break;
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proto::AnnotatedProtocol;

    fn nsl_set() -> (ProtocolSet, KeyTable) {
        let f = crate::parse::parse_file(crate::corpus::NSL).unwrap();
        let kt = f.key_table();
        let set = ProtocolSet::new(
            f.protocols
                .into_iter()
                .map(|p| AnnotatedProtocol { proto: p, annotations: vec![] })
                .collect(),
        )
        .unwrap();
        (set, kt)
    }

    #[test]
    fn zero_runs_visits_only_empty_trace() {
        let (set, kt) = nsl_set();
        let config = ExploreConfig {
            bounds: Bounds { max_runs_per_role: 0, ..Default::default() },
            trusted_filter: false,
            ..Default::default()
        };
        let mut traces = 0;
        let stats = explore(&set, &kt, &config, &mut |t, _| {
            traces += 1;
            assert!(t.is_empty());
            Visit::Continue
        });
        assert_eq!(traces, 1);
        assert_eq!(stats.traces, 1);
    }

    #[test]
    fn single_honest_session_completes() {
        let (set, kt) = nsl_set();
        let config = ExploreConfig {
            bounds: Bounds {
                max_runs_per_role: 1,
                agents: AgentUniverse { trusted: vec![Sym::new("a"), Sym::new("b")], untrusted: vec![] },
                ..Default::default()
            },
            symmetry: false,
            ..Default::default()
        };
        // Some maximal trace contains a complete pair of runs (both end).
        let mut complete = false;
        explore(&set, &kt, &config, &mut |t, _| {
            let ends = t
                .events
                .iter()
                .filter(|e| matches!(set.items[e.proto].proto.roles[&e.role].events[e.idx].kind, EventKind::End(_)))
                .count();
            if ends == 2 {
                complete = true;
            }
            Visit::Continue
        });
        assert!(complete);
    }

    #[test]
    fn prefix_closure_of_visited_traces() {
        // Every prefix of a visited trace replays through the rules.
        let (set, kt) = nsl_set();
        let config = ExploreConfig {
            bounds: Bounds {
                max_runs_per_role: 1,
                agents: AgentUniverse { trusted: vec![Sym::new("a"), Sym::new("b")], untrusted: vec![Sym::new("e")] },
                ..Default::default()
            },
            ..Default::default()
        };
        let ik0 = initial_knowledge(&set, &kt, &config.bounds.agents, config.bounds.intruder_nonces);
        let mut checked = 0;
        explore(&set, &kt, &config, &mut |t, _| {
            if checked < 25 {
                for n in 0..=t.len() {
                    let prefix = Trace { events: t.events[..n].to_vec() };
                    crate::trace::replay(&set, &kt, &ik0, &prefix).expect("prefix replays");
                }
                checked += 1;
            }
            Visit::Continue
        });
        assert!(checked > 0);
    }

    #[test]
    fn knowledge_monotone_along_traces() {
        let (set, kt) = nsl_set();
        let config = ExploreConfig {
            bounds: Bounds { max_runs_per_role: 1, ..Default::default() },
            ..Default::default()
        };
        let ik0 = initial_knowledge(&set, &kt, &config.bounds.agents, config.bounds.intruder_nonces);
        let mut checked = 0;
        explore(&set, &kt, &config, &mut |t, _| {
            if checked >= 10 {
                return Visit::Stop;
            }
            checked += 1;
            let mut k = ik0.clone();
            let mut seen: Vec<Term> = Vec::new();
            for i in 0..t.len() {
                if let EventKind::Send { .. } = t.event_kind(&set, i) {
                    let m = t.message(&set, i).unwrap();
                    k.add(&kt, m);
                    for &old in &seen {
                        assert!(k.derivable(&kt, old), "knowledge must stay monotone");
                    }
                    seen.push(m);
                }
            }
            Visit::Continue
        });
        assert!(checked > 0);
    }
}
