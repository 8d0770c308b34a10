//! Traces: sequences of run events, their serialization and replay
//! validation through the derivation rules.

use crate::knowledge::Knowledge;
use crate::proto::{EventKind, Label, ProtocolSet};
use crate::symbol::Sym;
use crate::term::{Inst, KeyTable, Term};
use std::fmt;
use thiserror::Error;

/// One run event: an instantiation paired with an event occurrence.
/// The instantiation is the one labelling the transition, i.e. it
/// already carries bindings made by this event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    /// Index of the protocol within the explored set.
    pub proto: usize,
    pub proto_name: Sym,
    pub role: Sym,
    /// Event index within the role specification.
    pub idx: usize,
    pub label: Label,
    pub inst: Inst,
}

/// A valid trace of a protocol set, with per-index knowledge snapshots
/// reconstructible by replay.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn event_kind<'a>(&self, set: &'a ProtocolSet, i: usize) -> &'a EventKind {
        let ev = &self.events[i];
        &set.items[ev.proto].proto.roles[&ev.role].events[ev.idx].kind
    }

    /// The instantiated payload term of event `i`, if any.
    pub fn message(&self, set: &ProtocolSet, i: usize) -> Option<Term> {
        let ev = &self.events[i];
        let rs = &set.items[ev.proto].proto.roles[&ev.role];
        rs.events[ev.idx].term().map(|t| {
            ev.inst
                .apply(t, &rs.typing)
                .expect("trace events carry complete instantiations")
        })
    }

    /// Serialize in the two-column rendering: instantiation, then event.
    pub fn render(&self, set: &ProtocolSet) -> String {
        let mut out = String::new();
        for (i, ev) in self.events.iter().enumerate() {
            let rs = &set.items[ev.proto].proto.roles[&ev.role];
            let kind = &rs.events[ev.idx];
            let shown = match (&kind.kind, self.message(set, i)) {
                (EventKind::Send { from, to, .. }, Some(m)) => {
                    format!("send {} ({from},{to}, {m})", kind.label)
                }
                (EventKind::Read { from, to, .. }, Some(m)) => {
                    format!("read {} ({from},{to}, {m})", kind.label)
                }
                (EventKind::Claim { role, kind: ck, .. }, m) => match m {
                    Some(m) => format!("claim {} ({role}, {ck}, {m})", kind.label),
                    None => format!("claim {} ({role}, {ck})", kind.label),
                },
                (k, _) => format!("{}", crate::proto::Event { label: kind.label, kind: k.clone() }),
            };
            out.push_str(&format!("{} | {} | {}\n", ev.inst, ev.proto_name, shown));
        }
        out
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ev in &self.events {
            writeln!(f, "{} | {}:{} [{}]", ev.inst, ev.proto_name, ev.label, ev.role)?;
        }
        Ok(())
    }
}

#[derive(Error, Debug)]
pub enum ReplayError {
    #[error("event {index}: create reuses run id {rid}")]
    DuplicateRunId { index: usize, rid: u32 },
    #[error("event {index}: no active run {rid} at this position")]
    NoSuchRun { index: usize, rid: u32 },
    #[error("event {index}: event does not match the run's next pending event")]
    OutOfOrder { index: usize },
    #[error("event {index}: read message is not derivable from intruder knowledge")]
    Underivable { index: usize },
    #[error("event {index}: instantiation disagrees with the run state")]
    BadInstantiation { index: usize },
    #[error("event {index}: message has free variables")]
    FreeVariables { index: usize },
}

/// Re-validate a trace by replaying it through the derivation rules:
/// create freshness, per-run event order, read derivability and
/// match-consistency, send knowledge growth. Returns the final
/// intruder knowledge on success.
pub fn replay(set: &ProtocolSet, kt: &KeyTable, ik0: &Knowledge, trace: &Trace) -> Result<Knowledge, ReplayError> {
    struct Run {
        proto: usize,
        role: Sym,
        inst: Inst,
        pc: usize,
    }
    let mut knowledge = ik0.clone();
    let mut runs: Vec<Run> = Vec::new();
    for (index, ev) in trace.events.iter().enumerate() {
        let rs = &set.items[ev.proto].proto.roles[&ev.role];
        let kind = &rs.events[ev.idx].kind;
        match kind {
            EventKind::Create(_) => {
                if runs.iter().any(|r| r.inst.rid == ev.inst.rid) {
                    return Err(ReplayError::DuplicateRunId { index, rid: ev.inst.rid });
                }
                if ev.idx != 0 {
                    return Err(ReplayError::OutOfOrder { index });
                }
                runs.push(Run { proto: ev.proto, role: ev.role, inst: ev.inst.clone(), pc: 1 });
            }
            _ => {
                let run = runs
                    .iter_mut()
                    .find(|r| r.inst.rid == ev.inst.rid)
                    .ok_or(ReplayError::NoSuchRun { index, rid: ev.inst.rid })?;
                if run.proto != ev.proto || run.role != ev.role || run.pc != ev.idx {
                    return Err(ReplayError::OutOfOrder { index });
                }
                match kind {
                    EventKind::Send { msg, .. } => {
                        if ev.inst != run.inst {
                            return Err(ReplayError::BadInstantiation { index });
                        }
                        let m = ev
                            .inst
                            .apply(*msg, &rs.typing)
                            .map_err(|_| ReplayError::FreeVariables { index })?;
                        knowledge.add(kt, m);
                    }
                    EventKind::Read { pattern, .. } => {
                        // inst' must extend the run's σ exactly per Match.
                        let prev = &run.inst;
                        if ev.inst.rid != prev.rid || ev.inst.rho != prev.rho {
                            return Err(ReplayError::BadInstantiation { index });
                        }
                        for (x, t) in &prev.sigma {
                            if ev.inst.sigma.get(x) != Some(t) {
                                return Err(ReplayError::BadInstantiation { index });
                            }
                        }
                        let t = ev
                            .inst
                            .apply(*pattern, &rs.typing)
                            .map_err(|_| ReplayError::FreeVariables { index })?;
                        if !knowledge.derivable(kt, t) {
                            return Err(ReplayError::Underivable { index });
                        }
                        run.inst = ev.inst.clone();
                    }
                    EventKind::Claim { .. } | EventKind::End(_) => {
                        if ev.inst != run.inst {
                            return Err(ReplayError::BadInstantiation { index });
                        }
                    }
                    EventKind::Create(_) => unreachable!(),
                }
                run.pc += 1;
            }
        }
    }
    Ok(knowledge)
}
