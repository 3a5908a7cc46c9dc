//! Restoring unobserved events: O1 completes every partial case to a full
//! path of the process proclet, O2 annotates each event with its resource,
//! queues and minimum durations and builds the intermediate run.

mod o1;

pub use o1::{oracle_o1, CompletedTrace, Completion, Step};

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::event_log::{write_log_string, EntityType, Event, LogError, MultiEntityLog, RunEdge, SystemRun};
use crate::pqr_model::{PqrSystem, Role};
use crate::time::Millis;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RestoreError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("the process proclet has a cycle; path completion needs an acyclic skeleton")]
    Cyclic,
    #[error("the partial log has no pid column")]
    NoCaseColumn,
    #[error("event {0:?} has no pid")]
    MissingCase(String),
    #[error("event {0:?} has no timestamp")]
    Untimed(String),
    #[error("case {0:?} has fewer than two observed events")]
    TooShort(String),
    #[error("event {event_id:?}: activity {label:?} is not in the model")]
    UnknownLabel { event_id: String, label: String },
    #[error("case {pid:?}: first observed event {event_id:?} is not an entry (source) event")]
    NotEntry { pid: String, event_id: String },
    #[error("case {pid:?}: last observed event {event_id:?} is not an exit (sink) event")]
    NotExit { pid: String, event_id: String },
    #[error("case {pid:?}: no path of the process connects {from:?} to {to:?}")]
    NoPath { pid: String, from: String, to: String },
    #[error("case {pid:?}: start and complete events do not alternate at {event_id:?}")]
    Alternation { pid: String, event_id: String },
}

/// Step information O2 attaches to an event. `rid == None` stands for a
/// fresh placeholder resource with zero durations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Annotation {
    pub transition: String,
    pub role: Role,
    pub rid: Option<String>,
    pub qid_in: Option<String>,
    pub qid_out: Option<String>,
    pub tsr: Millis,
    pub twr: Millis,
    /// Minimum traversal time of the incoming queue.
    pub twq: Millis,
    pub observed: bool,
}

/// Observed and restored events with their annotations and the order <₂.
#[derive(Debug, Clone)]
pub struct IntermediateRun {
    run: SystemRun,
    annotations: Vec<Annotation>,
    cases: Vec<(String, Vec<usize>)>,
    pub warnings: Vec<String>,
}

impl IntermediateRun {
    pub fn events(&self) -> &[Event] {
        self.run.events()
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn annotation(&self, i: usize) -> &Annotation {
        &self.annotations[i]
    }

    /// Event indices of each case in path order.
    pub fn cases(&self) -> &[(String, Vec<usize>)] {
        &self.cases
    }

    /// The order <₂ as a typed edge relation.
    pub fn order(&self) -> &SystemRun {
        &self.run
    }

    pub fn position(&self, event_id: &str) -> Option<usize> {
        self.run.events().iter().position(|e| e.event_id == event_id)
    }

    /// Start and atomic events of one case, in path order.
    pub fn start_subtrace(&self, pid: &str) -> Result<Vec<usize>, RestoreError> {
        let (_, trace) = self
            .cases
            .iter()
            .find(|(p, _)| p == pid)
            .ok_or_else(|| RestoreError::MissingCase(pid.to_string()))?;
        start_subtrace(pid, trace, |i| self.annotations[i].role, |i| &self.run.events()[i].event_id)
    }

    /// Annotated CSV: event columns plus role, tsr, twr, twq and observed.
    pub fn to_csv(&self) -> String {
        let events = self
            .run
            .events()
            .iter()
            .zip(&self.annotations)
            .map(|(e, a)| {
                let mut e = e.clone();
                e.extra.insert("role".into(), a.role.as_str().into());
                e.extra.insert("tsr".into(), a.tsr.to_string());
                e.extra.insert("twr".into(), a.twr.to_string());
                e.extra.insert("twq".into(), a.twq.to_string());
                e.extra.insert("observed".into(), a.observed.to_string());
                e
            })
            .collect();
        let log = MultiEntityLog::new(events, EntityType::ALL).expect("restored events are consistent");
        write_log_string(&log)
    }
}

/// θ: the start and atomic events of a trace. Every non-atomic start must be
/// followed directly by a complete event and vice versa.
pub fn start_subtrace<'a, T: Copy>(
    pid: &str,
    trace: &[T],
    role: impl Fn(T) -> Role,
    id: impl Fn(T) -> &'a String,
) -> Result<Vec<T>, RestoreError> {
    let bad = |x: T| RestoreError::Alternation {
        pid: pid.to_string(),
        event_id: id(x).clone(),
    };
    let mut out = Vec::new();
    let mut open: Option<T> = None;
    for &x in trace {
        match (role(x), open) {
            (Role::Complete, Some(_)) => open = None,
            (Role::Complete, None) => return Err(bad(x)),
            (_, Some(_)) => return Err(bad(x)),
            (Role::Start, None) => {
                open = Some(x);
                out.push(x);
            }
            (Role::Atomic, None) => out.push(x),
        }
    }
    match open {
        Some(x) => Err(bad(x)),
        None => Ok(out),
    }
}

/// Annotates every event of the completed traces via the model's static
/// bindings and builds <₂: pid chains of the completed traces plus rid and
/// qid chains among the observed (timestamped) events.
pub fn oracle_o2(completion: &Completion, sys: &PqrSystem) -> Result<IntermediateRun, RestoreError> {
    let mut events = Vec::new();
    let mut annotations = Vec::new();
    let mut cases = Vec::new();
    let mut edges = Vec::new();
    for trace in &completion.traces {
        let mut idx = Vec::with_capacity(trace.steps.len());
        for step in &trace.steps {
            let b = sys.binding(step.transition);
            let mut e = step.event.clone();
            e.rid = b.rid.clone();
            e.qid = b.event_qid().map(str::to_string);
            if !step.observed {
                e.time = None;
                e.tmin = None;
                e.tmax = None;
            }
            idx.push(events.len());
            events.push(e);
            annotations.push(Annotation {
                transition: b.transition,
                role: b.role,
                rid: b.rid,
                qid_in: b.qid_in,
                qid_out: b.qid_out,
                tsr: b.tsr,
                twr: b.twr,
                twq: b.twq_in,
                observed: step.observed,
            });
        }
        edges.extend(idx.windows(2).map(|w| RunEdge {
            source: w[0],
            target: w[1],
            et: EntityType::Pid,
            id: trace.pid.clone(),
        }));
        start_subtrace(&trace.pid, &idx, |i| annotations[i].role, |i| &events[i].event_id)?;
        cases.push((trace.pid.clone(), idx));
    }
    for et in [EntityType::Rid, EntityType::Qid] {
        let mut groups: BTreeMap<&str, Vec<(Millis, usize)>> = BTreeMap::new();
        for (i, e) in events.iter().enumerate() {
            if let (true, Some(id), Some(t)) = (annotations[i].observed, e.entity(et), e.time) {
                groups.entry(id).or_default().push((t, i));
            }
        }
        for (id, mut members) in groups {
            members.sort();
            edges.extend(members.windows(2).map(|w| RunEdge {
                source: w[0].1,
                target: w[1].1,
                et,
                id: id.to_string(),
            }));
        }
    }
    let ids: BTreeSet<&str> = events.iter().map(|e| e.event_id.as_str()).collect();
    if ids.len() != events.len() {
        let mut seen = BTreeSet::new();
        let dup = events.iter().find(|e| !seen.insert(&e.event_id)).expect("duplicate exists");
        return Err(RestoreError::Log(LogError::DuplicateEventId(dup.event_id.clone())));
    }
    Ok(IntermediateRun {
        run: SystemRun::from_parts(events, EntityType::ALL.into_iter().collect(), edges),
        annotations,
        cases,
        warnings: completion.warnings.clone(),
    })
}

#[cfg(test)]
mod tests;
