//! Timed token replay of sequential traces on the proclet templates and of
//! whole logs on a PQR system, including the channel condition.

mod expr;
mod net;

pub use expr::{eval_arc_expr, match_arc_expr, ArcError, ArcExpr, Binding, FreshPool, Mismatch, Value};
pub use net::{enabled, event_binding, Net, NetArc, NetTransition, Reason, State, Token};

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::event_log::{check_completeness, sequential_view, EntityType, Event, LogError, MultiEntityLog, Violation};
use crate::pqr_model::{Member, PqrSystem};

/// One rejected event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub event_id: String,
    pub proclet: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayResult {
    pub accepted: bool,
    /// `(event id, transition id)` for every replayed event, in trace order.
    pub fired: Vec<(String, String)>,
    pub diagnostic: Option<Diagnostic>,
    pub state: State,
    members: Vec<Member>,
}

fn replay_events<'a>(
    net: &Net,
    events: impl IntoIterator<Item = &'a Event>,
    prefer: impl Fn(&Event, &Member) -> bool,
) -> ReplayResult {
    let mut state = net.initial_state();
    let mut fired = Vec::new();
    let mut members = Vec::new();
    for e in events {
        let outcome = match e.time {
            None => Err(Reason::Untimed),
            Some(time) => net::step(net, &mut state, &e.act, time, &event_binding(e), |m| prefer(e, m)),
        };
        match outcome {
            Ok(t) => {
                fired.push((e.event_id.clone(), net.transitions[t].id.clone()));
                members.push(net.transitions[t].member);
            }
            Err(reason) => {
                return ReplayResult {
                    accepted: false,
                    fired,
                    diagnostic: Some(Diagnostic {
                        event_id: e.event_id.clone(),
                        proclet: net.name.clone(),
                        reason: reason.to_string(),
                    }),
                    state,
                    members,
                }
            }
        }
    }
    ReplayResult {
        accepted: true,
        fired,
        diagnostic: None,
        state,
        members,
    }
}

/// Replays a time-ordered trace on `net`, starting from its initial marking.
pub fn replay_trace(net: &Net, trace: &[Event]) -> ReplayResult {
    replay_events(net, trace, |_, _| false)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceReplay {
    pub et: EntityType,
    pub id: String,
    pub proclet: String,
    pub result: ReplayResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChannelViolation {
    pub event_id: String,
    pub transitions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogReplay {
    pub accepted: bool,
    pub traces: Vec<TraceReplay>,
    pub channel_violations: Vec<ChannelViolation>,
}

impl LogReplay {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out: Vec<Diagnostic> = self.traces.iter().filter_map(|t| t.result.diagnostic.clone()).collect();
        out.extend(self.channel_violations.iter().map(|v| Diagnostic {
            event_id: v.event_id.clone(),
            proclet: "channel".into(),
            reason: format!("fired transitions {:?} form no channel", v.transitions),
        }));
        out
    }

    /// Diagnostics as JSON lines `{"event_id","proclet","reason"}`.
    pub fn to_json_lines(&self) -> String {
        self.diagnostics()
            .iter()
            .map(|d| serde_json::to_string(d).expect("diagnostic serializes") + "\n")
            .collect()
    }
}

/// Replays every sequential trace of a time-complete, monotone log on the
/// proclet its identifier maps to, then checks that each event fired a
/// single transition or exactly one channel.
pub fn replay_log(sys: &PqrSystem, log: &MultiEntityLog) -> Result<LogReplay, LogError> {
    if let Some(Violation::MissingTime { event_id }) = check_completeness(log)
        .violations
        .into_iter()
        .find(|v| matches!(v, Violation::MissingTime { .. }))
    {
        return Err(LogError::Untimed(event_id));
    }
    let view = sequential_view(log)?;
    let process = Net::process(sys);
    let event = |id: &str| &log.events()[log.position(id).expect("trace event in log")];

    let mut traces = Vec::new();
    let mut fired: HashMap<&str, Vec<(Member, String)>> = HashMap::new();
    // Process traces first: their transitions disambiguate which copy of a
    // resource transition the same event fires.
    let mut process_choice: HashMap<String, usize> = HashMap::new();
    for et in [EntityType::Pid, EntityType::Rid, EntityType::Qid] {
        let Some(seq) = view.logs.get(&et) else { continue };
        for trace in seq {
            let events: Vec<&Event> = trace.events.iter().map(|id| event(id)).collect();
            let owned = match et {
                EntityType::Pid => None,
                EntityType::Rid => sys.resource_index(&trace.id).map(|r| Net::resource(sys, r)),
                EntityType::Qid => sys.queue_index(&trace.id).map(|q| Net::queue(sys, q)),
            };
            let net = if et == EntityType::Pid { Some(&process) } else { owned.as_ref() };
            let Some(net) = net else {
                let reason = Reason::UnknownProclet(format!("{et} {:?}", trace.id));
                traces.push(TraceReplay {
                    et,
                    id: trace.id.clone(),
                    proclet: "-".into(),
                    result: ReplayResult {
                        accepted: false,
                        fired: Vec::new(),
                        diagnostic: events.first().map(|e| Diagnostic {
                            event_id: e.event_id.clone(),
                            proclet: "-".into(),
                            reason: reason.to_string(),
                        }),
                        state: State {
                            marking: Vec::new(),
                            clock: 0,
                            fresh: FreshPool::default(),
                        },
                        members: Vec::new(),
                    },
                });
                continue;
            };
            let result = replay_events(net, events.iter().copied(), |e, m| match m {
                Member::Resource { transition, .. } => process_choice.get(&e.event_id) == Some(transition),
                _ => false,
            });
            for ((eid, tid), m) in result.fired.iter().zip(&result.members) {
                if let Member::Process { transition } = m {
                    process_choice.insert(eid.clone(), *transition);
                }
                let key = log.get(eid).expect("fired event in log").event_id.as_str();
                fired.entry(key).or_default().push((*m, tid.clone()));
            }
            traces.push(TraceReplay {
                et,
                id: trace.id.clone(),
                proclet: net.name.clone(),
                result,
            });
        }
    }

    let channels: Vec<BTreeSet<Member>> = sys
        .channels
        .iter()
        .map(|c| c.members.iter().copied().collect())
        .collect();
    let mut channel_violations = Vec::new();
    for e in log.events() {
        let expected = log.entity_types().iter().filter(|&&et| e.entity(et).is_some()).count();
        let Some(set) = fired.get(e.event_id.as_str()) else { continue };
        if set.len() < expected {
            continue; // a trace through this event was already rejected
        }
        let members: BTreeSet<Member> = set.iter().map(|(m, _)| *m).collect();
        if members.len() == 1 && set.len() == 1 {
            continue;
        }
        let ok = members.len() == set.len() && channels.contains(&members);
        if !ok {
            channel_violations.push(ChannelViolation {
                event_id: e.event_id.clone(),
                transitions: set.iter().map(|(_, t)| t.clone()).collect(),
            });
        }
    }
    let accepted = channel_violations.is_empty() && traces.iter().all(|t| t.result.accepted);
    Ok(LogReplay {
        accepted,
        traces,
        channel_violations,
    })
}
