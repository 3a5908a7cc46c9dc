use serde::Serialize;

use super::expr::{eval_arc_expr, match_arc_expr, ArcError, ArcExpr, Binding, FreshPool, Mismatch, Value};
use crate::event_log::{EntityType, Event};
use crate::pqr_model::{Member, PqrSystem, QueueRole, Role};
use crate::time::{format_timestamp, Millis};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetArc {
    pub place: usize,
    pub expr: ArcExpr,
    /// Added to the firing time of produced tokens; zero on input arcs.
    pub delay: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetTransition {
    pub id: String,
    pub label: String,
    pub member: Member,
    /// For process transitions: the queue an event of this step carries.
    /// Picks the branch when several transitions share a label.
    pub qid: Option<String>,
    pub pre: Vec<NetArc>,
    pub post: Vec<NetArc>,
}

/// One proclet instantiated as a timed coloured net.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Net {
    pub name: String,
    pub et: EntityType,
    pub places: Vec<String>,
    pub transitions: Vec<NetTransition>,
    pub initial: Vec<(usize, Value)>,
}

fn arc(place: usize, expr: ArcExpr) -> NetArc {
    NetArc { place, expr, delay: 0 }
}

impl Net {
    /// The process proclet; every arc carries `pid`, source transitions create it.
    pub fn process(sys: &PqrSystem) -> Net {
        let sk = &sys.process;
        let transitions = (0..sys.transition_count())
            .map(|t| {
                let pre: Vec<NetArc> = sk.pre_places(t).iter().map(|&p| arc(p, ArcExpr::var("pid"))).collect();
                let out = if pre.is_empty() {
                    ArcExpr::Fresh("pid".into())
                } else {
                    ArcExpr::var("pid")
                };
                NetTransition {
                    id: sys.transition(t).id.clone(),
                    label: sys.transition(t).label.clone(),
                    member: Member::Process { transition: t },
                    qid: sys.binding(t).event_qid().map(str::to_string),
                    pre,
                    post: sk.post_places(t).iter().map(|&p| arc(p, out.clone())).collect(),
                }
            })
            .collect();
        Net {
            name: "process".into(),
            et: EntityType::Pid,
            places: sk.places.iter().map(|p| p.id.clone()).collect(),
            transitions,
            initial: Vec::new(),
        }
    }

    /// Resource proclet `r` with places `idle` and `busy`; one start or
    /// complete transition per linked process transition.
    pub fn resource(sys: &PqrSystem, r: usize) -> Net {
        const IDLE: usize = 0;
        const BUSY: usize = 1;
        let res = &sys.resources[r];
        let transitions = (0..sys.transition_count())
            .filter(|&t| sys.link(t).resource == Some(r))
            .map(|t| {
                let rid = ArcExpr::var("rid");
                let (pre, post) = match sys.role(t) {
                    Role::Complete => (
                        arc(BUSY, rid.clone()),
                        NetArc {
                            place: IDLE,
                            expr: rid,
                            delay: res.twr,
                        },
                    ),
                    _ => (
                        arc(IDLE, rid.clone()),
                        NetArc {
                            place: BUSY,
                            expr: rid,
                            delay: res.tsr,
                        },
                    ),
                };
                NetTransition {
                    id: format!("{}/{}", res.rid, sys.transition(t).id),
                    label: sys.transition(t).label.clone(),
                    member: Member::Resource { resource: r, transition: t },
                    qid: None,
                    pre: vec![pre],
                    post: vec![post],
                }
            })
            .collect();
        Net {
            name: format!("resource {}", res.rid),
            et: EntityType::Rid,
            places: vec!["idle".into(), "busy".into()],
            transitions,
            initial: vec![(IDLE, Value::id(&res.rid))],
        }
    }

    /// Queue proclet `q`: place `queue` holds `(qid, list)`, place `waiting`
    /// holds each queued case until `twq` has passed.
    pub fn queue(sys: &PqrSystem, q: usize) -> Net {
        const QUEUE: usize = 0;
        const WAITING: usize = 1;
        let qp = &sys.queues[q];
        let enqueue = NetTransition {
            id: format!("{}/enqueue", qp.qid),
            label: qp.enqueue_label.clone(),
            member: Member::Queue {
                queue: q,
                role: QueueRole::Enqueue,
            },
            qid: None,
            pre: vec![arc(QUEUE, ArcExpr::pair("qid", ArcExpr::var("q")))],
            post: vec![
                arc(QUEUE, ArcExpr::pair("qid", ArcExpr::Append("q".into(), "pid".into()))),
                NetArc {
                    place: WAITING,
                    expr: ArcExpr::var("pid"),
                    delay: qp.twq,
                },
            ],
        };
        let dequeue = NetTransition {
            id: format!("{}/dequeue", qp.qid),
            label: qp.dequeue_label.clone(),
            member: Member::Queue {
                queue: q,
                role: QueueRole::Dequeue,
            },
            qid: None,
            pre: vec![
                arc(QUEUE, ArcExpr::pair("qid", ArcExpr::Cons("pid".into(), "q".into()))),
                arc(WAITING, ArcExpr::var("pid")),
            ],
            post: vec![arc(QUEUE, ArcExpr::pair("qid", ArcExpr::var("q")))],
        };
        Net {
            name: format!("queue {}", qp.qid),
            et: EntityType::Qid,
            places: vec!["queue".into(), "waiting".into()],
            transitions: vec![enqueue, dequeue],
            initial: vec![(QUEUE, Value::Pair(qp.qid.clone(), Box::new(Value::List(Vec::new()))))],
        }
    }

    pub fn initial_state(&self) -> State {
        let mut marking = vec![Vec::new(); self.places.len()];
        for (p, v) in &self.initial {
            marking[*p].push(Token {
                value: v.clone(),
                available: 0,
            });
        }
        State {
            marking,
            clock: 0,
            fresh: FreshPool::default(),
        }
    }

    fn labeled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = usize> + 'a {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.label == label)
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub value: Value,
    pub available: Millis,
}

/// Timed marking plus the identifiers created so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub marking: Vec<Vec<Token>>,
    pub clock: Millis,
    pub fresh: FreshPool,
}

impl State {
    pub fn tokens(&self, net: &Net, place: &str) -> &[Token] {
        let p = net.places.iter().position(|n| n == place).expect("place exists");
        &self.marking[p]
    }
}

/// Why an event could not be replayed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Reason {
    #[error("no transition labelled {0:?}")]
    UnknownLabel(String),
    #[error("event has no timestamp")]
    Untimed,
    #[error("event time {} lies before the clock {}", format_timestamp(*.time), format_timestamp(*.clock))]
    TimeReversal { time: Millis, clock: Millis },
    #[error("token on {place} becomes available only at {}", format_timestamp(*.available))]
    NotYetAvailable { place: String, available: Millis },
    #[error("queue head is {head:?}, not {expected:?}")]
    WrongQueueHead { expected: String, head: String },
    #[error("resource is busy")]
    ResourceBusy,
    #[error("no matching token on {place}")]
    MissingToken { place: String },
    #[error("no proclet for {0}")]
    UnknownProclet(String),
    #[error(transparent)]
    Arc(#[from] ArcError),
}

/// Attribute binding induced by an event: `pid`, `rid`, `qid`.
pub fn event_binding(e: &Event) -> Binding {
    EntityType::ALL
        .into_iter()
        .filter_map(|et| e.entity(et).map(|v| (et.as_str().to_string(), Value::id(v))))
        .collect()
}

type Choice = (Binding, Vec<(usize, usize)>);

/// Finds tokens for all input arcs of `t`; `respect_time` requires them to be
/// available at the clock.
fn find_enabling(net: &Net, state: &State, t: usize, binding: &Binding, respect_time: bool) -> Option<Choice> {
    fn go(
        arcs: &[NetArc],
        state: &State,
        binding: Binding,
        chosen: &mut Vec<(usize, usize)>,
        respect_time: bool,
    ) -> Option<Binding> {
        let Some((first, rest)) = arcs.split_first() else {
            return Some(binding);
        };
        for (i, tok) in state.marking[first.place].iter().enumerate() {
            if respect_time && tok.available > state.clock {
                continue;
            }
            let mut b = binding.clone();
            if match_arc_expr(&first.expr, &tok.value, &mut b).is_ok() {
                chosen.push((first.place, i));
                if let Some(done) = go(rest, state, b, chosen, respect_time) {
                    return Some(done);
                }
                chosen.pop();
            }
        }
        None
    }
    let mut chosen = Vec::new();
    go(&net.transitions[t].pre, state, binding.clone(), &mut chosen, respect_time).map(|b| (b, chosen))
}

/// True iff a transition labelled `label` is enabled at the state's clock
/// under an extension of `binding`.
pub fn enabled(net: &Net, state: &State, label: &str, binding: &Binding) -> bool {
    net.labeled(label)
        .any(|t| find_enabling(net, state, t, binding, true).is_some())
}

fn blocked_reason(net: &Net, state: &State, t: usize, binding: &Binding) -> Reason {
    if let Some((_, chosen)) = find_enabling(net, state, t, binding, false) {
        let (p, i) = *chosen
            .iter()
            .max_by_key(|&&(p, i)| state.marking[p][i].available)
            .expect("transition has an input arc");
        return Reason::NotYetAvailable {
            place: net.places[p].clone(),
            available: state.marking[p][i].available,
        };
    }
    for a in &net.transitions[t].pre {
        let tokens = &state.marking[a.place];
        let mut last = None;
        let ok = tokens.iter().any(|tok| {
            let r = match_arc_expr(&a.expr, &tok.value, &mut binding.clone());
            let ok = r.is_ok();
            last = r.err();
            ok
        });
        if ok {
            continue;
        }
        return match (net.et, last) {
            (EntityType::Rid, _) if tokens.is_empty() => Reason::ResourceBusy,
            (EntityType::Qid, Some(Mismatch::Differs { bound, found, .. })) if matches!(a.expr, ArcExpr::Pair(..)) => {
                Reason::WrongQueueHead {
                    expected: bound.to_string(),
                    head: found.to_string(),
                }
            }
            (_, Some(Mismatch::Arc(e))) => Reason::Arc(e),
            _ => Reason::MissingToken {
                place: net.places[a.place].clone(),
            },
        };
    }
    Reason::MissingToken {
        place: net.places[net.transitions[t].pre[0].place].clone(),
    }
}

/// Advances the clock to `time` (any step size) and fires a transition
/// labelled `label`. Among several enabled transitions, `prefer` picks first.
pub(crate) fn step(
    net: &Net,
    state: &mut State,
    label: &str,
    time: Millis,
    binding: &Binding,
    prefer: impl Fn(&Member) -> bool,
) -> Result<usize, Reason> {
    if time < state.clock {
        return Err(Reason::TimeReversal {
            time,
            clock: state.clock,
        });
    }
    state.clock = time;
    let mut candidates: Vec<usize> = net.labeled(label).collect();
    if candidates.is_empty() {
        return Err(Reason::UnknownLabel(label.to_string()));
    }
    let qid = match binding.get("qid") {
        Some(Value::Id(q)) => Some(q.as_str()),
        _ => None,
    };
    candidates.sort_by_key(|&t| {
        let tr = &net.transitions[t];
        (!prefer(&tr.member), qid.is_none() || tr.qid.as_deref() != qid)
    });
    let Some((t, (full, chosen))) = candidates
        .iter()
        .find_map(|&t| find_enabling(net, state, t, binding, true).map(|c| (t, c)))
    else {
        return Err(blocked_reason(net, state, candidates[0], binding));
    };
    let mut produced = Vec::new();
    for a in &net.transitions[t].post {
        let value = eval_arc_expr(&a.expr, &full, &mut state.fresh)?;
        produced.push((a.place, value, state.clock + a.delay));
    }
    let mut chosen = chosen;
    chosen.sort_by(|a, b| b.cmp(a));
    for (p, i) in chosen {
        state.marking[p].remove(i);
    }
    for (p, value, available) in produced {
        state.marking[p].push(Token { value, available });
    }
    Ok(t)
}
