use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::{PlaceKind, PqrSystem, TransitionKind};

/// A violated proclet or system condition, e.g. `p-proclet 8` at place `p3`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub condition: String,
    pub node: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.condition, self.node, self.message)
    }
}

struct Report(Vec<Diagnostic>);

impl Report {
    fn add(&mut self, condition: &str, node: &str, message: impl Into<String>) {
        self.0.push(Diagnostic {
            condition: condition.to_string(),
            node: node.to_string(),
            message: message.into(),
        });
    }
}

fn complete_like(kind: TransitionKind) -> bool {
    matches!(kind, TransitionKind::Complete | TransitionKind::Source)
}

fn start_like(kind: TransitionKind) -> bool {
    matches!(kind, TransitionKind::Start | TransitionKind::Sink)
}

pub(super) fn validate(sys: &PqrSystem) -> Vec<Diagnostic> {
    let mut r = Report(Vec::new());
    process_conditions(sys, &mut r);
    resource_conditions(sys, &mut r);
    queue_conditions(sys, &mut r);
    system_conditions(sys, &mut r);
    r.0
}

fn process_conditions(sys: &PqrSystem, r: &mut Report) {
    let sk = &sys.process;
    for (t, tr) in sk.transitions.iter().enumerate() {
        if tr.label.is_empty() {
            r.add("p-proclet 2", &tr.id, "transition has an empty label");
        }
        if tr.kind == TransitionKind::Source && !sk.pre_places(t).is_empty() {
            r.add("p-proclet 2", &tr.id, "source transition has a pre-place");
        }
        if tr.kind == TransitionKind::Sink && !sk.post_places(t).is_empty() {
            r.add("p-proclet 2", &tr.id, "sink transition has a post-place");
        }
        if sk.pre_places(t).len() > 1 || sk.post_places(t).len() > 1 {
            r.add("p-proclet 3", &tr.id, "transition has more than one pre- or post-place");
        }
    }
    if !connected(sys) {
        r.add("p-proclet 3", "process", "skeleton is not connected");
    }
    if !(0..sk.transitions.len()).any(|t| sk.pre_places(t).is_empty()) {
        r.add("p-proclet 4", "process", "no source transition");
    }
    if !(0..sk.transitions.len()).any(|t| sk.post_places(t).is_empty()) {
        r.add("p-proclet 4", "process", "no sink transition");
    }
    for (p, pl) in sk.places.iter().enumerate() {
        let (pre, post) = (sk.pre_transitions(p), sk.post_transitions(p));
        if pre.is_empty() || post.is_empty() {
            r.add("p-proclet 4", &pl.id, "place is not bordered by transitions on both sides");
        }
        let kind = |t: &usize| sk.transitions[*t].kind;
        match pl.kind {
            PlaceKind::Activity => {
                if !pre.iter().all(|t| kind(t) == TransitionKind::Start) {
                    r.add("p-proclet 5", &pl.id, "activity place entered by a non-start transition");
                }
                if !post.iter().all(|t| kind(t) == TransitionKind::Complete) {
                    r.add("p-proclet 5", &pl.id, "activity place left by a non-complete transition");
                }
            }
            PlaceKind::Handover => {
                if pre.len() != 1 || !complete_like(kind(&pre[0])) {
                    r.add("p-proclet 6", &pl.id, "handover place needs exactly one complete pre-transition");
                }
                if post.len() != 1 || !start_like(kind(&post[0])) {
                    r.add("p-proclet 6", &pl.id, "handover place needs exactly one start post-transition");
                }
            }
        }
        if pl.initial > 0 {
            r.add("p-proclet 8", &pl.id, format!("place carries {} initial token(s)", pl.initial));
        }
    }
}

fn connected(sys: &PqrSystem) -> bool {
    let sk = &sys.process;
    let nt = sk.transitions.len();
    let n = nt + sk.places.len();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        let neighbours: Vec<usize> = if v < nt {
            sk.pre_places(v).iter().chain(sk.post_places(v)).map(|p| nt + p).collect()
        } else {
            let p = v - nt;
            sk.pre_transitions(p).iter().chain(sk.post_transitions(p)).copied().collect()
        };
        for w in neighbours {
            if !std::mem::replace(&mut seen[w], true) {
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn resource_conditions(sys: &PqrSystem, r: &mut Report) {
    for res in &sys.resources {
        if res.start_labels.is_empty() || res.complete_labels.is_empty() {
            r.add("r-proclet 2", &res.rid, "start and complete label sets must be non-empty");
        }
        if !res.start_labels.is_disjoint(&res.complete_labels) {
            r.add("r-proclet 2", &res.rid, "start and complete labels overlap");
        }
        if res.tsr < 0 || res.twr < 0 {
            r.add("r-proclet 6", &res.rid, "negative service or waiting time");
        }
    }
}

fn queue_conditions(sys: &PqrSystem, r: &mut Report) {
    for q in &sys.queues {
        if q.enqueue_label == q.dequeue_label {
            r.add("q-proclet", &q.qid, "enqueue and dequeue labels coincide");
        }
        if q.twq < 0 {
            r.add("q-proclet", &q.qid, "negative traversal time");
        }
    }
}

fn system_conditions(sys: &PqrSystem, r: &mut Report) {
    let sk = &sys.process;
    for (p, pl) in sk.places.iter().enumerate() {
        match pl.kind {
            PlaceKind::Activity => match sys.place_resource[p].len() {
                1 => {}
                0 => r.add("pqr 3", &pl.id, "no resource proclet matches the activity's start and complete labels"),
                n => r.add("pqr 3", &pl.id, format!("{n} resource proclets match the activity's labels")),
            },
            PlaceKind::Handover => match sys.place_queue[p].len() {
                1 => {}
                0 => r.add("pqr 4", &pl.id, "no queue proclet matches the handover's labels"),
                n => r.add("pqr 4", &pl.id, format!("{n} queue proclets match the handover's labels")),
            },
        }
    }
    // Every resource and queue transition must sit in exactly one channel.
    for (i, res) in sys.resources.iter().enumerate() {
        let linked: BTreeSet<&str> = (0..sk.transitions.len())
            .filter(|&t| sys.links[t].resource == Some(i))
            .map(|t| sk.transitions[t].label.as_str())
            .collect();
        for label in res.start_labels.iter().chain(&res.complete_labels) {
            if !linked.contains(label.as_str()) {
                r.add(
                    "pqr 2",
                    &res.rid,
                    format!("resource transition {label:?} synchronizes with no process transition"),
                );
            }
        }
    }
    for (i, q) in sys.queues.iter().enumerate() {
        let uses = sys.place_queue.iter().filter(|qs| qs.len() == 1 && qs[0] == i).count();
        if uses != 1 {
            r.add(
                "pqr 2",
                &q.qid,
                format!("queue transitions {:?}/{:?} are linked to {uses} handover places", q.enqueue_label, q.dequeue_label),
            );
        }
    }
}
