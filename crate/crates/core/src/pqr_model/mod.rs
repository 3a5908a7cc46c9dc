//! PQR systems: one process proclet, single-server resource proclets and
//! FIFO queue proclets, synchronized through channels.
//!
//! The process proclet is stored as a skeleton net. Resource and queue
//! proclets are stored by their parameters; [`crate::replay`] materializes
//! their places and arc inscriptions.

mod fifo;
mod validate;

pub use fifo::FifoMatrix;
pub use validate::Diagnostic;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::time::Millis;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model JSON: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("arc references unknown node {0:?}")]
    DanglingArc(String),
    #[error("arc {0:?} -> {1:?} does not connect a place and a transition")]
    NonBipartiteArc(String, String),
    #[error("model violates {} condition(s): {}", .0.len(), .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("unknown transition {0:?}")]
    UnknownTransition(String),
    #[error("transition {0:?} is not a process transition")]
    NotProcessTransition(String),
    #[error("unknown activity label {0:?}")]
    UnknownLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionKind {
    Start,
    Complete,
    /// Atomic entry transition creating a fresh case.
    Source,
    /// Atomic exit transition consuming a case.
    Sink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceKind {
    Activity,
    Handover,
}

/// Life-cycle role of a process event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Start,
    Complete,
    Atomic,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Start => "start",
            Role::Complete => "complete",
            Role::Atomic => "atomic",
        }
    }

    /// Start and atomic events carry the timestamp variables of a step.
    pub fn is_start_like(self) -> bool {
        !matches!(self, Role::Complete)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub id: String,
    pub label: String,
    pub kind: TransitionKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceSpec {
    pub id: String,
    pub kind: PlaceKind,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub initial: u32,
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub transitions: Vec<TransitionSpec>,
    pub places: Vec<PlaceSpec>,
    pub arcs: Vec<(String, String)>,
}

/// Single-server resource with minimum service time `tsr` and minimum
/// waiting time `twr` between completing one task and starting the next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RProclet {
    pub rid: String,
    #[serde(rename = "tsr_ms")]
    pub tsr: Millis,
    #[serde(rename = "twr_ms")]
    pub twr: Millis,
    pub start_labels: BTreeSet<String>,
    pub complete_labels: BTreeSet<String>,
}

/// FIFO queue with minimum traversal time `twq`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QProclet {
    pub qid: String,
    #[serde(rename = "twq_ms")]
    pub twq: Millis,
    pub enqueue_label: String,
    pub dequeue_label: String,
}

/// The model file as written on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub process: ProcessSpec,
    #[serde(default)]
    pub resources: Vec<RProclet>,
    #[serde(default)]
    pub queues: Vec<QProclet>,
}

/// Process skeleton net with index-based adjacency.
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub transitions: Vec<TransitionSpec>,
    pub places: Vec<PlaceSpec>,
    pre_places: Vec<Vec<usize>>,
    post_places: Vec<Vec<usize>>,
    pre_transitions: Vec<Vec<usize>>,
    post_transitions: Vec<Vec<usize>>,
}

impl Skeleton {
    fn build(spec: &ProcessSpec) -> Result<Self, ModelError> {
        let mut t_index = HashMap::new();
        for (i, t) in spec.transitions.iter().enumerate() {
            if t_index.insert(t.id.as_str(), i).is_some() {
                return Err(ModelError::DuplicateId {
                    kind: "transition",
                    id: t.id.clone(),
                });
            }
        }
        let mut p_index = HashMap::new();
        for (i, p) in spec.places.iter().enumerate() {
            if p_index.insert(p.id.as_str(), i).is_some() || t_index.contains_key(p.id.as_str()) {
                return Err(ModelError::DuplicateId {
                    kind: "place",
                    id: p.id.clone(),
                });
            }
        }
        let nt = spec.transitions.len();
        let np = spec.places.len();
        let mut sk = Skeleton {
            transitions: spec.transitions.clone(),
            places: spec.places.clone(),
            pre_places: vec![Vec::new(); nt],
            post_places: vec![Vec::new(); nt],
            pre_transitions: vec![Vec::new(); np],
            post_transitions: vec![Vec::new(); np],
        };
        for (from, to) in &spec.arcs {
            let known = |id: &str| t_index.contains_key(id) || p_index.contains_key(id);
            for id in [from, to] {
                if !known(id) {
                    return Err(ModelError::DanglingArc(id.clone()));
                }
            }
            match (
                p_index.get(from.as_str()),
                t_index.get(to.as_str()),
                t_index.get(from.as_str()),
                p_index.get(to.as_str()),
            ) {
                (Some(&p), Some(&t), _, _) => {
                    sk.post_transitions[p].push(t);
                    sk.pre_places[t].push(p);
                }
                (_, _, Some(&t), Some(&p)) => {
                    sk.post_places[t].push(p);
                    sk.pre_transitions[p].push(t);
                }
                _ => return Err(ModelError::NonBipartiteArc(from.clone(), to.clone())),
            }
        }
        Ok(sk)
    }

    pub fn pre_places(&self, t: usize) -> &[usize] {
        &self.pre_places[t]
    }

    pub fn post_places(&self, t: usize) -> &[usize] {
        &self.post_places[t]
    }

    pub fn pre_transitions(&self, p: usize) -> &[usize] {
        &self.pre_transitions[p]
    }

    pub fn post_transitions(&self, p: usize) -> &[usize] {
        &self.post_transitions[p]
    }

    /// Transitions reachable through one place.
    pub fn successors(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.post_places[t]
            .iter()
            .flat_map(move |&p| self.post_transitions[p].iter().copied())
    }

    pub fn arcs(&self) -> Vec<(String, String)> {
        let mut arcs = Vec::new();
        for (t, places) in self.pre_places.iter().enumerate() {
            for &p in places {
                arcs.push((self.places[p].id.clone(), self.transitions[t].id.clone()));
            }
        }
        for (t, places) in self.post_places.iter().enumerate() {
            for &p in places {
                arcs.push((self.transitions[t].id.clone(), self.places[p].id.clone()));
            }
        }
        arcs
    }
}

/// A transition of any proclet in the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "proclet", rename_all = "lowercase")]
pub enum Member {
    Process { transition: usize },
    /// The resource's copy of a process start or complete transition.
    Resource { resource: usize, transition: usize },
    Queue { queue: usize, role: QueueRole },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueRole {
    Enqueue,
    Dequeue,
}

/// Transitions that fire together as one event; all share `label`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub label: String,
    pub members: Vec<Member>,
}

/// Resource and queues statically linked to one process transition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepLink {
    pub resource: Option<usize>,
    pub queue_in: Option<usize>,
    pub queue_out: Option<usize>,
}

/// Everything a restored event needs to know about its step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepBinding {
    pub transition: String,
    pub role: Role,
    /// `None` stands for a fresh placeholder resource with zero durations.
    pub rid: Option<String>,
    pub tsr: Millis,
    pub twr: Millis,
    pub qid_in: Option<String>,
    pub twq_in: Millis,
    pub qid_out: Option<String>,
}

impl StepBinding {
    /// The single queue identifier an event of this step carries.
    pub fn event_qid(&self) -> Option<&str> {
        match self.role {
            Role::Start => self.qid_in.as_deref(),
            Role::Complete => self.qid_out.as_deref(),
            Role::Atomic => self.qid_in.as_deref().or(self.qid_out.as_deref()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PqrSystem {
    pub process: Skeleton,
    pub resources: Vec<RProclet>,
    pub queues: Vec<QProclet>,
    pub channels: Vec<Channel>,
    links: Vec<StepLink>,
    place_resource: Vec<Vec<usize>>,
    place_queue: Vec<Vec<usize>>,
    fifo: FifoMatrix,
    transition_index: HashMap<String, usize>,
}

impl PqrSystem {
    /// Builds the linked system without checking the proclet conditions;
    /// use [`PqrSystem::validate`] or [`parse_model`] for that.
    pub fn build(spec: &ModelSpec) -> Result<Self, ModelError> {
        let process = Skeleton::build(&spec.process)?;
        let mut seen = BTreeSet::new();
        for r in &spec.resources {
            if !seen.insert(("resource", r.rid.as_str())) {
                return Err(ModelError::DuplicateId {
                    kind: "resource",
                    id: r.rid.clone(),
                });
            }
        }
        for q in &spec.queues {
            if !seen.insert(("queue", q.qid.as_str())) {
                return Err(ModelError::DuplicateId {
                    kind: "queue",
                    id: q.qid.clone(),
                });
            }
        }
        let label_set = |ts: &[usize]| -> BTreeSet<&str> {
            ts.iter().map(|&t| process.transitions[t].label.as_str()).collect()
        };
        let place_resource: Vec<Vec<usize>> = (0..process.places.len())
            .map(|p| {
                if process.places[p].kind != PlaceKind::Activity {
                    return Vec::new();
                }
                let starts = label_set(process.pre_transitions(p));
                let completes = label_set(process.post_transitions(p));
                spec.resources
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| {
                        starts.iter().all(|l| r.start_labels.contains(*l))
                            && completes.iter().all(|l| r.complete_labels.contains(*l))
                    })
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        let place_queue: Vec<Vec<usize>> = (0..process.places.len())
            .map(|p| {
                let (pre, post) = (process.pre_transitions(p), process.post_transitions(p));
                if process.places[p].kind != PlaceKind::Handover || pre.len() != 1 || post.len() != 1 {
                    return Vec::new();
                }
                let (enq, deq) = (&process.transitions[pre[0]].label, &process.transitions[post[0]].label);
                spec.queues
                    .iter()
                    .enumerate()
                    .filter(|(_, q)| &q.enqueue_label == enq && &q.dequeue_label == deq)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        let unique = |v: &Vec<usize>| if v.len() == 1 { Some(v[0]) } else { None };
        let links: Vec<StepLink> = (0..process.transitions.len())
            .map(|t| {
                let activity = |ps: &[usize]| {
                    ps.iter()
                        .find(|&&p| process.places[p].kind == PlaceKind::Activity)
                        .and_then(|&p| unique(&place_resource[p]))
                };
                let handover = |ps: &[usize]| {
                    ps.iter()
                        .find(|&&p| process.places[p].kind == PlaceKind::Handover)
                        .and_then(|&p| unique(&place_queue[p]))
                };
                let resource = match process.transitions[t].kind {
                    TransitionKind::Start => activity(process.post_places(t)),
                    TransitionKind::Complete => activity(process.pre_places(t)),
                    TransitionKind::Source | TransitionKind::Sink => None,
                };
                StepLink {
                    resource,
                    queue_in: handover(process.pre_places(t)),
                    queue_out: handover(process.post_places(t)),
                }
            })
            .collect();
        let channels = links
            .iter()
            .enumerate()
            .map(|(t, link)| {
                let mut members = vec![Member::Process { transition: t }];
                if let Some(r) = link.resource {
                    members.push(Member::Resource {
                        resource: r,
                        transition: t,
                    });
                }
                if let Some(q) = link.queue_in {
                    members.push(Member::Queue {
                        queue: q,
                        role: QueueRole::Dequeue,
                    });
                }
                if let Some(q) = link.queue_out {
                    members.push(Member::Queue {
                        queue: q,
                        role: QueueRole::Enqueue,
                    });
                }
                Channel {
                    label: process.transitions[t].label.clone(),
                    members,
                }
            })
            .collect();
        let fifo = FifoMatrix::new(&process);
        let transition_index = process
            .transitions
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();
        Ok(PqrSystem {
            process,
            resources: spec.resources.clone(),
            queues: spec.queues.clone(),
            channels,
            links,
            place_resource,
            place_queue,
            fifo,
            transition_index,
        })
    }

    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            process: ProcessSpec {
                transitions: self.process.transitions.clone(),
                places: self.process.places.clone(),
                arcs: self.process.arcs(),
            },
            resources: self.resources.clone(),
            queues: self.queues.clone(),
        }
    }

    pub fn transition_count(&self) -> usize {
        self.process.transitions.len()
    }

    pub fn transition(&self, t: usize) -> &TransitionSpec {
        &self.process.transitions[t]
    }

    pub fn transition_index(&self, id: &str) -> Option<usize> {
        self.transition_index.get(id).copied()
    }

    pub fn transitions_with_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = usize> + 'a {
        self.process
            .transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.label == label)
            .map(|(i, _)| i)
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.transitions_with_label(label).next().is_some()
    }

    pub fn role(&self, t: usize) -> Role {
        match self.process.transitions[t].kind {
            TransitionKind::Start => Role::Start,
            TransitionKind::Complete => Role::Complete,
            TransitionKind::Source | TransitionKind::Sink => Role::Atomic,
        }
    }

    pub fn link(&self, t: usize) -> StepLink {
        self.links[t]
    }

    pub fn resource_index(&self, rid: &str) -> Option<usize> {
        self.resources.iter().position(|r| r.rid == rid)
    }

    pub fn queue_index(&self, qid: &str) -> Option<usize> {
        self.queues.iter().position(|q| q.qid == qid)
    }

    pub fn is_source(&self, t: usize) -> bool {
        self.process.pre_places(t).is_empty()
    }

    pub fn is_sink(&self, t: usize) -> bool {
        self.process.post_places(t).is_empty()
    }

    /// True iff the process skeleton has no directed cycle.
    pub fn is_acyclic(&self) -> bool {
        self.fifo.acyclic()
    }

    pub fn fifo_matrix(&self) -> &FifoMatrix {
        &self.fifo
    }

    /// True iff there is exactly one directed path from `t1` to `tn` in the
    /// process skeleton (the empty path when `t1 == tn`).
    pub fn fifo_relation(&self, t1: &str, tn: &str) -> Result<bool, ModelError> {
        let a = self
            .transition_index(t1)
            .ok_or_else(|| ModelError::NotProcessTransition(t1.to_string()))?;
        let b = self
            .transition_index(tn)
            .ok_or_else(|| ModelError::NotProcessTransition(tn.to_string()))?;
        Ok(self.fifo.related(a, b))
    }

    pub fn binding(&self, t: usize) -> StepBinding {
        let link = self.links[t];
        let resource = link.resource.map(|r| &self.resources[r]);
        StepBinding {
            transition: self.process.transitions[t].id.clone(),
            role: self.role(t),
            rid: resource.map(|r| r.rid.clone()),
            tsr: resource.map_or(0, |r| r.tsr),
            twr: resource.map_or(0, |r| r.twr),
            qid_in: link.queue_in.map(|q| self.queues[q].qid.clone()),
            twq_in: link.queue_in.map_or(0, |q| self.queues[q].twq),
            qid_out: link.queue_out.map(|q| self.queues[q].qid.clone()),
        }
    }

    /// Static bindings of every process transition carrying `label`.
    pub fn bindings_for(&self, label: &str) -> Result<Vec<StepBinding>, ModelError> {
        let out: Vec<_> = self.transitions_with_label(label).map(|t| self.binding(t)).collect();
        if out.is_empty() {
            return Err(ModelError::UnknownLabel(label.to_string()));
        }
        Ok(out)
    }

    /// Transitions of `label` that consume from the queue `qid` or produce into it.
    pub fn transitions_for_event(&self, label: &str, qid: Option<&str>) -> Vec<usize> {
        let all: Vec<usize> = self.transitions_with_label(label).collect();
        let Some(qid) = qid else { return all };
        let filtered: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&t| self.binding(t).event_qid() == Some(qid))
            .collect();
        if filtered.is_empty() {
            all
        } else {
            filtered
        }
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        validate::validate(self)
    }
}

/// Parses and validates a model file.
pub fn parse_model(source: &str) -> Result<PqrSystem, ModelError> {
    let spec: ModelSpec = serde_json::from_str(source)?;
    let system = PqrSystem::build(&spec)?;
    let diagnostics = system.validate();
    if !diagnostics.is_empty() {
        return Err(ModelError::Invalid(diagnostics));
    }
    Ok(system)
}

pub fn serialize_model(system: &PqrSystem) -> String {
    serde_json::to_string_pretty(&system.to_spec()).expect("model serializes")
}
