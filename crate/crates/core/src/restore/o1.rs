use std::collections::VecDeque;

use super::RestoreError;
use crate::event_log::{sequential_view, EntityType, Event, MultiEntityLog};
use crate::pqr_model::PqrSystem;

/// One event of a completed case together with the process transition it
/// occupies on the restored path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub event: Event,
    pub transition: usize,
    pub observed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletedTrace {
    pub pid: String,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Completion {
    pub traces: Vec<CompletedTrace>,
    pub warnings: Vec<String>,
}

/// Up to this many shortest gap paths are compared for the tie-break.
const PATH_CAP: usize = 64;

/// All shortest paths `a -> ... -> b` with at least one edge, as transition lists.
fn shortest_paths(sys: &PqrSystem, a: usize, b: usize) -> Vec<Vec<usize>> {
    let n = sys.transition_count();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in sys.process.successors(a) {
        if dist[s] == usize::MAX {
            dist[s] = 1;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        for s in sys.process.successors(v) {
            if dist[s] == usize::MAX {
                dist[s] = dist[v] + 1;
                queue.push_back(s);
            }
        }
    }
    if dist[b] == usize::MAX {
        return Vec::new();
    }
    // Walk backwards along layers that decrease the distance by one.
    let preds = |v: usize| -> Vec<usize> {
        let mut out: Vec<usize> = if dist[v] == 1 { vec![a] } else { Vec::new() };
        out.extend((0..n).filter(|&u| dist[u] != usize::MAX && dist[u] + 1 == dist[v] && sys.process.successors(u).any(|s| s == v)));
        out.dedup();
        out
    };
    let mut paths = Vec::new();
    let mut stack = vec![vec![b]];
    while let Some(partial) = stack.pop() {
        let head = *partial.last().expect("non-empty");
        if head == a && partial.len() > 1 {
            let mut p = partial;
            p.reverse();
            paths.push(p);
            if paths.len() >= PATH_CAP {
                break;
            }
            continue;
        }
        for u in preds(head) {
            if u == a && dist[head] != 1 {
                continue;
            }
            let mut next = partial.clone();
            next.push(u);
            stack.push(next);
        }
    }
    paths
}

#[derive(Clone)]
struct Best {
    path: Vec<usize>,
    /// Path positions of the observed events.
    anchors: Vec<usize>,
    ambiguous: bool,
}

fn key<'a>(sys: &'a PqrSystem, path: &'a [usize]) -> (usize, Vec<&'a str>, Vec<&'a str>) {
    (
        path.len(),
        path.iter().map(|&t| sys.transition(t).label.as_str()).collect(),
        path.iter().map(|&t| sys.transition(t).id.as_str()).collect(),
    )
}

/// Completes each observed pid-trace to a source-to-sink path of the process
/// skeleton with as few inserted events as possible; ties go to the
/// lexicographically smallest label sequence and raise a warning.
pub fn oracle_o1(partial: &MultiEntityLog, sys: &PqrSystem) -> Result<Completion, RestoreError> {
    if !sys.is_acyclic() {
        return Err(RestoreError::Cyclic);
    }
    if !partial.entity_types().contains(&EntityType::Pid) {
        return Err(RestoreError::NoCaseColumn);
    }
    if let Some(e) = partial.events().iter().find(|e| e.pid.is_none()) {
        return Err(RestoreError::MissingCase(e.event_id.clone()));
    }
    if let Some(e) = partial.events().iter().find(|e| e.time.is_none()) {
        return Err(RestoreError::Untimed(e.event_id.clone()));
    }
    let view = sequential_view(partial)?;
    let mut out = Completion::default();
    for trace in view.logs.get(&EntityType::Pid).into_iter().flatten() {
        let observed: Vec<&Event> = trace.events.iter().map(|id| partial.get(id).expect("trace event")).collect();
        let (completed, ambiguous) = complete_case(sys, &trace.id, &observed)?;
        if ambiguous {
            out.warnings.push(format!(
                "ambiguous completion for case {}: picked {}",
                trace.id,
                completed.steps.iter().map(|s| s.event.act.as_str()).collect::<Vec<_>>().join(",")
            ));
        }
        out.traces.push(completed);
    }
    Ok(out)
}

fn complete_case(sys: &PqrSystem, pid: &str, observed: &[&Event]) -> Result<(CompletedTrace, bool), RestoreError> {
    if observed.len() < 2 {
        return Err(RestoreError::TooShort(pid.to_string()));
    }
    let candidates = |e: &Event| -> Result<Vec<usize>, RestoreError> {
        let ts = sys.transitions_for_event(&e.act, e.qid.as_deref());
        if ts.is_empty() {
            return Err(RestoreError::UnknownLabel {
                event_id: e.event_id.clone(),
                label: e.act.clone(),
            });
        }
        Ok(ts)
    };
    let first: Vec<usize> = candidates(observed[0])?.into_iter().filter(|&t| sys.is_source(t)).collect();
    if first.is_empty() {
        return Err(RestoreError::NotEntry {
            pid: pid.to_string(),
            event_id: observed[0].event_id.clone(),
        });
    }
    let mut layer: Vec<(usize, Best)> = first
        .into_iter()
        .map(|t| {
            (
                t,
                Best {
                    path: vec![t],
                    anchors: vec![0],
                    ambiguous: false,
                },
            )
        })
        .collect();
    for (i, e) in observed.iter().enumerate().skip(1) {
        let mut next: Vec<(usize, Best)> = Vec::new();
        for t in candidates(e)? {
            let mut best: Option<Best> = None;
            for (_, prev) in &layer {
                let from = *prev.path.last().expect("non-empty path");
                let gaps = shortest_paths(sys, from, t);
                let several = gaps.len() > 1;
                let Some(gap) = gaps.into_iter().min_by(|x, y| key(sys, x).cmp(&key(sys, y))) else {
                    continue;
                };
                let mut path = prev.path.clone();
                path.extend_from_slice(&gap[1..]);
                let mut anchors = prev.anchors.clone();
                anchors.push(path.len() - 1);
                let cand = Best {
                    path,
                    anchors,
                    ambiguous: prev.ambiguous || several,
                };
                best = Some(match best {
                    None => cand,
                    Some(b) => {
                        let (kb, kc) = (key(sys, &b.path), key(sys, &cand.path));
                        let tie = kb.0 == kc.0;
                        let mut winner = if kc < kb { cand } else { b };
                        winner.ambiguous |= tie;
                        winner
                    }
                });
            }
            if let Some(b) = best {
                next.push((t, b));
            }
        }
        if next.is_empty() {
            return Err(RestoreError::NoPath {
                pid: pid.to_string(),
                from: observed[i - 1].event_id.clone(),
                to: e.event_id.clone(),
            });
        }
        if i == observed.len() - 1 {
            next.retain(|(t, _)| sys.is_sink(*t));
            if next.is_empty() {
                return Err(RestoreError::NotExit {
                    pid: pid.to_string(),
                    event_id: e.event_id.clone(),
                });
            }
        }
        layer = next;
    }
    let mut ambiguous = layer.len() > 1 && {
        let lens: Vec<usize> = layer.iter().map(|(_, b)| b.path.len()).collect();
        lens.iter().filter(|&&l| l == *lens.iter().min().expect("non-empty")).count() > 1
    };
    let (_, best) = layer
        .into_iter()
        .min_by(|(_, a), (_, b)| key(sys, &a.path).cmp(&key(sys, &b.path)))
        .expect("non-empty layer");
    ambiguous |= best.ambiguous;

    let mut obs = observed.iter();
    let steps = best
        .path
        .iter()
        .enumerate()
        .map(|(pos, &t)| {
            if best.anchors.contains(&pos) {
                Step {
                    event: (*obs.next().expect("one event per anchor")).clone(),
                    transition: t,
                    observed: true,
                }
            } else {
                Step {
                    event: Event::new(format!("u:{pid}:{pos}"), sys.transition(t).label.clone()).with_pid(pid),
                    transition: t,
                    observed: false,
                }
            }
        })
        .collect();
    Ok((
        CompletedTrace {
            pid: pid.to_string(),
            steps,
        },
        ambiguous,
    ))
}
