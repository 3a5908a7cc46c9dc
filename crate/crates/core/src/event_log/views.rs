use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::{EntityType, LogError, MultiEntityLog};
use crate::time::Millis;

/// A completeness or monotonicity violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    MissingTime { event_id: String },
    Uncorrelated { event_id: String },
    Tie { et: EntityType, id: String, first: String, second: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Completeness {
    pub time_complete: bool,
    pub monotone: bool,
    pub violations: Vec<Violation>,
}

pub fn check_completeness(log: &MultiEntityLog) -> Completeness {
    let mut violations = Vec::new();
    for e in log.events() {
        if e.time.is_none() {
            violations.push(Violation::MissingTime {
                event_id: e.event_id.clone(),
            });
        }
        if !log.entity_types().iter().any(|&et| e.entity(et).is_some()) {
            violations.push(Violation::Uncorrelated {
                event_id: e.event_id.clone(),
            });
        }
    }
    let time_complete = violations.is_empty();
    let ties = ties(log);
    let monotone = ties.is_empty();
    violations.extend(ties);
    Completeness {
        time_complete,
        monotone,
        violations,
    }
}

/// Pairs of events of one entity that share a timestamp.
pub(crate) fn ties(log: &MultiEntityLog) -> Vec<Violation> {
    let mut out = Vec::new();
    for &et in log.entity_types() {
        for (id, mut members) in timed_groups(log, et) {
            members.sort_by_key(|&(t, i)| (t, i));
            for w in members.windows(2) {
                if w[0].0 == w[1].0 {
                    out.push(Violation::Tie {
                        et,
                        id: id.to_string(),
                        first: log.events()[w[0].1].event_id.clone(),
                        second: log.events()[w[1].1].event_id.clone(),
                    });
                }
            }
        }
    }
    out
}

/// Timed events per identifier of `et`, identifiers in order of first appearance.
pub(crate) fn timed_groups(log: &MultiEntityLog, et: EntityType) -> Vec<(&str, Vec<(Millis, usize)>)> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<(Millis, usize)>> = HashMap::new();
    for (i, e) in log.events().iter().enumerate() {
        if let Some(id) = e.entity(et) {
            let g = groups.entry(id).or_insert_with(|| {
                order.push(id);
                Vec::new()
            });
            if let Some(t) = e.time {
                g.push((t, i));
            }
        }
    }
    order
        .into_iter()
        .map(|id| {
            let g = groups.remove(id).unwrap_or_default();
            (id, g)
        })
        .collect()
}

/// Time-ordered events of one entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub et: EntityType,
    pub id: String,
    pub events: Vec<String>,
}

/// One sequential log per entity type.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SequentialView {
    pub logs: BTreeMap<EntityType, Vec<Trace>>,
}

impl SequentialView {
    pub fn trace(&self, et: EntityType, id: &str) -> Option<&Trace> {
        self.logs.get(&et)?.iter().find(|t| t.id == id)
    }

    pub fn traces(&self) -> impl Iterator<Item = &Trace> {
        self.logs.values().flatten()
    }
}

/// Builds the unique sequential view of a monotone log.
///
/// Fails on ties within one entity and on correlated events without a timestamp.
pub fn sequential_view(log: &MultiEntityLog) -> Result<SequentialView, LogError> {
    let ties = ties(log);
    if !ties.is_empty() {
        return Err(LogError::NotMonotone { pairs: ties });
    }
    let mut view = SequentialView::default();
    for &et in log.entity_types() {
        if let Some(e) = log.events().iter().find(|e| e.entity(et).is_some() && e.time.is_none()) {
            return Err(LogError::Untimed(e.event_id.clone()));
        }
        let traces = timed_groups(log, et)
            .into_iter()
            .map(|(id, mut members)| {
                members.sort();
                Trace {
                    et,
                    id: id.to_string(),
                    events: members
                        .into_iter()
                        .map(|(_, i)| log.events()[i].event_id.clone())
                        .collect(),
                }
            })
            .collect();
        view.logs.insert(et, traces);
    }
    Ok(view)
}
