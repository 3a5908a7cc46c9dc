use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::views::{ties, timed_groups};
use super::{EntityType, Event, LogError, MultiEntityLog, Trace};

/// `source` directly precedes `target` in entity `id` of type `et`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunEdge {
    pub source: usize,
    pub target: usize,
    pub et: EntityType,
    pub id: String,
}

/// Partial-order view of a log: events plus the typed directly-precedes edges.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemRun {
    events: Vec<Event>,
    entity_types: BTreeSet<EntityType>,
    edges: Vec<RunEdge>,
}

impl SystemRun {
    pub(crate) fn from_parts(events: Vec<Event>, entity_types: BTreeSet<EntityType>, edges: Vec<RunEdge>) -> Self {
        SystemRun {
            events,
            entity_types,
            edges,
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn edges(&self) -> &[RunEdge] {
        &self.edges
    }

    pub fn entity_types(&self) -> &BTreeSet<EntityType> {
        &self.entity_types
    }

    /// Edges as `(source id, target id, et, id)`.
    pub fn edge_ids(&self) -> impl Iterator<Item = (&str, &str, EntityType, &str)> {
        self.edges.iter().map(|e| {
            (
                self.events[e.source].event_id.as_str(),
                self.events[e.target].event_id.as_str(),
                e.et,
                e.id.as_str(),
            )
        })
    }

    fn position(&self, event_id: &str) -> Option<usize> {
        self.events.iter().position(|e| e.event_id == event_id)
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.events.len()];
        for e in &self.edges {
            succ[e.source].push(e.target);
        }
        succ
    }

    /// True iff the untyped edge relation has no cycle, i.e. its transitive
    /// closure is irreflexive.
    pub fn is_strict_partial_order(&self) -> bool {
        let succ = self.successors();
        let mut indegree = vec![0usize; self.events.len()];
        for e in &self.edges {
            indegree[e.target] += 1;
        }
        let mut stack: Vec<usize> = (0..self.events.len()).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &w in &succ[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    stack.push(w);
                }
            }
        }
        seen == self.events.len()
    }

    /// `a < b` in the transitive closure.
    pub fn precedes(&self, a: &str, b: &str) -> bool {
        let (Some(a), Some(b)) = (self.position(a), self.position(b)) else {
            return false;
        };
        let succ = self.successors();
        let mut seen = vec![false; self.events.len()];
        let mut stack = succ[a].clone();
        while let Some(v) = stack.pop() {
            if v == b {
                return true;
            }
            if !std::mem::replace(&mut seen[v], true) {
                stack.extend(&succ[v]);
            }
        }
        false
    }

    /// Rebuilds one trace per `(et, id)` from the edge chains. Timed events
    /// without incident edges of their entity become singleton traces.
    pub fn chains(&self) -> BTreeMap<(EntityType, String), Trace> {
        let mut next: HashMap<(EntityType, &str, usize), usize> = HashMap::new();
        let mut has_pred: BTreeSet<(EntityType, &str, usize)> = BTreeSet::new();
        for e in &self.edges {
            next.insert((e.et, e.id.as_str(), e.source), e.target);
            has_pred.insert((e.et, e.id.as_str(), e.target));
        }
        let mut out = BTreeMap::new();
        for &et in &self.entity_types {
            for (i, ev) in self.events.iter().enumerate() {
                let Some(id) = ev.entity(et) else { continue };
                if ev.time.is_none() || has_pred.contains(&(et, id, i)) {
                    continue;
                }
                let mut events = vec![ev.event_id.clone()];
                let mut cur = i;
                while let Some(&n) = next.get(&(et, id, cur)) {
                    events.push(self.events[n].event_id.clone());
                    cur = n;
                }
                out.insert(
                    (et, id.to_string()),
                    Trace {
                        et,
                        id: id.to_string(),
                        events,
                    },
                );
            }
        }
        out
    }
}

/// Derives the system-level run of a monotone log. Events without a
/// timestamp stay isolated.
pub fn derive_system_run(log: &MultiEntityLog) -> Result<SystemRun, LogError> {
    let ties = ties(log);
    if !ties.is_empty() {
        return Err(LogError::NotMonotone { pairs: ties });
    }
    let mut edges = Vec::new();
    for &et in log.entity_types() {
        for (id, mut members) in timed_groups(log, et) {
            members.sort();
            edges.extend(members.windows(2).map(|w| RunEdge {
                source: w[0].1,
                target: w[1].1,
                et,
                id: id.to_string(),
            }));
        }
    }
    Ok(SystemRun {
        events: log.events().to_vec(),
        entity_types: log.entity_types().clone(),
        edges,
    })
}

/// Restricts a run to the events of entity type `et` (and identifier `id`),
/// keeping only the edges of that type and identifier.
pub fn project_run(run: &SystemRun, et: EntityType, id: Option<&str>) -> Result<SystemRun, LogError> {
    if !run.entity_types.contains(&et) {
        return Err(LogError::UnknownEntityType(et));
    }
    let keep = |e: &Event| match (e.entity(et), id) {
        (Some(v), Some(want)) => v == want,
        (Some(_), None) => true,
        (None, _) => false,
    };
    let mut remap = vec![None; run.events.len()];
    let mut events = Vec::new();
    for (i, e) in run.events.iter().enumerate() {
        if keep(e) {
            remap[i] = Some(events.len());
            events.push(e.clone());
        }
    }
    let edges = run
        .edges
        .iter()
        .filter(|e| e.et == et && id.is_none_or(|want| e.id == want))
        .filter_map(|e| {
            Some(RunEdge {
                source: remap[e.source]?,
                target: remap[e.target]?,
                et,
                id: e.id.clone(),
            })
        })
        .collect();
    Ok(SystemRun {
        events,
        entity_types: [et].into(),
        edges,
    })
}
