//! Multi-entity event logs: events carrying process (`pid`), resource
//! (`rid`) and queue (`qid`) identifiers, their per-entity sequential
//! traces and the system-level run (a typed strict partial order).

mod csv_io;
mod run;
mod views;

pub use csv_io::{parse_log, parse_log_str, write_log, write_log_string, ColumnMapping};
pub use run::{derive_system_run, project_run, RunEdge, SystemRun};
pub use views::{check_completeness, sequential_view, Completeness, SequentialView, Trace, Violation};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::time::Millis;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LogError {
    #[error("malformed CSV at row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("missing column {0:?} in header")]
    MissingColumn(String),
    #[error("row {row}: unparseable timestamp {value:?} in column {column:?}")]
    Timestamp { row: usize, column: String, value: String },
    #[error("row {row}: missing activity")]
    MissingActivity { row: usize },
    #[error("duplicate event id {0:?}")]
    DuplicateEventId(String),
    #[error("event {event_id:?}: {message}")]
    InvalidEvent { event_id: String, message: String },
    #[error("log is not monotone: {} tie(s), first {first:?}", .pairs.len(), first = .pairs.first())]
    NotMonotone { pairs: Vec<Violation> },
    #[error("event {0:?} has an entity identifier but no timestamp")]
    Untimed(String),
    #[error("entity type {0} is not an entity type of this log")]
    UnknownEntityType(EntityType),
}

/// The three entity roles of a PQR system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Pid,
    Rid,
    Qid,
}

impl EntityType {
    pub const ALL: [EntityType; 3] = [EntityType::Pid, EntityType::Rid, EntityType::Qid];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Pid => "pid",
            EntityType::Rid => "rid",
            EntityType::Qid => "qid",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EntityType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pid" => Ok(EntityType::Pid),
            "rid" => Ok(EntityType::Rid),
            "qid" => Ok(EntityType::Qid),
            other => Err(format!("unknown entity type {other:?}")),
        }
    }
}

/// One recorded (or restored) event.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Event {
    pub event_id: String,
    pub act: String,
    pub time: Option<Millis>,
    pub pid: Option<String>,
    pub rid: Option<String>,
    pub qid: Option<String>,
    pub tmin: Option<Millis>,
    pub tmax: Option<Millis>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl Event {
    pub fn new(event_id: impl Into<String>, act: impl Into<String>) -> Self {
        Event {
            event_id: event_id.into(),
            act: act.into(),
            ..Default::default()
        }
    }

    pub fn with_time(mut self, time: Millis) -> Self {
        self.time = Some(time);
        self
    }

    pub fn with_pid(mut self, pid: impl Into<String>) -> Self {
        self.pid = Some(pid.into());
        self
    }

    pub fn with_rid(mut self, rid: impl Into<String>) -> Self {
        self.rid = Some(rid.into());
        self
    }

    pub fn with_qid(mut self, qid: impl Into<String>) -> Self {
        self.qid = Some(qid.into());
        self
    }

    pub fn entity(&self, et: EntityType) -> Option<&str> {
        match et {
            EntityType::Pid => self.pid.as_deref(),
            EntityType::Rid => self.rid.as_deref(),
            EntityType::Qid => self.qid.as_deref(),
        }
    }

    pub fn set_entity(&mut self, et: EntityType, value: Option<String>) {
        match et {
            EntityType::Pid => self.pid = value,
            EntityType::Rid => self.rid = value,
            EntityType::Qid => self.qid = value,
        }
    }

    /// Time used for ordering and load: the recorded time, else the interval midpoint.
    pub fn point_time(&self) -> Option<Millis> {
        self.time.or(match (self.tmin, self.tmax) {
            (Some(lo), Some(hi)) => Some(lo + (hi - lo) / 2),
            _ => None,
        })
    }

    fn check(&self) -> Result<(), LogError> {
        let bad = |message: &str| LogError::InvalidEvent {
            event_id: self.event_id.clone(),
            message: message.to_string(),
        };
        if self.act.is_empty() {
            return Err(bad("activity is empty"));
        }
        if let (Some(lo), Some(hi)) = (self.tmin, self.tmax) {
            if lo > hi {
                return Err(bad("tmin > tmax"));
            }
        }
        if let Some(t) = self.time {
            if self.tmin.is_some_and(|lo| lo > t) || self.tmax.is_some_and(|hi| t > hi) {
                return Err(bad("time lies outside [tmin, tmax]"));
            }
        }
        Ok(())
    }
}

/// An event log whose events may be correlated to several entity types.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiEntityLog {
    events: Vec<Event>,
    entity_types: BTreeSet<EntityType>,
    index: HashMap<String, usize>,
}

impl MultiEntityLog {
    pub fn new(
        events: Vec<Event>,
        entity_types: impl IntoIterator<Item = EntityType>,
    ) -> Result<Self, LogError> {
        let mut index = HashMap::with_capacity(events.len());
        for (i, e) in events.iter().enumerate() {
            e.check()?;
            if index.insert(e.event_id.clone(), i).is_some() {
                return Err(LogError::DuplicateEventId(e.event_id.clone()));
            }
        }
        Ok(MultiEntityLog {
            events,
            entity_types: entity_types.into_iter().collect(),
            index,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn entity_types(&self) -> &BTreeSet<EntityType> {
        &self.entity_types
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn get(&self, event_id: &str) -> Option<&Event> {
        self.index.get(event_id).map(|&i| &self.events[i])
    }

    pub fn position(&self, event_id: &str) -> Option<usize> {
        self.index.get(event_id).copied()
    }

    /// Attribute names in use: the fixed columns plus every extra key.
    pub fn attribute_names(&self) -> BTreeSet<String> {
        let mut names: BTreeSet<String> = ["act".to_string()].into();
        for e in &self.events {
            if e.time.is_some() {
                names.insert("time".into());
            }
            for et in EntityType::ALL {
                if e.entity(et).is_some() {
                    names.insert(et.as_str().into());
                }
            }
            names.extend(e.extra.keys().cloned());
        }
        names
    }

    /// Identifiers of entity type `et` in order of first appearance.
    pub fn ids(&self, et: EntityType) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.events
            .iter()
            .filter_map(|e| e.entity(et))
            .filter(|id| seen.insert(*id))
            .map(str::to_string)
            .collect()
    }

    /// Events correlated to `et = id`, in log order.
    pub fn correlated<'a>(&'a self, et: EntityType, id: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.entity(et) == Some(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_ids_rejected() {
        let events = vec![Event::new("e0", "a"), Event::new("e0", "b")];
        assert_eq!(
            MultiEntityLog::new(events, [EntityType::Pid]).unwrap_err(),
            LogError::DuplicateEventId("e0".into())
        );
    }

    #[test]
    fn interval_invariants_enforced() {
        let mut e = Event::new("e0", "a").with_time(10);
        e.tmin = Some(11);
        e.tmax = Some(20);
        assert!(matches!(
            MultiEntityLog::new(vec![e], [EntityType::Pid]),
            Err(LogError::InvalidEvent { .. })
        ));
    }

    #[test]
    fn midpoint_for_intervals() {
        let mut e = Event::new("e0", "a");
        e.tmin = Some(10);
        e.tmax = Some(21);
        assert_eq!(e.point_time(), Some(15));
        assert_eq!(e.with_time(3).point_time(), Some(3));
    }
}
