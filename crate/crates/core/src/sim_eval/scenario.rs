use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::pqr_model::PqrSystem;
use crate::time::{parse_timestamp, Millis};

/// A periodic stream of cases entering at one source transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalStream {
    /// Source transition id (or its label).
    pub source: String,
    pub interval_ms: Millis,
    /// Each gap is `interval_ms` plus a uniform draw from `[0, jitter_ms]`.
    #[serde(default)]
    pub jitter_ms: Millis,
    #[serde(default)]
    pub offset_ms: Millis,
    /// Stop after this many cases even before the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

/// One explicitly placed case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub pid: String,
    pub source: String,
    pub at_ms: Millis,
    /// Transition ids to take wherever the case has a choice.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub route: Vec<String>,
}

/// Extra time beyond each minimum, as a fraction of it: every draw is
/// uniform in `[0, fraction * minimum]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slack {
    #[serde(default)]
    pub service: f64,
    #[serde(default)]
    pub resource: f64,
    #[serde(default)]
    pub queue: f64,
}

/// Dequeues of `queue` stall during `[start_ms, start_ms + duration_ms)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blockage {
    pub queue: String,
    pub start_ms: Millis,
    pub duration_ms: Millis,
}

fn default_origin() -> String {
    "2020-01-01T00:00:00Z".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Absolute time of offset 0; all other times are offsets from it.
    #[serde(default = "default_origin")]
    pub origin: String,
    /// Streams stop generating arrivals at this offset.
    pub horizon_ms: Millis,
    #[serde(default)]
    pub arrivals: Vec<ArrivalStream>,
    #[serde(default)]
    pub cases: Vec<CaseSpec>,
    /// Activity place id -> weight per outgoing complete transition id.
    #[serde(default)]
    pub routing: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub slack: Slack,
    #[serde(default)]
    pub blockages: Vec<Blockage>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Scenario(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn origin_ms(&self) -> Result<Millis, SimError> {
        parse_timestamp(&self.origin).ok_or_else(|| SimError::Scenario(format!("bad origin {:?}", self.origin)))
    }

    /// Resolves a source by transition id, else by label.
    pub(crate) fn source(sys: &PqrSystem, name: &str) -> Result<usize, SimError> {
        let t = sys
            .transition_index(name)
            .or_else(|| sys.transitions_with_label(name).next())
            .ok_or_else(|| SimError::Scenario(format!("unknown source {name:?}")))?;
        if !sys.is_source(t) {
            return Err(SimError::Scenario(format!("{name:?} is not a source transition")));
        }
        Ok(t)
    }

    /// Checks the scenario against the system it will drive.
    pub fn validate(&self, sys: &PqrSystem) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Scenario(m));
        self.origin_ms()?;
        if self.horizon_ms <= 0 {
            return bad("horizon must be positive".into());
        }
        if !sys.is_acyclic() {
            return bad("the process proclet has a cycle".into());
        }
        for r in &sys.resources {
            if r.tsr <= 0 {
                return bad(format!("resource {:?} needs a positive service time", r.rid));
            }
        }
        for a in &self.arrivals {
            Self::source(sys, &a.source)?;
            if a.interval_ms <= 0 || a.jitter_ms < 0 || a.offset_ms < 0 {
                return bad(format!("arrival stream at {:?}: interval must be positive, jitter and offset non-negative", a.source));
            }
        }
        for c in &self.cases {
            Self::source(sys, &c.source)?;
            if let Some(t) = c.route.iter().find(|t| sys.transition_index(t).is_none()) {
                return bad(format!("case {:?}: unknown route transition {t:?}", c.pid));
            }
        }
        for (place, weights) in &self.routing {
            if !sys.process.places.iter().any(|p| &p.id == place) {
                return bad(format!("routing: unknown place {place:?}"));
            }
            if weights.values().any(|w| !w.is_finite() || *w < 0.0) || weights.values().sum::<f64>() <= 0.0 {
                return bad(format!("routing at {place:?}: weights must be non-negative with a positive sum"));
            }
            if let Some(t) = weights.keys().find(|t| sys.transition_index(t).is_none()) {
                return bad(format!("routing at {place:?}: unknown transition {t:?}"));
            }
        }
        for s in [self.slack.service, self.slack.resource, self.slack.queue] {
            if !s.is_finite() || s < 0.0 {
                return bad("slack fractions must be non-negative".into());
            }
        }
        for b in &self.blockages {
            if sys.queue_index(&b.queue).is_none() {
                return bad(format!("blockage on unknown queue {:?}", b.queue));
            }
            if b.duration_ms < 0 {
                return bad(format!("blockage on {:?} has negative duration", b.queue));
            }
        }
        Ok(())
    }
}
