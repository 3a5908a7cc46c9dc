//! Timestamp constraints over unobserved events and their solution.
//!
//! Every start or atomic event owns one variable; the complete event that
//! follows a start is that variable plus the step's service time. Each
//! constraint reads `x[lhs] <= x[rhs] + offset` and exists once for the
//! lower-bound family (`tmin`) and once for the upper-bound family (`tmax`).
//! The two families only meet in `tmin <= tmax` per variable, so both can be
//! solved by longest-path propagation; [`solve_lp_oracle`] solves the same
//! program with an exact simplex for cross-checking.

mod generate;
mod points;
mod propagate;
mod simplex;

pub use generate::generate_constraints;
pub use propagate::solve_propagation;
pub use simplex::solve_lp_oracle;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use serde::Serialize;

use crate::event_log::{EntityType, Event, LogError, MultiEntityLog};
use crate::restore::{IntermediateRun, RestoreError};
use crate::time::Millis;
use crate::RepairMode;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LpError {
    #[error("the process proclet has a cycle")]
    Cyclic,
    #[error(transparent)]
    Restore(#[from] RestoreError),
    #[error("event {0:?} is annotated with a transition the model does not have")]
    MissingAnnotation(String),
    #[error("case {pid:?}: event {event_id:?} at the {end} of the case is unobserved")]
    Unanchored { pid: String, event_id: String, end: &'static str },
    #[error("event {0:?} has no bounds in the solution")]
    MissingBounds(String),
    #[error("the solution is infeasible")]
    Infeasible,
    #[error("events {0:?} and {1:?} of {2} cannot be put in an order that replays")]
    Unordered(String, String, String),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Tmin,
    Tmax,
}

impl Bound {
    pub fn as_str(self) -> &'static str {
        match self {
            Bound::Tmin => "tmin",
            Bound::Tmax => "tmax",
        }
    }
}

/// Where a constraint comes from: consecutive steps of one case, or order
/// preservation between two cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Case,
    Fifo,
    /// Orders two events of one entity when writing point times.
    Order,
}

/// `x[lhs] <= x[rhs] + offset` within the family `bound`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Constraint {
    pub bound: Bound,
    pub lhs: usize,
    pub rhs: usize,
    pub offset: Millis,
    pub origin: Origin,
}

/// A step variable, named after its start (or atomic) event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Variable {
    pub event_id: String,
    pub pid: String,
    /// Transition index of the step in the process proclet.
    pub transition: usize,
}

/// An observation pinning a variable: the event's time minus `shift`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fix {
    pub var: usize,
    pub event_id: String,
    pub value: Millis,
}

/// An event without its own variable: `x[var] + offset`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Derived {
    pub event_id: String,
    pub var: usize,
    pub offset: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ConstraintSet {
    pub variables: Vec<Variable>,
    pub fixes: Vec<Fix>,
    pub derived: Vec<Derived>,
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn var(&mut self, event_id: impl Into<String>, pid: impl Into<String>, transition: usize) -> usize {
        self.variables.push(Variable {
            event_id: event_id.into(),
            pid: pid.into(),
            transition,
        });
        self.variables.len() - 1
    }

    pub fn fix(&mut self, var: usize, event_id: impl Into<String>, value: Millis) {
        self.fixes.push(Fix {
            var,
            event_id: event_id.into(),
            value,
        });
    }

    /// Adds `x[lhs] <= x[rhs] + offset` to both families.
    pub fn both(&mut self, lhs: usize, rhs: usize, offset: Millis, origin: Origin) {
        for bound in [Bound::Tmin, Bound::Tmax] {
            self.constraints.push(Constraint {
                bound,
                lhs,
                rhs,
                offset,
                origin,
            });
        }
    }

    /// The single fixed value of each variable; `Err` holds two fixes that disagree.
    pub(crate) fn fixed_values(&self) -> Result<Vec<Option<Millis>>, (usize, usize)> {
        let mut out: Vec<Option<(Millis, usize)>> = vec![None; self.variables.len()];
        for (k, f) in self.fixes.iter().enumerate() {
            match out[f.var] {
                Some((v, j)) if v != f.value => return Err((j, k)),
                Some(_) => {}
                None => out[f.var] = Some((f.value, k)),
            }
        }
        Ok(out.into_iter().map(|o| o.map(|(v, _)| v)).collect())
    }

    /// Number of events that share each variable's interval width.
    pub(crate) fn weights(&self) -> Vec<i128> {
        let mut w = vec![1i128; self.variables.len()];
        for d in &self.derived {
            w[d.var] += 1;
        }
        w
    }

    fn name(&self, var: usize, bound: Bound) -> String {
        let id: String = self.variables[var]
            .event_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        format!("x_{id}_{}", bound.as_str())
    }

    /// The program in lp_solve's LP format, fixed variables substituted.
    pub fn to_lp_format(&self) -> String {
        let fixed = self.fixed_values().unwrap_or_else(|_| vec![None; self.variables.len()]);
        let weights = self.weights();
        let mut out = String::from("/* objective: total interval width */\nmax: ");
        for (v, w) in weights.iter().enumerate() {
            if fixed[v].is_none() {
                let _ = write!(out, "+{w} {} -{w} {} ", self.name(v, Bound::Tmax), self.name(v, Bound::Tmin));
            }
        }
        out.push_str(";\n\n");
        let mut row = 0;
        for c in &self.constraints {
            let (l, r) = (self.name(c.lhs, c.bound), self.name(c.rhs, c.bound));
            let line = match (fixed[c.lhs], fixed[c.rhs]) {
                (None, None) => format!("{l} - {r} <= {};", c.offset),
                (Some(a), None) => format!("{r} >= {};", a - c.offset),
                (None, Some(b)) => format!("{l} <= {};", b + c.offset),
                (Some(_), Some(_)) => continue,
            };
            row += 1;
            let _ = writeln!(out, "c{row}: {line}");
        }
        for v in 0..self.variables.len() {
            if fixed[v].is_none() {
                row += 1;
                let _ = writeln!(out, "c{row}: {} <= {};", self.name(v, Bound::Tmin), self.name(v, Bound::Tmax));
            }
        }
        for (v, f) in fixed.iter().enumerate() {
            if let Some(value) = f {
                let _ = writeln!(out, "/* {} = {value} */", self.variables[v].event_id);
            }
        }
        out
    }
}

/// A reason for infeasibility.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Culprit {
    Fixed { event_id: String, value: Millis },
    Constraint { bound: Bound, from: String, to: String, offset: Millis, origin: Origin },
    /// `tmin > tmax` at this event.
    Interval { event_id: String },
    Unbounded { event_id: String, bound: Bound },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Solution {
    /// Per event, including derived complete events.
    pub bounds: BTreeMap<String, (Millis, Millis)>,
    pub feasible: bool,
    pub culprits: Vec<Culprit>,
    pub objective: i128,
    #[serde(skip)]
    source: Source,
}

/// The constraint set a solution was computed from. Not part of equality.
#[derive(Clone, Default)]
struct Source(Option<Arc<ConstraintSet>>);

impl PartialEq for Source {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Source {}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("..")
    }
}

impl Solution {
    pub(crate) fn infeasible(culprits: Vec<Culprit>) -> Self {
        Solution {
            bounds: BTreeMap::new(),
            feasible: false,
            culprits,
            objective: 0,
            source: Source::default(),
        }
    }

    /// Builds the per-event bounds from per-variable values.
    pub(crate) fn from_values(cs: &ConstraintSet, tmin: &[Millis], tmax: &[Millis]) -> Self {
        let mut bounds = BTreeMap::new();
        let mut objective = 0i128;
        for (v, var) in cs.variables.iter().enumerate() {
            bounds.insert(var.event_id.clone(), (tmin[v], tmax[v]));
            objective += (tmax[v] - tmin[v]) as i128;
        }
        for d in &cs.derived {
            bounds.insert(d.event_id.clone(), (tmin[d.var] + d.offset, tmax[d.var] + d.offset));
            objective += (tmax[d.var] - tmin[d.var]) as i128;
        }
        Solution {
            bounds,
            feasible: true,
            culprits: Vec::new(),
            objective,
            source: Source(Some(Arc::new(cs.clone()))),
        }
    }

    /// Event ids along the culprit chain, in order of first mention.
    pub fn culprit_events(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.culprits {
            let ids: Vec<&str> = match c {
                Culprit::Fixed { event_id, .. } | Culprit::Interval { event_id } | Culprit::Unbounded { event_id, .. } => {
                    vec![event_id]
                }
                Culprit::Constraint { from, to, .. } => vec![from, to],
            };
            for id in ids {
                if !out.contains(&id) {
                    out.push(id);
                }
            }
        }
        out
    }
}

/// Writes the bounds into the restored run. Observed events keep their time
/// with `tmin = tmax = time`; in `tmin`/`tmax` mode unobserved events get
/// that bound as their time, tightened where cases would otherwise collide at
/// a resource or queue. Events are grouped by case, in path order, and
/// carry their step parameters as extra attributes.
pub fn apply_solution(run: &IntermediateRun, solution: &Solution, mode: RepairMode) -> Result<MultiEntityLog, LpError> {
    if !solution.feasible {
        return Err(LpError::Infeasible);
    }
    let points = match (mode, &solution.source.0) {
        (RepairMode::Tmin, Some(cs)) => Some(points::points(run, cs, solution, Bound::Tmin)?),
        (RepairMode::Tmax, Some(cs)) => Some(points::points(run, cs, solution, Bound::Tmax)?),
        _ => None,
    };
    let mut events: Vec<Event> = Vec::with_capacity(run.events().len());
    for (_, idx) in run.cases() {
        for &i in idx {
            let a = run.annotation(i);
            let mut e = run.events()[i].clone();
            if a.observed {
                e.tmin = e.time;
                e.tmax = e.time;
            } else {
                let &(lo, hi) = solution
                    .bounds
                    .get(&e.event_id)
                    .ok_or_else(|| LpError::MissingBounds(e.event_id.clone()))?;
                e.tmin = Some(lo);
                e.tmax = Some(hi);
                e.time = match (mode, &points) {
                    (RepairMode::Interval, _) => None,
                    (_, Some(p)) => Some(p[i]),
                    (RepairMode::Tmin, None) => Some(lo),
                    (RepairMode::Tmax, None) => Some(hi),
                };
            }
            e.extra.insert("observed".into(), a.observed.to_string());
            e.extra.insert("role".into(), a.role.as_str().into());
            e.extra.insert("tsr".into(), a.tsr.to_string());
            e.extra.insert("twr".into(), a.twr.to_string());
            e.extra.insert("twq".into(), a.twq.to_string());
            events.push(e);
        }
    }
    Ok(MultiEntityLog::new(events, EntityType::ALL)?)
}
