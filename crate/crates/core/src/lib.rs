//! Repair of incomplete event logs recorded on processes that share
//! single-server resources and FIFO queues.
//!
//! The pipeline is: parse a partial log and a PQR model, restore the
//! unobserved events ([`restore`]), generate timestamp difference
//! constraints and solve them ([`lp`]), then write the repaired log and
//! check it by timed replay ([`replay`]). [`sim_eval`] produces ground-truth
//! logs and measures repair accuracy.

pub mod event_log;
pub mod lp;
pub mod pqr_model;
pub mod replay;
pub mod restore;
pub mod sim_eval;
pub mod time;

pub use event_log::{EntityType, Event, MultiEntityLog, SystemRun, Trace};
pub use lp::{ConstraintSet, Solution};
pub use pqr_model::PqrSystem;
pub use restore::IntermediateRun;

/// Which bound to write as the event time when applying a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepairMode {
    Interval,
    Tmin,
    Tmax,
}

impl std::str::FromStr for RepairMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interval" => Ok(RepairMode::Interval),
            "tmin" => Ok(RepairMode::Tmin),
            "tmax" => Ok(RepairMode::Tmax),
            other => Err(format!("unknown repair mode {other:?}")),
        }
    }
}

/// Errors of the end-to-end repair pipeline.
#[derive(Debug, thiserror::Error)]
pub enum RepairError {
    #[error(transparent)]
    Restore(#[from] restore::RestoreError),
    #[error(transparent)]
    Constraints(#[from] lp::LpError),
    #[error("constraint system is infeasible")]
    Infeasible(Box<Solution>),
}

/// Output of [`repair`]: the intermediate run, its constraints and solution.
#[derive(Debug, Clone)]
pub struct Repair {
    pub run: IntermediateRun,
    pub constraints: ConstraintSet,
    pub solution: Solution,
}

impl Repair {
    pub fn to_log(&self, mode: RepairMode) -> Result<MultiEntityLog, lp::LpError> {
        lp::apply_solution(&self.run, &self.solution, mode)
    }
}

/// Restores unobserved events of `partial` and computes their timestamp bounds.
pub fn repair(system: &PqrSystem, partial: &MultiEntityLog) -> Result<Repair, RepairError> {
    let traces = restore::oracle_o1(partial, system)?;
    let run = restore::oracle_o2(&traces, system)?;
    let constraints = lp::generate_constraints(&run, system)?;
    let solution = lp::solve_propagation(&constraints);
    if !solution.feasible {
        return Err(RepairError::Infeasible(Box::new(solution)));
    }
    Ok(Repair {
        run,
        constraints,
        solution,
    })
}
