//! Ground truth and measurement: a discrete-event simulator for PQR
//! systems, the partializer that turns a complete log into sensor
//! observations, and timestamp and load error metrics.

mod eval;
mod scenario;
mod simulate;

pub use eval::{
    compare_load, evaluate, load_series, parse_segment, partialize, spectrum_export, EventError, LoadComparison,
    LoadSeries, Metrics,
};
pub use scenario::{ArrivalStream, Blockage, CaseSpec, Scenario, Slack};
pub use simulate::{simulate, simulate_detailed, SimOutput};

use crate::event_log::LogError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("event {0:?} has no pid")]
    Uncorrelated(String),
    #[error("case {0:?} keeps no event")]
    EmptyCase(String),
    #[error("no counterpart for {0}")]
    Unmatched(String),
    #[error("event {0:?} lacks the step parameters (role, tsr, twq) written by the repair")]
    MissingParameters(String),
    #[error("activity {0:?} does not occur in the log")]
    UnknownLabel(String),
}

#[cfg(test)]
mod tests;
