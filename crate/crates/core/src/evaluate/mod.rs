//! Ex-post evaluation: real-time dispatch per realized scenario,
//! out-of-sample violation statistics, welfare and DSO cost accounting, and
//! sub-optimality gap bounds for restricted clearings.

mod dispatch;
mod gap;
mod violations;
mod welfare;

pub use dispatch::{
    dispatch_scenarios, realtime_dispatch, DispatchCost, DispatchResult, ProcuredFlexibility, Provenance,
};
pub use gap::{gap_bounds, GapInstance, GapOffer, GapReport, LiquidityLevel, NodalRequest};
pub use violations::{out_of_sample, ConstraintStat, FamilyStat, PolicySolution, ViolationReport, VIOLATION_TOL};
pub use welfare::{welfare, Procurement, WelfareReport};

use thiserror::Error;

use crate::flexreq::FlexReqError;
use crate::grid::GridError;
use crate::socp::SocpError;
use crate::uncertainty::UncertaintyError;

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Socp(#[from] SocpError),
    #[error(transparent)]
    Request(#[from] FlexReqError),
    #[error("need at least {needed} scenarios, got {got}")]
    TooFewScenarios { needed: usize, got: usize },
    #[error("scenario sources {got:?} do not match the model sources {expected:?}")]
    Sources { expected: Vec<String>, got: Vec<String> },
    #[error("scenario counts differ: {0} vs {1}")]
    ScenarioCount(usize, usize),
    #[error("solution has no entry for bus {bus} in period {period}")]
    MissingNode { bus: u32, period: u32 },
    #[error("share a = {share} at bus {bus} is outside (0, 1]")]
    Share { bus: u32, share: f64 },
    #[error("real-time dispatch failed in period {period}: {reason}")]
    Dispatch { period: u32, reason: String },
}
