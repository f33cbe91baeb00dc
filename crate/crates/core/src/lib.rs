//! Slotted-time simulator for a two-tier wireless network in which a dense
//! secondary tier relays the traffic of a sparse primary tier, plus the
//! sweep and fitting harness that checks the resulting order laws.

pub mod config;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod par;
pub mod phy;
mod rng;
pub mod routing;
pub mod schedule;
pub mod transport;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use harness::{check_theorems, emit, fit_exponent, run_point, run_sweep, ExperimentResult, FitReport, SweepPlan};
