//! Scenario files, the simulation pipeline, traces, reports and the `cfnav`
//! command line.

// `!(x > 0.0)` is used on purpose so that NaN fails the check too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod behavior;
pub mod bench;
pub mod config;
pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod sensors;
pub mod trace;

pub use pipeline::{run_scenario, Mode, RunError, RunOptions};
pub use scenario::{Scenario, ScenarioError};
pub use trace::{Trace, TraceRecord};
