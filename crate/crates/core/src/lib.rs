//! Counterfactual goal inference, HRVO local navigation and distributed
//! multi-clustered particle tracking.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. Scenario files,
//! traces and the command line live in the `cfnav` companion crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails the check too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod assignment;
pub mod geometry;
pub mod hrvo;
pub mod intent;
pub mod motmetrics;
pub mod netsim;
pub mod ptrack;
pub mod world;

pub use glam::{DMat2, DVec2};

pub use hrvo::{
    build_hrvo, plan_velocity, preferred_velocity, select_velocity, HrvoConfig, HrvoError, Neighborhood,
    HrvoRegion, SelectionStatus, VelocitySelection,
};
pub use intent::{
    counterfactual_step, infer_all, likelihood, sample_goal_grid, update_belief,
    CounterfactualResult, GoalBelief, InferenceSnapshot, IntentConfig, IntentError,
    LikelihoodModel,
};
pub use motmetrics::{evaluate, FrameEval, MotReport};
pub use netsim::{LinkModel, MessageBus};
pub use world::{
    step_world, AgentId, AgentState, Goal, GoalId, GoalSet, MotionParams, WorldError, WorldState,
};
