//! Ground-truth world state and deterministic stepping.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use glam::DVec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project_onto_lens, Disc, EPSILON};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "agent#{}", self.0)
    }
}

impl fmt::Display for GoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "goal#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("duplicate agent {0}")]
    DuplicateAgent(AgentId),
    #[error("agent {agent} violates its envelope: {reason}")]
    InvalidAgent { agent: AgentId, reason: &'static str },
    #[error("goal set is empty")]
    EmptyGoalSet,
    #[error("duplicate goal {0}")]
    DuplicateGoal(GoalId),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
}

/// Kinematic state and motion envelope of one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub position: DVec2,
    pub velocity: DVec2,
    pub radius: f64,
    pub pref_speed: f64,
    pub max_speed: f64,
    pub max_accel: f64,
}

impl AgentState {
    pub fn new(id: AgentId, position: DVec2, radius: f64, pref_speed: f64, max_speed: f64, max_accel: f64) -> Self {
        AgentState { id, position, velocity: DVec2::ZERO, radius, pref_speed, max_speed, max_accel }
    }

    pub fn with_velocity(mut self, velocity: DVec2) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |reason| WorldError::InvalidAgent { agent: self.id, reason };
        if !self.position.is_finite() || !self.velocity.is_finite() {
            return Err(WorldError::NonFinite("agent position/velocity"));
        }
        if !(self.radius > 0.0) {
            return Err(bad("radius must be positive"));
        }
        if !(self.pref_speed > 0.0 && self.pref_speed <= self.max_speed) {
            return Err(bad("require 0 < pref_speed <= max_speed"));
        }
        if !(self.max_accel > 0.0) {
            return Err(bad("max_accel must be positive"));
        }
        if self.velocity.length() > self.max_speed + EPSILON {
            return Err(bad("speed exceeds max_speed"));
        }
        Ok(())
    }

    /// Velocities reachable within `dt`: the acceleration disc around the
    /// current velocity intersected with the speed disc.
    ///
    /// A current velocity above `max_speed` (possible for noisy estimates) is
    /// pulled back onto the speed circle first so the lens is never empty.
    pub fn reachable(&self, dt: f64) -> (Disc, Disc) {
        let speed = Disc::new(DVec2::ZERO, self.max_speed);
        let current = speed.project(self.velocity);
        (Disc::new(current, self.max_accel * dt), speed)
    }

    /// Closest velocity to `v` inside the reachable set.
    pub fn clamp_to_envelope(&self, v: DVec2, dt: f64) -> DVec2 {
        let (accel, speed) = self.reachable(dt);
        project_onto_lens(v, &accel, &speed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub id: GoalId,
    pub position: DVec2,
}

/// Ordered, non-empty set of candidate navigation goals with unique ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Goal>", into = "Vec<Goal>")]
pub struct GoalSet {
    goals: Vec<Goal>,
}

impl GoalSet {
    pub fn new(goals: Vec<Goal>) -> Result<Self, WorldError> {
        if goals.is_empty() {
            return Err(WorldError::EmptyGoalSet);
        }
        for (i, g) in goals.iter().enumerate() {
            if !g.position.is_finite() {
                return Err(WorldError::NonFinite("goal position"));
            }
            if goals[..i].iter().any(|o| o.id == g.id) {
                return Err(WorldError::DuplicateGoal(g.id));
            }
        }
        Ok(GoalSet { goals })
    }

    /// Goals numbered `0..n` in the given order.
    pub fn from_points(points: &[DVec2]) -> Result<Self, WorldError> {
        let goals = points
            .iter()
            .enumerate()
            .map(|(i, &position)| Goal { id: GoalId(i as u32), position })
            .collect();
        GoalSet::new(goals)
    }

    pub fn get(&self, id: GoalId) -> Option<&Goal> {
        self.goals.iter().find(|g| g.id == id)
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Goal> {
        self.goals.iter()
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = GoalId> + '_ {
        self.goals.iter().map(|g| g.id)
    }
}

impl TryFrom<Vec<Goal>> for GoalSet {
    type Error = WorldError;

    fn try_from(goals: Vec<Goal>) -> Result<Self, Self::Error> {
        GoalSet::new(goals)
    }
}

impl From<GoalSet> for Vec<Goal> {
    fn from(set: GoalSet) -> Self {
        set.goals
    }
}

/// Running estimates of an agent's navigation parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    pub avg_speed: f64,
    pub max_observed_speed: f64,
    pub max_observed_accel: f64,
}

impl MotionParams {
    pub const DEFAULT_DECAY: f64 = 0.9;

    /// Folds one velocity observation into the estimates. `avg_speed` is an
    /// exponential moving average with weight `decay` on the old value.
    pub fn update(&self, observed: DVec2, prev: DVec2, dt: f64, decay: f64) -> Result<MotionParams, WorldError> {
        if !observed.is_finite() || !prev.is_finite() || !decay.is_finite() {
            return Err(WorldError::NonFinite("motion observation"));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(WorldError::InvalidTimeStep(dt));
        }
        let speed = observed.length();
        let accel = (observed - prev).length() / dt;
        Ok(MotionParams {
            avg_speed: decay * self.avg_speed + (1.0 - decay) * speed,
            max_observed_speed: self.max_observed_speed.max(speed),
            max_observed_accel: self.max_observed_accel.max(accel),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub agents: Vec<AgentState>,
    /// Ground-truth intentions; never read by the inference engine.
    pub goal_assignment: BTreeMap<AgentId, GoalId>,
}

impl WorldState {
    pub fn new(time: f64, agents: Vec<AgentState>) -> Result<Self, WorldError> {
        let world = WorldState { time, agents, goal_assignment: BTreeMap::new() };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        for (i, a) in self.agents.iter().enumerate() {
            if self.agents[..i].iter().any(|o| o.id == a.id) {
                return Err(WorldError::DuplicateAgent(a.id));
            }
            a.validate()?;
        }
        Ok(())
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepDiagnostic {
    /// A command left the speed/acceleration envelope and was projected back.
    CommandClamped { agent: AgentId, requested: DVec2, applied: DVec2 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub world: WorldState,
    pub diagnostics: Vec<StepDiagnostic>,
}

/// Advances the world by `dt` with explicit Euler integration.
///
/// Agents without a command keep their current velocity. Commands outside
/// the reachable set are clamped and reported.
pub fn step_world(world: &WorldState, dt: f64, commands: &BTreeMap<AgentId, DVec2>) -> Result<StepOutcome, WorldError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(WorldError::InvalidTimeStep(dt));
    }
    for id in commands.keys() {
        if world.agent(*id).is_none() {
            return Err(WorldError::UnknownAgent(*id));
        }
    }
    let mut diagnostics = Vec::new();
    let mut agents = world.agents.clone();
    for agent in agents.iter_mut() {
        let velocity = match commands.get(&agent.id) {
            Some(&requested) => {
                if !requested.is_finite() {
                    return Err(WorldError::NonFinite("velocity command"));
                }
                let applied = agent.clamp_to_envelope(requested, dt);
                if (applied - requested).length() > EPSILON {
                    diagnostics.push(StepDiagnostic::CommandClamped { agent: agent.id, requested, applied });
                }
                applied
            }
            None => agent.velocity,
        };
        agent.velocity = velocity;
        agent.position += velocity * dt;
    }
    Ok(StepOutcome {
        world: WorldState { time: world.time + dt, agents, goal_assignment: world.goal_assignment.clone() },
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn walker(id: u32, x: f64, y: f64) -> AgentState {
        AgentState::new(AgentId(id), DVec2::new(x, y), 0.4, 1.0, 1.0, 20.0)
    }

    #[test]
    fn euler_step_moves_agent() {
        let world = WorldState::new(0.0, vec![walker(0, 0.0, 0.0)]).unwrap();
        let cmds = BTreeMap::from([(AgentId(0), DVec2::new(1.0, 0.0))]);
        let out = step_world(&world, 0.1, &cmds).unwrap();
        assert!((out.world.agents[0].position - DVec2::new(0.1, 0.0)).length() < 1e-15);
        assert!((out.world.time - 0.1).abs() < 1e-15);
        assert!(out.diagnostics.is_empty());
    }

    #[test]
    fn zero_commands_are_a_fixed_point() {
        let world = WorldState::new(2.0, vec![walker(0, 1.0, 2.0), walker(1, -3.0, 0.5)]).unwrap();
        let cmds = BTreeMap::from([(AgentId(0), DVec2::ZERO), (AgentId(1), DVec2::ZERO)]);
        let out = step_world(&world, 0.25, &cmds).unwrap();
        assert_eq!(out.world.agents[0].position, world.agents[0].position);
        assert_eq!(out.world.agents[1].position, world.agents[1].position);
        assert_eq!(out.world.time, 2.25);
    }

    #[test]
    fn overspeed_command_is_clamped_with_diagnostic() {
        let world = WorldState::new(0.0, vec![walker(0, 0.0, 0.0)]).unwrap();
        let cmds = BTreeMap::from([(AgentId(0), DVec2::new(2.0, 0.0))]);
        let out = step_world(&world, 0.1, &cmds).unwrap();
        assert!((out.world.agents[0].velocity - DVec2::new(1.0, 0.0)).length() < 1e-12);
        assert_eq!(out.diagnostics.len(), 1);
    }

    #[test]
    fn acceleration_limit_is_enforced() {
        let mut a = walker(0, 0.0, 0.0);
        a.max_accel = 1.0;
        let world = WorldState::new(0.0, vec![a]).unwrap();
        let cmds = BTreeMap::from([(AgentId(0), DVec2::new(1.0, 0.0))]);
        let out = step_world(&world, 0.1, &cmds).unwrap();
        assert!((out.world.agents[0].velocity - DVec2::new(0.1, 0.0)).length() < 1e-12);
    }

    #[test]
    fn unknown_agent_and_bad_dt_are_rejected() {
        let world = WorldState::new(0.0, vec![walker(0, 0.0, 0.0)]).unwrap();
        let cmds = BTreeMap::from([(AgentId(9), DVec2::ZERO)]);
        assert_eq!(step_world(&world, 0.1, &cmds), Err(WorldError::UnknownAgent(AgentId(9))));
        assert!(matches!(step_world(&world, 0.0, &BTreeMap::new()), Err(WorldError::InvalidTimeStep(_))));
    }

    #[test]
    fn invalid_envelopes_are_rejected() {
        let mut a = walker(0, 0.0, 0.0);
        a.pref_speed = 2.0;
        assert!(a.validate().is_err());
        assert!(WorldState::new(0.0, vec![walker(1, 0.0, 0.0), walker(1, 1.0, 0.0)]).is_err());
        assert_eq!(GoalSet::new(vec![]), Err(WorldError::EmptyGoalSet));
    }

    #[test]
    fn motion_params_ema() {
        let p = MotionParams::default()
            .update(DVec2::new(1.0, 0.0), DVec2::ZERO, 1.0, MotionParams::DEFAULT_DECAY)
            .unwrap();
        assert!((p.avg_speed - 0.1).abs() < 1e-12);
        assert_eq!(p.max_observed_speed, 1.0);
        assert_eq!(p.max_observed_accel, 1.0);

        let q = p.update(DVec2::new(0.5, 0.0), DVec2::new(0.5, 0.0), 0.1, 0.9).unwrap();
        assert_eq!(q.max_observed_accel, p.max_observed_accel);

        let mut r = MotionParams::default();
        for _ in 0..400 {
            r = r.update(DVec2::X, DVec2::X, 0.1, 0.9).unwrap();
        }
        assert!((r.avg_speed - 1.0).abs() < 1e-12);
        assert!(r.update(DVec2::new(f64::NAN, 0.0), DVec2::ZERO, 0.1, 0.9).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec2() -> impl Strategy<Value = DVec2> {
            (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y)| DVec2::new(x, y))
        }

        proptest! {
            #[test]
            fn step_respects_envelope_and_is_deterministic(v0 in vec2(), cmd in vec2(), accel in 0.1..5.0f64, dt in 0.01..0.5f64) {
                let mut a = walker(0, 0.0, 0.0);
                a.max_accel = accel;
                a.velocity = if v0.length() > a.max_speed { v0.normalize() * a.max_speed } else { v0 };
                let world = WorldState::new(0.0, vec![a.clone()]).unwrap();
                let cmds = BTreeMap::from([(AgentId(0), cmd)]);
                let x = step_world(&world, dt, &cmds).unwrap();
                let y = step_world(&world, dt, &cmds).unwrap();
                prop_assert_eq!(&x, &y);
                let v = x.world.agents[0].velocity;
                prop_assert!(v.length() <= a.max_speed + EPSILON);
                prop_assert!((v - a.velocity).length() <= accel * dt + EPSILON);
            }

            #[test]
            fn running_maxima_never_decrease(vs in proptest::collection::vec(vec2(), 1..30)) {
                let mut p = MotionParams::default();
                let mut prev = DVec2::ZERO;
                for v in vs {
                    let q = p.update(v, prev, 0.1, 0.9).unwrap();
                    prop_assert!(q.max_observed_speed >= p.max_observed_speed);
                    prop_assert!(q.max_observed_accel >= p.max_observed_accel);
                    prop_assert!(q.avg_speed <= q.max_observed_speed + 1e-12);
                    p = q;
                    prev = v;
                }
            }
        }
    }
}
