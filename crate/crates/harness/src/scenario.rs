//! Scenario files: JSON descriptions of goals, agents, sensors and network.

use std::collections::BTreeSet;
use std::path::Path;

use cfnav_core::hrvo::HrvoConfig;
use cfnav_core::intent::{sample_goal_grid, Bounds, IntentConfig};
use cfnav_core::netsim::LinkModel;
use cfnav_core::ptrack::{GlobalConfig, LocalConfig};
use cfnav_core::{AgentId, AgentState, DVec2, GoalSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

pub type Point = [f64; 2];

pub fn vec2(p: Point) -> DVec2 {
    DVec2::new(p[0], p[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Simulated seconds.
    pub duration: f64,
    pub step_dt: f64,
    pub goals: GoalSpec,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub sensors: Vec<SensorSpec>,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub tracker: TrackerSpec,
    #[serde(default)]
    pub inference: IntentConfig,
    #[serde(default)]
    pub planner: HrvoConfig,
    /// Envelope assumed for objects that reach inference through the tracker.
    #[serde(default)]
    pub tracked_envelope: Envelope,
    /// Distance at which an agent counts as having reached its goal.
    #[serde(default = "default_arrival")]
    pub arrival_radius: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_arrival() -> f64 {
    0.3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GoalSpec {
    Points(Vec<Point>),
    Grid { min: Point, max: Point, nx: usize, ny: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: u32,
    pub position: Point,
    #[serde(default)]
    pub velocity: Point,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_pref")]
    pub pref_speed: f64,
    #[serde(default = "default_max_speed")]
    pub max_speed: f64,
    #[serde(default = "default_accel")]
    pub max_accel: f64,
    /// Appearance signature seen by sensors.
    #[serde(default)]
    pub appearance: Vec<f64>,
    pub behavior: Behavior,
    /// Whether the agent steers around others or walks straight at its goal.
    #[serde(default = "yes")]
    pub avoid: bool,
}

fn default_radius() -> f64 {
    0.3
}
fn default_pref() -> f64 {
    1.0
}
fn default_max_speed() -> f64 {
    1.5
}
fn default_accel() -> f64 {
    2.0
}
fn yes() -> bool {
    true
}

impl AgentSpec {
    pub fn initial_state(&self) -> AgentState {
        AgentState::new(AgentId(self.id), vec2(self.position), self.radius, self.pref_speed, self.max_speed, self.max_accel)
            .with_velocity(vec2(self.velocity))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Behavior {
    /// Heads for `goal` of each step from its `at` time on.
    Scripted { sequence: Vec<ScriptStep> },
    /// Visits `goals` in order, moving on when one is reached.
    Planner {
        goals: Vec<u32>,
        #[serde(default = "yes")]
        cycle: bool,
    },
    /// Picks a new random goal on arrival or after a random interval.
    RandomSwitcher {
        #[serde(default)]
        goals: Option<Vec<u32>>,
        min_interval: f64,
        max_interval: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    pub goal: u32,
    pub at: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub id: u32,
    #[serde(default)]
    pub position: Point,
    /// Field of view polygon on the ground plane.
    pub fov: Vec<Point>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "one")]
    pub detection_rate: f64,
    /// Mean clutter detections per frame.
    #[serde(default)]
    pub false_positive_rate: f64,
    #[serde(default)]
    pub appearance_noise: f64,
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
}

fn one() -> f64 {
    1.0
}

/// `agent` is invisible to the sensor during `[start, end)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occlusion {
    pub agent: u32,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub latency: f64,
    pub jitter: f64,
    pub drop_prob: f64,
    pub links: Vec<LinkSpec>,
    pub kills: Vec<NodeEvent>,
    pub revives: Vec<NodeEvent>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        let l = LinkModel::default();
        NetworkSpec { latency: l.latency, jitter: l.jitter, drop_prob: l.drop_prob, links: Vec::new(), kills: Vec::new(), revives: Vec::new() }
    }
}

impl NetworkSpec {
    pub fn link(&self) -> LinkModel {
        LinkModel { latency: self.latency, jitter: self.jitter, drop_prob: self.drop_prob }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub from: u32,
    pub to: u32,
    pub latency: f64,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub drop_prob: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEvent {
    pub node: u32,
    pub at: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSpec {
    pub local: LocalConfig,
    pub global: GlobalConfig,
    /// Collection window of the global phase in seconds; defaults to the step.
    pub window: Option<f64>,
    /// Node whose global tracks feed inference; defaults to the lowest live id.
    pub observer: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Envelope {
    pub radius: f64,
    pub pref_speed: f64,
    pub max_speed: f64,
    pub max_accel: f64,
}

impl Default for Envelope {
    fn default() -> Self {
        Envelope { radius: 0.3, pref_speed: 1.0, max_speed: 1.5, max_accel: 3.0 }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Scenario::from_json(&text)
    }

    pub fn goal_set(&self) -> Result<GoalSet, ScenarioError> {
        match &self.goals {
            GoalSpec::Points(ps) => {
                GoalSet::from_points(&ps.iter().map(|p| vec2(*p)).collect::<Vec<_>>()).map_err(|e| invalid("goals", e.to_string()))
            }
            GoalSpec::Grid { min, max, nx, ny } => sample_goal_grid(Bounds { min: vec2(*min), max: vec2(*max) }, *nx, *ny)
                .map_err(|e| invalid("goals.grid", e.to_string())),
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.step_dt + 1e-9).floor() as usize
    }

    /// Checks everything a run relies on and names the first offending field.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if !(self.step_dt > 0.0 && self.step_dt.is_finite()) {
            return Err(invalid("step_dt", "must be positive"));
        }
        if !(self.duration >= self.step_dt && self.duration.is_finite()) {
            return Err(invalid("duration", "must be at least one step"));
        }
        if !(self.arrival_radius > 0.0) {
            return Err(invalid("arrival_radius", "must be positive"));
        }
        let goals = self.goal_set()?;
        let goal_ok = |g: u32| goals.get(cfnav_core::GoalId(g)).is_some();

        let mut ids = BTreeSet::new();
        let sig_len = self.agents.first().map(|a| a.appearance.len());
        for (i, a) in self.agents.iter().enumerate() {
            let f = |name: &str| format!("agents[{i}].{name}");
            if !ids.insert(a.id) {
                return Err(invalid(f("id"), format!("duplicate agent id {}", a.id)));
            }
            for (name, v) in [("position", a.position), ("velocity", a.velocity)] {
                if !v.iter().all(|x| x.is_finite()) {
                    return Err(invalid(f(name), "must be finite"));
                }
            }
            for (name, v) in [("radius", a.radius), ("pref_speed", a.pref_speed), ("max_speed", a.max_speed), ("max_accel", a.max_accel)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(f(name), "must be positive"));
                }
            }
            if a.pref_speed > a.max_speed {
                return Err(invalid(f("pref_speed"), "exceeds max_speed"));
            }
            if vec2(a.velocity).length() > a.max_speed + 1e-9 {
                return Err(invalid(f("velocity"), "exceeds max_speed"));
            }
            if Some(a.appearance.len()) != sig_len {
                return Err(invalid(f("appearance"), "all agents need signatures of the same length"));
            }
            match &a.behavior {
                Behavior::Scripted { sequence } => {
                    if sequence.is_empty() {
                        return Err(invalid(f("behavior.sequence"), "must not be empty"));
                    }
                    for (k, s) in sequence.iter().enumerate() {
                        if !goal_ok(s.goal) {
                            return Err(invalid(f(&format!("behavior.sequence[{k}].goal")), format!("unknown goal {}", s.goal)));
                        }
                        if k > 0 && !(s.at >= sequence[k - 1].at) {
                            return Err(invalid(f(&format!("behavior.sequence[{k}].at")), "times must not decrease"));
                        }
                    }
                }
                Behavior::Planner { goals: gs, .. } => {
                    if gs.is_empty() {
                        return Err(invalid(f("behavior.goals"), "must not be empty"));
                    }
                    if let Some(g) = gs.iter().find(|g| !goal_ok(**g)) {
                        return Err(invalid(f("behavior.goals"), format!("unknown goal {g}")));
                    }
                }
                Behavior::RandomSwitcher { goals: gs, min_interval, max_interval } => {
                    if let Some(gs) = gs {
                        if gs.len() < 2 {
                            return Err(invalid(f("behavior.goals"), "needs at least two goals to switch between"));
                        }
                        if let Some(g) = gs.iter().find(|g| !goal_ok(**g)) {
                            return Err(invalid(f("behavior.goals"), format!("unknown goal {g}")));
                        }
                    } else if goals.len() < 2 {
                        return Err(invalid("goals", "random switchers need at least two goals"));
                    }
                    if !(*min_interval > 0.0 && max_interval >= min_interval && max_interval.is_finite()) {
                        return Err(invalid(f("behavior.min_interval"), "need 0 < min_interval <= max_interval"));
                    }
                }
            }
        }

        let mut sensor_ids = BTreeSet::new();
        for (i, s) in self.sensors.iter().enumerate() {
            let f = |name: &str| format!("sensors[{i}].{name}");
            if !sensor_ids.insert(s.id) {
                return Err(invalid(f("id"), format!("duplicate sensor id {}", s.id)));
            }
            if s.fov.len() < 3 || crate::sensors::polygon_area(&s.fov).abs() < 1e-9 {
                return Err(invalid(f("fov"), "needs a polygon of at least three vertices and positive area"));
            }
            if !s.fov.iter().flatten().all(|x| x.is_finite()) {
                return Err(invalid(f("fov"), "must be finite"));
            }
            if !(0.0..=1.0).contains(&s.detection_rate) {
                return Err(invalid(f("detection_rate"), "must lie in [0, 1]"));
            }
            for (name, v) in [("noise_sigma", s.noise_sigma), ("false_positive_rate", s.false_positive_rate), ("appearance_noise", s.appearance_noise)] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(invalid(f(name), "must be non-negative"));
                }
            }
            for (k, o) in s.occlusions.iter().enumerate() {
                if !ids.contains(&o.agent) {
                    return Err(invalid(f(&format!("occlusions[{k}].agent")), format!("unknown agent {}", o.agent)));
                }
                if !(o.end > o.start) {
                    return Err(invalid(f(&format!("occlusions[{k}].end")), "must be after start"));
                }
            }
        }

        self.network.link().validate().map_err(|e| invalid("network", e.to_string()))?;
        for (k, l) in self.network.links.iter().enumerate() {
            if !sensor_ids.contains(&l.from) || !sensor_ids.contains(&l.to) {
                return Err(invalid(format!("network.links[{k}]"), "refers to an unknown sensor"));
            }
            LinkModel { latency: l.latency, jitter: l.jitter, drop_prob: l.drop_prob }
                .validate()
                .map_err(|e| invalid(format!("network.links[{k}]"), e.to_string()))?;
        }
        for (name, events) in [("kills", &self.network.kills), ("revives", &self.network.revives)] {
            for (k, e) in events.iter().enumerate() {
                if !sensor_ids.contains(&e.node) {
                    return Err(invalid(format!("network.{name}[{k}].node"), format!("unknown sensor {}", e.node)));
                }
            }
        }
        if let Some(w) = self.tracker.window {
            if !(w > 0.0) {
                return Err(invalid("tracker.window", "must be positive"));
            }
        }
        if let Some(o) = self.tracker.observer {
            if !sensor_ids.contains(&o) {
                return Err(invalid("tracker.observer", format!("unknown sensor {o}")));
            }
        }
        let lc = &self.tracker.local;
        if lc.particles == 0 || !(lc.measurement_sigma > 0.0) || !(lc.fov_area > 0.0) {
            return Err(invalid("tracker.local", "particles, measurement_sigma and fov_area must be positive"));
        }
        if self.tracker.global.particles == 0 {
            return Err(invalid("tracker.global.particles", "must be positive"));
        }
        let e = &self.tracked_envelope;
        if !(e.radius > 0.0 && e.pref_speed > 0.0 && e.max_speed >= e.pref_speed && e.max_accel > 0.0) {
            return Err(invalid("tracked_envelope", "needs positive radius, speeds and acceleration with pref_speed <= max_speed"));
        }
        if !(self.inference.sigma_min > 0.0) {
            return Err(invalid("inference.sigma_min", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.inference.floor_prob) {
            return Err(invalid("inference.floor_prob", "must lie in [0, 1)"));
        }
        Ok(())
    }
}
