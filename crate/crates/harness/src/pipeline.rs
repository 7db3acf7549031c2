//! Step loop tying world, sensors, trackers, network, inference and planner
//! together.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use cfnav_core::intent::InferenceSnapshot;
use cfnav_core::netsim::{LinkModel, MessageBus, NetError};
use cfnav_core::ptrack::assoc::TrackReport;
use cfnav_core::ptrack::{global_estimate, GmmBelief, LocalTracker, PtrackError, SensorId, TrackSet};
use cfnav_core::world::StepDiagnostic;
use cfnav_core::{
    infer_all, plan_velocity, step_world, AgentId, AgentState, DVec2, GoalSet, IntentError, WorldError, WorldState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::Controller;
use crate::scenario::{Envelope, NodeEvent, Scenario, ScenarioError, SensorSpec};
use crate::sensors::{polygon_area, simulate_sensor};
use crate::trace::{AgentGoal, AgentMeta, Command, NodeRecord, Trace, TraceDiagnostic, TraceHeader, TraceRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Inference reads the true world state.
    #[default]
    InferenceOnly,
    /// Inference reads the observer node's global tracks.
    FullPipeline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::InferenceOnly => "inference-only",
            Mode::FullPipeline => "full-pipeline",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inference-only" | "inference" => Ok(Mode::InferenceOnly),
            "full-pipeline" | "full" => Ok(Mode::FullPipeline),
            other => Err(format!("unknown mode `{other}` (expected inference-only or full-pipeline)")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    pub seed: Option<u64>,
    /// Replaces the drop probability of every link.
    pub drop_prob: Option<f64>,
    /// Extra node failures on top of the scenario's own.
    pub kills: Vec<NodeEvent>,
}

impl RunOptions {
    pub fn new(mode: Mode) -> Self {
        RunOptions { mode, ..Default::default() }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("world: {0}")]
    World(#[from] WorldError),
    #[error("inference: {0}")]
    Intent(#[from] IntentError),
    #[error("tracker: {0}")]
    Tracker(#[from] PtrackError),
    #[error("network: {0}")]
    Net(#[from] NetError),
    #[error("option `{field}`: {reason}")]
    Option { field: &'static str, reason: String },
}

// stream tags
const WORLD: u64 = 1;
const SENSE: u64 = 2;
const LOCAL: u64 = 3;
const GLOBAL: u64 = 4;
const NET: u64 = 5;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of an independent random stream, so adding or removing one node or
/// agent leaves every other stream untouched.
pub fn stream_seed(seed: u64, tag: u64, id: u64) -> u64 {
    splitmix(splitmix(seed) ^ splitmix((tag << 32) | id))
}

/// Whether `node` is up at `time` given kill and revive events.
pub fn node_alive(node: u32, time: f64, kills: &[NodeEvent], revives: &[NodeEvent]) -> bool {
    let last = |evs: &[NodeEvent]| {
        evs.iter().filter(|e| e.node == node && e.at <= time + 1e-9).map(|e| e.at).fold(f64::NEG_INFINITY, f64::max)
    };
    let k = last(kills);
    k == f64::NEG_INFINITY || last(revives) >= k
}

/// Track reports seen as agents by the inference engine.
pub fn observed_agents(reports: &[TrackReport], env: &Envelope) -> Vec<AgentState> {
    let mut out: Vec<AgentState> = Vec::with_capacity(reports.len());
    for r in reports {
        let id = AgentId(r.id.0);
        if out.iter().any(|a| a.id == id) {
            continue;
        }
        out.push(AgentState::new(id, r.position, env.radius, env.pref_speed, env.max_speed, env.max_accel).with_velocity(r.velocity));
    }
    out
}

struct Node<'a> {
    spec: &'a SensorSpec,
    sense_rng: ChaCha8Rng,
    global_rng: ChaCha8Rng,
    local: LocalTracker,
    global: TrackSet,
    alive: bool,
    last_collect: f64,
}

/// Runs `scenario` and returns the full trace.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<Trace, RunError> {
    scenario.validate()?;
    let goals: GoalSet = scenario.goal_set()?;
    let seed = opts.seed.unwrap_or(scenario.seed);
    let dt = scenario.step_dt;
    if let Some(p) = opts.drop_prob {
        if !(0.0..=1.0).contains(&p) {
            return Err(RunError::Option { field: "drop_prob", reason: format!("{p} is outside [0, 1]") });
        }
    }
    for k in &opts.kills {
        if !scenario.sensors.iter().any(|s| s.id == k.node) {
            return Err(RunError::Option { field: "kill_node", reason: format!("no sensor with id {}", k.node) });
        }
    }
    let kills: Vec<NodeEvent> = scenario.network.kills.iter().chain(&opts.kills).copied().collect();
    let revives = &scenario.network.revives;

    let mut world = WorldState::new(0.0, scenario.agents.iter().map(|a| a.initial_state()).collect())?;
    let appearance: BTreeMap<AgentId, Vec<f64>> =
        scenario.agents.iter().map(|a| (AgentId(a.id), a.appearance.clone())).collect();
    let avoid: BTreeMap<AgentId, bool> = scenario.agents.iter().map(|a| (AgentId(a.id), a.avoid)).collect();
    let mut controllers: Vec<(AgentId, Controller, ChaCha8Rng)> = scenario
        .agents
        .iter()
        .map(|a| {
            (AgentId(a.id), Controller::new(&a.behavior, &goals), ChaCha8Rng::seed_from_u64(stream_seed(seed, WORLD, a.id as u64)))
        })
        .collect();

    let full = opts.mode == Mode::FullPipeline;
    let mut nodes: Vec<Node> = Vec::new();
    let mut bus: Option<MessageBus<GmmBelief>> = None;
    if full {
        let mut sensors: Vec<&SensorSpec> = scenario.sensors.iter().collect();
        sensors.sort_by_key(|s| s.id);
        for spec in sensors {
            let mut cfg = scenario.tracker.local;
            cfg.fov_area = polygon_area(&spec.fov).abs();
            nodes.push(Node {
                spec,
                sense_rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, SENSE, spec.id as u64)),
                global_rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, GLOBAL, spec.id as u64)),
                local: LocalTracker::new(SensorId(spec.id), -dt, cfg, stream_seed(seed, LOCAL, spec.id as u64)),
                global: TrackSet::new(-dt),
                alive: true,
                last_collect: -dt,
            });
        }
        let mut link = scenario.network.link();
        if let Some(p) = opts.drop_prob {
            link.drop_prob = p;
        }
        let mut b = MessageBus::new(nodes.iter().map(|n| SensorId(n.spec.id)), link, stream_seed(seed, NET, 0))?;
        for l in &scenario.network.links {
            let drop_prob = opts.drop_prob.unwrap_or(l.drop_prob);
            b.set_link(SensorId(l.from), SensorId(l.to), LinkModel { latency: l.latency, jitter: l.jitter, drop_prob })?;
        }
        bus = Some(b);
    }

    let header = TraceHeader {
        scenario: scenario.name.clone(),
        mode: opts.mode,
        seed,
        step_dt: dt,
        goals: goals.iter().cloned().collect(),
        agents: scenario.agents.iter().map(|a| AgentMeta { id: AgentId(a.id), appearance: a.appearance.clone() }).collect(),
        sensors: nodes.iter().map(|n| n.spec.id).collect(),
    };

    let mut snapshot = InferenceSnapshot::empty(-dt);
    let mut records = Vec::with_capacity(scenario.steps() + 1);
    let mut pending_diags: Vec<TraceDiagnostic> = Vec::new();
    let steps = scenario.steps();
    for step in 0..=steps {
        let t = world.time;
        let mut diagnostics = std::mem::take(&mut pending_diags);
        let mut node_records = Vec::with_capacity(nodes.len());
        let mut observer = None;

        let observations: Vec<AgentState> = if let Some(bus) = bus.as_mut() {
            let signature = |id: AgentId| appearance.get(&id).cloned().unwrap_or_default();
            for node in nodes.iter_mut() {
                let alive = node_alive(node.spec.id, t, &kills, revives);
                if alive != node.alive {
                    bus.set_alive(SensorId(node.spec.id), alive)?;
                    node.alive = alive;
                }
            }
            let mut own: Vec<Option<GmmBelief>> = Vec::with_capacity(nodes.len());
            for node in nodes.iter_mut() {
                if !node.alive {
                    own.push(None);
                    node_records.push(NodeRecord {
                        sensor: node.spec.id,
                        alive: false,
                        measurements: Vec::new(),
                        local: Vec::new(),
                        global: None,
                        received: 0,
                    });
                    continue;
                }
                let z = simulate_sensor(&world, signature, node.spec, &mut node.sense_rng);
                let out = node.local.step(&z, dt)?;
                diagnostics.extend(
                    out.diagnostics.into_iter().map(|d| TraceDiagnostic::Tracker { sensor: node.spec.id, detail: d }),
                );
                let report = bus.broadcast(SensorId(node.spec.id), &out.belief, t)?;
                diagnostics.extend(report.diagnostic.map(TraceDiagnostic::Bus));
                node_records.push(NodeRecord {
                    sensor: node.spec.id,
                    alive: true,
                    measurements: z,
                    local: out.tracks.reported(),
                    global: None,
                    received: 0,
                });
                own.push(Some(out.belief));
            }
            let window = scenario.tracker.window;
            for ((node, rec), own) in nodes.iter_mut().zip(node_records.iter_mut()).zip(own) {
                let Some(own) = own else { continue };
                // tumbling windows on the step cadence unless configured
                let w = window.unwrap_or(t - node.last_collect);
                node.last_collect = t;
                let received: Vec<GmmBelief> =
                    bus.collect(SensorId(node.spec.id), t, w)?.into_iter().map(|(_, b)| b).collect();
                let now = node.local.tracks.time;
                let out = global_estimate(&received, &own, &node.local.tracks, &node.global, now, &scenario.tracker.global, &mut node.global_rng);
                diagnostics.extend(
                    out.diagnostics.into_iter().map(|d| TraceDiagnostic::Tracker { sensor: node.spec.id, detail: d }),
                );
                rec.received = received.iter().filter(|b| b.sensor != own.sensor).count();
                rec.global = Some(out.tracks.reported());
                node.global = out.tracks;
            }
            let pick = scenario
                .tracker
                .observer
                .and_then(|id| node_records.iter().find(|r| r.sensor == id && r.alive))
                .or_else(|| node_records.iter().find(|r| r.alive));
            match pick {
                Some(r) => {
                    observer = Some(r.sensor);
                    observed_agents(r.global.as_deref().unwrap_or(&[]), &scenario.tracked_envelope)
                }
                None => {
                    diagnostics.push(TraceDiagnostic::NoObserver);
                    Vec::new()
                }
            }
        } else {
            world.agents.clone()
        };

        snapshot = infer_all(&snapshot, &observations, &goals, dt, &scenario.inference)?;
        diagnostics.extend(snapshot.diagnostics.iter().cloned().map(TraceDiagnostic::Intent));

        let mut true_goals = Vec::with_capacity(world.agents.len());
        let mut commands = Vec::with_capacity(world.agents.len());
        let mut command_map = BTreeMap::new();
        for (id, ctrl, rng) in controllers.iter_mut() {
            let agent = world.agent(*id).expect("controller per agent");
            let goal = ctrl.goal(agent, &goals, t, scenario.arrival_radius, rng);
            let target = goals.get(goal).expect("validated goal").position;
            let others: &[AgentState] = if avoid[id] { &world.agents } else { &[] };
            let sel = plan_velocity(agent, target, others, dt, &scenario.planner);
            true_goals.push(AgentGoal { agent: *id, goal });
            commands.push(Command { agent: *id, velocity: sel.velocity, status: sel.status });
            command_map.insert(*id, sel.velocity);
        }
        world.goal_assignment = true_goals.iter().map(|g| (g.agent, g.goal)).collect();

        records.push(TraceRecord {
            step,
            time: t,
            agents: world.agents.clone(),
            true_goals,
            commands,
            nodes: node_records,
            observer,
            beliefs: snapshot.beliefs.clone(),
            likelihoods: snapshot.likelihoods.clone(),
            counterfactuals: snapshot.counterfactuals,
            diagnostics,
        });

        if step < steps {
            let out = step_world(&world, dt, &command_map)?;
            for d in out.diagnostics {
                let StepDiagnostic::CommandClamped { agent, .. } = d;
                pending_diags.push(TraceDiagnostic::CommandClamped { agent });
            }
            world = out.world;
        }
    }
    Ok(Trace { header, records })
}

/// Velocity of `agent` in the record, if present.
pub fn agent_velocity(record: &TraceRecord, agent: AgentId) -> Option<DVec2> {
    record.agents.iter().find(|a| a.id == agent).map(|a| a.velocity)
}
