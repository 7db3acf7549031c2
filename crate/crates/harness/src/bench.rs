//! Timing of one inference iteration against agent and goal counts.

use std::collections::BTreeMap;
use std::time::Instant;

use cfnav_core::intent::InferenceSnapshot;
use cfnav_core::{
    infer_all, step_world, AgentId, AgentState, DVec2, GoalId, GoalSet, IntentConfig, IntentError, Neighborhood,
    WorldState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Half the side of the square room the benchmark agents walk in, meters.
pub const ROOM_HALF: f64 = 5.0;
const DT: f64 = 0.1;
const WARMUP_STEPS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub agents: usize,
    pub goals: usize,
    pub iterations: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Agents at random free spots of a square room, and goals evenly spaced on
/// a circle just inside its walls.
pub fn bench_world(agents: usize, goals: usize, seed: u64) -> (Vec<AgentState>, GoalSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states: Vec<AgentState> = Vec::with_capacity(agents);
    let span = ROOM_HALF - 0.5;
    while states.len() < agents {
        let p = DVec2::new(rng.random_range(-span..span), rng.random_range(-span..span));
        if states.iter().all(|a| a.position.distance(p) > 0.8) {
            states.push(AgentState::new(AgentId(states.len() as u32), p, 0.3, 1.0, 1.5, 3.0));
        }
    }
    let pts: Vec<DVec2> = (0..goals)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / goals as f64;
            DVec2::new(a.cos(), a.sin()) * (ROOM_HALF - 1.0)
        })
        .collect();
    (states, GoalSet::from_points(&pts).expect("distinct goals"))
}

/// Every agent walks the goals in turn with the planner, starting at a
/// different one.
struct Walkers {
    world: WorldState,
    targets: Vec<usize>,
}

impl Walkers {
    fn step(&mut self, goals: &GoalSet, cfg: &IntentConfig) -> Result<(), IntentError> {
        let ids: Vec<GoalId> = goals.ids().collect();
        let mut commands = BTreeMap::new();
        for (a, t) in self.world.agents.iter().zip(self.targets.iter_mut()) {
            let mut goal = goals.get(ids[*t]).expect("goal").position;
            if a.position.distance(goal) < 0.3 {
                *t = (*t + 1) % ids.len();
                goal = goals.get(ids[*t]).expect("goal").position;
            }
            let v = Neighborhood::build(a, &self.world.agents, &cfg.hrvo).plan(a, goal, DT).velocity;
            commands.insert(a.id, v);
        }
        self.world = step_world(&self.world, DT, &commands)?.world;
        Ok(())
    }
}

/// Median wall time of `iterations` inference steps while the agents walk
/// between the goals.
pub fn bench_inference(agents: usize, goals: usize, iterations: usize) -> Result<BenchResult, IntentError> {
    let (states, goal_set) = bench_world(agents, goals, 0);
    let cfg = IntentConfig::default();
    let targets = (0..agents).map(|i| i % goals.max(1)).collect();
    let mut walk = Walkers { world: WorldState::new(0.0, states)?, targets };
    let mut snap = InferenceSnapshot::empty(0.0);
    for _ in 0..WARMUP_STEPS {
        walk.step(&goal_set, &cfg)?;
        snap = infer_all(&snap, &walk.world.agents, &goal_set, DT, &cfg)?;
    }
    let mut times = Vec::with_capacity(iterations);
    for _ in 0..iterations.max(1) {
        walk.step(&goal_set, &cfg)?;
        let start = Instant::now();
        let next = infer_all(&snap, &walk.world.agents, &goal_set, DT, &cfg)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        snap = next;
    }
    times.sort_by(f64::total_cmp);
    Ok(BenchResult {
        agents,
        goals,
        iterations: times.len(),
        median_ms: times[times.len() / 2],
        min_ms: times[0],
        max_ms: times[times.len() - 1],
    })
}
