//! Goal inference by counterfactual simulation.
//!
//! For every tracked agent and every candidate goal the planner state of the
//! previous iteration is replayed for one step with the agent steering toward
//! that goal. The resulting velocity is the mean of an isotropic bivariate
//! normal; the density of the velocity actually observed is the goal
//! likelihood, folded into a per-agent posterior that becomes the next prior.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use glam::{DMat2, DVec2};
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hrvo::{plan_velocity, HrvoConfig, Neighborhood};
use crate::world::{AgentId, AgentState, Goal, GoalId, GoalSet, MotionParams, WorldError, WorldState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntentError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("unknown goal {0}")]
    UnknownGoal(GoalId),
    #[error("duplicate observation for {0}")]
    DuplicateObservation(AgentId),
    #[error("covariance is not symmetric positive definite")]
    NonSpdCovariance,
    #[error("likelihood missing for {0}")]
    MissingLikelihood(GoalId),
    #[error("likelihood for {0} is negative or not finite")]
    InvalidLikelihood(GoalId),
    #[error("prior is not normalised (sum {0})")]
    UnnormalisedPrior(f64),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("invalid goal grid: {0}")]
    InvalidGrid(&'static str),
    #[error("configuration: {0}")]
    Config(#[from] WorldError),
}

/// Where counterfactual simulations take an agent's motion envelope from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeSource {
    /// Use the speeds and acceleration carried by the observation.
    Observed,
    /// Use the running motion parameters fitted from past observations.
    Fitted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntentConfig {
    pub sigma_min: f64,
    pub sigma_speed_factor: f64,
    pub floor_prob: f64,
    /// Seconds an unobserved agent keeps its belief before it is dropped.
    pub grace_period: f64,
    pub ema_decay: f64,
    pub envelope: EnvelopeSource,
    pub hrvo: HrvoConfig,
}

impl Default for IntentConfig {
    fn default() -> Self {
        IntentConfig {
            sigma_min: 0.15,
            sigma_speed_factor: 0.25,
            floor_prob: 1e-3,
            grace_period: 2.0,
            ema_decay: MotionParams::DEFAULT_DECAY,
            envelope: EnvelopeSource::Observed,
            hrvo: HrvoConfig::default(),
        }
    }
}

impl IntentConfig {
    pub fn sigma_for(&self, params: &MotionParams) -> f64 {
        self.sigma_min.max(self.sigma_speed_factor * params.avg_speed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalBelief {
    pub agent: AgentId,
    pub posterior: BTreeMap<GoalId, f64>,
}

impl GoalBelief {
    pub fn uniform(agent: AgentId, goals: &GoalSet) -> Self {
        let p = 1.0 / goals.len() as f64;
        GoalBelief { agent, posterior: goals.ids().map(|g| (g, p)).collect() }
    }

    pub fn prob(&self, goal: GoalId) -> f64 {
        self.posterior.get(&goal).copied().unwrap_or(0.0)
    }

    /// Most probable goal; ties resolve to the smallest id.
    pub fn argmax(&self) -> Option<GoalId> {
        let mut best: Option<(GoalId, f64)> = None;
        for (&g, &p) in &self.posterior {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((g, p));
            }
        }
        best.map(|(g, _)| g)
    }

    /// Total mass of the `k` most probable goals.
    pub fn top_mass(&self, k: usize) -> f64 {
        let mut ps: Vec<f64> = self.posterior.values().copied().collect();
        ps.sort_by(|a, b| b.total_cmp(a));
        ps.iter().take(k).sum()
    }

    pub fn total(&self) -> f64 {
        self.posterior.values().sum()
    }

    fn matches(&self, goals: &GoalSet) -> bool {
        self.posterior.len() == goals.len() && goals.ids().all(|g| self.posterior.contains_key(&g))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub agent: AgentId,
    pub goal: GoalId,
    pub simulated_velocity: DVec2,
}

/// Bivariate normal over velocities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodModel {
    mean: DVec2,
    covariance: DMat2,
}

impl LikelihoodModel {
    pub fn new(mean: DVec2, covariance: DMat2) -> Result<Self, IntentError> {
        let (a, b, c, d) = (covariance.x_axis.x, covariance.y_axis.x, covariance.x_axis.y, covariance.y_axis.y);
        let symmetric = (b - c).abs() <= 1e-12 * (1.0 + b.abs().max(c.abs()));
        if !mean.is_finite() || !covariance.is_finite() || !symmetric || !(a > 0.0) || !(a * d - b * c > 0.0) {
            return Err(IntentError::NonSpdCovariance);
        }
        Ok(LikelihoodModel { mean, covariance })
    }

    pub fn isotropic(mean: DVec2, sigma: f64) -> Result<Self, IntentError> {
        LikelihoodModel::new(mean, DMat2::from_diagonal(DVec2::splat(sigma * sigma)))
    }

    pub fn mean(&self) -> DVec2 {
        self.mean
    }

    pub fn covariance(&self) -> DMat2 {
        self.covariance
    }

    pub fn log_density(&self, v: DVec2) -> f64 {
        let d = v - self.mean;
        let det = self.covariance.determinant();
        let maha = d.dot(self.covariance.inverse() * d);
        -0.5 * maha - (2.0 * core::f64::consts::PI).ln() - 0.5 * det.ln()
    }

    pub fn density(&self, v: DVec2) -> f64 {
        self.log_density(v).exp()
    }
}

/// Density of `observed` under `model`.
pub fn likelihood(observed: DVec2, model: &LikelihoodModel) -> f64 {
    model.density(observed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum IntentDiagnostic {
    /// Every likelihood was zero; the prior was kept.
    UninformativeEvidence { agent: AgentId },
    /// The goal set changed shape and the belief was reset to uniform.
    BeliefReset { agent: AgentId },
    /// Not observed for longer than the grace period.
    AgentDropped { agent: AgentId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeliefUpdate {
    pub belief: GoalBelief,
    pub diagnostic: Option<IntentDiagnostic>,
}

/// Bayes update with explicit renormalisation, followed by a probability floor.
pub fn update_belief(prior: &GoalBelief, likelihoods: &BTreeMap<GoalId, f64>, floor_prob: f64) -> Result<BeliefUpdate, IntentError> {
    let mut logs = BTreeMap::new();
    for &g in prior.posterior.keys() {
        let l = *likelihoods.get(&g).ok_or(IntentError::MissingLikelihood(g))?;
        if !(l >= 0.0) || !l.is_finite() {
            return Err(IntentError::InvalidLikelihood(g));
        }
        logs.insert(g, l.ln());
    }
    update_belief_log(prior, &logs, floor_prob)
}

/// Same as [`update_belief`] with log-likelihoods, which avoids underflow
/// when every density is tiny.
pub fn update_belief_log(prior: &GoalBelief, log_likelihoods: &BTreeMap<GoalId, f64>, floor_prob: f64) -> Result<BeliefUpdate, IntentError> {
    let total = prior.total();
    if (total - 1.0).abs() > 1e-6 {
        return Err(IntentError::UnnormalisedPrior(total));
    }
    let mut max = f64::NEG_INFINITY;
    for &g in prior.posterior.keys() {
        let l = *log_likelihoods.get(&g).ok_or(IntentError::MissingLikelihood(g))?;
        if l.is_nan() || l == f64::INFINITY {
            return Err(IntentError::InvalidLikelihood(g));
        }
        max = max.max(l);
    }
    if max == f64::NEG_INFINITY {
        return Ok(BeliefUpdate {
            belief: prior.clone(),
            diagnostic: Some(IntentDiagnostic::UninformativeEvidence { agent: prior.agent }),
        });
    }
    let mut posterior: BTreeMap<GoalId, f64> = prior
        .posterior
        .iter()
        .map(|(&g, &p)| (g, p * (log_likelihoods[&g] - max).exp()))
        .collect();
    let z: f64 = posterior.values().sum();
    if !(z > 0.0) {
        // the prior had no mass where the evidence points
        return Ok(BeliefUpdate {
            belief: prior.clone(),
            diagnostic: Some(IntentDiagnostic::UninformativeEvidence { agent: prior.agent }),
        });
    }
    for p in posterior.values_mut() {
        *p /= z;
    }
    apply_floor(&mut posterior, floor_prob);
    Ok(BeliefUpdate { belief: GoalBelief { agent: prior.agent, posterior }, diagnostic: None })
}

/// Raises every entry to at least `floor` while keeping the sum at one.
/// Entries above the floor are scaled down proportionally.
fn apply_floor(posterior: &mut BTreeMap<GoalId, f64>, floor: f64) {
    let n = posterior.len();
    if n == 0 || !(floor > 0.0) {
        return;
    }
    let floor = floor.min(1.0 / n as f64);
    let mut pinned = alloc::collections::BTreeSet::new();
    loop {
        let mut changed = false;
        for (g, p) in posterior.iter() {
            if !pinned.contains(g) && *p < floor {
                pinned.insert(*g);
                changed = true;
            }
        }
        let free_mass = 1.0 - floor * pinned.len() as f64;
        let free_sum: f64 = posterior.iter().filter(|(g, _)| !pinned.contains(*g)).map(|(_, p)| *p).sum();
        for (g, p) in posterior.iter_mut() {
            if pinned.contains(g) {
                *p = floor;
            } else if free_sum > 0.0 {
                *p *= free_mass / free_sum;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Replays one planner step of `world` with `agent` steering to `goal`.
///
/// All agents move simultaneously from the snapshot, so the agent's new
/// velocity depends only on the others' positions and velocities in it; their
/// goals do not enter a single step.
pub fn counterfactual_step(
    world: &WorldState,
    goals: &GoalSet,
    agent: AgentId,
    goal: GoalId,
    dt: f64,
    cfg: &HrvoConfig,
) -> Result<CounterfactualResult, IntentError> {
    if !(dt > 0.0) {
        return Err(IntentError::InvalidTimeStep(dt));
    }
    let subject = world.agent(agent).ok_or(IntentError::UnknownAgent(agent))?;
    let target = goals.get(goal).ok_or(IntentError::UnknownGoal(goal))?;
    let sel = plan_velocity(subject, target.position, &world.agents, dt, cfg);
    Ok(CounterfactualResult { agent, goal, simulated_velocity: sel.velocity })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalLikelihood {
    pub agent: AgentId,
    pub goal: GoalId,
    pub simulated_velocity: DVec2,
    pub density: f64,
}

#[derive(Clone, Debug, PartialEq)]
struct AgentMemory {
    state: AgentState,
    last_seen: f64,
    params: MotionParams,
    belief: GoalBelief,
}

/// Output of one inference iteration and the memory the next one needs.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceSnapshot {
    pub time: f64,
    pub beliefs: Vec<GoalBelief>,
    pub likelihoods: Vec<GoalLikelihood>,
    /// Number of counterfactual simulations run in this iteration.
    pub counterfactuals: usize,
    pub diagnostics: Vec<IntentDiagnostic>,
    memory: BTreeMap<AgentId, AgentMemory>,
}

impl InferenceSnapshot {
    pub fn empty(time: f64) -> Self {
        InferenceSnapshot {
            time,
            beliefs: Vec::new(),
            likelihoods: Vec::new(),
            counterfactuals: 0,
            diagnostics: Vec::new(),
            memory: BTreeMap::new(),
        }
    }

    pub fn belief(&self, agent: AgentId) -> Option<&GoalBelief> {
        self.beliefs.iter().find(|b| b.agent == agent)
    }

    pub fn likelihood(&self, agent: AgentId, goal: GoalId) -> Option<f64> {
        self.likelihoods.iter().find(|l| l.agent == agent && l.goal == goal).map(|l| l.density)
    }

    pub fn motion_params(&self, agent: AgentId) -> Option<MotionParams> {
        self.memory.get(&agent).map(|m| m.params)
    }

    /// The planner's view at this iteration: last observed states plus the
    /// currently most probable goal of each agent.
    pub fn planner_world(&self, cfg: &IntentConfig) -> WorldState {
        let agents = self
            .memory
            .values()
            .filter(|m| m.last_seen == self.time)
            .map(|m| envelope(&m.state, &m.params, cfg.envelope))
            .collect();
        let goal_assignment = self.memory.iter().filter_map(|(&a, m)| m.belief.argmax().map(|g| (a, g))).collect();
        WorldState { time: self.time, agents, goal_assignment }
    }
}

fn envelope(state: &AgentState, params: &MotionParams, source: EnvelopeSource) -> AgentState {
    match source {
        EnvelopeSource::Observed => state.clone(),
        EnvelopeSource::Fitted => {
            let mut s = state.clone();
            if params.max_observed_speed > 0.0 {
                s.pref_speed = params.avg_speed.max(0.1);
                s.max_speed = params.max_observed_speed.max(s.pref_speed);
                s.max_accel = params.max_observed_accel.max(0.1);
            }
            s
        }
    }
}

/// One full inference iteration over all observed agents and goals.
///
/// Agents seen for the first time start from a uniform prior and are only
/// updated once a previous state exists to simulate from.
pub fn infer_all(
    prev: &InferenceSnapshot,
    observations: &[AgentState],
    goals: &GoalSet,
    dt: f64,
    cfg: &IntentConfig,
) -> Result<InferenceSnapshot, IntentError> {
    if !(dt > 0.0) {
        return Err(IntentError::InvalidTimeStep(dt));
    }
    let now = prev.time + dt;
    let planner = prev.planner_world(cfg);

    let mut order: Vec<&AgentState> = observations.iter().collect();
    order.sort_by_key(|a| a.id);
    for w in order.windows(2) {
        if w[0].id == w[1].id {
            return Err(IntentError::DuplicateObservation(w[0].id));
        }
    }

    let mut next = InferenceSnapshot::empty(now);
    let mut logs = BTreeMap::new();
    for obs in order {
        if !obs.position.is_finite() || !obs.velocity.is_finite() {
            return Err(WorldError::NonFinite("observation").into());
        }
        let remembered = prev.memory.get(&obs.id);
        let mut belief = match remembered {
            Some(m) if m.belief.matches(goals) => m.belief.clone(),
            Some(_) => {
                next.diagnostics.push(IntentDiagnostic::BeliefReset { agent: obs.id });
                GoalBelief::uniform(obs.id, goals)
            }
            None => GoalBelief::uniform(obs.id, goals),
        };
        let mut params = remembered.map(|m| m.params).unwrap_or_default();

        if let Some(m) = remembered.filter(|m| m.last_seen == prev.time && m.belief.matches(goals)) {
            let sigma = cfg.sigma_for(&m.params);
            logs.clear();
            let subject = planner.agent(obs.id).ok_or(IntentError::UnknownAgent(obs.id))?;
            let hood = Neighborhood::build(subject, &planner.agents, &cfg.hrvo);
            for goal in goals.iter() {
                // same result as counterfactual_step, sharing the neighbourhood across goals
                let cf = CounterfactualResult {
                    agent: obs.id,
                    goal: goal.id,
                    simulated_velocity: hood.plan(subject, goal.position, dt).velocity,
                };
                next.counterfactuals += 1;
                let model = LikelihoodModel::isotropic(cf.simulated_velocity, sigma)?;
                let log_l = model.log_density(obs.velocity);
                logs.insert(goal.id, log_l);
                next.likelihoods.push(GoalLikelihood {
                    agent: obs.id,
                    goal: goal.id,
                    simulated_velocity: cf.simulated_velocity,
                    density: log_l.exp(),
                });
            }
            let update = update_belief_log(&belief, &logs, cfg.floor_prob)?;
            if let Some(d) = update.diagnostic {
                next.diagnostics.push(d);
            }
            belief = update.belief;
            params = m.params.update(obs.velocity, m.state.velocity, dt, cfg.ema_decay)?;
        }

        next.memory.insert(obs.id, AgentMemory { state: obs.clone(), last_seen: now, params, belief });
    }

    for (&id, m) in &prev.memory {
        if next.memory.contains_key(&id) {
            continue;
        }
        if now - m.last_seen <= cfg.grace_period + 1e-9 {
            next.memory.insert(id, m.clone());
        } else {
            next.diagnostics.push(IntentDiagnostic::AgentDropped { agent: id });
        }
    }
    next.beliefs = next.memory.values().map(|m| m.belief.clone()).collect();
    Ok(next)
}

/// Axis-aligned rectangle in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: DVec2,
    pub max: DVec2,
}

/// `nx * ny` goals at the centers of an even grid over `bounds`, numbered
/// row by row from the minimum corner.
pub fn sample_goal_grid(bounds: Bounds, nx: usize, ny: usize) -> Result<GoalSet, IntentError> {
    if nx == 0 || ny == 0 {
        return Err(IntentError::InvalidGrid("grid needs at least one cell"));
    }
    let size = bounds.max - bounds.min;
    if !size.is_finite() || !(size.x > 0.0 && size.y > 0.0) {
        return Err(IntentError::InvalidGrid("bounds are degenerate"));
    }
    let step = DVec2::new(size.x / nx as f64, size.y / ny as f64);
    let mut goals = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            goals.push(Goal {
                id: GoalId((j * nx + i) as u32),
                position: bounds.min + step * DVec2::new(i as f64 + 0.5, j as f64 + 0.5),
            });
        }
    }
    Ok(GoalSet::new(goals)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn goals3() -> GoalSet {
        GoalSet::from_points(&[DVec2::new(10.0, 0.0), DVec2::new(0.0, 10.0), DVec2::new(-10.0, 0.0)]).unwrap()
    }

    fn belief(ps: &[f64]) -> GoalBelief {
        GoalBelief { agent: AgentId(0), posterior: ps.iter().enumerate().map(|(i, &p)| (GoalId(i as u32), p)).collect() }
    }

    fn lmap(ls: &[f64]) -> BTreeMap<GoalId, f64> {
        ls.iter().enumerate().map(|(i, &l)| (GoalId(i as u32), l)).collect()
    }

    #[test]
    fn gaussian_peak_density() {
        let m = LikelihoodModel::isotropic(DVec2::new(0.3, -0.2), 0.15).unwrap();
        let expected = 1.0 / (2.0 * core::f64::consts::PI * 0.0225);
        assert!((likelihood(DVec2::new(0.3, -0.2), &m) - expected).abs() < 1e-9);
        assert!((expected - 7.0736).abs() < 1e-4);
        assert!(likelihood(DVec2::new(1e6, 0.0), &m) == 0.0);
        let a = likelihood(DVec2::new(0.5, -0.2), &m);
        let b = likelihood(DVec2::new(0.3, 0.0), &m);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn general_covariance_matches_closed_form() {
        let cov = DMat2::from_cols(DVec2::new(0.04, 0.01), DVec2::new(0.01, 0.09));
        let m = LikelihoodModel::new(DVec2::ZERO, cov).unwrap();
        let v = DVec2::new(0.1, -0.2);
        let det: f64 = 0.04 * 0.09 - 0.01 * 0.01;
        // inverse written out by hand
        let (ia, ib, id) = (0.09 / det, -0.01 / det, 0.04 / det);
        let q = v.x * v.x * ia + 2.0 * v.x * v.y * ib + v.y * v.y * id;
        let expected = (-0.5 * q).exp() / (2.0 * core::f64::consts::PI * det.sqrt());
        assert!((m.density(v) - expected).abs() < 1e-12);
    }

    #[test]
    fn non_spd_covariance_is_rejected() {
        let bad = DMat2::from_cols(DVec2::new(1.0, 2.0), DVec2::new(2.0, 1.0));
        assert_eq!(LikelihoodModel::new(DVec2::ZERO, bad), Err(IntentError::NonSpdCovariance));
        let asym = DMat2::from_cols(DVec2::new(1.0, 0.5), DVec2::new(0.0, 1.0));
        assert!(LikelihoodModel::new(DVec2::ZERO, asym).is_err());
    }

    #[test]
    fn uniform_prior_update() {
        let out = update_belief(&belief(&[1.0 / 3.0; 3]), &lmap(&[0.6, 0.3, 0.1]), 1e-3).unwrap();
        for (i, e) in [0.6, 0.3, 0.1].iter().enumerate() {
            assert!((out.belief.prob(GoalId(i as u32)) - e).abs() < 1e-12);
        }
        assert!(out.diagnostic.is_none());
    }

    #[test]
    fn equal_likelihoods_keep_prior() {
        let prior = belief(&[0.5, 0.3, 0.2]);
        let out = update_belief(&prior, &lmap(&[2.0, 2.0, 2.0]), 1e-3).unwrap();
        for g in 0..3 {
            assert!((out.belief.prob(GoalId(g)) - prior.prob(GoalId(g))).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_likelihoods_keep_prior_with_diagnostic() {
        let prior = belief(&[0.5, 0.3, 0.2]);
        let out = update_belief(&prior, &lmap(&[0.0, 0.0, 0.0]), 1e-3).unwrap();
        assert_eq!(out.belief, prior);
        assert!(matches!(out.diagnostic, Some(IntentDiagnostic::UninformativeEvidence { .. })));
        assert!(update_belief(&prior, &lmap(&[1.0, 1.0]), 1e-3).is_err());
    }

    #[test]
    fn repeated_evidence_saturates_at_floor_complement() {
        let floor = 1e-3;
        let mut b = belief(&[0.98, 0.01, 0.01]);
        let mut last = b.prob(GoalId(0));
        // by hand: odds of goal 0 double each step, the rest pin at the floor
        for _ in 0..40 {
            b = update_belief(&b, &lmap(&[2.0, 1.0, 1.0]), floor).unwrap().belief;
            let p = b.prob(GoalId(0));
            assert!(p >= last - 1e-15);
            last = p;
        }
        assert!((last - (1.0 - 2.0 * floor)).abs() < 1e-12);
        assert!((b.prob(GoalId(1)) - floor).abs() < 1e-15);
    }

    #[test]
    fn floor_is_exact_after_renormalisation() {
        let mut post = lmap(&[0.9995, 0.0004, 0.0001]);
        apply_floor(&mut post, 1e-3);
        assert!((post[&GoalId(1)] - 1e-3).abs() < 1e-15);
        assert!((post[&GoalId(2)] - 1e-3).abs() < 1e-15);
        assert!((post.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn walker(id: u32, x: f64, y: f64, v: DVec2) -> AgentState {
        AgentState::new(AgentId(id), DVec2::new(x, y), 0.4, 1.0, 1.0, 20.0).with_velocity(v)
    }

    #[test]
    fn unobstructed_counterfactual_is_preferred() {
        let world = WorldState::new(0.0, vec![walker(0, 0.0, 0.0, DVec2::X)]).unwrap();
        let goals = goals3();
        let cf = counterfactual_step(&world, &goals, AgentId(0), GoalId(0), 0.1, &HrvoConfig::default()).unwrap();
        assert_eq!(cf.simulated_velocity, DVec2::new(1.0, 0.0));
        let at_goal = WorldState::new(0.0, vec![walker(0, 10.0, 0.0, DVec2::ZERO)]).unwrap();
        let cf = counterfactual_step(&at_goal, &goals, AgentId(0), GoalId(0), 0.1, &HrvoConfig::default()).unwrap();
        assert_eq!(cf.simulated_velocity, DVec2::ZERO);
        assert!(matches!(
            counterfactual_step(&world, &goals, AgentId(3), GoalId(0), 0.1, &HrvoConfig::default()),
            Err(IntentError::UnknownAgent(_))
        ));
        assert!(matches!(
            counterfactual_step(&world, &goals, AgentId(0), GoalId(7), 0.1, &HrvoConfig::default()),
            Err(IntentError::UnknownGoal(_))
        ));
    }

    #[test]
    fn first_snapshot_is_uniform() {
        let goals = goals3();
        let obs = vec![walker(0, 0.0, 0.0, DVec2::X), walker(1, 3.0, 3.0, DVec2::Y)];
        let snap = infer_all(&InferenceSnapshot::empty(0.0), &obs, &goals, 0.1, &IntentConfig::default()).unwrap();
        assert_eq!(snap.beliefs.len(), 2);
        for b in &snap.beliefs {
            for g in goals.ids() {
                assert_eq!(b.prob(g), 1.0 / 3.0);
            }
        }
        assert_eq!(snap.counterfactuals, 0);
    }

    #[test]
    fn simulation_count_is_agents_times_goals() {
        let goals = goals3();
        let obs: Vec<AgentState> = (0..5).map(|i| walker(i, i as f64 * 2.0 - 4.0, 0.0, DVec2::ZERO)).collect();
        let cfg = IntentConfig::default();
        let s1 = infer_all(&InferenceSnapshot::empty(0.0), &obs, &goals, 0.1, &cfg).unwrap();
        let s2 = infer_all(&s1, &obs, &goals, 0.1, &cfg).unwrap();
        assert_eq!(s2.counterfactuals, 15);
        assert_eq!(s2.likelihoods.len(), 15);
    }

    #[test]
    fn symmetric_stationary_agent_stays_uniform() {
        let goals = GoalSet::from_points(&[
            DVec2::new(10.0, 0.0),
            DVec2::new(-5.0, 75f64.sqrt()),
            DVec2::new(-5.0, -(75f64.sqrt())),
        ])
        .unwrap();
        let obs = vec![AgentState::new(AgentId(0), DVec2::ZERO, 0.4, 1.0, 1.0, 1.0)];
        let cfg = IntentConfig::default();
        let mut snap = InferenceSnapshot::empty(0.0);
        for _ in 0..10 {
            snap = infer_all(&snap, &obs, &goals, 0.1, &cfg).unwrap();
        }
        for g in goals.ids() {
            assert!((snap.beliefs[0].prob(g) - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn vanished_agents_are_dropped_after_grace() {
        let goals = goals3();
        let cfg = IntentConfig::default();
        let obs = vec![walker(0, 0.0, 0.0, DVec2::X), walker(1, 5.0, 0.0, DVec2::ZERO)];
        let mut snap = infer_all(&InferenceSnapshot::empty(0.0), &obs, &goals, 0.1, &cfg).unwrap();
        let only0 = vec![obs[0].clone()];
        for _ in 0..20 {
            snap = infer_all(&snap, &only0, &goals, 0.1, &cfg).unwrap();
            assert_eq!(snap.beliefs.len(), 2);
        }
        snap = infer_all(&snap, &only0, &goals, 0.1, &cfg).unwrap();
        assert_eq!(snap.beliefs.len(), 1);
        assert!(snap.diagnostics.contains(&IntentDiagnostic::AgentDropped { agent: AgentId(1) }));
    }

    #[test]
    fn grid_layouts() {
        let b = Bounds { min: DVec2::new(-11.0, -1.0), max: DVec2::new(-1.0, 4.0) };
        let g = sample_goal_grid(b, 10, 10).unwrap();
        assert_eq!(g.len(), 100);
        let p0 = g.get(GoalId(0)).unwrap().position;
        let p1 = g.get(GoalId(1)).unwrap().position;
        let p10 = g.get(GoalId(10)).unwrap().position;
        assert!(((p1 - p0).x - 1.0).abs() < 1e-12);
        assert!(((p10 - p0).y - 0.5).abs() < 1e-12);

        let one = sample_goal_grid(Bounds { min: DVec2::ZERO, max: DVec2::new(2.0, 4.0) }, 1, 1).unwrap();
        assert_eq!(one.get(GoalId(0)).unwrap().position, DVec2::new(1.0, 2.0));

        let four = sample_goal_grid(Bounds { min: DVec2::ZERO, max: DVec2::ONE }, 2, 2).unwrap();
        let pts: Vec<DVec2> = four.iter().map(|g| g.position).collect();
        assert_eq!(pts, vec![DVec2::new(0.25, 0.25), DVec2::new(0.75, 0.25), DVec2::new(0.25, 0.75), DVec2::new(0.75, 0.75)]);

        assert!(sample_goal_grid(b, 0, 3).is_err());
        assert!(sample_goal_grid(Bounds { min: DVec2::ZERO, max: DVec2::new(0.0, 1.0) }, 2, 2).is_err());
    }

    mod props {
        use super::*;
        use crate::world::step_world;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn posterior_stays_normalised(prior in proptest::collection::vec(0.01..1.0f64, 2..8), ls in proptest::collection::vec(0.0..50.0f64, 8)) {
                let s: f64 = prior.iter().sum();
                let p: Vec<f64> = prior.iter().map(|x| x / s).collect();
                let b = belief(&p);
                let out = update_belief(&b, &lmap(&ls[..p.len()]), 1e-3).unwrap();
                prop_assert!((out.belief.total() - 1.0).abs() < 1e-9);
                for v in out.belief.posterior.values() {
                    prop_assert!(*v >= 1e-3 - 1e-15 && *v <= 1.0);
                }
            }

            #[test]
            fn constant_evidence_is_monotone(ls in proptest::collection::vec(0.01..5.0f64, 3)) {
                let best = (0..3).max_by(|&a, &b| ls[a].total_cmp(&ls[b])).unwrap();
                let mut b = belief(&[1.0 / 3.0; 3]);
                let mut last = b.prob(GoalId(best as u32));
                for _ in 0..30 {
                    b = update_belief(&b, &lmap(&ls), 1e-3).unwrap().belief;
                    let p = b.prob(GoalId(best as u32));
                    prop_assert!(p >= last - 1e-12);
                    last = p;
                }
            }

            #[test]
            fn scripted_agent_converges_within_five_iterations(
                bearings in proptest::collection::vec(0.0..360.0f64, 3),
                truth in 0usize..3,
            ) {
                // keep counterfactual velocities of distinct goals >= 4 sigma apart
                let mut sorted = bearings.clone();
                sorted.sort_by(f64::total_cmp);
                let gaps = [sorted[1] - sorted[0], sorted[2] - sorted[1], 360.0 - sorted[2] + sorted[0]];
                prop_assume!(gaps.iter().all(|g| *g >= 40.0));
                let pts: Vec<DVec2> = bearings.iter().map(|d| {
                    let r = d.to_radians();
                    DVec2::new(r.cos(), r.sin()) * 20.0
                }).collect();
                let goals = GoalSet::from_points(&pts).unwrap();
                let cfg = IntentConfig::default();
                let mut world = WorldState::new(0.0, vec![AgentState::new(AgentId(0), DVec2::ZERO, 0.4, 1.0, 1.2, 10.0)]).unwrap();
                let mut snap = infer_all(&InferenceSnapshot::empty(0.0), &world.agents, &goals, 0.1, &cfg).unwrap();
                for _ in 0..5 {
                    let a = &world.agents[0];
                    let v = plan_velocity(a, pts[truth], &world.agents, 0.1, &cfg.hrvo).velocity;
                    world = step_world(&world, 0.1, &BTreeMap::from([(a.id, v)])).unwrap().world;
                    snap = infer_all(&snap, &world.agents, &goals, 0.1, &cfg).unwrap();
                }
                prop_assert_eq!(snap.beliefs[0].argmax(), Some(GoalId(truth as u32)));
            }
        }
    }
}
