//! Hybrid reciprocal velocity obstacles and velocity selection.
//!
//! A velocity obstacle for agent A induced by B is the cone of A-velocities
//! that lead to collision, with apex at B's velocity and legs tangent to the
//! disc of radius `r_A + r_B` centered at the relative position. The
//! reciprocal variant moves the apex to the mean of both velocities. The
//! hybrid cone takes one leg from each: if A's relative velocity lies left of
//! the centerline, the left leg is the reciprocal one and the right leg the
//! plain one (and the mirror image otherwise), so passing on the side A is
//! already heading for is cheaper than crossing over.

use alloc::vec::Vec;

use glam::DVec2;
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{clockwise_angle, det, ray_circle, ray_distance, ray_ray, Disc, EPSILON};
use crate::world::{AgentId, AgentState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HrvoError {
    #[error("agents {source_agent} and {obstacle} overlap ({distance} <= {combined_radius})")]
    Overlap { source_agent: AgentId, obstacle: AgentId, distance: f64, combined_radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HrvoConfig {
    /// Only agents closer than this (center to center) are treated as obstacles.
    pub neighbor_dist: f64,
    /// At most this many nearest neighbours are considered.
    pub max_neighbors: usize,
}

impl Default for HrvoConfig {
    fn default() -> Self {
        HrvoConfig { neighbor_dist: 10.0, max_neighbors: 10 }
    }
}

/// Open cone in velocity space bounded by two rays from `apex`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HrvoRegion {
    pub apex: DVec2,
    pub left_leg: DVec2,
    pub right_leg: DVec2,
    pub source_agent: AgentId,
    pub obstacle_agent: AgentId,
}

impl HrvoRegion {
    /// Depth of `v` inside the cone: distance to the nearest boundary ray,
    /// zero on or outside the boundary.
    pub fn penetration(&self, v: DVec2) -> f64 {
        let q = v - self.apex;
        if det(self.right_leg, q) > 0.0 && det(q, self.left_leg) > 0.0 {
            ray_distance(self.apex, self.left_leg, v).min(ray_distance(self.apex, self.right_leg, v))
        } else {
            0.0
        }
    }

    /// Strict containment with a small tolerance so computed boundary points
    /// count as outside.
    pub fn contains(&self, v: DVec2) -> bool {
        self.penetration(v) > EPSILON
    }

    pub fn mirrored_y(&self) -> HrvoRegion {
        let m = |v: DVec2| DVec2::new(v.x, -v.y);
        HrvoRegion {
            apex: m(self.apex),
            left_leg: m(self.right_leg),
            right_leg: m(self.left_leg),
            ..*self
        }
    }
}

pub fn build_hrvo(agent: &AgentState, other: &AgentState) -> Result<HrvoRegion, HrvoError> {
    let rel_pos = other.position - agent.position;
    let dist = rel_pos.length();
    let combined = agent.radius + other.radius;
    if dist <= combined {
        return Err(HrvoError::Overlap {
            source_agent: agent.id,
            obstacle: other.id,
            distance: dist,
            combined_radius: combined,
        });
    }
    let axis = rel_pos / dist;
    let half = (combined / dist).asin();
    let (s, c) = half.sin_cos();
    let right_leg = DVec2::new(axis.x * c + axis.y * s, axis.y * c - axis.x * s);
    let left_leg = DVec2::new(axis.x * c - axis.y * s, axis.y * c + axis.x * s);

    let vo_apex = other.velocity;
    let rvo_apex = 0.5 * (agent.velocity + other.velocity);
    let rel_vel = agent.velocity - other.velocity;
    // Intersect the reciprocal leg on A's side with the opposite plain leg.
    let apex = if det(rel_pos, rel_vel) > 0.0 {
        line_intersection(rvo_apex, left_leg, vo_apex, right_leg)
    } else {
        line_intersection(rvo_apex, right_leg, vo_apex, left_leg)
    }
    .unwrap_or(rvo_apex);

    Ok(HrvoRegion { apex, left_leg, right_leg, source_agent: agent.id, obstacle_agent: other.id })
}

fn line_intersection(p: DVec2, dp: DVec2, q: DVec2, dq: DVec2) -> Option<DVec2> {
    let denom = det(dp, dq);
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = det(q - p, dq) / denom;
    Some(p + dp * t)
}

/// Velocity toward `goal` at preferred speed, slowed so the agent lands on
/// the goal when it is less than one step away.
pub fn preferred_velocity(agent: &AgentState, goal: DVec2, dt: f64) -> DVec2 {
    let to_goal = goal - agent.position;
    let dist = to_goal.length();
    if dist <= 0.0 {
        return DVec2::ZERO;
    }
    let speed = agent.pref_speed.min(dist / dt);
    to_goal * (speed / dist)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionStatus {
    /// The preferred velocity was reachable and outside every region.
    Unconstrained,
    /// Best feasible velocity differs from the preferred one.
    Feasible,
    /// No feasible velocity exists; the result minimises the deepest penetration.
    Constrained,
    /// The agent overlaps a neighbour and is moving straight away from it.
    Separating,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityCandidate {
    pub velocity: DVec2,
    pub feasible: bool,
    pub dist_to_preferred: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocitySelection {
    pub velocity: DVec2,
    pub preferred: DVec2,
    pub status: SelectionStatus,
}

struct Scratch<'a> {
    regions: &'a [HrvoRegion],
    accel: Disc,
    speed: Disc,
    preferred: DVec2,
    reference: DVec2,
    best: Option<VelocityCandidate>,
    best_angle: f64,
}

impl Scratch<'_> {
    fn reachable(&self, v: DVec2) -> bool {
        self.accel.contains(v, EPSILON) && self.speed.contains(v, EPSILON)
    }

    fn offer(&mut self, v: DVec2) {
        if !v.is_finite() {
            return;
        }
        let d = (v - self.preferred).length();
        let tie_tol = 1e-12 * d.max(1.0);
        if let Some(best) = &self.best {
            if d > best.dist_to_preferred + tie_tol {
                return;
            }
        }
        if !self.reachable(v) || self.regions.iter().any(|r| r.contains(v)) {
            return;
        }
        let angle = if d > 0.0 { clockwise_angle(self.reference, v - self.preferred) } else { 0.0 };
        let better = match &self.best {
            None => true,
            Some(best) => d < best.dist_to_preferred - tie_tol || angle < self.best_angle,
        };
        if better {
            self.best = Some(VelocityCandidate { velocity: v, feasible: true, dist_to_preferred: d });
            self.best_angle = angle;
        }
    }
}

/// Picks the reachable velocity outside every region that is closest to the
/// preferred velocity. Ties go to the smaller clockwise deviation.
///
/// Candidates are the preferred velocity, its projections onto every leg and
/// onto the reachable-set boundary, and all pairwise boundary intersections,
/// which together contain the exact minimiser.
pub fn select_velocity(agent: &AgentState, goal: DVec2, obstacles: &[HrvoRegion], dt: f64) -> VelocitySelection {
    let preferred = preferred_velocity(agent, goal, dt);
    let (accel, speed) = agent.reachable(dt);
    let reference = if preferred.length() > 0.0 { preferred } else { DVec2::X };
    let mut s = Scratch { regions: obstacles, accel, speed, preferred, reference, best: None, best_angle: 0.0 };

    s.offer(preferred);
    if s.best.is_some() {
        return VelocitySelection { velocity: preferred, preferred, status: SelectionStatus::Unconstrained };
    }

    let circles = [accel, speed];
    for c in &circles {
        s.offer(c.boundary_point_toward(preferred));
    }
    let (pts, n) = crate::geometry::circle_circle(&accel, &speed);
    for p in &pts[..n] {
        s.offer(*p);
    }
    let legs: Vec<(DVec2, DVec2)> = obstacles
        .iter()
        .flat_map(|r| [(r.apex, r.left_leg), (r.apex, r.right_leg)])
        .collect();
    for r in obstacles {
        s.offer(r.apex);
    }
    for &(o, d) in &legs {
        let t = (preferred - o).dot(d).max(0.0);
        s.offer(o + d * t);
        for c in &circles {
            let (ts, k) = ray_circle(o, d, c);
            for t in &ts[..k] {
                s.offer(o + d * *t);
            }
        }
    }
    // an intersection lies on both legs, so it is no closer to the preferred
    // velocity than either leg; legs beyond the best distance so far can be skipped
    let bound = s.best.map_or(f64::INFINITY, |b| b.dist_to_preferred + 1e-9 * b.dist_to_preferred.max(1.0));
    let near: Vec<usize> = (0..legs.len()).filter(|&i| ray_distance(legs[i].0, legs[i].1, preferred) <= bound).collect();
    for (a, &i) in near.iter().enumerate() {
        // legs 2k and 2k+1 share an apex, already offered
        for &j in &near[a + 1..] {
            if i / 2 == j / 2 {
                continue;
            }
            if let Some(p) = ray_ray(legs[i].0, legs[i].1, legs[j].0, legs[j].1) {
                s.offer(p);
            }
        }
    }

    if let Some(best) = s.best {
        return VelocitySelection { velocity: best.velocity, preferred, status: SelectionStatus::Feasible };
    }
    least_penetration(agent, preferred, obstacles, dt, &legs)
}

fn least_penetration(agent: &AgentState, preferred: DVec2, obstacles: &[HrvoRegion], dt: f64, legs: &[(DVec2, DVec2)]) -> VelocitySelection {
    let (accel, speed) = agent.reachable(dt);
    let mut pool: Vec<DVec2> = Vec::with_capacity(80 + legs.len() * 4);
    pool.push(agent.clamp_to_envelope(preferred, dt));
    pool.push(accel.center);
    const RING: usize = 32;
    for k in 0..RING {
        let a = 2.0 * core::f64::consts::PI * (k as f64) / (RING as f64);
        let dir = DVec2::new(a.cos(), a.sin());
        pool.push(agent.clamp_to_envelope(accel.center + dir * accel.radius, dt));
        pool.push(agent.clamp_to_envelope(dir * speed.radius, dt));
    }
    for &(o, d) in legs {
        for c in [&accel, &speed] {
            let (ts, k) = ray_circle(o, d, c);
            for t in &ts[..k] {
                pool.push(o + d * *t);
            }
        }
    }
    let reference = if preferred.length() > 0.0 { preferred } else { DVec2::X };
    let mut best = (f64::INFINITY, f64::INFINITY, f64::INFINITY, accel.center);
    for v in pool {
        if !(accel.contains(v, EPSILON) && speed.contains(v, EPSILON)) {
            continue;
        }
        let depth = obstacles.iter().map(|r| r.penetration(v)).fold(0.0, f64::max);
        let d = (v - preferred).length();
        let angle = if d > 0.0 { clockwise_angle(reference, v - preferred) } else { 0.0 };
        if (depth, d, angle) < (best.0, best.1, best.2) {
            best = (depth, d, angle, v);
        }
    }
    VelocitySelection { velocity: best.3, preferred, status: SelectionStatus::Constrained }
}

/// Regions an agent sees from its nearest neighbours. Independent of the
/// goal, so one neighbourhood serves every goal of a step.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    pub regions: Vec<HrvoRegion>,
    /// Sum of unit vectors away from overlapping neighbours, if any overlap.
    pub escape: Option<DVec2>,
}

impl Neighborhood {
    pub fn build<'a, I>(agent: &AgentState, others: I, cfg: &HrvoConfig) -> Neighborhood
    where
        I: IntoIterator<Item = &'a AgentState>,
    {
        let mut neighbours: Vec<(f64, &AgentState)> = others
            .into_iter()
            .filter(|o| o.id != agent.id)
            .map(|o| ((o.position - agent.position).length(), o))
            .filter(|(d, _)| *d < cfg.neighbor_dist)
            .collect();
        neighbours.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
        neighbours.truncate(cfg.max_neighbors);

        let mut regions = Vec::with_capacity(neighbours.len());
        let mut away = DVec2::ZERO;
        let mut overlapping = false;
        for (_, other) in &neighbours {
            match build_hrvo(agent, other) {
                Ok(r) => regions.push(r),
                Err(_) => {
                    overlapping = true;
                    away += (agent.position - other.position).normalize_or(DVec2::X);
                }
            }
        }
        Neighborhood { regions, escape: overlapping.then_some(away) }
    }

    /// Planner step towards `goal` inside this neighbourhood.
    pub fn plan(&self, agent: &AgentState, goal: DVec2, dt: f64) -> VelocitySelection {
        if let Some(away) = self.escape {
            let preferred = preferred_velocity(agent, goal, dt);
            let dir = away.normalize_or(DVec2::X);
            let velocity = agent.clamp_to_envelope(dir * agent.max_speed, dt);
            return VelocitySelection { velocity, preferred, status: SelectionStatus::Separating };
        }
        select_velocity(agent, goal, &self.regions, dt)
    }
}

/// One planner step for `agent` heading to `goal` among `others`.
///
/// Builds regions against the nearest neighbours and selects a velocity. If
/// the agent already overlaps a neighbour, it moves directly away from the
/// intruders at full speed (clamped to its envelope).
pub fn plan_velocity<'a, I>(agent: &AgentState, goal: DVec2, others: I, dt: f64, cfg: &HrvoConfig) -> VelocitySelection
where
    I: IntoIterator<Item = &'a AgentState>,
{
    Neighborhood::build(agent, others, cfg).plan(agent, goal, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{step_world, WorldState};
    use alloc::collections::BTreeMap;
    use alloc::vec;

    fn agent(id: u32, x: f64, y: f64) -> AgentState {
        AgentState::new(AgentId(id), DVec2::new(x, y), 0.5, 1.0, 1.5, 10.0)
    }

    #[test]
    fn static_pair_gives_symmetric_cone() {
        let a = agent(0, 0.0, 0.0);
        let b = agent(1, 4.0, 0.0);
        let r = build_hrvo(&a, &b).unwrap();
        assert!(r.apex.length() < 1e-12);
        let half = (0.25f64).asin();
        assert!((r.left_leg.y.atan2(r.left_leg.x) - half).abs() < 1e-12);
        assert!((r.right_leg.y.atan2(r.right_leg.x) + half).abs() < 1e-12);
        assert!((r.left_leg.length() - 1.0).abs() < 1e-12);
        assert!(r.contains(DVec2::new(1.0, 0.0)));
        assert!(!r.contains(DVec2::new(1.0, 0.5)));
        assert!(!r.contains(DVec2::new(-1.0, 0.0)));
    }

    #[test]
    fn mirrored_inputs_give_mirrored_region() {
        let mut a = agent(0, 0.3, 0.7);
        a.velocity = DVec2::new(0.6, 0.2);
        let mut b = agent(1, 3.0, 2.0);
        b.velocity = DVec2::new(-0.4, 0.1);
        let m = |s: &AgentState| {
            let mut s = s.clone();
            s.position.y = -s.position.y;
            s.velocity.y = -s.velocity.y;
            s
        };
        let r = build_hrvo(&a, &b).unwrap();
        let rm = build_hrvo(&m(&a), &m(&b)).unwrap();
        let expect = r.mirrored_y();
        assert!((rm.apex - expect.apex).length() < 1e-12);
        assert!((rm.left_leg - expect.left_leg).length() < 1e-12);
        assert!((rm.right_leg - expect.right_leg).length() < 1e-12);
    }

    #[test]
    fn overlapping_agents_are_degenerate() {
        let a = agent(0, 0.0, 0.0);
        let b = agent(1, 0.8, 0.0);
        assert!(matches!(build_hrvo(&a, &b), Err(HrvoError::Overlap { .. })));
        let sel = plan_velocity(&a, DVec2::new(5.0, 0.0), [&b], 0.1, &HrvoConfig::default());
        assert_eq!(sel.status, SelectionStatus::Separating);
        assert!(sel.velocity.x < 0.0);
    }

    #[test]
    fn unobstructed_returns_preferred() {
        let a = agent(0, 0.0, 0.0).with_velocity(DVec2::new(1.0, 0.0));
        let sel = select_velocity(&a, DVec2::new(50.0, 0.0), &[], 0.1);
        assert_eq!(sel.velocity, DVec2::new(1.0, 0.0));
        assert_eq!(sel.status, SelectionStatus::Unconstrained);
    }

    #[test]
    fn stops_on_goal() {
        let a = agent(0, 0.0, 0.0);
        let sel = select_velocity(&a, DVec2::new(0.05, 0.0), &[], 0.1);
        assert!((sel.velocity - DVec2::new(0.5, 0.0)).length() < 1e-12);
    }

    #[test]
    fn blocked_preferred_is_projected_onto_a_leg() {
        let a = agent(0, 0.0, 0.0);
        let b = agent(1, 4.0, 0.0);
        let r = build_hrvo(&a, &b).unwrap();
        let sel = select_velocity(&a, DVec2::new(10.0, 0.0), &[r], 0.1);
        assert_eq!(sel.status, SelectionStatus::Feasible);
        assert!(!r.contains(sel.velocity));
        // symmetric cone: the clockwise tie-break picks the right leg
        assert!(sel.velocity.y < 0.0);
        let expected = r.right_leg * DVec2::X.dot(r.right_leg);
        assert!((sel.velocity - expected).length() < 1e-9);
    }

    #[test]
    fn head_on_pair_passes_without_collision() {
        let mut world = WorldState::new(
            0.0,
            vec![agent(0, -5.0, 0.0).with_velocity(DVec2::X), agent(1, 5.0, 0.0).with_velocity(DVec2::NEG_X)],
        )
        .unwrap();
        let goals = [DVec2::new(5.0, 0.0), DVec2::new(-5.0, 0.0)];
        let cfg = HrvoConfig::default();
        let mut min_gap = f64::INFINITY;
        let mut first_deflection = [None, None];
        for _ in 0..200 {
            let mut cmds = BTreeMap::new();
            for (i, a) in world.agents.iter().enumerate() {
                let sel = plan_velocity(a, goals[i], &world.agents, 0.1, &cfg);
                if first_deflection[i].is_none() && sel.status == SelectionStatus::Feasible {
                    first_deflection[i] = Some(sel.velocity);
                }
                cmds.insert(a.id, sel.velocity);
            }
            world = step_world(&world, 0.1, &cmds).unwrap().world;
            let gap = (world.agents[0].position - world.agents[1].position).length();
            min_gap = min_gap.min(gap);
        }
        assert!(min_gap > 1.0, "min gap {min_gap}");
        // each deflects to its own right
        assert!(first_deflection[0].unwrap().y < 0.0);
        assert!(first_deflection[1].unwrap().y > 0.0);
        assert!((world.agents[0].position - goals[0]).length() < 1e-6);
        assert!((world.agents[1].position - goals[1]).length() < 1e-6);
    }

    #[test]
    fn infeasible_set_minimises_penetration() {
        // closing on a neighbour with almost no acceleration budget
        let mut a = agent(0, 0.0, 0.0).with_velocity(DVec2::X);
        a.max_accel = 0.5;
        let b = agent(1, 1.2, 0.0);
        let r = build_hrvo(&a, &b).unwrap();
        assert!(r.contains(DVec2::X));
        let sel = select_velocity(&a, DVec2::new(3.0, 0.0), &[r], 0.1);
        assert_eq!(sel.status, SelectionStatus::Constrained);
        assert!((sel.velocity - a.velocity).length() <= 0.05 + 1e-9);
        assert!(r.penetration(sel.velocity) < r.penetration(a.velocity));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        fn scene() -> impl Strategy<Value = (AgentState, Vec<AgentState>, DVec2)> {
            let other = (-4.0..4.0f64, -4.0..4.0f64, -1.5..1.5f64, -1.5..1.5f64);
            (
                (-1.0..1.0f64, -1.0..1.0f64, 0.5..1.5f64, 1.0..2.0f64, 0.5..20.0f64),
                proptest::collection::vec(other, 0..4),
                (-10.0..10.0f64, -10.0..10.0f64),
            )
                .prop_map(|((vx, vy, pref, max, accel), others, (gx, gy))| {
                    let me = AgentState::new(AgentId(0), DVec2::ZERO, 0.4, pref.min(max), max, accel).with_velocity(DVec2::new(vx, vy));
                    let others = others
                        .into_iter()
                        .enumerate()
                        .map(|(i, (x, y, vx, vy))| AgentState::new(AgentId(i as u32 + 1), DVec2::new(x, y), 0.4, 1.0, 1.5, 5.0).with_velocity(DVec2::new(vx, vy)))
                        .filter(|o| o.position.length() > 0.85)
                        .collect();
                    (me, others, DVec2::new(gx, gy))
                })
        }

        proptest! {
            #[test]
            fn selection_beats_brute_force_sampling((me, others, goal) in scene(), seed in any::<u64>()) {
                let dt = 0.1;
                let regions: Vec<HrvoRegion> = others.iter().map(|o| build_hrvo(&me, o).unwrap()).collect();
                let sel = select_velocity(&me, goal, &regions, dt);
                let (accel, speed) = me.reachable(dt);
                let small = if accel.radius < speed.radius { accel } else { speed };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut best_sample = f64::INFINITY;
                for _ in 0..10_000 {
                    let v = loop {
                        let d = DVec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                        if d.length_squared() <= 1.0 {
                            break small.center + d * small.radius;
                        }
                    };
                    if accel.contains(v, 0.0) && speed.contains(v, 0.0) && regions.iter().all(|r| !r.contains(v)) {
                        best_sample = best_sample.min(v.distance(sel.preferred));
                    }
                }
                match sel.status {
                    SelectionStatus::Unconstrained | SelectionStatus::Feasible => {
                        prop_assert!(accel.contains(sel.velocity, 1e-6) && speed.contains(sel.velocity, 1e-6));
                        prop_assert!(regions.iter().all(|r| r.penetration(sel.velocity) <= 1e-6));
                        prop_assert!(sel.velocity.distance(sel.preferred) <= best_sample + 1e-6);
                    }
                    SelectionStatus::Constrained => prop_assert!(best_sample.is_infinite(), "missed a feasible velocity"),
                    SelectionStatus::Separating => prop_assert!(false),
                }
            }

            #[test]
            fn unconstrained_equals_preferred((me, _, goal) in scene()) {
                let dt = 0.1;
                let sel = select_velocity(&me, goal, &[], dt);
                let pref = preferred_velocity(&me, goal, dt);
                let (accel, speed) = me.reachable(dt);
                if accel.contains(pref, EPSILON) && speed.contains(pref, EPSILON) {
                    prop_assert_eq!(sel.velocity, pref);
                    prop_assert_eq!(sel.status, SelectionStatus::Unconstrained);
                } else {
                    prop_assert_eq!(sel.velocity, me.clamp_to_envelope(pref, dt));
                }
            }
        }
    }
}
