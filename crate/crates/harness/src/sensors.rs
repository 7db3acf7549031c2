//! Simulated ground-plane detectors.

use cfnav_core::ptrack::{Measurement, SensorId};
use cfnav_core::{AgentId, DVec2, WorldState};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::scenario::{vec2, Point, SensorSpec};

/// Signed shoelace area.
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        a[0] * b[1] - b[0] * a[1]
    })
    .sum::<f64>()
        * 0.5
}

/// Even-odd point in polygon test.
pub fn polygon_contains(poly: &[Point], p: DVec2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (vec2(poly[i]), vec2(poly[j]));
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn sample_in_polygon<R: Rng + ?Sized>(poly: &[Point], rng: &mut R) -> DVec2 {
    let (mut lo, mut hi) = (vec2(poly[0]), vec2(poly[0]));
    for p in poly {
        lo = lo.min(vec2(*p));
        hi = hi.max(vec2(*p));
    }
    loop {
        let p = DVec2::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y));
        if polygon_contains(poly, p) {
            return p;
        }
    }
}

/// Detections of one sensor at `time`: visible agents with probability
/// `detection_rate`, then Poisson clutter spread uniformly over the field of
/// view. `signature` gives each agent's appearance vector.
pub fn simulate_sensor<R: Rng + ?Sized>(
    world: &WorldState,
    signature: impl Fn(AgentId) -> Vec<f64>,
    spec: &SensorSpec,
    rng: &mut R,
) -> Vec<Measurement> {
    let sensor = SensorId(spec.id);
    let pos_noise = Normal::new(0.0, spec.noise_sigma).unwrap_or_else(|_| Normal::new(0.0, 0.0).expect("zero sigma"));
    let app_noise = Normal::new(0.0, spec.appearance_noise).unwrap_or_else(|_| Normal::new(0.0, 0.0).expect("zero sigma"));
    let mut out = Vec::new();
    let mut sig_len = 0;
    for a in &world.agents {
        let sig = signature(a.id);
        sig_len = sig.len();
        if !polygon_contains(&spec.fov, a.position) {
            continue;
        }
        let hidden = spec.occlusions.iter().any(|o| o.agent == a.id.0 && world.time >= o.start && world.time < o.end);
        // draw even when hidden so occlusions do not shift the random stream
        let detected = rng.random::<f64>() < spec.detection_rate;
        let offset = DVec2::new(pos_noise.sample(rng), pos_noise.sample(rng));
        let appearance: Vec<f64> = sig.iter().map(|s| s + app_noise.sample(rng)).collect();
        if detected && !hidden {
            out.push(Measurement { sensor, time: world.time, position: a.position + offset, appearance });
        }
    }
    if spec.false_positive_rate > 0.0 {
        let count = Poisson::new(spec.false_positive_rate).map(|p| p.sample(rng) as usize).unwrap_or(0);
        for _ in 0..count {
            let position = sample_in_polygon(&spec.fov, rng);
            let appearance = (0..sig_len).map(|_| rng.random::<f64>()).collect();
            out.push(Measurement { sensor, time: world.time, position, appearance });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use cfnav_core::AgentState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square(spec: impl FnOnce(&mut SensorSpec)) -> SensorSpec {
        let mut s = SensorSpec {
            id: 0,
            position: [0.0, 0.0],
            fov: vec![[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]],
            noise_sigma: 0.0,
            detection_rate: 1.0,
            false_positive_rate: 0.0,
            appearance_noise: 0.0,
            occlusions: vec![],
        };
        spec(&mut s);
        s
    }

    fn world(points: &[(f64, f64)]) -> WorldState {
        let agents = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| AgentState::new(AgentId(i as u32), DVec2::new(x, y), 0.3, 1.0, 1.5, 2.0))
            .collect();
        WorldState::new(0.0, agents).unwrap()
    }

    #[test]
    fn polygon_helpers() {
        let sq = square(|_| {}).fov;
        assert_eq!(polygon_area(&sq), 16.0);
        assert!(polygon_contains(&sq, DVec2::new(1.0, 1.0)));
        assert!(!polygon_contains(&sq, DVec2::new(5.0, 1.0)));
        let tri = vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]];
        assert!(!polygon_contains(&tri, DVec2::new(1.5, 1.5)));
    }

    #[test]
    fn perfect_sensor_reports_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = world(&[(1.0, 1.0), (9.0, 9.0)]);
        let z = simulate_sensor(&w, |id| vec![id.0 as f64], &square(|_| {}), &mut rng);
        assert_eq!(z.len(), 1);
        assert_eq!(z[0].position, DVec2::new(1.0, 1.0));
        assert_eq!(z[0].appearance, vec![0.0]);
    }

    #[test]
    fn occluded_agent_is_missing() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = square(|s| s.occlusions = vec![crate::scenario::Occlusion { agent: 0, start: 0.0, end: 1.0 }]);
        assert!(simulate_sensor(&world(&[(1.0, 1.0)]), |_| vec![], &spec, &mut rng).is_empty());
    }

    #[test]
    fn clutter_count_is_poisson() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let spec = square(|s| s.false_positive_rate = 2.0);
        let w = world(&[]);
        let mut total = 0usize;
        for _ in 0..1000 {
            let z = simulate_sensor(&w, |_| vec![], &spec, &mut rng);
            assert!(z.iter().all(|m| polygon_contains(&spec.fov, m.position)));
            total += z.len();
        }
        // mean 2000, standard deviation sqrt(2000)
        assert!((total as f64 - 2000.0).abs() <= 3.0 * 2000f64.sqrt(), "{total}");
    }
}
