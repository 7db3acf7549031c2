//! Per-sensor particle filter.

use alloc::vec::Vec;

#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assoc::{data_associate, AssociationConfig, Candidate, TrackSet};
use super::gmm::{GmmBelief, GmmComponent};
use super::kcluster::{kclusterize_labeled, KClusterConfig};
use super::{gaussian_vec, systematic_resample, Measurement, Particle, PtrackError, SensorId, TrackerDiagnostic};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalConfig {
    pub particles: usize,
    /// Per-step process noise on position (m).
    pub position_noise: f64,
    /// Per-step process noise on velocity (m/s).
    pub velocity_noise: f64,
    pub measurement_sigma: f64,
    /// Share of the likelihood spread uniformly over the field of view.
    pub clutter_fraction: f64,
    /// Field of view area in square meters.
    pub fov_area: f64,
    pub births_per_measurement: usize,
    pub birth_velocity_sigma: f64,
    /// A cluster needs this many particles to become a candidate.
    pub min_cluster_particles: usize,
    /// A cluster needs a detection this close to become a candidate.
    pub support_radius: f64,
    pub cluster: KClusterConfig,
    pub association: AssociationConfig,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig {
            particles: 500,
            position_noise: 0.05,
            velocity_noise: 0.2,
            measurement_sigma: 0.1,
            clutter_fraction: 0.05,
            fov_area: 50.0,
            births_per_measurement: 10,
            birth_velocity_sigma: 0.5,
            min_cluster_particles: 15,
            support_radius: 0.5,
            cluster: KClusterConfig::default(),
            association: AssociationConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalOutput {
    pub belief: GmmBelief,
    pub tracks: TrackSet,
    pub diagnostics: Vec<TrackerDiagnostic>,
}

/// One local update: predict, weight against `z`, resample, cluster and
/// associate. `particles` is updated in place; the returned belief carries
/// the confirmed tracks matched in this step.
pub fn local_estimate<R: Rng + ?Sized>(
    sensor: SensorId,
    particles: &mut Vec<Particle>,
    z: &[Measurement],
    prev: &TrackSet,
    dt: f64,
    cfg: &LocalConfig,
    rng: &mut R,
) -> Result<LocalOutput, PtrackError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(PtrackError::InvalidTimeStep(dt));
    }
    for m in z {
        if m.sensor != sensor {
            return Err(PtrackError::ForeignMeasurement { expected: sensor, found: m.sensor });
        }
        if !m.is_finite() {
            return Err(PtrackError::NonFiniteMeasurement);
        }
    }
    let now = prev.time + dt;
    let n = cfg.particles.max(1);
    let mut diagnostics = Vec::new();

    for p in particles.iter_mut() {
        p.position += p.velocity * dt + gaussian_vec(rng, cfg.position_noise);
        p.velocity += gaussian_vec(rng, cfg.velocity_noise);
    }

    let reinit = particles.is_empty() && !z.is_empty();
    if reinit {
        diagnostics.push(TrackerDiagnostic::Reinitialized { sensor });
    }
    let mean_w = if particles.is_empty() { 1.0 / n as f64 } else { particles.iter().map(|p| p.weight).sum::<f64>() / particles.len() as f64 };
    let (per, cap) = if reinit { (n.div_ceil(z.len()), n) } else { (cfg.births_per_measurement, n / 2) };
    let r2 = cfg.support_radius * cfg.support_radius;
    let mut births = Vec::new();
    for m in z {
        let support = particles.iter().filter(|p| p.position.distance_squared(m.position) <= r2).count();
        if support >= cfg.min_cluster_particles {
            continue;
        }
        for _ in 0..per {
            if births.len() >= cap {
                break;
            }
            births.push(Particle {
                position: m.position + gaussian_vec(rng, cfg.measurement_sigma),
                velocity: gaussian_vec(rng, cfg.birth_velocity_sigma),
                weight: mean_w,
            });
        }
    }
    particles.extend(births);

    if !particles.is_empty() {
        let clutter = cfg.clutter_fraction / cfg.fov_area;
        let var = cfg.measurement_sigma * cfg.measurement_sigma;
        let norm = 1.0 / (2.0 * core::f64::consts::PI * var);
        for p in particles.iter_mut() {
            let l: f64 = z.iter().map(|m| norm * (-p.position.distance_squared(m.position) / (2.0 * var)).exp()).sum();
            p.weight *= clutter + l;
        }
        let total: f64 = particles.iter().map(|p| p.weight).sum();
        if total > 0.0 && total.is_finite() {
            let idx = systematic_resample(&particles.iter().map(|p| p.weight).collect::<Vec<_>>(), n, rng);
            let w = 1.0 / n as f64;
            *particles = idx.iter().map(|&i| Particle { weight: w, ..particles[i] }).collect();
        } else {
            diagnostics.push(TrackerDiagnostic::ZeroWeight { sensor });
            let w = 1.0 / particles.len() as f64;
            particles.iter_mut().for_each(|p| p.weight = w);
        }
    }

    let (clusters, _) = kclusterize_labeled(particles, &cfg.cluster);
    // each detection supports only the nearest sizeable cluster
    let mut support: Vec<Option<(f64, usize)>> = alloc::vec![None; clusters.len()];
    for (mi, m) in z.iter().enumerate() {
        let nearest = clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| c.count >= cfg.min_cluster_particles)
            .map(|(k, c)| (k, c.position.distance(m.position)))
            .filter(|(_, d)| *d <= cfg.support_radius)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((k, d)) = nearest {
            if support[k].is_none_or(|(bd, _)| d < bd) {
                support[k] = Some((d, mi));
            }
        }
    }
    let candidates: Vec<Candidate> = clusters
        .iter()
        .zip(&support)
        .filter_map(|(c, s)| {
            s.map(|(_, mi)| Candidate {
                weight: c.weight,
                position: c.position,
                velocity: c.velocity,
                covariance: c.covariance,
                appearance: z[mi].appearance.clone(),
            })
        })
        .collect();

    let tracks = data_associate(&candidates, prev, now, &cfg.association);
    let belief = belief_from_tracks(sensor, &tracks);
    Ok(LocalOutput { belief, tracks, diagnostics })
}

/// Mixture over the reported tracks that were matched at the set's time.
pub fn belief_from_tracks(sensor: SensorId, tracks: &TrackSet) -> GmmBelief {
    let fresh: Vec<_> = tracks.tracks.iter().filter(|t| t.reported && t.last_seen == tracks.time).collect();
    let total: f64 = fresh.iter().map(|t| t.weight.max(1e-12)).sum();
    GmmBelief {
        sensor,
        time: tracks.time,
        components: fresh
            .iter()
            .map(|t| GmmComponent {
                track: t.id,
                weight: t.weight.max(1e-12) / total,
                position: t.position,
                velocity: t.velocity,
                covariance: t.covariance,
            })
            .collect(),
    }
}

/// A sensor's local filter state with its own random stream.
#[derive(Clone, Debug)]
pub struct LocalTracker {
    pub sensor: SensorId,
    pub particles: Vec<Particle>,
    pub tracks: TrackSet,
    pub config: LocalConfig,
    rng: ChaCha8Rng,
}

impl LocalTracker {
    pub fn new(sensor: SensorId, start: f64, config: LocalConfig, seed: u64) -> Self {
        LocalTracker { sensor, particles: Vec::new(), tracks: TrackSet::new(start), config, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn step(&mut self, z: &[Measurement], dt: f64) -> Result<LocalOutput, PtrackError> {
        let out = local_estimate(self.sensor, &mut self.particles, z, &self.tracks, dt, &self.config, &mut self.rng)?;
        self.tracks = out.tracks.clone();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use glam::DVec2;

    fn meas(x: f64, y: f64, app: &[f64]) -> Measurement {
        Measurement { sensor: SensorId(0), time: 0.0, position: DVec2::new(x, y), appearance: app.to_vec() }
    }

    #[test]
    fn stationary_object_converges() {
        let truth = DVec2::new(1.0, 2.0);
        let mut errors = Vec::new();
        let mut bound = 0.0;
        for seed in 0..100 {
            let mut tr = LocalTracker::new(SensorId(0), 0.0, LocalConfig::default(), seed);
            let mut out = None;
            for _ in 0..20 {
                out = Some(tr.step(&[meas(truth.x, truth.y, &[])], 0.1).unwrap());
            }
            let out = out.unwrap();
            assert_eq!(out.belief.components.len(), 1, "seed {seed}");
            let c = out.belief.components[0];
            errors.push(c.position - truth);
            bound = 3.0 * c.covariance.position.x_axis.x.sqrt() / (tr.config.particles as f64).sqrt();
        }
        // the estimator is unbiased: its mean error over seeds sits inside the Monte Carlo bound
        let mean = errors.iter().copied().sum::<DVec2>() / errors.len() as f64;
        assert!(mean.length() <= bound, "{mean:?} vs {bound}");
        let within = errors.iter().filter(|e| e.length() <= 0.05).count();
        assert!(within >= 99, "{within}");
    }

    #[test]
    fn coasts_without_measurements() {
        let mut tr = LocalTracker::new(SensorId(0), 0.0, LocalConfig::default(), 7);
        for _ in 0..10 {
            tr.step(&[meas(0.0, 0.0, &[])], 0.1).unwrap();
        }
        let seen = tr.tracks.tracks[0].last_seen;
        for _ in 0..3 {
            let out = tr.step(&[], 0.1).unwrap();
            assert!(out.belief.components.is_empty());
            assert_eq!(out.tracks.tracks.len(), 1);
            assert_eq!(out.tracks.tracks[0].last_seen, seen);
            assert!(out.tracks.tracks[0].reported);
        }
    }

    #[test]
    fn two_objects_keep_stable_ids() {
        let mut tr = LocalTracker::new(SensorId(0), 0.0, LocalConfig::default(), 11);
        let mut ids = None;
        for k in 0..50 {
            let x = -2.0 + 0.04 * k as f64;
            let out = tr.step(&[meas(x, 0.0, &[1.0]), meas(x, 3.0, &[0.0])], 0.1).unwrap();
            if k < 5 {
                continue;
            }
            assert_eq!(out.belief.components.len(), 2, "step {k}");
            out.belief.validate().unwrap();
            let mut now: Vec<_> = out.belief.components.iter().map(|c| (c.position.y > 1.5, c.track)).collect();
            now.sort();
            match &ids {
                None => ids = Some(now),
                Some(prev) => assert_eq!(prev, &now),
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut tr = LocalTracker::new(SensorId(0), 0.0, LocalConfig::default(), 1);
        assert!(tr.step(&[], 0.0).is_err());
        let mut m = meas(0.0, 0.0, &[]);
        m.sensor = SensorId(4);
        assert!(matches!(tr.step(&[m], 0.1), Err(PtrackError::ForeignMeasurement { .. })));
        assert!(tr.step(&[meas(f64::NAN, 0.0, &[])], 0.1).is_err());
        let out = tr.step(&[meas(0.0, 0.0, &[])], 0.1).unwrap();
        assert!(out.diagnostics.iter().any(|d| matches!(d, TrackerDiagnostic::Reinitialized { .. })));
        assert_eq!(tr.particles.len(), 500);
    }
}
