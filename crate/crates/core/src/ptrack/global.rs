//! Fusion of the beliefs a sensor received from its peers with its own.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use glam::{DMat2, DVec2};
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::assoc::{data_associate, AssociationConfig, Candidate, TrackSet};
use super::gmm::{fusion_log_weight, BlockCovariance, GmmBelief, GmmComponent};
use super::kcluster::{kclusterize_labeled, KClusterConfig};
use super::local::belief_from_tracks;
use super::{gaussian_vec, systematic_resample, weighted_moments, Particle, SensorId, TrackerDiagnostic};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalConfig {
    pub particles: usize,
    /// Position variance added per second when predicting a belief forward.
    pub align_position_rate: f64,
    pub align_velocity_rate: f64,
    pub cluster: KClusterConfig,
    pub association: AssociationConfig,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            particles: 1000,
            align_position_rate: 0.025,
            align_velocity_rate: 0.4,
            cluster: KClusterConfig::default(),
            // components arrive already confirmed by their sensor
            association: AssociationConfig { min_hits: 1, ..AssociationConfig::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalOutput {
    pub tracks: TrackSet,
    pub belief: GmmBelief,
    pub diagnostics: Vec<TrackerDiagnostic>,
}

fn sample_component<R: Rng + ?Sized>(c: &GmmComponent, rng: &mut R) -> (DVec2, DVec2) {
    let chol = |m: &DMat2| {
        let l11 = m.x_axis.x.sqrt();
        let l21 = m.y_axis.x / l11;
        let l22 = (m.y_axis.y - l21 * l21).max(0.0).sqrt();
        move |e: DVec2| DVec2::new(l11 * e.x, l21 * e.x + l22 * e.y)
    };
    let p = chol(&c.covariance.position)(gaussian_vec(rng, 1.0));
    let v = chol(&c.covariance.velocity)(gaussian_vec(rng, 1.0));
    (c.position + p, c.velocity + v)
}

/// Global phase of one sensor at time `now`.
///
/// `received` holds the peer beliefs collected in the current window; invalid
/// ones are dropped with a diagnostic and only the newest belief per peer is
/// used. `local` supplies appearance signatures for the fused candidates.
/// With no usable peer input the candidates are the sensor's own components
/// unchanged.
pub fn global_estimate<R: Rng + ?Sized>(
    received: &[GmmBelief],
    own: &GmmBelief,
    local: &TrackSet,
    prev: &TrackSet,
    now: f64,
    cfg: &GlobalConfig,
    rng: &mut R,
) -> GlobalOutput {
    let mut diagnostics = Vec::new();
    let mut peers: BTreeMap<SensorId, &GmmBelief> = BTreeMap::new();
    for b in received.iter().filter(|b| b.sensor != own.sensor) {
        if let Err(reason) = b.validate() {
            diagnostics.push(TrackerDiagnostic::DiscardedBelief { from: b.sensor, reason });
            continue;
        }
        match peers.get(&b.sensor) {
            Some(old) if old.time >= b.time => {}
            _ => {
                peers.insert(b.sensor, b);
            }
        }
    }

    let sources: Vec<GmmBelief> = core::iter::once(own)
        .chain(peers.values().copied())
        .filter(|b| !b.components.is_empty())
        .map(|b| b.aligned(now, cfg.align_position_rate, cfg.align_velocity_rate))
        .collect();

    let mut candidates: Vec<Candidate> = Vec::new();
    if sources.len() == 1 {
        candidates.extend(sources[0].components.iter().map(|c| copy_candidate(c, 1.0)));
    } else if sources.len() > 1 {
        fuse(&sources, cfg, rng, &mut candidates);
    }

    for c in &mut candidates {
        c.appearance = local
            .tracks
            .iter()
            .filter(|t| !t.is_group() && t.position.distance(c.position) <= cfg.association.gate)
            .min_by(|a, b| a.position.distance(c.position).total_cmp(&b.position.distance(c.position)))
            .map(|t| t.appearance.clone())
            .unwrap_or_default();
    }

    let tracks = data_associate(&candidates, prev, now, &cfg.association);
    let belief = belief_from_tracks(own.sensor, &tracks);
    GlobalOutput { tracks, belief, diagnostics }
}

fn copy_candidate(c: &GmmComponent, scale: f64) -> Candidate {
    Candidate { weight: c.weight * scale, position: c.position, velocity: c.velocity, covariance: c.covariance, appearance: Vec::new() }
}

fn fuse<R: Rng + ?Sized>(sources: &[GmmBelief], cfg: &GlobalConfig, rng: &mut R, out: &mut Vec<Candidate>) {
    let share = 1.0 / sources.len() as f64;
    let flat: Vec<(usize, usize)> = sources
        .iter()
        .enumerate()
        .flat_map(|(s, b)| (0..b.components.len()).map(move |c| (s, c)))
        .collect();
    let mix: Vec<f64> = flat.iter().map(|&(s, c)| share * sources[s].components[c].weight).collect();
    let n = cfg.particles.max(1);
    let draws = systematic_resample(&mix, n, rng);

    let mut particles = Vec::with_capacity(n);
    let mut origin = Vec::with_capacity(n);
    for &k in &draws {
        let (s, c) = flat[k];
        let (position, velocity) = sample_component(&sources[s].components[c], rng);
        particles.push(Particle { position, velocity, weight: 1.0 / n as f64 });
        origin.push(k);
    }
    let (clusters, labels) = kclusterize_labeled(&particles, &cfg.cluster);

    // each component belongs to the cluster holding most of its draws
    let mut votes = vec![BTreeMap::<usize, usize>::new(); flat.len()];
    for (i, &k) in origin.iter().enumerate() {
        *votes[k].entry(labels[i]).or_default() += 1;
    }
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); clusters.len()];
    for (k, v) in votes.iter().enumerate() {
        if let Some((&cl, _)) = v.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) {
            owned[cl].push(k);
        }
    }

    for (cl, comps) in owned.iter().enumerate() {
        if comps.is_empty() {
            continue;
        }
        let mut by_sensor: BTreeMap<usize, Vec<GmmComponent>> = BTreeMap::new();
        for &k in comps {
            let (s, c) = flat[k];
            by_sensor.entry(s).or_default().push(sources[s].components[c]);
        }
        if by_sensor.len() == 1 {
            for &k in comps {
                let (s, c) = flat[k];
                out.push(copy_candidate(&sources[s].components[c], share));
            }
            continue;
        }

        let members: Vec<Particle> = (0..particles.len()).filter(|&i| labels[i] == cl).map(|i| particles[i]).collect();
        let per_sensor: Vec<&[GmmComponent]> = by_sensor.values().map(|v| v.as_slice()).collect();
        let logs: Vec<f64> = members.iter().map(|p| fusion_log_weight(p.position, p.velocity, &per_sensor)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            continue;
        }
        // the first clustering already isolated one object, so the fused
        // estimate is the product-weighted moment of its draws
        let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let reg = cfg.cluster.regularization;
        let (position, pcov, _) = weighted_moments(members.iter().zip(&weights).map(|(p, &w)| (p.position, w)), reg);
        let (velocity, vcov, _) = weighted_moments(members.iter().zip(&weights).map(|(p, &w)| (p.velocity, w)), reg);
        let mass: f64 = comps.iter().map(|&k| mix[k]).sum();
        out.push(Candidate {
            weight: mass,
            position,
            velocity,
            covariance: BlockCovariance { position: pcov, velocity: vcov },
            appearance: Vec::new(),
        });
    }
}
