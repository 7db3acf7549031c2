//! Turns a particle cloud into Gaussian clusters without knowing how many
//! objects there are.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use glam::DVec2;
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::gmm::BlockCovariance;
use super::{weighted_moments, Particle};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KClusterConfig {
    /// Distance from a running centroid within which a particle joins it.
    pub gate: f64,
    /// Largest allowed deviation from the mean along a principal axis, in
    /// axis standard deviations.
    pub extent_k: f64,
    pub max_excess_kurtosis: f64,
    /// Clusters with fewer particles are accepted without a shape test.
    pub min_check: usize,
    /// Minimum distance between child means over pooled child spread for a
    /// split to be accepted.
    pub split_ratio: f64,
    /// Child means closer than this (meters) are never split apart.
    pub min_split_distance: f64,
    pub min_child: usize,
    pub min_child_frac: f64,
    pub regularization: f64,
}

impl Default for KClusterConfig {
    fn default() -> Self {
        KClusterConfig {
            gate: 0.5,
            extent_k: 3.5,
            max_excess_kurtosis: 1.2,
            min_check: 20,
            split_ratio: 3.0,
            min_split_distance: 0.3,
            min_child: 5,
            min_child_frac: 0.05,
            regularization: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub weight: f64,
    pub position: DVec2,
    pub velocity: DVec2,
    pub covariance: BlockCovariance,
    /// Number of particles in the cluster.
    pub count: usize,
}

pub fn kclusterize(particles: &[Particle], cfg: &KClusterConfig) -> Vec<Cluster> {
    kclusterize_labeled(particles, cfg).0
}

/// Like [`kclusterize`], also returning the cluster index of every particle.
pub fn kclusterize_labeled(particles: &[Particle], cfg: &KClusterConfig) -> (Vec<Cluster>, Vec<usize>) {
    if particles.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    let weight_of = |i: usize| if total > 0.0 { particles[i].weight } else { 1.0 };

    // single pass against running centroids
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut centroids: Vec<DVec2> = Vec::new();
    for (i, p) in particles.iter().enumerate() {
        let nearest = centroids
            .iter()
            .enumerate()
            .map(|(k, c)| (k, c.distance_squared(p.position)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((k, d2)) if d2 < cfg.gate * cfg.gate => {
                groups[k].push(i);
                let n = groups[k].len() as f64;
                let c = centroids[k];
                centroids[k] = c + (p.position - c) / n;
            }
            _ => {
                groups.push(vec![i]);
                centroids.push(p.position);
            }
        }
    }

    // early particles can seed stray centroids next to a real one
    'merge: loop {
        for a in 0..centroids.len() {
            for b in a + 1..centroids.len() {
                if centroids[a].distance_squared(centroids[b]) < cfg.gate * cfg.gate {
                    let (na, nb) = (groups[a].len() as f64, groups[b].len() as f64);
                    centroids[a] = (centroids[a] * na + centroids[b] * nb) / (na + nb);
                    let moved = groups.swap_remove(b);
                    centroids.swap_remove(b);
                    groups[a].extend(moved);
                    continue 'merge;
                }
            }
        }
        break;
    }

    let mut queue: VecDeque<Vec<usize>> = groups.into();
    let mut done: Vec<Vec<usize>> = Vec::new();
    while let Some(g) = queue.pop_front() {
        match split(&g, particles, &weight_of, cfg) {
            Some((l, r)) => {
                queue.push_back(l);
                queue.push_back(r);
            }
            None => done.push(g),
        }
    }
    done.sort_by_key(|g| g.iter().copied().min().unwrap_or(0));

    let mass: f64 = (0..particles.len()).map(&weight_of).sum();
    let mut labels = vec![0; particles.len()];
    let clusters = done
        .iter()
        .enumerate()
        .map(|(k, g)| {
            for &i in g {
                labels[i] = k;
            }
            let pos = g.iter().map(|&i| (particles[i].position, weight_of(i)));
            let vel = g.iter().map(|&i| (particles[i].velocity, weight_of(i)));
            let (position, pcov, w) = weighted_moments(pos, cfg.regularization);
            let (velocity, vcov, _) = weighted_moments(vel, cfg.regularization);
            Cluster {
                weight: w / mass,
                position,
                velocity,
                covariance: BlockCovariance { position: pcov, velocity: vcov },
                count: g.len(),
            }
        })
        .collect();
    (clusters, labels)
}

fn principal_axes(points: &[(DVec2, f64)]) -> (DVec2, [DVec2; 2]) {
    let (mean, cov, _) = weighted_moments(points.iter().copied(), 0.0);
    let (a, b, d) = (cov.x_axis.x, cov.y_axis.x, cov.y_axis.y);
    let theta = 0.5 * (2.0 * b).atan2(a - d);
    let u = DVec2::new(theta.cos(), theta.sin());
    (mean, [u, u.perp()])
}

/// Whether the projections onto `axis` look like a single Gaussian.
fn axis_passes(points: &[(DVec2, f64)], mean: DVec2, axis: DVec2, cfg: &KClusterConfig) -> bool {
    let w: f64 = points.iter().map(|p| p.1).sum();
    let (mut m2, mut m4, mut extent) = (0.0, 0.0, 0.0f64);
    for (p, pw) in points {
        let x = (*p - mean).dot(axis);
        m2 += pw * x * x;
        m4 += pw * x * x * x * x;
        extent = extent.max(x.abs());
    }
    m2 /= w;
    m4 /= w;
    if m2 < 1e-18 {
        return true;
    }
    let sd = m2.sqrt();
    let kurt = m4 / (m2 * m2) - 3.0;
    extent <= cfg.extent_k * sd && kurt.abs() <= cfg.max_excess_kurtosis
}

/// Splits a cluster that fails the shape test when a clean split exists.
fn split(
    group: &[usize],
    particles: &[Particle],
    weight_of: &impl Fn(usize) -> f64,
    cfg: &KClusterConfig,
) -> Option<(Vec<usize>, Vec<usize>)> {
    if group.len() < cfg.min_check {
        return None;
    }
    let points: Vec<(DVec2, f64)> = group.iter().map(|&i| (particles[i].position, weight_of(i))).collect();
    let (mean, axes) = principal_axes(&points);
    let min_child = cfg.min_child.max((cfg.min_child_frac * group.len() as f64).ceil() as usize);
    for axis in axes {
        if axis_passes(&points, mean, axis, cfg) {
            continue;
        }
        if let Some(cut) = threshold_split(&points, mean, axis, min_child, cfg.split_ratio, cfg.min_split_distance) {
            let (l, r): (Vec<usize>, Vec<usize>) = group.iter().partition(|&&i| (particles[i].position - mean).dot(axis) <= cut);
            return Some((l, r));
        }
    }
    None
}

/// Two-class threshold on the projections maximising between-class
/// variance. Returns the cut if the classes are well separated.
fn threshold_split(points: &[(DVec2, f64)], mean: DVec2, axis: DVec2, min_child: usize, ratio: f64, min_distance: f64) -> Option<f64> {
    let mut proj: Vec<(f64, f64)> = points.iter().map(|(p, w)| ((*p - mean).dot(axis), *w)).collect();
    proj.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = proj.len();
    let w_total: f64 = proj.iter().map(|p| p.1).sum();
    let s_total: f64 = proj.iter().map(|p| p.0 * p.1).sum();

    let (mut w0, mut s0) = (0.0, 0.0);
    let mut best: Option<(usize, f64)> = None;
    for k in 0..n - 1 {
        w0 += proj[k].1;
        s0 += proj[k].0 * proj[k].1;
        let left = k + 1;
        if left < min_child || n - left < min_child || proj[k].0 == proj[k + 1].0 {
            continue;
        }
        let w1 = w_total - w0;
        if w0 <= 0.0 || w1 <= 0.0 {
            continue;
        }
        let (m0, m1) = (s0 / w0, (s_total - s0) / w1);
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((left, between));
        }
    }
    let (left, _) = best?;
    let stats = |s: &[(f64, f64)]| {
        let w: f64 = s.iter().map(|p| p.1).sum();
        let m = s.iter().map(|p| p.0 * p.1).sum::<f64>() / w;
        let v = s.iter().map(|p| p.1 * (p.0 - m) * (p.0 - m)).sum::<f64>() / w;
        (w, m, v)
    };
    let (wa, ma, va) = stats(&proj[..left]);
    let (wb, mb, vb) = stats(&proj[left..]);
    let pooled = ((wa * va + wb * vb) / (wa + wb)).sqrt();
    if (mb - ma) >= ratio * pooled && (mb - ma) >= min_distance {
        Some(0.5 * (proj[left - 1].0 + proj[left].0))
    } else {
        None
    }
}
