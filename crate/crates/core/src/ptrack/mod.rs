//! Distributed particle tracking.
//!
//! Each sensor runs a local particle filter over its own detections, reduces
//! the particle cloud to a Gaussian mixture and broadcasts it. The global
//! phase fuses whatever mixtures arrived from peers with its own and keeps a
//! second, per-sensor set of global tracks.

pub mod assoc;
pub mod global;
pub mod gmm;
pub mod kcluster;
pub mod local;
pub mod wire;

use alloc::vec::Vec;
use core::fmt;

use glam::DVec2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assoc::{data_associate, AssociationConfig, Candidate, GroupMember, Track, TrackSet};
pub use global::{global_estimate, GlobalConfig, GlobalOutput};
pub use gmm::{fusion_log_weight, BlockCovariance, GmmBelief, GmmComponent, GmmError};
pub use kcluster::{kclusterize, kclusterize_labeled, Cluster, KClusterConfig};
pub use local::{local_estimate, LocalConfig, LocalOutput, LocalTracker};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SensorId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackId(pub u32);

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sensor#{}", self.0)
    }
}

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "track#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PtrackError {
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("measurement from {found} passed to the tracker of {expected}")]
    ForeignMeasurement { expected: SensorId, found: SensorId },
    #[error("measurement has non-finite coordinates")]
    NonFiniteMeasurement,
}

/// One detection reported by a sensor, possibly a false positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub sensor: SensorId,
    pub time: f64,
    pub position: DVec2,
    /// Stand-in for a color histogram of the detected blob.
    pub appearance: Vec<f64>,
}

impl Measurement {
    pub fn is_finite(&self) -> bool {
        self.time.is_finite() && self.position.is_finite() && self.appearance.iter().all(|a| a.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: DVec2,
    pub velocity: DVec2,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TrackerDiagnostic {
    /// All particle weights vanished; the cloud was kept as predicted.
    ZeroWeight { sensor: SensorId },
    /// The particle set was empty and was rebuilt from detections.
    Reinitialized { sensor: SensorId },
    /// A received belief failed validation and was ignored.
    DiscardedBelief { from: SensorId, reason: GmmError },
}

pub(crate) fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> DVec2 {
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    DVec2::new(x, y) * sigma
}

/// Systematic resampling. Returns indices into `weights`, `n` of them, in
/// non-decreasing order. `weights` must have a positive finite sum.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    if weights.is_empty() || n == 0 || !(total > 0.0) {
        return out;
    }
    let step = total / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut acc = weights[0];
    let mut i = 0;
    for _ in 0..n {
        while u > acc && i + 1 < weights.len() {
            i += 1;
            acc += weights[i];
        }
        out.push(i);
        u += step;
    }
    out
}

/// Weighted mean and covariance of 2D points, with `reg` added to the diagonal.
pub(crate) fn weighted_moments(points: impl Iterator<Item = (DVec2, f64)> + Clone, reg: f64) -> (DVec2, glam::DMat2, f64) {
    let mut w_sum = 0.0;
    let mut mean = DVec2::ZERO;
    for (p, w) in points.clone() {
        w_sum += w;
        mean += p * w;
    }
    if !(w_sum > 0.0) {
        return (DVec2::ZERO, glam::DMat2::from_diagonal(DVec2::splat(reg)), 0.0);
    }
    mean /= w_sum;
    let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
    for (p, w) in points {
        let d = p - mean;
        xx += w * d.x * d.x;
        xy += w * d.x * d.y;
        yy += w * d.y * d.y;
    }
    let cov = glam::DMat2::from_cols(DVec2::new(xx / w_sum + reg, xy / w_sum), DVec2::new(xy / w_sum, yy / w_sum + reg));
    (mean, cov, w_sum)
}
