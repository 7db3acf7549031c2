//! Gaussian mixture beliefs over (position, velocity).

use alloc::vec::Vec;

use glam::{DMat2, DVec2};
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{SensorId, TrackId};

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum GmmError {
    #[error("component weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("negative or non-finite weight on {0}")]
    BadWeight(TrackId),
    #[error("covariance of {0} is not symmetric positive definite")]
    NonSpd(TrackId),
    #[error("track id {0} appears twice")]
    DuplicateTrack(TrackId),
    #[error("non-finite mean on {0}")]
    NonFinite(TrackId),
}

/// Covariance with independent position and velocity blocks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCovariance {
    pub position: DMat2,
    pub velocity: DMat2,
}

fn spd2(m: &DMat2) -> bool {
    let (a, b, c, d) = (m.x_axis.x, m.y_axis.x, m.x_axis.y, m.y_axis.y);
    m.is_finite() && (b - c).abs() <= 1e-12 * (1.0 + b.abs()) && a > 0.0 && a * d - b * c > 0.0
}

fn log_normal2(d: DVec2, cov: &DMat2) -> f64 {
    let det = cov.determinant();
    -0.5 * d.dot(cov.inverse() * d) - LN_2PI - 0.5 * det.ln()
}

impl BlockCovariance {
    pub fn isotropic(pos_var: f64, vel_var: f64) -> Self {
        BlockCovariance {
            position: DMat2::from_diagonal(DVec2::splat(pos_var)),
            velocity: DMat2::from_diagonal(DVec2::splat(vel_var)),
        }
    }

    pub fn is_spd(&self) -> bool {
        spd2(&self.position) && spd2(&self.velocity)
    }

    pub fn log_density(&self, dp: DVec2, dv: DVec2) -> f64 {
        log_normal2(dp, &self.position) + log_normal2(dv, &self.velocity)
    }

    /// Covariance after `tau` seconds of constant-velocity motion with
    /// white diffusion of the given per-second variances.
    pub fn propagated(&self, tau: f64, pos_rate: f64, vel_rate: f64) -> Self {
        let tau = tau.abs();
        BlockCovariance {
            position: self.position + self.velocity * (tau * tau) + DMat2::from_diagonal(DVec2::splat(pos_rate * tau)),
            velocity: self.velocity + DMat2::from_diagonal(DVec2::splat(vel_rate * tau)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub track: TrackId,
    pub weight: f64,
    pub position: DVec2,
    pub velocity: DVec2,
    pub covariance: BlockCovariance,
}

impl GmmComponent {
    pub fn log_density(&self, position: DVec2, velocity: DVec2) -> f64 {
        self.covariance.log_density(position - self.position, velocity - self.velocity)
    }
}

/// What one sensor broadcasts after its local phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmBelief {
    pub sensor: SensorId,
    pub time: f64,
    pub components: Vec<GmmComponent>,
}

impl GmmBelief {
    pub fn empty(sensor: SensorId, time: f64) -> Self {
        GmmBelief { sensor, time, components: Vec::new() }
    }

    /// Checks weights, covariances and id uniqueness. A belief with no
    /// components is valid and means the sensor sees nothing.
    pub fn validate(&self) -> Result<(), GmmError> {
        let mut sum = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(GmmError::BadWeight(c.track));
            }
            if !c.position.is_finite() || !c.velocity.is_finite() {
                return Err(GmmError::NonFinite(c.track));
            }
            if !c.covariance.is_spd() {
                return Err(GmmError::NonSpd(c.track));
            }
            if self.components[..i].iter().any(|o| o.track == c.track) {
                return Err(GmmError::DuplicateTrack(c.track));
            }
            sum += c.weight;
        }
        if !self.components.is_empty() && (sum - 1.0).abs() > 1e-9 {
            return Err(GmmError::WeightSum(sum));
        }
        Ok(())
    }

    pub fn log_density(&self, position: DVec2, velocity: DVec2) -> f64 {
        log_mixture(self.components.iter(), position, velocity)
    }

    pub fn density(&self, position: DVec2, velocity: DVec2) -> f64 {
        self.log_density(position, velocity).exp()
    }

    /// The belief predicted forward to `now` under constant velocity.
    pub fn aligned(&self, now: f64, pos_rate: f64, vel_rate: f64) -> GmmBelief {
        let tau = now - self.time;
        GmmBelief {
            sensor: self.sensor,
            time: now,
            components: self
                .components
                .iter()
                .map(|c| GmmComponent {
                    position: c.position + c.velocity * tau,
                    covariance: c.covariance.propagated(tau, pos_rate, vel_rate),
                    ..*c
                })
                .collect(),
        }
    }
}

fn log_mixture<'a>(components: impl Iterator<Item = &'a GmmComponent> + Clone, position: DVec2, velocity: DVec2) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for c in components.clone() {
        if c.weight > 0.0 {
            max = max.max(c.weight.ln() + c.log_density(position, velocity));
        }
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = components
        .filter(|c| c.weight > 0.0)
        .map(|c| (c.weight.ln() + c.log_density(position, velocity) - max).exp())
        .sum();
    max + s.ln()
}

/// Log of the fused weight of state `(position, velocity)` given independent
/// per-sensor mixtures: the product of the sensors' densities.
pub fn fusion_log_weight(position: DVec2, velocity: DVec2, sensors: &[&[GmmComponent]]) -> f64 {
    sensors.iter().map(|comps| log_mixture(comps.iter(), position, velocity)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn comp(id: u32, w: f64, p: (f64, f64), v: (f64, f64), s: f64) -> GmmComponent {
        GmmComponent {
            track: TrackId(id),
            weight: w,
            position: DVec2::new(p.0, p.1),
            velocity: DVec2::new(v.0, v.1),
            covariance: BlockCovariance::isotropic(s * s, 0.04),
        }
    }

    // 4D normal with diagonal covariance written out coordinate by coordinate
    fn oracle_density(c: &GmmComponent, p: DVec2, v: DVec2) -> f64 {
        let x = [p.x, p.y, v.x, v.y];
        let m = [c.position.x, c.position.y, c.velocity.x, c.velocity.y];
        let var = [c.covariance.position.x_axis.x, c.covariance.position.y_axis.y, c.covariance.velocity.x_axis.x, c.covariance.velocity.y_axis.y];
        let mut d = 1.0;
        for i in 0..4 {
            d *= (-(x[i] - m[i]).powi(2) / (2.0 * var[i])).exp() / (2.0 * core::f64::consts::PI * var[i]).sqrt();
        }
        d
    }

    #[test]
    fn fusion_weight_is_product_of_sensor_likelihoods() {
        let a = vec![comp(1, 0.7, (0.0, 0.0), (0.5, 0.0), 0.2), comp(2, 0.3, (2.0, 1.0), (0.0, 0.0), 0.3)];
        let b = vec![comp(9, 1.0, (0.1, -0.1), (0.4, 0.1), 0.25)];
        for (px, py, vx, vy) in [(0.0, 0.0, 0.5, 0.0), (0.3, -0.2, 0.2, 0.1), (1.5, 0.8, 0.0, 0.0)] {
            let (p, v) = (DVec2::new(px, py), DVec2::new(vx, vy));
            let fa: f64 = a.iter().map(|c| c.weight * oracle_density(c, p, v)).sum();
            let fb: f64 = b.iter().map(|c| c.weight * oracle_density(c, p, v)).sum();
            let got = fusion_log_weight(p, v, &[&a, &b]).exp();
            assert!((got - fa * fb).abs() <= 1e-9 * fa * fb, "{got} vs {}", fa * fb);
        }
    }

    #[test]
    fn validation() {
        let ok = GmmBelief { sensor: SensorId(0), time: 0.0, components: vec![comp(1, 0.5, (0.0, 0.0), (0.0, 0.0), 0.1), comp(2, 0.5, (1.0, 0.0), (0.0, 0.0), 0.1)] };
        assert_eq!(ok.validate(), Ok(()));
        assert_eq!(GmmBelief::empty(SensorId(0), 0.0).validate(), Ok(()));

        let mut w = ok.clone();
        w.components[0].weight = 0.4;
        assert!(matches!(w.validate(), Err(GmmError::WeightSum(_))));

        let mut dup = ok.clone();
        dup.components[1].track = TrackId(1);
        assert_eq!(dup.validate(), Err(GmmError::DuplicateTrack(TrackId(1))));

        let mut spd = ok.clone();
        spd.components[1].covariance.position = DMat2::from_cols(DVec2::new(1.0, 2.0), DVec2::new(2.0, 1.0));
        assert_eq!(spd.validate(), Err(GmmError::NonSpd(TrackId(2))));
    }

    #[test]
    fn alignment_moves_means_and_grows_covariance() {
        let b = GmmBelief { sensor: SensorId(0), time: 1.0, components: vec![comp(1, 1.0, (0.0, 0.0), (1.0, 0.5), 0.1)] };
        let a = b.aligned(1.2, 0.1, 0.2);
        assert!((a.components[0].position - DVec2::new(0.2, 0.1)).length() < 1e-12);
        let c = a.components[0].covariance;
        assert!((c.position.x_axis.x - (0.01 + 0.04 * 0.04 + 0.02)).abs() < 1e-12);
        assert!((c.velocity.y_axis.y - (0.04 + 0.04)).abs() < 1e-12);
        assert_eq!(b.aligned(1.0, 0.1, 0.2), b);
    }
}
