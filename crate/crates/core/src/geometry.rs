//! Small planar helpers shared by the planner and the world integrator.

use glam::DVec2;
#[allow(unused_imports)] // unused when a dependency links std
use num_traits::Float;

/// Tolerance used for containment tests on computed boundary points.
pub const EPSILON: f64 = 1e-9;

/// Signed area of the parallelogram spanned by `a` and `b` (`a.x*b.y - a.y*b.x`).
#[inline]
pub fn det(a: DVec2, b: DVec2) -> f64 {
    a.perp_dot(b)
}

/// A closed disc in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disc {
    pub center: DVec2,
    pub radius: f64,
}

impl Disc {
    pub fn new(center: DVec2, radius: f64) -> Self {
        Disc { center, radius: radius.max(0.0) }
    }

    pub fn contains(&self, p: DVec2, tol: f64) -> bool {
        (p - self.center).length() <= self.radius + tol
    }

    /// Closest point of the disc to `p`.
    pub fn project(&self, p: DVec2) -> DVec2 {
        let d = p - self.center;
        let len = d.length();
        if len <= self.radius {
            p
        } else {
            self.center + d * (self.radius / len)
        }
    }

    /// Closest point of the boundary circle to `p`. A point at the center maps
    /// onto the +x direction.
    pub fn boundary_point_toward(&self, p: DVec2) -> DVec2 {
        let d = p - self.center;
        let len = d.length();
        if len > 0.0 {
            self.center + d * (self.radius / len)
        } else {
            self.center + DVec2::X * self.radius
        }
    }
}

/// Intersection points of two circles (zero, one or two).
pub fn circle_circle(a: &Disc, b: &Disc) -> ([DVec2; 2], usize) {
    let d = b.center - a.center;
    let dist = d.length();
    let mut out = [DVec2::ZERO; 2];
    if dist <= 0.0 || dist > a.radius + b.radius || dist < (a.radius - b.radius).abs() {
        return (out, 0);
    }
    let along = (a.radius * a.radius - b.radius * b.radius + dist * dist) / (2.0 * dist);
    let h2 = a.radius * a.radius - along * along;
    let h = if h2 > 0.0 { h2.sqrt() } else { 0.0 };
    let unit = d / dist;
    let base = a.center + unit * along;
    let perp = unit.perp();
    out[0] = base + perp * h;
    out[1] = base - perp * h;
    (out, if h > 0.0 { 2 } else { 1 })
}

/// Parameters `t >= 0` at which the ray `origin + t*dir` (unit `dir`) meets a circle.
pub fn ray_circle(origin: DVec2, dir: DVec2, circle: &Disc) -> ([f64; 2], usize) {
    let oc = origin - circle.center;
    let b = oc.dot(dir);
    let c = oc.length_squared() - circle.radius * circle.radius;
    let disc = b * b - c;
    let mut out = [0.0; 2];
    if disc < 0.0 {
        return (out, 0);
    }
    let s = disc.sqrt();
    let mut n = 0;
    for t in [-b - s, -b + s] {
        if t >= 0.0 {
            out[n] = t;
            n += 1;
        }
    }
    (out, n)
}

/// Intersection of two rays, returned as the point if both parameters are non-negative.
pub fn ray_ray(p: DVec2, dp: DVec2, q: DVec2, dq: DVec2) -> Option<DVec2> {
    let denom = det(dp, dq);
    if denom.abs() < 1e-12 {
        return None;
    }
    let w = q - p;
    let t = det(w, dq) / denom;
    let u = det(w, dp) / denom;
    if t >= 0.0 && u >= 0.0 {
        Some(p + dp * t)
    } else {
        None
    }
}

/// Euclidean distance from `p` to the ray `origin + t*dir`, `t >= 0`, unit `dir`.
pub fn ray_distance(origin: DVec2, dir: DVec2, p: DVec2) -> f64 {
    let q = p - origin;
    let t = q.dot(dir);
    if t <= 0.0 {
        q.length()
    } else {
        det(dir, q).abs()
    }
}

/// Closest point to `p` lying in the intersection of two discs. The
/// intersection must be non-empty.
pub fn project_onto_lens(p: DVec2, a: &Disc, b: &Disc) -> DVec2 {
    if a.contains(p, 0.0) && b.contains(p, 0.0) {
        return p;
    }
    let pa = a.project(p);
    if b.contains(pa, EPSILON) {
        return pa;
    }
    let pb = b.project(p);
    if a.contains(pb, EPSILON) {
        return pb;
    }
    let (pts, n) = circle_circle(a, b);
    if n == 0 {
        // one disc contains the other; the smaller one is the lens
        return if a.radius <= b.radius { pa } else { pb };
    }
    let mut best = pts[0];
    for q in &pts[1..n] {
        if q.distance_squared(p) < best.distance_squared(p) {
            best = *q;
        }
    }
    best
}

/// Angle in `[0, 2π)` swept clockwise from `from` to `to`.
pub fn clockwise_angle(from: DVec2, to: DVec2) -> f64 {
    let a = det(to, from).atan2(from.dot(to));
    if a < 0.0 {
        a + 2.0 * core::f64::consts::PI
    } else {
        a
    }
}
