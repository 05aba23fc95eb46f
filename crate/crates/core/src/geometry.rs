//! Planar geometry: points, polylines and segment intersection.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Counter-clockwise rotation by `angle` radians.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Projection of a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length along the polyline. Negative before the start, larger than
    /// the length past the end (the end segments are extended).
    pub s: f64,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub lateral: f64,
}

/// An ordered point sequence with cached cumulative arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Polyline {
    /// Returns `None` when fewer than two points are given or two consecutive
    /// points coincide.
    pub fn new(points: Vec<Vec2>) -> Option<Self> {
        if points.len() < 2 {
            return None;
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for w in points.windows(2) {
            let len = w[0].distance(w[1]);
            if len <= 0.0 {
                return None;
            }
            cumulative.push(cumulative.last().unwrap() + len);
        }
        Some(Self { points, cumulative })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    fn segment_index(&self, s: f64) -> usize {
        let n = self.points.len() - 1;
        match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    /// Point at arc length `s`; extrapolates linearly beyond either end.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let i = self.segment_index(s);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let seg_len = self.cumulative[i + 1] - self.cumulative[i];
        let t = (s - self.cumulative[i]) / seg_len;
        a + (b - a) * t
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.segment_index(s);
        (self.points[i + 1] - self.points[i]).angle()
    }

    pub fn project(&self, p: Vec2) -> Projection {
        let n = self.points.len() - 1;
        let mut best: Option<(f64, Projection)> = None;
        for i in 0..n {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let ab = b - a;
            let len = self.cumulative[i + 1] - self.cumulative[i];
            let mut t = (p - a).dot(ab) / (len * len);
            if i > 0 {
                t = t.max(0.0);
            }
            if i < n - 1 {
                t = t.min(1.0);
            }
            let foot = a + ab * t;
            let dist = p.distance(foot);
            let lateral = ab.cross(p - a) / len;
            let candidate = Projection {
                s: self.cumulative[i] + t * len,
                lateral,
            };
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, candidate));
            }
        }
        best.unwrap().1
    }

    /// Minimum distance from `p` to the (non-extended) polyline.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Intersection of segments `a0-a1` and `b0-b1`. Endpoints within `tol`
/// meters of the other segment count as touching. Parallel and collinear
/// segments report no intersection.
pub fn segment_intersection(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2, tol: f64) -> Option<Vec2> {
    let r = a1 - a0;
    let q = b1 - b0;
    let denom = r.cross(q);
    let scale = r.norm() * q.norm();
    if denom.abs() <= 1e-12 * scale {
        return None;
    }
    let t = (b0 - a0).cross(q) / denom;
    let u = (b0 - a0).cross(r) / denom;
    let t_tol = tol / r.norm();
    let u_tol = tol / q.norm();
    if t < -t_tol || t > 1.0 + t_tol || u < -u_tol || u > 1.0 + u_tol {
        return None;
    }
    Some(a0 + r * t.clamp(0.0, 1.0))
}

/// Oriented rectangle used for vehicle footprints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn corners(&self) -> [Vec2; 4] {
        let f = Vec2::from_angle(self.heading) * (self.length / 2.0);
        let l = Vec2::from_angle(self.heading).perp() * (self.width / 2.0);
        let c = self.center;
        [c + f + l, c + f - l, c - f - l, c - f + l]
    }

    /// Separating-axis overlap test; touching edges do not count.
    pub fn overlaps(&self, other: &OrientedRect) -> bool {
        let a = self.corners();
        let b = other.corners();
        let axes = [
            Vec2::from_angle(self.heading),
            Vec2::from_angle(self.heading).perp(),
            Vec2::from_angle(other.heading),
            Vec2::from_angle(other.heading).perp(),
        ];
        axes.iter().all(|axis| {
            let (amin, amax) = project_extent(&a, *axis);
            let (bmin, bmax) = project_extent(&b, *axis);
            amax > bmin && bmax > amin
        })
    }
}

fn project_extent(corners: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        let p = c.dot(axis);
        (lo.min(p), hi.max(p))
    })
}

/// Quarter-circle-style arc from `start` to `end` around `center`, sampled
/// with `segments` chords.
pub fn arc(center: Vec2, start: Vec2, end: Vec2, segments: usize) -> Vec<Vec2> {
    let r = start.distance(center);
    let a0 = (start - center).angle();
    let sweep = wrap_angle((end - center).angle() - a0);
    let mut pts: Vec<Vec2> = (0..=segments)
        .map(|k| center + Vec2::from_angle(a0 + sweep * k as f64 / segments as f64) * r)
        .collect();
    pts[0] = start;
    pts[segments] = end;
    pts
}
