//! Planar points and polyline helpers in pixel coordinates.
//!
//! `x` is the column (rightward) and `y` is the row (downward), origin at the
//! top-left pixel. Sub-pixel positions are allowed.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn from_f64(x: f64, y: f64) -> Self {
        Self::new(T::lit(x), T::lit(y))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Self) -> T {
        (self - other).norm()
    }

    pub fn dist_sq(self, other: Self) -> T {
        let d = self - other;
        d.x * d.x + d.y * d.y
    }

    pub fn l1(self, other: Self) -> T {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
    }

    pub fn lerp(self, other: Self, t: T) -> Self {
        self + (other - self) * t
    }

    /// Rotation by `angle` radians in image coordinates, so a quarter turn
    /// maps `(dx, dy)` to `(-dy, dx)`.
    pub fn rotate(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Rounded integer pixel (column, row).
    pub fn pixel(self) -> (i64, i64) {
        (self.x.round_i64(), self.y.round_i64())
    }

    /// Total order on (y, x), the tie-break used across the crate.
    pub fn cmp_yx(&self, other: &Self) -> Ordering {
        self.y
            .partial_cmp(&other.y)
            .unwrap_or(Ordering::Equal)
            .then(self.x.partial_cmp(&other.x).unwrap_or(Ordering::Equal))
    }

    pub fn cast<U: Scalar>(self) -> Point2<U> {
        Point2::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }
}

impl<T: Scalar> Add for Point2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> Sub for Point2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> Mul<T> for Point2<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

/// Closest point on segment `a`-`b` to `p`, with its parameter in `[0, 1]`.
pub fn project_on_segment<T: Scalar>(p: Point2<T>, a: Point2<T>, b: Point2<T>) -> (Point2<T>, T) {
    let ab = b - a;
    let len_sq = ab.dot(ab);
    if len_sq <= T::zero() {
        return (a, T::zero());
    }
    let t = ((p - a).dot(ab) / len_sq).max(T::zero()).min(T::one());
    (a + ab * t, t)
}

pub fn polyline_length<T: Scalar>(poly: &[Point2<T>]) -> T {
    poly.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Cumulative arclength at each polyline point, starting at zero.
pub fn cumulative_lengths<T: Scalar>(poly: &[Point2<T>]) -> Vec<T> {
    let mut out = Vec::with_capacity(poly.len());
    let mut acc = T::zero();
    for (i, p) in poly.iter().enumerate() {
        if i > 0 {
            acc += poly[i - 1].dist(*p);
        }
        out.push(acc);
    }
    out
}

/// Point at arclength `s` along a polyline with precomputed cumulative lengths.
/// `s` is clamped to the polyline's extent.
pub fn point_at_arclength<T: Scalar>(poly: &[Point2<T>], cum: &[T], s: T) -> Point2<T> {
    debug_assert_eq!(poly.len(), cum.len());
    let total = *cum.last().expect("non-empty polyline");
    if s <= T::zero() {
        return poly[0];
    }
    if s >= total {
        return *poly.last().unwrap();
    }
    // first index whose cumulative length reaches s
    let idx = cum.partition_point(|c| *c < s).max(1);
    let seg_len = cum[idx] - cum[idx - 1];
    if seg_len <= T::zero() {
        return poly[idx];
    }
    let t = (s - cum[idx - 1]) / seg_len;
    poly[idx - 1].lerp(poly[idx], t)
}

/// Nearest point of a polyline to `p`: (distance, arclength, point).
pub fn project_on_polyline<T: Scalar>(
    p: Point2<T>,
    poly: &[Point2<T>],
    cum: &[T],
) -> (T, T, Point2<T>) {
    let mut best = (T::infinity(), T::zero(), poly[0]);
    if poly.len() == 1 {
        return (p.dist(poly[0]), T::zero(), poly[0]);
    }
    for i in 0..poly.len() - 1 {
        let (q, t) = project_on_segment(p, poly[i], poly[i + 1]);
        let d = p.dist(q);
        if d < best.0 {
            let s = cum[i] + (cum[i + 1] - cum[i]) * t;
            best = (d, s, q);
        }
    }
    best
}

/// Turning angle in degrees at polyline point `i` (0 for a straight
/// continuation, 180 for a full reversal).
pub fn turning_angle_deg<T: Scalar>(poly: &[Point2<T>], i: usize) -> T {
    if i == 0 || i + 1 >= poly.len() {
        return T::zero();
    }
    let u = poly[i] - poly[i - 1];
    let v = poly[i + 1] - poly[i];
    if u.norm() <= T::zero() || v.norm() <= T::zero() {
        return T::zero();
    }
    v.cross(u).abs().atan2(u.dot(v)).to_degrees()
}
