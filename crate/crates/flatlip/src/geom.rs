//! Planar primitives shared by every other module: points, tolerant
//! predicates, segment intersection, interior angles, and rigid motions.
//!
//! Every geometric comparison in this crate goes through a caller-supplied
//! absolute tolerance: values closer than `tol` are equal, and the strict
//! comparisons are `< -tol` / `> +tol`. The helpers here take that tolerance
//! explicitly; higher-level objects carry one and thread it through.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Div, Mul, Neg, Sub};

/// A point of the Euclidean plane, doubling as a 2-vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Point {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn dist2(self, other: Point) -> f64 {
        (self - other).norm2()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product `self x other`.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm2(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    /// Counterclockwise rotation by a quarter turn.
    pub fn rot90(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn normalized(self) -> Point {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self / n
        }
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        self + (other - self) * t
    }

    /// Rotation of `self` around the origin by `theta` radians.
    pub fn rotated(self, theta: f64) -> Point {
        let (s, c) = theta.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Point {
    type Output = Point;
    fn div(self, s: f64) -> Point {
        Point::new(self.x / s, self.y / s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Twice the signed area of triangle `a b c`; positive for a left turn.
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn seg_point_dist(a: Point, b: Point, p: Point) -> f64 {
    p.dist(seg_nearest_point(a, b, p))
}

/// Nearest point of the closed segment `[a, b]` to `p`.
pub fn seg_nearest_point(a: Point, b: Point, p: Point) -> Point {
    let d = b - a;
    let l2 = d.norm2();
    if l2 == 0.0 {
        return a;
    }
    let t = ((p - a).dot(d) / l2).clamp(0.0, 1.0);
    a + d * t
}

/// Projection parameter of `p` on the line through `a, b` (0 at `a`, 1 at `b`),
/// unclamped.
pub fn line_param(a: Point, b: Point, p: Point) -> f64 {
    let d = b - a;
    let l2 = d.norm2();
    if l2 == 0.0 {
        0.0
    } else {
        (p - a).dot(d) / l2
    }
}

/// Is `p` within `tol` of the closed segment `[a, b]`?
pub fn on_segment(a: Point, b: Point, p: Point, tol: f64) -> bool {
    seg_point_dist(a, b, p) <= tol
}

/// Parameters along `[a, b]` at which it meets the segment `[c, d]`, within
/// `tol`. A transversal crossing contributes one parameter; a collinear
/// overlap contributes the overlap's two endpoint parameters.
pub fn seg_meet_params(a: Point, b: Point, c: Point, d: Point, tol: f64) -> Vec<f64> {
    let r = b - a;
    let s = d - c;
    let denom = r.cross(s);
    let len_r = r.norm().max(1e-300);
    let len_s = s.norm().max(1e-300);
    let mut out = Vec::new();
    if denom.abs() > tol * len_r.max(len_s) {
        // transversal lines: single candidate intersection
        let t = (c - a).cross(s) / denom;
        let u = (c - a).cross(r) / denom;
        let et = tol / len_r;
        let eu = tol / len_s;
        if t >= -et && t <= 1.0 + et && u >= -eu && u <= 1.0 + eu {
            out.push(t.clamp(0.0, 1.0));
        }
    } else {
        // parallel: report overlap endpoints when the lines coincide
        if seg_point_dist(a, b, c) <= tol || on_line(a, b, c, tol) {
            let line_hits = |p: Point| -> Option<f64> {
                if point_line_dist(a, b, p) <= tol {
                    Some(line_param(a, b, p))
                } else {
                    None
                }
            };
            let mut params: Vec<f64> = [c, d].iter().filter_map(|&p| line_hits(p)).collect();
            for (t, p) in [(0.0, a), (1.0, b)] {
                if on_segment(c, d, p, tol) {
                    params.push(t);
                }
            }
            let et = tol / len_r;
            for t in params {
                if t >= -et && t <= 1.0 + et {
                    out.push(t.clamp(0.0, 1.0));
                }
            }
        }
    }
    out
}

/// Do the open segments `(a, b)` and `(c, d)` cross transversally at a point
/// interior to both (to `tol`)? Collinear overlaps and endpoint touches do
/// not count.
pub fn properly_crossing(a: Point, b: Point, c: Point, d: Point, tol: f64) -> bool {
    let r = b - a;
    let s = d - c;
    let denom = r.cross(s);
    let len_r = r.norm().max(1e-300);
    let len_s = s.norm().max(1e-300);
    if denom.abs() <= tol * len_r.max(len_s) {
        return false;
    }
    let t = (c - a).cross(s) / denom;
    let u = (c - a).cross(r) / denom;
    let et = tol / len_r;
    let eu = tol / len_s;
    t > et && t < 1.0 - et && u > eu && u < 1.0 - eu
}

fn point_line_dist(a: Point, b: Point, p: Point) -> f64 {
    let d = b - a;
    let n = d.norm();
    if n == 0.0 {
        return p.dist(a);
    }
    (orient(a, b, p) / n).abs()
}

fn on_line(a: Point, b: Point, p: Point, tol: f64) -> bool {
    point_line_dist(a, b, p) <= tol
}

/// Interior angle at `b` of a counterclockwise boundary `a -> b -> c`,
/// in `(0, 2*pi)`. Values above `pi` are reflex (concave) corners.
pub fn interior_angle(a: Point, b: Point, c: Point) -> f64 {
    let d1 = b - a;
    let d2 = c - b;
    let turn = d1.cross(d2).atan2(d1.dot(d2));
    std::f64::consts::PI - turn
}

/// Angle at `apex` between rays toward `p` and `q`, in `[0, pi]`.
pub fn wedge_angle(apex: Point, p: Point, q: Point) -> f64 {
    let u = p - apex;
    let v = q - apex;
    u.cross(v).abs().atan2(u.dot(v))
}

/// Solves a triangle with side lengths `(la, lb, lc)` opposite to vertices
/// `A, B, C`: returns the angle at `A` (between sides `lb` and `lc`).
/// Lengths must satisfy the triangle inequality up to `tol`; degenerate
/// (collinear) inputs snap to `0` or `pi`.
pub fn triangle_angle(la: f64, lb: f64, lc: f64) -> f64 {
    let denom = 2.0 * lb * lc;
    if denom <= 0.0 {
        return 0.0;
    }
    let cos = ((lb * lb + lc * lc - la * la) / denom).clamp(-1.0, 1.0);
    cos.acos()
}

/// Convex hull by monotone chain, counterclockwise, duplicates removed.
/// Collinear input yields the two extreme points; a single point yields one.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
    });
    pts.dedup_by(|a, b| a.dist(*b) <= 1e-12);
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Euclidean distance from `p` to the convex hull given as a
/// counterclockwise vertex list (1 or 2 points allowed). Zero inside.
pub fn hull_distance(hull: &[Point], p: Point) -> f64 {
    match hull.len() {
        0 => f64::INFINITY,
        1 => p.dist(hull[0]),
        2 => seg_point_dist(hull[0], hull[1], p),
        n => {
            let inside = (0..n).all(|i| orient(hull[i], hull[(i + 1) % n], p) >= 0.0);
            if inside {
                0.0
            } else {
                (0..n)
                    .map(|i| seg_point_dist(hull[i], hull[(i + 1) % n], p))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// An orientation-preserving rigid motion `p -> R p + t` of the plane.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Rigid {
    /// rotation angle in radians
    pub theta: f64,
    pub t: Point,
}

impl Rigid {
    pub fn identity() -> Rigid {
        Rigid {
            theta: 0.0,
            t: Point::ORIGIN,
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        p.rotated(self.theta) + self.t
    }

    /// The unique orientation-preserving rigid motion taking the directed
    /// segment `from` onto the directed segment `to` (equal lengths assumed).
    pub fn matching(from: (Point, Point), to: (Point, Point)) -> Rigid {
        let theta = (to.1 - to.0).angle() - (from.1 - from.0).angle();
        let t = to.0 - from.0.rotated(theta);
        Rigid { theta, t }
    }

    pub fn inverse(&self) -> Rigid {
        let theta = -self.theta;
        Rigid {
            theta,
            t: -(self.t.rotated(theta)),
        }
    }

    /// Is this motion the identity up to `tol` on a disk of radius `scale`?
    pub fn is_identity(&self, scale: f64, tol: f64) -> bool {
        let c = Point::new(scale, 0.0);
        self.apply(c).dist(c) <= tol && self.apply(Point::ORIGIN).norm() <= tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-9;

    #[test]
    fn orientation_signs() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(1.0, 0.0);
        assert!(orient(a, b, Point::new(0.0, 1.0)) > 0.0);
        assert!(orient(a, b, Point::new(0.0, -1.0)) < 0.0);
        assert_eq!(orient(a, b, Point::new(2.0, 0.0)), 0.0);
    }

    #[test]
    fn segment_meet_transversal() {
        let ts = seg_meet_params(
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, -1.0),
            Point::new(1.0, 1.0),
            TOL,
        );
        assert_eq!(ts.len(), 1);
        assert!((ts[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn segment_meet_disjoint_parallel() {
        let ts = seg_meet_params(
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(2.0, 1.0),
            TOL,
        );
        assert!(ts.is_empty());
    }

    #[test]
    fn segment_meet_collinear_overlap() {
        let ts = seg_meet_params(
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(3.0, 0.0),
            TOL,
        );
        assert!(ts.contains(&0.5));
        assert!(ts.contains(&1.0));
    }

    #[test]
    fn interior_angles_of_a_square_corner() {
        let a = interior_angle(
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        );
        assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn reflex_corner_angle() {
        // L-shaped notch: boundary turns right at (1,1)
        let a = interior_angle(
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
        );
        assert!((a - 3.0 * std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn rigid_matching_round_trip() {
        let from = (Point::new(0.0, 0.0), Point::new(1.0, 1.0));
        let to = (Point::new(3.0, 0.0), Point::new(3.0, 2.0f64.sqrt()));
        let m = Rigid::matching(from, to);
        assert!(m.apply(from.0).dist(to.0) < 1e-12);
        assert!(m.apply(from.1).dist(to.1) < 1e-12);
        let inv = m.inverse();
        let p = Point::new(0.3, -0.7);
        assert!(inv.apply(m.apply(p)).dist(p) < 1e-12);
    }

    #[test]
    fn triangle_angle_equilateral() {
        let a = triangle_angle(1.0, 1.0, 1.0);
        assert!((a - std::f64::consts::FRAC_PI_3).abs() < 1e-12);
    }
}
