//! Feasibility kernels for short (1-Lipschitz) planar maps: finding common
//! points of disk families, transporting a point alongside a contracted
//! triangle, intersecting intrinsic balls inside a polygon, and extending
//! finite 1-Lipschitz maps point by point (with images kept in the convex
//! hull of the original images).

use crate::geom::{convex_hull, hull_distance, Point};
use crate::poly::SimplePolygon;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("target pair ({0}, {1}) is strictly longer than the source pair")]
    HypothesisViolated(usize, usize),
    #[error("input map is not pairwise 1-Lipschitz at pair ({0}, {1})")]
    InputNotLipschitz(usize, usize),
    #[error("constraint center ({0}, {1}) lies outside the polygon")]
    CenterOutside(f64, f64),
    #[error("no feasible point found for a system that should be feasible")]
    Infeasible,
}

/// A closed disk constraint: admissible points satisfy |p − center| ≤ radius.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DiskConstraint {
    pub center: Point,
    pub radius: f64,
}

impl DiskConstraint {
    pub fn new(center: Point, radius: f64) -> DiskConstraint {
        assert!(radius >= 0.0, "disk radius must be nonnegative");
        DiskConstraint { center, radius }
    }

    pub fn slack(&self, p: Point) -> f64 {
        p.dist(self.center) - self.radius
    }
}

/// A finite map between planar point sets, pairwise 1-Lipschitz.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinitePointMap {
    pub sources: Vec<Point>,
    pub images: Vec<Point>,
}

impl FinitePointMap {
    pub fn new(sources: Vec<Point>, images: Vec<Point>) -> FinitePointMap {
        assert_eq!(sources.len(), images.len());
        FinitePointMap { sources, images }
    }

    /// First source pair whose images are strictly farther apart, if any.
    pub fn lipschitz_violation(&self, tol: f64) -> Option<(usize, usize)> {
        let n = self.sources.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.images[i].dist(self.images[j])
                    > self.sources[i].dist(self.sources[j]) + tol
                {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

/// Minimizes a convex function over an axis-aligned box by nested
/// golden-section search (the partial minimum over `y` is convex in `x`,
/// hence unimodal along each axis). Returns the minimizer and its value.
fn minimize_convex(f: &dyn Fn(Point) -> f64, lo: Point, hi: Point) -> (Point, f64) {
    const PHI: f64 = 0.618_033_988_749_894_8;
    const OUTER: usize = 80;
    const INNER: usize = 80;

    let min_over_y = |x: f64| -> (f64, f64) {
        let (mut a, mut b) = (lo.y, hi.y);
        if b - a <= 0.0 {
            return (a, f(Point::new(x, a)));
        }
        let mut c = b - PHI * (b - a);
        let mut d = a + PHI * (b - a);
        let mut fc = f(Point::new(x, c));
        let mut fd = f(Point::new(x, d));
        for _ in 0..INNER {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - PHI * (b - a);
                fc = f(Point::new(x, c));
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + PHI * (b - a);
                fd = f(Point::new(x, d));
            }
        }
        let y = (a + b) / 2.0;
        (y, f(Point::new(x, y)))
    };

    let (mut a, mut b) = (lo.x, hi.x);
    if b - a <= 0.0 {
        let (y, v) = min_over_y(a);
        return (Point::new(a, y), v);
    }
    let mut c = b - PHI * (b - a);
    let mut d = a + PHI * (b - a);
    let mut fc = min_over_y(c).1;
    let mut fd = min_over_y(d).1;
    for _ in 0..OUTER {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - PHI * (b - a);
            fc = min_over_y(c).1;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + PHI * (b - a);
            fd = min_over_y(d).1;
        }
    }
    let x = (a + b) / 2.0;
    let (y, v) = min_over_y(x);
    (Point::new(x, y), v)
}

fn bbox(points: impl Iterator<Item = Point>) -> (Point, Point) {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// A point lying in every disk, chosen as the minimizer of the maximum
/// constraint slack, or `None` when the intersection is empty. The
/// minimizer of the max of `|p − c_j| − r_j` lies in the hull of the
/// centers, so the search box is their bounding box.
pub fn disks_common_point(disks: &[DiskConstraint], tol: f64) -> Option<Point> {
    if disks.is_empty() {
        return Some(Point::ORIGIN);
    }
    let (lo, hi) = bbox(disks.iter().map(|d| d.center));
    let f = |p: Point| -> f64 {
        disks
            .iter()
            .map(|d| d.slack(p))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (p, v) = minimize_convex(&f, lo, hi);
    if v <= tol {
        Some(p)
    } else {
        None
    }
}

/// Exact emptiness test for the intersection of three closed disks: the
/// intersection is nonempty iff some disk center lies in the two others, or
/// some pairwise circle intersection point lies in the third disk.
fn triple_has_common_point(d1: DiskConstraint, d2: DiskConstraint, d3: DiskConstraint) -> bool {
    let ds = [d1, d2, d3];
    let inside = |p: Point, skip: usize| -> bool {
        ds.iter()
            .enumerate()
            .all(|(i, d)| i == skip || d.slack(p) <= 1e-12)
    };
    for i in 0..3 {
        if inside(ds[i].center, usize::MAX) {
            return true;
        }
        let _ = i;
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            let k = 3 - i - j;
            for p in circle_circle(ds[i], ds[j]) {
                if ds[k].slack(p) <= 1e-12 {
                    return true;
                }
            }
        }
    }
    false
}

/// Intersection points of two circles (0, 1, or 2; tangency returns 1).
fn circle_circle(a: DiskConstraint, b: DiskConstraint) -> Vec<Point> {
    let d = a.center.dist(b.center);
    if d > a.radius + b.radius + 1e-12 || d < (a.radius - b.radius).abs() - 1e-12 || d == 0.0 {
        return Vec::new();
    }
    let x = (d * d + a.radius * a.radius - b.radius * b.radius) / (2.0 * d);
    let h2 = a.radius * a.radius - x * x;
    let h = h2.max(0.0).sqrt();
    let u = (b.center - a.center) / d;
    let base = a.center + u * x;
    let n = u.rot90();
    if h <= 1e-12 {
        vec![base]
    } else {
        vec![base + n * h, base - n * h]
    }
}

/// A triple of disks with empty common intersection, if one exists
/// (exhaustive exact search — the converse direction of the Helly step).
pub fn disks_failing_triple(disks: &[DiskConstraint]) -> Option<(usize, usize, usize)> {
    let n = disks.len();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                if !triple_has_common_point(disks[i], disks[j], disks[k]) {
                    return Some((i, j, k));
                }
            }
        }
    }
    // pairs and singletons are covered by degenerate triples only when
    // n ≥ 3; check pairs directly for completeness
    for i in 0..n {
        for j in (i + 1)..n {
            if disks[i].center.dist(disks[j].center) > disks[i].radius + disks[j].radius {
                return Some((i, j, j));
            }
        }
    }
    None
}

/// Transports `x4` alongside a contraction of the triangle `(x1, x2, x3)`:
/// returns a point of the (possibly degenerate) target triangle whose
/// distances to the target corners do not exceed the source distances.
#[allow(clippy::too_many_arguments)]
pub fn triangle_transport(
    x1: Point,
    x2: Point,
    x3: Point,
    x1p: Point,
    x2p: Point,
    x3p: Point,
    x4: Point,
    tol: f64,
) -> Result<Point, KernelError> {
    let src = [x1, x2, x3];
    let dst = [x1p, x2p, x3p];
    for i in 0..3 {
        for j in (i + 1)..3 {
            if dst[i].dist(dst[j]) > src[i].dist(src[j]) + tol {
                return Err(KernelError::HypothesisViolated(i, j));
            }
        }
    }
    let hull = convex_hull(&dst);
    let radii: Vec<f64> = (0..3).map(|i| x4.dist(src[i])).collect();
    let f = |p: Point| -> f64 {
        let disks = (0..3)
            .map(|i| p.dist(dst[i]) - radii[i])
            .fold(f64::NEG_INFINITY, f64::max);
        disks.max(hull_distance(&hull, p))
    };
    let (lo, hi) = bbox(dst.iter().copied());
    let (p, v) = minimize_convex(&f, lo, hi);
    if v <= tol {
        Ok(p)
    } else {
        Err(KernelError::Infeasible)
    }
}

/// A point of `poly` within intrinsic distance `r_i` of each center, or
/// `None`. Intrinsic balls are not Euclidean-convex, so this searches an
/// ε-net of the polygon and refines around the best candidate.
pub fn intrinsic_balls_common_point(
    poly: &SimplePolygon,
    constraints: &[(Point, f64)],
    tol: f64,
) -> Result<Option<Point>, KernelError> {
    for &(c, _) in constraints {
        if !poly.contains(c) {
            return Err(KernelError::CenterOutside(c.x, c.y));
        }
    }
    if constraints.is_empty() {
        return Ok(Some(poly.vertex(0)));
    }
    let fields: Vec<_> = constraints
        .iter()
        .map(|&(c, _)| poly.distance_field(c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| KernelError::CenterOutside(f64::NAN, f64::NAN))?;
    let slack = |p: Point| -> f64 {
        fields
            .iter()
            .zip(constraints)
            .map(|(f, &(_, r))| f.dist_to(p) - r)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    // seeds: constraint centers, vertices, centroid
    let mut best = constraints[0].0;
    let mut best_v = slack(best);
    for &(c, _) in &constraints[1..] {
        let v = slack(c);
        if v < best_v {
            best_v = v;
            best = c;
        }
    }
    for p in poly
        .vertices()
        .iter()
        .copied()
        .chain(std::iter::once(poly.centroid()))
    {
        if poly.contains(p) {
            let v = slack(p);
            if v < best_v {
                best_v = v;
                best = p;
            }
        }
    }
    // coarse net over the bounding box
    let (lo, hi) = bbox(poly.vertices().iter().copied());
    let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-12);
    const COARSE: usize = 48;
    for i in 0..=COARSE {
        for j in 0..=COARSE {
            let p = Point::new(
                lo.x + (hi.x - lo.x) * i as f64 / COARSE as f64,
                lo.y + (hi.y - lo.y) * j as f64 / COARSE as f64,
            );
            if poly.contains(p) {
                let v = slack(p);
                if v < best_v {
                    best_v = v;
                    best = p;
                }
            }
        }
    }
    // refinement: shrink a local window around the best point
    let mut eps = span / COARSE as f64;
    while eps > tol / 8.0 {
        let mut improved = false;
        for di in -3i32..=3 {
            for dj in -3i32..=3 {
                let p = Point::new(best.x + eps * di as f64 / 3.0, best.y + eps * dj as f64 / 3.0);
                if poly.contains(p) {
                    let v = slack(p);
                    if v < best_v {
                        best_v = v;
                        best = p;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            eps /= 2.0;
        }
    }
    if best_v <= tol {
        Ok(Some(best))
    } else {
        Ok(None)
    }
}

/// Extends a finite 1-Lipschitz map to new source points, one at a time.
/// Each new image satisfies every pairwise distance bound and lies in the
/// convex hull of the original images.
pub fn kirszbraun_extend(
    f: &FinitePointMap,
    new_points: &[Point],
    tol: f64,
) -> Result<FinitePointMap, KernelError> {
    if let Some((i, j)) = f.lipschitz_violation(tol) {
        return Err(KernelError::InputNotLipschitz(i, j));
    }
    let hull = convex_hull(&f.images);
    let mut out = f.clone();
    for &q in new_points {
        let radii: Vec<f64> = out.sources.iter().map(|&s| q.dist(s)).collect();
        let images = out.images.clone();
        let g = |p: Point| -> f64 {
            let disks = images
                .iter()
                .zip(&radii)
                .map(|(&c, &r)| p.dist(c) - r)
                .fold(f64::NEG_INFINITY, f64::max);
            disks.max(hull_distance(&hull, p))
        };
        let (lo, hi) = bbox(f.images.iter().copied());
        let (p, v) = minimize_convex(&g, lo, hi);
        if v > tol {
            return Err(KernelError::Infeasible);
        }
        out.sources.push(q);
        out.images.push(p);
    }
    Ok(out)
}
