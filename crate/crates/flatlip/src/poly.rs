//! Simple polygons as intrinsic metric spaces.
//!
//! A [`SimplePolygon`] is a validated counterclockwise simple closed chain.
//! The polygon is the closed planar region it bounds, carrying the intrinsic
//! metric: the distance between two points is the length of the shortest path
//! staying inside the region. Shortest paths are polylines bending only at
//! reflex (concave) vertices, so they are computed on the visibility graph
//! over `{a, b} ∪ {reflex vertices}`.

use crate::geom::{
    interior_angle, line_param, on_segment, orient, properly_crossing, seg_meet_params,
    seg_nearest_point, seg_point_dist, Point,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("a polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon boundary self-intersects (edges {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("polygon area {0} is below the degeneracy threshold")]
    DegenerateArea(f64),
    #[error("repeated vertex at index {0}")]
    RepeatedVertex(usize),
    #[error("point ({0}, {1}) lies outside the polygon")]
    PointOutside(f64, f64),
    #[error("polygon is not convex (reflex corner at index {0})")]
    NotConvex(usize),
    #[error("no interior path between the query points")]
    NoPath,
}

/// How a vertex-to-vertex chord sits inside its polygon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChordKind {
    /// One straight segment lying on the boundary.
    Side,
    /// One straight segment meeting the boundary only at its endpoints.
    SmoothDiagonal,
    /// A geodesic that bends, or grazes the boundary between its endpoints.
    Diagonal,
}

/// A geodesic chord between two boundary vertices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Chord {
    pub endpoints: (usize, usize),
    pub kind: ChordKind,
    pub length: f64,
    /// Bend points of the geodesic, endpoints included.
    pub path: Vec<Point>,
}

/// A validated simple polygon, stored counterclockwise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimplePolygon {
    vertices: Vec<Point>,
    tolerance: f64,
}

impl SimplePolygon {
    /// Validates and normalizes a vertex chain: at least three vertices, no
    /// repeated consecutive vertices, no self-intersection, area above
    /// `tolerance^2`. Clockwise input is reversed to counterclockwise.
    pub fn build(vertices: Vec<Point>, tolerance: f64) -> Result<SimplePolygon, GeomError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeomError::TooFewVertices(n));
        }
        for i in 0..n {
            if vertices[i].dist(vertices[(i + 1) % n]) <= tolerance {
                return Err(GeomError::RepeatedVertex(i));
            }
        }
        // transversal crossings are flagged even when lobes cancel to zero area
        for i in 0..n {
            let (a1, b1) = (vertices[i], vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                let (a2, b2) = (vertices[j], vertices[(j + 1) % n]);
                if properly_crossing(a1, b1, a2, b2, tolerance) {
                    return Err(GeomError::SelfIntersecting(i, j));
                }
            }
        }
        let mut vertices = vertices;
        let area2: f64 = signed_area2(&vertices);
        if area2.abs() <= 2.0 * tolerance * tolerance {
            return Err(GeomError::DegenerateArea(area2 / 2.0));
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        // pairwise edge intersection: only shared endpoints of neighbors allowed
        for i in 0..n {
            let (a1, b1) = (vertices[i], vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                let (a2, b2) = (vertices[j], vertices[(j + 1) % n]);
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let hits = seg_meet_params(a1, b1, a2, b2, tolerance);
                for t in hits {
                    let p = a1.lerp(b1, t);
                    let at_shared = if j == i + 1 {
                        p.dist(b1) <= 2.0 * tolerance
                    } else if i == 0 && j == n - 1 {
                        p.dist(a1) <= 2.0 * tolerance
                    } else {
                        false
                    };
                    if !(adjacent && at_shared) {
                        return Err(GeomError::SelfIntersecting(i, j));
                    }
                }
            }
        }
        Ok(SimplePolygon {
            vertices,
            tolerance,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i % self.vertices.len()]
    }

    pub fn edge(&self, i: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    pub fn area(&self) -> f64 {
        signed_area2(&self.vertices) / 2.0
    }

    pub fn centroid(&self) -> Point {
        let mut c = Point::ORIGIN;
        let mut a2 = 0.0;
        let n = self.vertices.len();
        for i in 0..n {
            let (p, q) = (self.vertices[i], self.vertices[(i + 1) % n]);
            let w = p.cross(q);
            c = c + (p + q) * w;
            a2 += w;
        }
        c / (3.0 * a2)
    }

    /// Interior angle at vertex `i`, in `(0, 2*pi)`.
    pub fn interior_angle(&self, i: usize) -> f64 {
        let n = self.vertices.len();
        interior_angle(
            self.vertices[(i + n - 1) % n],
            self.vertices[i % n],
            self.vertices[(i + 1) % n],
        )
    }

    /// Reflex test with the polygon's tolerance: strictly concave corners only.
    pub fn is_reflex(&self, i: usize) -> bool {
        let n = self.vertices.len();
        let a = self.vertices[(i + n - 1) % n];
        let b = self.vertices[i % n];
        let c = self.vertices[(i + 1) % n];
        orient(a, b, c) < -self.tolerance * (a.dist(b) + b.dist(c))
    }

    pub fn is_convex(&self) -> bool {
        (0..self.vertices.len()).all(|i| !self.is_reflex(i))
    }

    /// Distance from `p` to the boundary chain.
    pub fn boundary_dist(&self, p: Point) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| seg_point_dist(self.vertices[i], self.vertices[(i + 1) % n], p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn on_boundary(&self, p: Point) -> bool {
        self.boundary_dist(p) <= self.tolerance
    }

    /// Membership in the closed region, `tolerance`-fattened at the boundary.
    pub fn contains(&self, p: Point) -> bool {
        if self.boundary_dist(p) <= self.tolerance {
            return true;
        }
        self.strictly_inside(p)
    }

    fn strictly_inside(&self, p: Point) -> bool {
        // even-odd rule with the half-open edge convention
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if (a.y > p.y) != (b.y > p.y) {
                let x_hit = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_hit {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Does the closed segment `[a, b]` stay inside the closed region?
    pub fn segment_inside(&self, a: Point, b: Point) -> bool {
        if !self.contains(a) || !self.contains(b) {
            return false;
        }
        if a.dist(b) <= self.tolerance {
            return true;
        }
        let mut ts = vec![0.0, 1.0];
        let n = self.vertices.len();
        for i in 0..n {
            let (p, q) = (self.vertices[i], self.vertices[(i + 1) % n]);
            ts.extend(seg_meet_params(a, b, p, q, self.tolerance));
        }
        ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let len = a.dist(b);
        let eps = (self.tolerance / len).max(1e-12);
        for w in ts.windows(2) {
            if w[1] - w[0] > 2.0 * eps {
                let mid = a.lerp(b, (w[0] + w[1]) / 2.0);
                if !self.contains(mid) {
                    return false;
                }
            }
        }
        true
    }

    /// Indices of the strictly concave vertices.
    pub fn reflex_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&i| self.is_reflex(i))
            .collect()
    }

    /// Intrinsic distance between two points of the closed region, together
    /// with the geodesic polyline realizing it.
    pub fn intrinsic_distance(&self, a: Point, b: Point) -> Result<(f64, Vec<Point>), GeomError> {
        if !self.contains(a) {
            return Err(GeomError::PointOutside(a.x, a.y));
        }
        if !self.contains(b) {
            return Err(GeomError::PointOutside(b.x, b.y));
        }
        if self.segment_inside(a, b) {
            return Ok((a.dist(b), vec![a, b]));
        }
        let mut nodes = vec![a, b];
        nodes.extend(self.reflex_vertices().iter().map(|&i| self.vertices[i]));
        let m = nodes.len();
        let mut adj = vec![Vec::new(); m];
        for i in 0..m {
            for j in (i + 1)..m {
                if self.segment_inside(nodes[i], nodes[j]) {
                    let w = nodes[i].dist(nodes[j]);
                    adj[i].push((j, w));
                    adj[j].push((i, w));
                }
            }
        }
        let (dist, prev) = dijkstra(&adj, 0);
        if dist[1].is_infinite() {
            return Err(GeomError::NoPath);
        }
        let mut path = vec![];
        let mut cur = 1;
        while cur != usize::MAX {
            path.push(nodes[cur]);
            cur = prev[cur];
        }
        path.reverse();
        Ok((dist[1], path))
    }

    /// Precomputed single-source data for answering many intrinsic-distance
    /// queries from the same source point.
    pub fn distance_field(&self, source: Point) -> Result<DistanceField<'_>, GeomError> {
        if !self.contains(source) {
            return Err(GeomError::PointOutside(source.x, source.y));
        }
        let reflex: Vec<Point> = self
            .reflex_vertices()
            .iter()
            .map(|&i| self.vertices[i])
            .collect();
        let m = reflex.len();
        // source + reflex vertices
        let mut nodes = vec![source];
        nodes.extend_from_slice(&reflex);
        let mut adj = vec![Vec::new(); m + 1];
        for i in 0..=m {
            for j in (i + 1)..=m {
                if self.segment_inside(nodes[i], nodes[j]) {
                    let w = nodes[i].dist(nodes[j]);
                    adj[i].push((j, w));
                    adj[j].push((i, w));
                }
            }
        }
        let (dist, _) = dijkstra(&adj, 0);
        Ok(DistanceField {
            poly: self,
            source,
            reflex,
            dist_from_source: dist,
        })
    }

    /// Classifies the chord between vertices `i` and `j`.
    pub fn classify_chord(&self, i: usize, j: usize) -> Result<Chord, GeomError> {
        let n = self.vertices.len();
        let (vi, vj) = (self.vertices[i % n], self.vertices[j % n]);
        let (length, path) = self.intrinsic_distance(vi, vj)?;
        let kind = if path.len() > 2 {
            ChordKind::Diagonal
        } else {
            self.straight_chord_kind(i % n, j % n)
        };
        Ok(Chord {
            endpoints: (i % n, j % n),
            kind,
            length,
            path,
        })
    }

    /// For a chord known to be one straight segment: side, smooth, or grazing.
    fn straight_chord_kind(&self, i: usize, j: usize) -> ChordKind {
        let n = self.vertices.len();
        let (a, b) = (self.vertices[i], self.vertices[j]);
        // side: every sampled point of the segment lies on the boundary
        let samples = 9;
        let all_on_boundary = (1..samples)
            .all(|k| self.on_boundary(a.lerp(b, k as f64 / samples as f64)));
        if all_on_boundary {
            return ChordKind::Side;
        }
        // smooth: the open segment meets no boundary edge away from endpoints
        for e in 0..n {
            let (p, q) = (self.vertices[e], self.vertices[(e + 1) % n]);
            for t in seg_meet_params(a, b, p, q, self.tolerance) {
                let hit = a.lerp(b, t);
                if hit.dist(a) > 2.0 * self.tolerance && hit.dist(b) > 2.0 * self.tolerance {
                    return ChordKind::Diagonal;
                }
            }
        }
        ChordKind::SmoothDiagonal
    }

    /// Nearest-point projection onto a convex polygon. Errors when the
    /// polygon has a strictly concave corner.
    pub fn project_convex(&self, p: Point) -> Result<Point, GeomError> {
        if let Some(i) = (0..self.vertices.len()).find(|&i| self.is_reflex(i)) {
            return Err(GeomError::NotConvex(i));
        }
        if self.contains(p) {
            return Ok(p);
        }
        let n = self.vertices.len();
        let mut best = self.vertices[0];
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            let q = seg_nearest_point(self.vertices[i], self.vertices[(i + 1) % n], p);
            let d = p.dist(q);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        Ok(best)
    }

    /// Arc-length position of a boundary point: `(edge index, parameter)`.
    pub fn boundary_location(&self, p: Point) -> Option<(usize, f64)> {
        let n = self.vertices.len();
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            if on_segment(a, b, p, self.tolerance) {
                return Some((i, line_param(a, b, p).clamp(0.0, 1.0)));
            }
        }
        None
    }
}

/// Single-source intrinsic distances; see [`SimplePolygon::distance_field`].
pub struct DistanceField<'a> {
    poly: &'a SimplePolygon,
    source: Point,
    reflex: Vec<Point>,
    dist_from_source: Vec<f64>,
}

impl DistanceField<'_> {
    /// Intrinsic distance from the field's source to `p` (must be inside).
    pub fn dist_to(&self, p: Point) -> f64 {
        let mut best = f64::INFINITY;
        if self.poly.segment_inside(self.source, p) {
            best = self.source.dist(p);
        }
        for (k, &r) in self.reflex.iter().enumerate() {
            let via = self.dist_from_source[k + 1];
            if via + r.dist(p) < best && self.poly.segment_inside(r, p) {
                best = via + r.dist(p);
            }
        }
        best
    }
}

fn signed_area2(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut s = 0.0;
    for i in 0..n {
        s += vertices[i].cross(vertices[(i + 1) % n]);
    }
    s
}

/// Dense-graph Dijkstra; returns distances and predecessor indices.
fn dijkstra(adj: &[Vec<(usize, f64)>], src: usize) -> (Vec<f64>, Vec<usize>) {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    dist[src] = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        let mut best = f64::INFINITY;
        for v in 0..n {
            if !done[v] && dist[v] < best {
                best = dist[v];
                u = v;
            }
        }
        if u == usize::MAX {
            break;
        }
        done[u] = true;
        for &(v, w) in &adj[u] {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                prev[v] = u;
            }
        }
    }
    (dist, prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-9;

    fn l_polygon() -> SimplePolygon {
        SimplePolygon::build(
            vec![
                Point::new(0.0, 0.0),
                Point::new(2.0, 0.0),
                Point::new(2.0, 1.0),
                Point::new(1.0, 1.0),
                Point::new(1.0, 2.0),
                Point::new(0.0, 2.0),
            ],
            TOL,
        )
        .unwrap()
    }

    #[test]
    fn unit_square_builds_ccw_from_cw_input() {
        let p = SimplePolygon::build(
            vec![
                Point::new(0.0, 0.0),
                Point::new(0.0, 1.0),
                Point::new(1.0, 1.0),
                Point::new(1.0, 0.0),
            ],
            TOL,
        )
        .unwrap();
        assert!(p.area() > 0.0);
        assert!((p.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bowtie_is_rejected() {
        // asymmetric, so the lobes' signed areas do not cancel
        let r = SimplePolygon::build(
            vec![
                Point::new(0.0, 0.0),
                Point::new(3.0, 3.0),
                Point::new(3.0, 0.0),
                Point::new(0.0, 1.0),
            ],
            TOL,
        );
        assert!(matches!(r, Err(GeomError::SelfIntersecting(_, _))));
        // symmetric bowtie: lobes cancel to zero area, crossing still detected
        let r = SimplePolygon::build(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(0.5, 0.1),
                Point::new(0.5, -0.1),
            ],
            TOL,
        );
        assert!(matches!(r, Err(GeomError::SelfIntersecting(_, _))));
    }

    #[test]
    fn collinear_spike_is_rejected() {
        // zero-area triangle
        let r = SimplePolygon::build(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(2.0, 0.0),
            ],
            TOL,
        );
        assert!(matches!(r, Err(GeomError::DegenerateArea(_))));
    }

    #[test]
    fn l_polygon_distance_bends_at_reflex_corner() {
        let p = l_polygon();
        let (d, path) = p
            .intrinsic_distance(Point::new(2.0, 1.0), Point::new(1.0, 2.0))
            .unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert_eq!(path.len(), 3);
        assert!(path[1].dist(Point::new(1.0, 1.0)) < 1e-12);
    }

    #[test]
    fn convex_distance_is_straight() {
        let p = SimplePolygon::build(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ],
            TOL,
        )
        .unwrap();
        let (d, path) = p
            .intrinsic_distance(Point::new(0.0, 0.0), Point::new(1.0, 1.0))
            .unwrap();
        assert!((d - 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(path.len(), 2);
    }

    #[test]
    fn chord_classification_on_the_l_polygon() {
        let p = l_polygon();
        assert_eq!(p.classify_chord(0, 1).unwrap().kind, ChordKind::Side);
        // (0,0) -> (2,1): straight interior segment
        assert_eq!(
            p.classify_chord(0, 2).unwrap().kind,
            ChordKind::SmoothDiagonal
        );
        // (2,1) -> (1,2): bends at the reflex corner
        let c = p.classify_chord(2, 4).unwrap();
        assert_eq!(c.kind, ChordKind::Diagonal);
        assert!((c.length - 2.0).abs() < 1e-12);
    }

    #[test]
    fn side_collinear_across_many_edges() {
        // boundary has a flat vertex; the two-edge run is still a side
        let p = SimplePolygon::build(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(2.0, 0.0),
                Point::new(2.0, 1.0),
                Point::new(0.0, 1.0),
            ],
            TOL,
        )
        .unwrap();
        assert_eq!(p.classify_chord(0, 2).unwrap().kind, ChordKind::Side);
    }

    #[test]
    fn projection_onto_convex_region() {
        let p = SimplePolygon::build(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ],
            TOL,
        )
        .unwrap();
        let q = p.project_convex(Point::new(2.0, 0.5)).unwrap();
        assert!(q.dist(Point::new(1.0, 0.5)) < 1e-12);
        // idempotent
        let q2 = p.project_convex(q).unwrap();
        assert!(q2.dist(q) < 1e-12);
        // rejects nonconvex input
        assert!(l_polygon().project_convex(Point::ORIGIN).is_err());
    }

    #[test]
    fn distance_field_matches_pairwise_queries() {
        let p = l_polygon();
        let field = p.distance_field(Point::new(2.0, 1.0)).unwrap();
        for q in [
            Point::new(1.0, 2.0),
            Point::new(0.5, 0.5),
            Point::new(0.1, 1.9),
            Point::new(2.0, 0.0),
        ] {
            let (d, _) = p.intrinsic_distance(Point::new(2.0, 1.0), q).unwrap();
            assert!((field.dist_to(q) - d).abs() < 1e-9);
        }
    }
}
