//! Closed flat surfaces glued from Euclidean polygons.
//!
//! A surface is a finite list of simple polygons, each drawn in its own
//! chart, together with a perfect pairing of their boundary edges.  A
//! pairing of sign `+1` identifies two edges by a translation (the edge
//! vectors must be exact negatives); a pairing of sign `-1` identifies them
//! by a half turn `z -> -z + c` (the edge vectors must be equal).  Corner
//! cycles of the pairing produce the cone points; their angles, the Euler
//! characteristic, and the holonomy sign are derived and validated on
//! construction.

use crate::geom::Point;
use crate::poly::{GeomError, SimplePolygon};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Construction or surgery failure for a glued surface.
#[derive(Debug, thiserror::Error)]
pub enum SurfaceError {
    #[error("polygon {0}: {1}")]
    BadPolygon(usize, GeomError),
    #[error("polygon {0} is listed clockwise; vertices must be counterclockwise")]
    NotCounterclockwise(usize),
    #[error("gluing {0} references a missing polygon edge")]
    BadEdgeRef(usize),
    #[error("edge ({poly}, {edge}) is not glued")]
    UnmatchedEdge { poly: usize, edge: usize },
    #[error("edge ({poly}, {edge}) appears in more than one gluing")]
    EdgeReused { poly: usize, edge: usize },
    #[error("gluing {index}: edge vectors deviate by {deviation} from the sign-{sign} relation")]
    LengthMismatch {
        index: usize,
        sign: i8,
        deviation: f64,
    },
    #[error("cone angle {angle} is not pi*(k+2) for an admissible integer k")]
    BadConeAngle { angle: f64 },
    #[error("gluing graph is not connected")]
    Disconnected,
    #[error("cone orders sum to {sum_k} but 4g-4 = {target} (genus {genus})")]
    StratumViolation { sum_k: i64, target: i64, genus: i64 },
    #[error("matrix has non-positive determinant {0}")]
    SingularMatrix(f64),
    #[error("not a polygon-decomposed cylinder: {0}")]
    NotACylinder(String),
    #[error("slit endpoint or interior too close to a singularity")]
    SlitHitsSingularity,
    #[error("slit cannot be embedded: {0}")]
    SlitNotEmbeddable(String),
}

/// One boundary identification. Edge `e` of a polygon runs from vertex `e`
/// to vertex `e+1 (mod n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gluing {
    pub from: (usize, usize),
    pub to: (usize, usize),
    pub sign: i8,
}

/// Chart change when crossing a glued edge: `w -> sign * w + shift`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Transition {
    pub sign: f64,
    pub shift: Point,
}

impl Transition {
    pub fn identity() -> Transition {
        Transition {
            sign: 1.0,
            shift: Point::new(0.0, 0.0),
        }
    }

    pub fn apply(&self, w: Point) -> Point {
        Point::new(self.sign * w.x + self.shift.x, self.sign * w.y + self.shift.y)
    }

    /// Direction vectors transform without the shift.
    pub fn apply_vec(&self, v: Point) -> Point {
        Point::new(self.sign * v.x, self.sign * v.y)
    }

    /// `self.compose(other)` maps `w` to `self.apply(other.apply(w))`.
    pub fn compose(&self, other: &Transition) -> Transition {
        Transition {
            sign: self.sign * other.sign,
            shift: Point::new(
                self.sign * other.shift.x + self.shift.x,
                self.sign * other.shift.y + self.shift.y,
            ),
        }
    }

    pub fn inverse(&self) -> Transition {
        Transition {
            sign: self.sign,
            shift: Point::new(-self.sign * self.shift.x, -self.sign * self.shift.y),
        }
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.sign > 0.0 && self.shift.norm() <= tol
    }
}

/// A cone point: the cyclically ordered corners identified to it, the total
/// angle, and the integer order `k` with angle = pi*(k+2).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeClass {
    pub corners: Vec<(usize, usize)>,
    pub angle: f64,
    pub order: i64,
}

/// A maximal flat cylinder, reported with enough chart geometry to support
/// the height-stretch surgery: the boundary walls as per-polygon segments
/// and one representative core orbit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cylinder {
    /// Unit vector of the core direction (canonical sign).
    pub direction: Point,
    pub circumference: f64,
    pub height: f64,
    /// Indices into the saddle list the detector was run against.
    pub boundary_saddles: Vec<usize>,
    /// One closed core orbit, as chart segments.
    pub core_curves: Vec<ChartSegment>,
    /// Boundary wall geometry, as chart segments.
    pub walls: Vec<ChartSegment>,
}

/// A straight segment in the chart of one polygon.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChartSegment {
    pub polygon: usize,
    pub a: Point,
    pub b: Point,
}

/// A closed flat surface built from glued polygons, with its derived
/// singularity ledger, genus, holonomy sign, and area.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemiTranslationSurface {
    polygons: Vec<SimplePolygon>,
    gluings: Vec<Gluing>,
    cones: Vec<ConeClass>,
    corner_class: BTreeMap<(usize, usize), usize>,
    partner: BTreeMap<(usize, usize), ((usize, usize), i8)>,
    genus: i64,
    epsilon: i8,
    area: f64,
    tolerance: f64,
    allow_marked: bool,
}

impl SemiTranslationSurface {
    /// Validates gluing data and derives the singularity ledger. Cone
    /// angles of `2*pi` (marked regular points) are rejected.
    pub fn assemble(
        polygons: Vec<Vec<Point>>,
        gluings: Vec<Gluing>,
        tolerance: f64,
    ) -> Result<SemiTranslationSurface, SurfaceError> {
        Self::assemble_with(polygons, gluings, tolerance, false)
    }

    /// As `assemble`, but optionally admits marked regular points
    /// (cone angle exactly `2*pi`, order 0) for scaffolding.
    pub fn assemble_with(
        polygons: Vec<Vec<Point>>,
        gluings: Vec<Gluing>,
        tolerance: f64,
        allow_marked: bool,
    ) -> Result<SemiTranslationSurface, SurfaceError> {
        let mut polys = Vec::with_capacity(polygons.len());
        for (i, raw) in polygons.into_iter().enumerate() {
            let ccw = signed_area2(&raw) > 0.0;
            if !ccw {
                return Err(SurfaceError::NotCounterclockwise(i));
            }
            let sp = SimplePolygon::build(raw, tolerance)
                .map_err(|e| SurfaceError::BadPolygon(i, e))?;
            polys.push(sp);
        }

        // Every edge glued exactly once.
        let mut partner: BTreeMap<(usize, usize), ((usize, usize), i8)> = BTreeMap::new();
        for (gi, g) in gluings.iter().enumerate() {
            for &(p, e) in [&g.from, &g.to] {
                if p >= polys.len() || e >= polys[p].len() {
                    return Err(SurfaceError::BadEdgeRef(gi));
                }
            }
            if g.from == g.to || (g.sign != 1 && g.sign != -1) {
                return Err(SurfaceError::BadEdgeRef(gi));
            }
            for &(side, other) in &[(g.from, g.to), (g.to, g.from)] {
                if partner.insert(side, (other, g.sign)).is_some() {
                    return Err(SurfaceError::EdgeReused {
                        poly: side.0,
                        edge: side.1,
                    });
                }
            }
        }
        for (pi, poly) in polys.iter().enumerate() {
            for e in 0..poly.len() {
                if !partner.contains_key(&(pi, e)) {
                    return Err(SurfaceError::UnmatchedEdge { poly: pi, edge: e });
                }
            }
        }

        // Edge-vector relations: sign +1 wants opposite vectors, -1 equal.
        let scale = polys
            .iter()
            .flat_map(|p| p.vertices().iter())
            .fold(1.0_f64, |m, v| m.max(v.x.abs()).max(v.y.abs()));
        let vec_tol = tolerance * (1.0 + scale) * 10.0;
        for (gi, g) in gluings.iter().enumerate() {
            let va = edge_vec(&polys[g.from.0], g.from.1);
            let vb = edge_vec(&polys[g.to.0], g.to.1);
            let deviation = if g.sign == 1 {
                Point::new(va.x + vb.x, va.y + vb.y).norm()
            } else {
                Point::new(va.x - vb.x, va.y - vb.y).norm()
            };
            if deviation > vec_tol {
                return Err(SurfaceError::LengthMismatch {
                    index: gi,
                    sign: g.sign,
                    deviation,
                });
            }
        }

        // Corner cycles: crossing the outgoing edge of corner (p, v) lands
        // at the corner following the partner edge.
        let mut corner_class = BTreeMap::new();
        let mut cones = Vec::new();
        for pi in 0..polys.len() {
            for v in 0..polys[pi].len() {
                if corner_class.contains_key(&(pi, v)) {
                    continue;
                }
                let class_id = cones.len();
                let mut corners = Vec::new();
                let mut angle = 0.0;
                let mut cur = (pi, v);
                loop {
                    corners.push(cur);
                    corner_class.insert(cur, class_id);
                    angle += polys[cur.0].interior_angle(cur.1);
                    let (to, _) = partner[&(cur.0, cur.1)];
                    cur = (to.0, (to.1 + 1) % polys[to.0].len());
                    if cur == (pi, v) {
                        break;
                    }
                }
                let k = (angle / std::f64::consts::PI).round() as i64 - 2;
                let target = std::f64::consts::PI * (k + 2) as f64;
                let angle_tol = (tolerance * (1.0 + angle)).max(1e-9 * (1.0 + angle));
                let admissible = k >= 1 || (allow_marked && k == 0);
                if (angle - target).abs() > angle_tol || !admissible {
                    return Err(SurfaceError::BadConeAngle { angle });
                }
                cones.push(ConeClass {
                    corners,
                    angle,
                    order: k,
                });
            }
        }

        // Connectivity of the gluing graph.
        let mut seen = vec![false; polys.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(p) = queue.pop_front() {
            for e in 0..polys[p].len() {
                let ((q, _), _) = partner[&(p, e)];
                if !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(SurfaceError::Disconnected);
        }

        // Euler characteristic and the total-angle identity.
        let v_count = cones.len() as i64;
        let e_count = gluings.len() as i64;
        let f_count = polys.len() as i64;
        let chi = v_count - e_count + f_count;
        if chi % 2 != 0 {
            return Err(SurfaceError::StratumViolation {
                sum_k: cones.iter().map(|c| c.order).sum(),
                target: i64::MIN,
                genus: i64::MIN,
            });
        }
        let genus = (2 - chi) / 2;
        let sum_k: i64 = cones.iter().map(|c| c.order).sum();
        if sum_k != 4 * genus - 4 {
            return Err(SurfaceError::StratumViolation {
                sum_k,
                target: 4 * genus - 4,
                genus,
            });
        }

        // Holonomy sign: propagate chart flips over a spanning tree; any
        // cross edge that still needs a half turn makes the holonomy -1.
        let mut flip: Vec<Option<i8>> = vec![None; polys.len()];
        flip[0] = Some(1);
        let mut queue = VecDeque::from([0usize]);
        while let Some(p) = queue.pop_front() {
            for e in 0..polys[p].len() {
                let ((q, _), s) = partner[&(p, e)];
                if flip[q].is_none() {
                    flip[q] = Some(s * flip[p].unwrap());
                    queue.push_back(q);
                }
            }
        }
        let mut epsilon = 1;
        for g in &gluings {
            let effective = g.sign * flip[g.from.0].unwrap() * flip[g.to.0].unwrap();
            if effective == -1 {
                epsilon = -1;
            }
        }

        let area = polys.iter().map(|p| p.area()).sum();
        Ok(SemiTranslationSurface {
            polygons: polys,
            gluings,
            cones,
            corner_class,
            partner,
            genus,
            epsilon,
            area,
            tolerance,
            allow_marked,
        })
    }

    pub fn polygons(&self) -> &[SimplePolygon] {
        &self.polygons
    }

    pub fn polygon(&self, i: usize) -> &SimplePolygon {
        &self.polygons[i]
    }

    pub fn gluings(&self) -> &[Gluing] {
        &self.gluings
    }

    pub fn cones(&self) -> &[ConeClass] {
        &self.cones
    }

    /// Cone orders, sorted descending.
    pub fn orders(&self) -> Vec<i64> {
        let mut ks: Vec<i64> = self.cones.iter().map(|c| c.order).collect();
        ks.sort_unstable_by(|a, b| b.cmp(a));
        ks
    }

    pub fn genus(&self) -> i64 {
        self.genus
    }

    pub fn epsilon(&self) -> i8 {
        self.epsilon
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn allows_marked(&self) -> bool {
        self.allow_marked
    }

    /// The glued partner of edge `(p, e)` with the pairing sign.
    pub fn partner(&self, p: usize, e: usize) -> ((usize, usize), i8) {
        self.partner[&(p, e)]
    }

    /// The cone class id of corner `(p, v)`.
    pub fn corner_class(&self, p: usize, v: usize) -> usize {
        self.corner_class[&(p, v)]
    }

    /// Chart change developing the partner polygon of edge `(p, e)` into
    /// the chart of polygon `p`.
    pub fn transition(&self, p: usize, e: usize) -> Transition {
        let ((q, f), s) = self.partner[&(p, e)];
        let b1 = self.polygons[p].vertex((e + 1) % self.polygons[p].len());
        let a2 = self.polygons[q].vertex(f);
        if s == 1 {
            Transition {
                sign: 1.0,
                shift: Point::new(b1.x - a2.x, b1.y - a2.y),
            }
        } else {
            Transition {
                sign: -1.0,
                shift: Point::new(b1.x + a2.x, b1.y + a2.y),
            }
        }
    }

    /// Shortest polygon edge; every polygon edge joins two cone points, so
    /// this is an attained upper bound for the shortest singular geodesic.
    pub fn min_edge(&self) -> f64 {
        self.polygons
            .iter()
            .flat_map(|p| (0..p.len()).map(move |e| edge_vec(p, e).norm()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Post-compose every chart with a positively oriented linear map.
    /// Gluing combinatorics and signs are unchanged; the area scales by
    /// the determinant.
    pub fn apply_gl2(&self, a: [[f64; 2]; 2]) -> Result<SemiTranslationSurface, SurfaceError> {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det <= 1e-12 {
            return Err(SurfaceError::SingularMatrix(det));
        }
        let norm = a
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |m, &x| m.max(x.abs()));
        let polys = self
            .polygons
            .iter()
            .map(|p| p.vertices().iter().map(|&v| mat_apply(a, v)).collect())
            .collect();
        SemiTranslationSurface::assemble_with(
            polys,
            self.gluings.clone(),
            self.tolerance * norm.max(1.0),
            self.allow_marked,
        )
    }

    /// Scale every chart uniformly by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<SemiTranslationSurface, SurfaceError> {
        self.apply_gl2([[c, 0.0], [0.0, c]])
    }

    /// Stretch a flat cylinder transversally so its height becomes
    /// `e^t * height`, leaving the complement untouched.
    ///
    /// The cylinder must be a union of whole polygons: membership is found
    /// by flooding from the core orbit across every gluing that is not a
    /// boundary wall, and is validated against the cylinder area.
    pub fn stretch_cylinder(
        &self,
        cyl: &Cylinder,
        t: f64,
    ) -> Result<SemiTranslationSurface, SurfaceError> {
        let scale_tol = self.tolerance * (1.0 + self.area.sqrt()) * 100.0;
        // Polygon edges covered by a boundary wall.
        let mut wall_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (pi, poly) in self.polygons.iter().enumerate() {
            for e in 0..poly.len() {
                let a = poly.vertex(e);
                let b = poly.vertex((e + 1) % poly.len());
                let m = a.lerp(b, 0.5);
                let covered = cyl.walls.iter().any(|w| {
                    w.polygon == pi
                        && crate::geom::seg_point_dist(w.a, w.b, a) <= scale_tol
                        && crate::geom::seg_point_dist(w.a, w.b, b) <= scale_tol
                        && crate::geom::seg_point_dist(w.a, w.b, m) <= scale_tol
                });
                if covered {
                    wall_edges.insert((pi, e));
                }
            }
        }
        // Flood from the core orbit across non-wall gluings.
        let mut member = vec![false; self.polygons.len()];
        let mut queue = VecDeque::new();
        for seg in &cyl.core_curves {
            if !member[seg.polygon] {
                member[seg.polygon] = true;
                queue.push_back(seg.polygon);
            }
        }
        if queue.is_empty() {
            return Err(SurfaceError::NotACylinder("empty core orbit".into()));
        }
        while let Some(p) = queue.pop_front() {
            for e in 0..self.polygons[p].len() {
                if wall_edges.contains(&(p, e)) {
                    continue;
                }
                let ((q, f), _) = self.partner[&(p, e)];
                if wall_edges.contains(&(q, f)) {
                    return Err(SurfaceError::NotACylinder(
                        "wall covers only one side of a gluing".into(),
                    ));
                }
                if !member[q] {
                    member[q] = true;
                    queue.push_back(q);
                }
            }
        }
        let member_area: f64 = self
            .polygons
            .iter()
            .zip(&member)
            .filter(|(_, &m)| m)
            .map(|(p, _)| p.area())
            .sum();
        let cyl_area = cyl.circumference * cyl.height;
        if (member_area - cyl_area).abs() > 1e-6 * (1.0 + cyl_area) {
            return Err(SurfaceError::NotACylinder(format!(
                "flooded area {member_area} does not match circumference*height {cyl_area}"
            )));
        }
        // Every member-to-outside gluing must cross a wall parallel to the
        // core direction (those edge vectors are fixed by the stretch).
        let d = cyl.direction;
        for g in &self.gluings {
            let (p, _) = g.from;
            let (q, _) = g.to;
            if member[p] != member[q] {
                let inside = if member[p] { g.from } else { g.to };
                let v = edge_vec(&self.polygons[inside.0], inside.1);
                if v.cross(d).abs() > scale_tol * (1.0 + v.norm()) {
                    return Err(SurfaceError::NotACylinder(
                        "boundary gluing not parallel to the core direction".into(),
                    ));
                }
            }
        }
        // Transverse stretch about the core direction.
        let (c, s) = (d.x, d.y);
        let et = t.exp();
        let m = [
            [c * c + et * s * s, c * s - et * c * s],
            [c * s - et * c * s, s * s + et * c * c],
        ];
        let polys = self
            .polygons
            .iter()
            .enumerate()
            .map(|(pi, p)| {
                p.vertices()
                    .iter()
                    .map(|&v| if member[pi] { mat_apply(m, v) } else { v })
                    .collect()
            })
            .collect();
        let out = SemiTranslationSurface::assemble_with(
            polys,
            self.gluings.clone(),
            self.tolerance * et.max(1.0),
            self.allow_marked,
        )?;
        if out.orders() != self.orders() || out.genus != self.genus || out.epsilon != self.epsilon
        {
            return Err(SurfaceError::NotACylinder(
                "surgery changed the stratum".into(),
            ));
        }
        Ok(out)
    }

    /// Cut both surfaces along the same horizontal slit and cross-glue the
    /// four flaps, producing a surface of genus `g1 + g2` with two new cone
    /// points of angle `4*pi` at the slit ends.
    ///
    /// The slit must lie strictly inside one polygon of each surface, on a
    /// horizontal line through two vertices of that polygon (the cut chord
    /// then ends at existing cone points and creates no spurious vertices).
    pub fn slit_glue(
        &self,
        other: &SemiTranslationSurface,
        slit: (Point, f64),
    ) -> Result<SemiTranslationSurface, SurfaceError> {
        let (a, len) = slit;
        if len <= 0.0 {
            return Err(SurfaceError::SlitNotEmbeddable("nonpositive length".into()));
        }
        let b = Point::new(a.x + len, a.y);
        let cut1 = CutPlan::locate(self, a, b)?;
        let cut2 = CutPlan::locate(other, a, b)?;

        let mut polys: Vec<Vec<Point>> = Vec::new();
        let mut gluings: Vec<Gluing> = Vec::new();
        let map1 = cut1.emit(self, &mut polys, &mut gluings);
        let map2 = cut2.emit(other, &mut polys, &mut gluings);
        // Cross-glue the slit flaps: each upper side to the other lower side.
        gluings.push(Gluing {
            from: (map1.upper, 1),
            to: (map2.lower, 1),
            sign: 1,
        });
        gluings.push(Gluing {
            from: (map2.upper, 1),
            to: (map1.lower, 1),
            sign: 1,
        });
        let tol = self.tolerance.max(other.tolerance);
        let out = SemiTranslationSurface::assemble_with(
            polys,
            gluings,
            tol,
            self.allow_marked || other.allow_marked,
        )?;
        let mut expected: Vec<i64> = self
            .orders()
            .into_iter()
            .chain(other.orders())
            .chain([2, 2])
            .collect();
        expected.sort_unstable_by(|x, y| y.cmp(x));
        if out.orders() != expected || out.genus != self.genus + other.genus {
            return Err(SurfaceError::SlitNotEmbeddable(format!(
                "surgery produced stratum {:?} genus {} instead of {:?} genus {}",
                out.orders(),
                out.genus,
                expected,
                self.genus + other.genus
            )));
        }
        Ok(out)
    }
}

/// Where and how one surface is cut for the slit surgery.
struct CutPlan {
    poly: usize,
    il: usize,
    ir: usize,
    a: Point,
    b: Point,
}

/// New polygon indices of the two cut pieces; edge 1 of each is the slit.
struct CutPieces {
    upper: usize,
    lower: usize,
}

impl CutPlan {
    fn locate(
        s: &SemiTranslationSurface,
        a: Point,
        b: Point,
    ) -> Result<CutPlan, SurfaceError> {
        let scale_tol = (s.tolerance * 100.0).max(1e-7);
        let mut found = None;
        for (pi, poly) in s.polygons.iter().enumerate() {
            if poly.contains(a) && poly.contains(b) {
                found = Some(pi);
                break;
            }
        }
        let pi = found.ok_or_else(|| {
            SurfaceError::SlitNotEmbeddable("slit not inside any single polygon".into())
        })?;
        let poly = &s.polygons[pi];
        // Strictly interior, away from every cone point.
        for p in [a, b, a.lerp(b, 0.5)] {
            if poly.boundary_dist(p) <= scale_tol {
                return Err(SurfaceError::SlitHitsSingularity);
            }
        }
        for v in poly.vertices() {
            if crate::geom::seg_point_dist(a, b, *v) <= scale_tol {
                return Err(SurfaceError::SlitHitsSingularity);
            }
        }
        if !poly.segment_inside(a, b) {
            return Err(SurfaceError::SlitNotEmbeddable(
                "slit leaves the polygon".into(),
            ));
        }
        // The horizontal line through the slit must pass through exactly
        // one vertex on each side of the slit.
        let n = poly.len();
        let level: Vec<usize> = (0..n)
            .filter(|&v| (poly.vertex(v).y - a.y).abs() <= scale_tol)
            .collect();
        let lefts: Vec<usize> = level
            .iter()
            .copied()
            .filter(|&v| poly.vertex(v).x < a.x)
            .collect();
        let rights: Vec<usize> = level
            .iter()
            .copied()
            .filter(|&v| poly.vertex(v).x > b.x)
            .collect();
        if lefts.len() != 1 || rights.len() != 1 || level.len() != 2 {
            return Err(SurfaceError::SlitNotEmbeddable(format!(
                "horizontal line through the slit meets {} vertices; need exactly one on each side",
                level.len()
            )));
        }
        let (il, ir) = (lefts[0], rights[0]);
        // The whole chord must be inside the polygon.
        let vl = poly.vertex(il);
        let vr = poly.vertex(ir);
        for pair in [(vl, a), (a, b), (b, vr)] {
            let m = pair.0.lerp(pair.1, 0.5);
            if !poly.contains(m) || poly.boundary_dist(m) <= scale_tol {
                return Err(SurfaceError::SlitNotEmbeddable(
                    "cut chord leaves the polygon interior".into(),
                ));
            }
        }
        Ok(CutPlan {
            poly: pi,
            il,
            ir,
            a,
            b,
        })
    }

    /// Append the uncut polygons and the two cut pieces of one surface,
    /// remapping its gluings into the combined index space.
    fn emit(
        &self,
        s: &SemiTranslationSurface,
        polys: &mut Vec<Vec<Point>>,
        gluings: &mut Vec<Gluing>,
    ) -> CutPieces {
        let base = polys.len();
        let n = s.polygons[self.poly].len();
        let poly = &s.polygons[self.poly];
        // Survivors keep their relative order; the cut pieces go last.
        let mut remap: Vec<Option<usize>> = vec![None; s.polygons.len()];
        let mut next = base;
        for (pi, p) in s.polygons.iter().enumerate() {
            if pi != self.poly {
                remap[pi] = Some(next);
                next += 1;
                polys.push(p.vertices().to_vec());
            }
        }
        let upper_id = next;
        let lower_id = next + 1;

        // Upper piece: chord left-to-right, then the arc from ir back to il.
        let mut upper = vec![poly.vertex(self.il), self.a, self.b];
        let mut top_arc = Vec::new();
        let mut i = self.ir;
        while i != self.il {
            upper.push(poly.vertex(i));
            top_arc.push(i);
            i = (i + 1) % n;
        }
        // Lower piece: chord right-to-left, then the arc from il to ir.
        let mut lower = vec![poly.vertex(self.ir), self.b, self.a];
        let mut bottom_arc = Vec::new();
        let mut i = self.il;
        while i != self.ir {
            lower.push(poly.vertex(i));
            bottom_arc.push(i);
            i = (i + 1) % n;
        }
        polys.push(upper);
        polys.push(lower);

        // Original edge (poly, e): top-arc edges start at slot 3 of the
        // upper piece, bottom-arc edges at slot 3 of the lower piece.
        let edge_map = |p: usize, e: usize| -> (usize, usize) {
            if p != self.poly {
                return (remap[p].unwrap(), e);
            }
            if let Some(off) = top_arc.iter().position(|&v| v == e) {
                (upper_id, 3 + off)
            } else {
                let off = bottom_arc
                    .iter()
                    .position(|&v| v == e)
                    .expect("edge belongs to one arc");
                (lower_id, 3 + off)
            }
        };
        for g in &s.gluings {
            gluings.push(Gluing {
                from: edge_map(g.from.0, g.from.1),
                to: edge_map(g.to.0, g.to.1),
                sign: g.sign,
            });
        }
        // Re-identify the chord outside the slit: upper edge 0 = [L, a] with
        // lower edge 2 = [a, L]; upper edge 2 = [b, R] with lower edge 0.
        gluings.push(Gluing {
            from: (upper_id, 0),
            to: (lower_id, 2),
            sign: 1,
        });
        gluings.push(Gluing {
            from: (upper_id, 2),
            to: (lower_id, 0),
            sign: 1,
        });
        CutPieces {
            upper: upper_id,
            lower: lower_id,
        }
    }
}

fn edge_vec(p: &SimplePolygon, e: usize) -> Point {
    let a = p.vertex(e);
    let b = p.vertex((e + 1) % p.len());
    Point::new(b.x - a.x, b.y - a.y)
}

fn mat_apply(a: [[f64; 2]; 2], v: Point) -> Point {
    Point::new(a[0][0] * v.x + a[0][1] * v.y, a[1][0] * v.x + a[1][1] * v.y)
}

fn signed_area2(vs: &[Point]) -> f64 {
    let n = vs.len();
    (0..n)
        .map(|i| vs[i].cross(vs[(i + 1) % n]))
        .sum()
}

/// Reference surfaces used across the test suites and the command line
/// examples.
pub mod fixtures {
    use super::*;

    pub const OCT_C: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn octagon_vertices() -> Vec<Point> {
        let c = OCT_C;
        vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0 + c, c),
            Point::new(1.0 + c, 1.0 + c),
            Point::new(1.0, 1.0 + 2.0 * c),
            Point::new(0.0, 1.0 + 2.0 * c),
            Point::new(-c, 1.0 + c),
            Point::new(-c, c),
        ]
    }

    /// Regular octagon with side 1, opposite sides glued by translation:
    /// genus 2, one cone point of angle 6*pi, trivial holonomy.
    pub fn regular_octagon() -> SemiTranslationSurface {
        let gluings = (0..4)
            .map(|e| Gluing {
                from: (0, e),
                to: (0, e + 4),
                sign: 1,
            })
            .collect();
        SemiTranslationSurface::assemble(vec![octagon_vertices()], gluings, 1e-9)
            .expect("octagon fixture")
    }

    /// The same octagon surface pre-cut along its two horizontal vertex
    /// chords into trapezoid / rectangle / trapezoid.  The middle rectangle
    /// is a whole-polygon horizontal cylinder (circumference 1 + sqrt(2),
    /// height 1), which makes the height-stretch surgery applicable.
    pub fn cut_octagon() -> SemiTranslationSurface {
        let c = OCT_C;
        let bottom = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0 + c, c),
            Point::new(-c, c),
        ];
        let middle = vec![
            Point::new(-c, c),
            Point::new(1.0 + c, c),
            Point::new(1.0 + c, 1.0 + c),
            Point::new(-c, 1.0 + c),
        ];
        let top = vec![
            Point::new(-c, 1.0 + c),
            Point::new(1.0 + c, 1.0 + c),
            Point::new(1.0, 1.0 + 2.0 * c),
            Point::new(0.0, 1.0 + 2.0 * c),
        ];
        let gluings = vec![
            // Octagon side pairs.
            Gluing { from: (0, 0), to: (2, 2), sign: 1 },
            Gluing { from: (0, 1), to: (2, 3), sign: 1 },
            Gluing { from: (1, 1), to: (1, 3), sign: 1 },
            Gluing { from: (2, 1), to: (0, 3), sign: 1 },
            // Interior chords.
            Gluing { from: (0, 2), to: (1, 0), sign: 1 },
            Gluing { from: (1, 2), to: (2, 0), sign: 1 },
        ];
        SemiTranslationSurface::assemble(vec![bottom, middle, top], gluings, 1e-9)
            .expect("cut octagon fixture")
    }

    /// The horizontal-cylinder description of the middle rectangle of
    /// `cut_octagon`, ready for `stretch_cylinder`.
    pub fn cut_octagon_cylinder() -> Cylinder {
        let c = OCT_C;
        let circ = 1.0 + 2.0 * c;
        Cylinder {
            direction: Point::new(1.0, 0.0),
            circumference: circ,
            height: 1.0,
            boundary_saddles: Vec::new(),
            core_curves: vec![ChartSegment {
                polygon: 1,
                a: Point::new(-c, c + 0.5),
                b: Point::new(1.0 + c, c + 0.5),
            }],
            walls: vec![
                ChartSegment {
                    polygon: 1,
                    a: Point::new(-c, c),
                    b: Point::new(1.0 + c, c),
                },
                ChartSegment {
                    polygon: 0,
                    a: Point::new(-c, c),
                    b: Point::new(1.0 + c, c),
                },
                ChartSegment {
                    polygon: 1,
                    a: Point::new(-c, 1.0 + c),
                    b: Point::new(1.0 + c, 1.0 + c),
                },
                ChartSegment {
                    polygon: 2,
                    a: Point::new(-c, 1.0 + c),
                    b: Point::new(1.0 + c, 1.0 + c),
                },
            ],
        }
    }

    fn subdivided_square() -> Vec<Point> {
        vec![
            Point::new(0.0, 0.0),
            Point::new(0.5, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.5),
            Point::new(1.0, 1.0),
            Point::new(0.5, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, 0.5),
        ]
    }

    /// Two unit squares (sides subdivided at their midpoints) glued with
    /// two half-turn pairings: genus 2, four cone points of angle 3*pi,
    /// holonomy sign -1.
    pub fn two_squares() -> SemiTranslationSurface {
        let a = subdivided_square();
        let b = subdivided_square();
        let gluings = vec![
            Gluing { from: (0, 0), to: (1, 0), sign: -1 },
            Gluing { from: (0, 4), to: (1, 4), sign: -1 },
            Gluing { from: (0, 1), to: (1, 5), sign: 1 },
            Gluing { from: (1, 1), to: (0, 5), sign: 1 },
            Gluing { from: (0, 2), to: (1, 6), sign: 1 },
            Gluing { from: (0, 3), to: (1, 7), sign: 1 },
            Gluing { from: (1, 2), to: (0, 6), sign: 1 },
            Gluing { from: (1, 3), to: (0, 7), sign: 1 },
        ];
        SemiTranslationSurface::assemble(vec![a, b], gluings, 1e-9)
            .expect("two squares fixture")
    }

    /// Square torus with a marked point; only valid in permissive mode.
    pub fn marked_torus() -> Result<SemiTranslationSurface, SurfaceError> {
        let sq = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        SemiTranslationSurface::assemble_with(
            vec![sq],
            vec![
                Gluing { from: (0, 0), to: (0, 2), sign: 1 },
                Gluing { from: (0, 1), to: (0, 3), sign: 1 },
            ],
            1e-9,
            true,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn octagon_stratum() {
        let s = regular_octagon();
        assert_eq!(s.genus(), 2);
        assert_eq!(s.orders(), vec![4]);
        assert_eq!(s.epsilon(), 1);
        assert_eq!(s.cones().len(), 1);
        assert!((s.cones()[0].angle - 6.0 * PI).abs() < 1e-9);
        assert!((s.area() - 2.0 * (1.0 + 2.0_f64.sqrt())).abs() < 1e-9);
        assert_eq!(s.cones()[0].corners.len(), 8);
    }

    #[test]
    fn cut_octagon_same_surface() {
        let s = cut_octagon();
        assert_eq!(s.genus(), 2);
        assert_eq!(s.orders(), vec![4]);
        assert_eq!(s.epsilon(), 1);
        assert!((s.area() - 2.0 * (1.0 + 2.0_f64.sqrt())).abs() < 1e-9);
        assert_eq!(s.cones().len(), 1);
        assert_eq!(s.cones()[0].corners.len(), 12);
        assert!((s.cones()[0].angle - 6.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn two_squares_stratum() {
        let s = two_squares();
        assert_eq!(s.genus(), 2);
        assert_eq!(s.orders(), vec![1, 1, 1, 1]);
        assert_eq!(s.epsilon(), -1);
        assert!((s.area() - 2.0).abs() < 1e-12);
        for c in s.cones() {
            assert!((c.angle - 3.0 * PI).abs() < 1e-9);
            assert_eq!(c.corners.len(), 4);
        }
    }

    #[test]
    fn euler_identity_on_fixtures() {
        for s in [regular_octagon(), cut_octagon(), two_squares()] {
            let v = s.cones().len() as i64;
            let e = s.gluings().len() as i64;
            let f = s.polygons().len() as i64;
            assert_eq!(v - e + f, 2 - 2 * s.genus());
            let sum_k: i64 = s.cones().iter().map(|c| c.order).sum();
            assert_eq!(sum_k, 4 * s.genus() - 4);
            let total: f64 = s.cones().iter().map(|c| c.angle).sum();
            let expect = PI * s.cones().iter().map(|c| (c.order + 2) as f64).sum::<f64>();
            assert!((total - expect).abs() < 1e-9 * (1.0 + expect));
        }
    }

    #[test]
    fn perturbed_octagon_side_rejected() {
        let c = OCT_C;
        let mut vs = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0 + c, c),
            Point::new(1.0 + c, 1.0 + c),
            Point::new(1.0, 1.0 + 2.0 * c),
            Point::new(0.0, 1.0 + 2.0 * c),
            Point::new(-c, 1.0 + c),
            Point::new(-c, c),
        ];
        vs[1] = Point::new(1.01, 0.0);
        let gluings = (0..4)
            .map(|e| Gluing { from: (0, e), to: (0, e + 4), sign: 1 })
            .collect();
        match SemiTranslationSurface::assemble(vec![vs], gluings, 1e-9) {
            Err(SurfaceError::LengthMismatch { .. }) => {}
            other => panic!("expected LengthMismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_and_reused_edges_rejected() {
        let c = OCT_C;
        let vs = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0 + c, c),
            Point::new(1.0 + c, 1.0 + c),
            Point::new(1.0, 1.0 + 2.0 * c),
            Point::new(0.0, 1.0 + 2.0 * c),
            Point::new(-c, 1.0 + c),
            Point::new(-c, c),
        ];
        let partial: Vec<Gluing> = (0..3)
            .map(|e| Gluing { from: (0, e), to: (0, e + 4), sign: 1 })
            .collect();
        match SemiTranslationSurface::assemble(vec![vs.clone()], partial, 1e-9) {
            Err(SurfaceError::UnmatchedEdge { .. }) => {}
            other => panic!("expected UnmatchedEdge, got {other:?}"),
        }
        let mut doubled: Vec<Gluing> = (0..4)
            .map(|e| Gluing { from: (0, e), to: (0, e + 4), sign: 1 })
            .collect();
        doubled.push(Gluing { from: (0, 0), to: (0, 4), sign: 1 });
        match SemiTranslationSurface::assemble(vec![vs], doubled, 1e-9) {
            Err(SurfaceError::EdgeReused { .. }) => {}
            other => panic!("expected EdgeReused, got {other:?}"),
        }
    }

    #[test]
    fn marked_point_needs_permissive_mode() {
        let sq = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let gl = vec![
            Gluing { from: (0, 0), to: (0, 2), sign: 1 },
            Gluing { from: (0, 1), to: (0, 3), sign: 1 },
        ];
        match SemiTranslationSurface::assemble(vec![sq], gl, 1e-9) {
            Err(SurfaceError::BadConeAngle { angle }) => {
                assert!((angle - 2.0 * PI).abs() < 1e-9)
            }
            other => panic!("expected BadConeAngle, got {other:?}"),
        }
        let t = marked_torus().expect("permissive torus");
        assert_eq!(t.genus(), 1);
        assert_eq!(t.orders(), vec![0]);
    }

    #[test]
    fn transitions_invert_and_respect_gluing() {
        for s in [regular_octagon(), cut_octagon(), two_squares()] {
            for (p, poly) in s.polygons().iter().enumerate() {
                for e in 0..poly.len() {
                    let ((q, f), _) = s.partner(p, e);
                    let t = s.transition(p, e);
                    let back = s.transition(q, f);
                    // Crossing back and forth is the identity.
                    let round = t.compose(&back);
                    assert!(round.is_identity(1e-9), "round trip not identity");
                    // The partner edge maps onto this edge, reversed.
                    let a2 = s.polygon(q).vertex(f);
                    let b2 = s.polygon(q).vertex((f + 1) % s.polygon(q).len());
                    let a1 = poly.vertex(e);
                    let b1 = poly.vertex((e + 1) % poly.len());
                    assert!(t.apply(a2).dist(b1) < 1e-9);
                    assert!(t.apply(b2).dist(a1) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn gl2_action_composes_and_scales_area() {
        let s = regular_octagon();
        let a = [[1.3, 0.2], [-0.1, 0.9]];
        let b = [[0.8, -0.3], [0.4, 1.1]];
        let ab = [
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ];
        let lhs = s.apply_gl2(b).unwrap().apply_gl2(a).unwrap();
        let rhs = s.apply_gl2(ab).unwrap();
        for (p, q) in lhs.polygons().iter().zip(rhs.polygons()) {
            for (u, v) in p.vertices().iter().zip(q.vertices()) {
                assert!(u.dist(*v) < 1e-9);
            }
        }
        let det_a = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let det_b = b[0][0] * b[1][1] - b[0][1] * b[1][0];
        assert!((rhs.area() - s.area() * det_a * det_b).abs() < 1e-9 * s.area());
        assert_eq!(rhs.orders(), s.orders());
        assert!(matches!(
            s.apply_gl2([[1.0, 0.0], [2.0, 0.0]]),
            Err(SurfaceError::SingularMatrix(_))
        ));
        assert!(matches!(
            s.apply_gl2([[0.0, 1.0], [1.0, 0.0]]),
            Err(SurfaceError::SingularMatrix(_))
        ));
    }

    #[test]
    fn cylinder_stretch_scales_height_only() {
        let s = cut_octagon();
        let cyl = cut_octagon_cylinder();
        let t = 0.2;
        let out = s.stretch_cylinder(&cyl, t).expect("stretch");
        assert_eq!(out.orders(), s.orders());
        // Middle rectangle height scaled by e^t, traps untouched.
        let c = OCT_C;
        let mid = out.polygon(1);
        let h = mid.vertex(2).y - mid.vertex(1).y;
        assert!((h - t.exp()).abs() < 1e-9);
        let w = mid.vertex(1).x - mid.vertex(0).x;
        assert!((w - (1.0 + 2.0 * c)).abs() < 1e-9);
        assert!((out.polygon(0).area() - s.polygon(0).area()).abs() < 1e-9);
        assert!(
            (out.area() - (s.area() + (t.exp() - 1.0) * (1.0 + 2.0 * c))).abs() < 1e-9
        );
        // t = 0 is the identity surgery.
        let same = s.stretch_cylinder(&cyl, 0.0).expect("identity stretch");
        for (p, q) in same.polygons().iter().zip(s.polygons()) {
            for (u, v) in p.vertices().iter().zip(q.vertices()) {
                assert!(u.dist(*v) < 1e-12);
            }
        }
        // A wrong cylinder description is rejected.
        let mut bad = cut_octagon_cylinder();
        bad.height = 0.5;
        assert!(matches!(
            s.stretch_cylinder(&bad, 0.1),
            Err(SurfaceError::NotACylinder(_))
        ));
    }

    #[test]
    fn slit_glue_octagons() {
        let s = regular_octagon();
        let c = OCT_C;
        let slit = (Point::new(0.2, c), 0.5);
        let out = s.slit_glue(&s, slit).expect("slit surgery");
        assert_eq!(out.genus(), 4);
        assert_eq!(out.orders(), vec![4, 4, 2, 2]);
        assert_eq!(out.epsilon(), 1);
        assert!((out.area() - 2.0 * s.area()).abs() < 1e-9);
        let mut fours = 0;
        for cone in out.cones() {
            if cone.order == 2 {
                assert!((cone.angle - 4.0 * PI).abs() < 1e-9);
                fours += 1;
            }
        }
        assert_eq!(fours, 2);
    }

    #[test]
    fn slit_rejections() {
        let s = regular_octagon();
        let c = OCT_C;
        // Through a vertex: the left chord vertex sits at (-c, c).
        assert!(matches!(
            s.slit_glue(&s, (Point::new(-c, c), 0.3)),
            Err(SurfaceError::SlitHitsSingularity) | Err(SurfaceError::SlitNotEmbeddable(_))
        ));
        // Slit endpoint exactly on a cone point.
        assert!(matches!(
            s.slit_glue(&s, (Point::new(0.2, c), (1.0 + c) - 0.2)),
            Err(SurfaceError::SlitHitsSingularity)
        ));
        // Height with no vertex chord.
        assert!(matches!(
            s.slit_glue(&s, (Point::new(0.2, 0.31), 0.3)),
            Err(SurfaceError::SlitNotEmbeddable(_))
        ));
        // Too long to stay inside.
        assert!(matches!(
            s.slit_glue(&s, (Point::new(0.2, c), 5.0)),
            Err(SurfaceError::SlitNotEmbeddable(_))
        ));
    }

    #[test]
    fn scaling_scales_lengths_and_area() {
        let s = two_squares();
        let c = 2.5;
        let out = s.scaled(c).unwrap();
        assert!((out.area() - c * c * s.area()).abs() < 1e-9);
        assert!((out.min_edge() - c * s.min_edge()).abs() < 1e-12);
        assert_eq!(out.orders(), s.orders());
        assert_eq!(out.epsilon(), -1);
    }
}
