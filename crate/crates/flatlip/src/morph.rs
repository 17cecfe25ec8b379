//! Elementary opening moves on degenerate polygons and a deformation
//! planner.
//!
//! A *moved* complex is always rebuilt through [`DegeneratePolygon::from_walk`]
//! so that spikes, pinches and flattened vertices renormalize uniformly. Every
//! committed move carries a certificate: the matrix of labeled intrinsic
//! distances before and after, sandwiched between the previous state and the
//! target polygon. Plans can be replayed backwards to transport points of the
//! target into the starting complex without increasing labeled distances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{Chain, ComplexError, CxPoint, DegeneratePolygon, Host, Link, VertexRef};
use crate::geom::{orient, seg_nearest_point, seg_point_dist, triangle_angle, wedge_angle, Point, Rigid};
use crate::poly::{Chord, ChordKind, GeomError, SimplePolygon};

/// Moves committed per deformation before giving up.
const STEP_BUDGET: usize = 100_000;
/// Initial guard keeping an opened apex angle away from `pi`; halved on
/// every sweep that makes no progress.
const EPS0: f64 = 1e-3;
/// Hard floor/ceiling guard for angle stop events inside searches.
const ANG_GUARD: f64 = 1e-9;
/// Unlabeled vertices this close to flat are removed from the boundary.
const FLAT_DROP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum MorphError {
    #[error("requested length {requested} exceeds the geometric cap {cap}")]
    CapExceeded { requested: f64, cap: f64 },
    #[error("a chord from the apex to a moving endpoint bends around the boundary")]
    NonSmoothApexChord,
    #[error("the supporting quadrilateral must have exactly one strictly concave corner, at an endpoint of the stretched chord")]
    TooManyConcaveAngles,
    #[error("not comparable: {0}")]
    NotComparable(String),
    #[error("step budget exhausted before the deformation completed")]
    StepBudgetExhausted,
    #[error("no feasible preimage point within tolerance (worst violation {violation}, allowed {allowed})")]
    FeasibilityFailed { violation: f64, allowed: f64 },
    #[error("the complex still has one-dimensional components")]
    OneDimensional,
    #[error("unsupported move support: {0}")]
    BadSupport(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Re-solve a triangle over one boundary side, increasing the side.
    TypeOne,
    /// Re-solve the two halves of a quadrilateral, increasing its diagonal.
    TypeTwo,
    /// A type-one move whose starting triangle is collapsed (collinear or
    /// with coincident endpoints).
    DegenerateTypeOne,
}

/// One elementary move: which chord was stretched, over which support.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MorphStep {
    pub kind: StepKind,
    /// Vertices supporting the move, in the state the move was applied to.
    pub support: Vec<VertexRef>,
    /// The stretched chord, classified in the state before the move.
    pub stretched_chord: Chord,
    pub before_length: f64,
    pub after_length: f64,
}

/// Labeled intrinsic distances before and after a move, with the target
/// bound they must stay under.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub labels: Vec<usize>,
    pub before: Vec<Vec<f64>>,
    pub after: Vec<Vec<f64>>,
    /// Intrinsic label distances of the target polygon (upper bound), or
    /// empty when the move ran without a target.
    pub bound: Vec<Vec<f64>>,
}

impl Certificate {
    /// Largest decrease of a tracked distance (should be ~0) and largest
    /// overshoot past the bound (should be ~0).
    pub fn worst_violations(&self) -> (f64, f64) {
        let n = self.labels.len();
        let mut shrink: f64 = 0.0;
        let mut over: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                shrink = shrink.max(self.before[i][j] - self.after[i][j]);
                if !self.bound.is_empty() {
                    over = over.max(self.after[i][j] - self.bound[i][j]);
                }
            }
        }
        (shrink, over)
    }
}

/// How to pull a point backwards through one committed move.
#[derive(Clone, Debug, Serialize, Deserialize)]
enum BackMap {
    /// The move did not change the geometry (bookkeeping).
    Identity,
    /// Closed form for a triangle re-solve: angular contraction inside the
    /// opened triangle, inverse rotation on the moved flank, identity
    /// elsewhere.
    TypeOne {
        apex: Point,
        u_old: Point,
        v_old: Point,
        v_new: Point,
        flank: Rigid,
        /// The region of the new state that moved rigidly with the rotated
        /// chord, as a closed loop: the new chord endpoint, the rotated
        /// boundary arc behind it, then the apex. Empty when the chord is a
        /// boundary side with nothing behind it.
        flank_loop: Vec<Point>,
    },
    /// Solve for any point of the previous state satisfying the labeled
    /// distance constraints.
    Feasibility,
}

/// One committed move with its before/after snapshots and certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    /// `None` for pure bookkeeping (dropping a flattened unlabeled vertex).
    pub step: Option<MorphStep>,
    pub before: DegeneratePolygon,
    pub after: DegeneratePolygon,
    pub certificate: Certificate,
    back: BackMap,
}

/// A deformation that split the problem along a tight chord into two
/// independently solved halves.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitRecord {
    /// Labels of the chord the complex was cut along.
    pub label_a: usize,
    pub label_b: usize,
    pub target_first: SimplePolygon,
    pub target_second: SimplePolygon,
    /// Original labels carried by each half, in boundary order
    /// (`first_labels[k]` is the original label at vertex `k` of
    /// `target_first`).
    pub first_labels: Vec<usize>,
    pub second_labels: Vec<usize>,
    pub first: MorphPlan,
    pub second: MorphPlan,
}

/// A certified deformation of a degenerate polygon onto a target polygon.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MorphPlan {
    pub target: SimplePolygon,
    pub initial: DegeneratePolygon,
    pub records: Vec<StepRecord>,
    pub split: Option<Box<SplitRecord>>,
}

impl MorphPlan {
    /// All elementary steps, in order, including the ones of split halves.
    pub fn steps(&self) -> Vec<&MorphStep> {
        let mut out: Vec<&MorphStep> = self.records.iter().filter_map(|r| r.step.as_ref()).collect();
        if let Some(sr) = &self.split {
            out.extend(sr.first.steps());
            out.extend(sr.second.steps());
        }
        out
    }

    /// States visited at this level: the initial complex, then the state
    /// after each committed move.
    pub fn snapshots(&self) -> Vec<&DegeneratePolygon> {
        let mut out = vec![&self.initial];
        out.extend(self.records.iter().map(|r| &r.after));
        out
    }

    pub fn certificates(&self) -> Vec<&Certificate> {
        let mut out: Vec<&Certificate> = self.records.iter().map(|r| &r.certificate).collect();
        if let Some(sr) = &self.split {
            out.extend(sr.first.certificates());
            out.extend(sr.second.certificates());
        }
        out
    }

    /// The last state reached at this level (before any split).
    pub fn final_state(&self) -> &DegeneratePolygon {
        self.records.last().map(|r| &r.after).unwrap_or(&self.initial)
    }

    /// Final positions of all target labels, assembled across splits, in
    /// the working frame of this plan's final state.
    pub fn final_positions(&self) -> Result<Vec<Point>, MorphError> {
        let n = self.target.len();
        match &self.split {
            None => {
                let st = self.final_state();
                let mut out = Vec::with_capacity(n);
                for l in 0..n {
                    let (_, p) = st
                        .label_point(l)
                        .ok_or_else(|| MorphError::Internal(format!("label {l} missing")))?;
                    out.push(p);
                }
                Ok(out)
            }
            Some(sr) => {
                let f1 = sr.first.final_positions()?;
                let f2 = sr.second.final_positions()?;
                let n1 = f1.len();
                let n2 = f2.len();
                // Shared chord: first half runs label_a..label_b, second
                // half runs label_b..label_a.
                let rho = Rigid::matching((f2[0], f2[n2 - 1]), (f1[n1 - 1], f1[0]));
                let mut out = vec![Point::ORIGIN; n];
                for (k, &g) in sr.first_labels.iter().enumerate() {
                    out[g] = f1[k];
                }
                for (k, &g) in sr.second_labels.iter().enumerate() {
                    if g != sr.label_a && g != sr.label_b {
                        out[g] = rho.apply(f2[k]);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Re-checks every certificate, the per-step length bookkeeping, the
    /// angle sums of the re-solved triangles, and the final congruence with
    /// the target.
    pub fn verify(&self) -> Result<(), MorphError> {
        let scale = diameter(self.target.vertices());
        let slack = 1e-7 * (1.0 + scale);
        for (k, rec) in self.records.iter().enumerate() {
            let (shrink, over) = rec.certificate.worst_violations();
            // Matches the hard guard applied when each move was committed:
            // twice the per-move slack, so re-verification cannot be stricter
            // than the checks the plan was built under.
            if shrink > 2.0 * slack {
                return Err(MorphError::Internal(format!(
                    "record {k}: tracked distance shrank by {shrink}"
                )));
            }
            if over > 2.0 * slack {
                return Err(MorphError::Internal(format!(
                    "record {k}: tracked distance overshoots the target bound by {over}"
                )));
            }
            if let Some(step) = &rec.step {
                if step.after_length < step.before_length - slack {
                    return Err(MorphError::Internal(format!(
                        "record {k}: stretched chord shrank"
                    )));
                }
                angle_sum_check(step, &rec.before, slack)
                    .map_err(|e| MorphError::Internal(format!("record {k}: {e}")))?;
            }
        }
        match &self.split {
            None => {
                let fin = self.final_positions()?;
                let n = self.target.len();
                for i in 0..n {
                    for j in (i + 1)..n {
                        let want = self.target.vertex(i).dist(self.target.vertex(j));
                        let got = fin[i].dist(fin[j]);
                        if (want - got).abs() > 10.0 * slack {
                            return Err(MorphError::Internal(format!(
                                "final state is not congruent to the target: pair ({i},{j}) differs by {}",
                                (want - got).abs()
                            )));
                        }
                    }
                }
                Ok(())
            }
            Some(sr) => {
                sr.first.verify()?;
                sr.second.verify()?;
                let fin = self.final_positions()?;
                let n = self.target.len();
                for i in 0..n {
                    for j in (i + 1)..n {
                        let want = self.target.vertex(i).dist(self.target.vertex(j));
                        if (fin[i].dist(fin[j]) - want).abs() > 10.0 * slack {
                            return Err(MorphError::Internal(format!(
                                "assembled halves are not congruent to the target at pair ({i},{j})"
                            )));
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

/// Checks that the re-solved triangles of a step have angle sum `pi` (per
/// triangle) when recomputed purely from side lengths.
fn angle_sum_check(step: &MorphStep, before: &DegeneratePolygon, slack: f64) -> Result<(), String> {
    let pos: Vec<Point> = step.support.iter().map(|&r| before.vertex_point(r)).collect();
    let tri_sum = |a: f64, b: f64, c: f64| {
        triangle_angle(a, b, c) + triangle_angle(b, c, a) + triangle_angle(c, a, b)
    };
    match step.kind {
        StepKind::TypeOne | StepKind::DegenerateTypeOne => {
            if pos.len() != 3 {
                return Err("type-one support must have three vertices".into());
            }
            let (u, v, z) = (pos[0], pos[1], pos[2]);
            let sum = tri_sum(step.after_length, z.dist(v), z.dist(u));
            if (sum - std::f64::consts::PI).abs() > slack.max(1e-9) {
                return Err(format!("triangle angle sum {sum} differs from pi"));
            }
        }
        StepKind::TypeTwo => {
            if pos.len() != 4 {
                return Err("type-two support must have four vertices".into());
            }
            // The stretched chord joins corners 1 and 3 and cuts the
            // quadrilateral into two halves. A half whose corners all sit
            // on the anchor part has both of its other sides preserved by
            // the move, so it must close up around the new chord length.
            // Halves resting on a chain point or a second part are skipped:
            // their supporting lengths are not rigid data of the move.
            let anchor = |r: VertexRef| matches!(r, VertexRef::Part { part: 0, .. });
            let (u, x, v, y) = (pos[0], pos[1], pos[2], pos[3]);
            let t = step.after_length;
            let pi = std::f64::consts::PI;
            if anchor(step.support[0]) && anchor(step.support[1]) && anchor(step.support[3]) {
                let s1 = tri_sum(t, u.dist(x), u.dist(y));
                if (s1 - pi).abs() > slack.max(1e-9) {
                    return Err(format!("first quad half angle sum {s1} differs from pi"));
                }
            }
            if anchor(step.support[2]) && anchor(step.support[1]) && anchor(step.support[3]) {
                let s2 = tri_sum(t, v.dist(x), v.dist(y));
                if (s2 - pi).abs() > slack.max(1e-9) {
                    return Err(format!("second quad half angle sum {s2} differs from pi"));
                }
            }
        }
    }
    Ok(())
}

fn diameter(pts: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            d = d.max(pts[i].dist(pts[j]));
        }
    }
    d
}

fn rot_about(center: Point, theta: f64) -> Rigid {
    Rigid {
        theta,
        t: center - center.rotated(theta),
    }
}

/// Intersection points of two circles, tolerant of near-tangency.
fn circle_points(c0: Point, r0: f64, c1: Point, r1: f64) -> Vec<Point> {
    let d = c0.dist(c1);
    if d <= 1e-15 {
        return Vec::new();
    }
    let a = (r0 * r0 - r1 * r1 + d * d) / (2.0 * d);
    let h2 = r0 * r0 - a * a;
    let snap = 1e-9 * (r0 * r0 + r1 * r1 + d * d);
    let h = if h2 < 0.0 {
        if h2 > -snap {
            0.0
        } else {
            return Vec::new();
        }
    } else {
        h2.sqrt()
    };
    let u = (c1 - c0) / d;
    let mid = c0 + u * a;
    let nrm = u.rot90();
    if h == 0.0 {
        vec![mid]
    } else {
        vec![mid + nrm * h, mid - nrm * h]
    }
}

/// Picks the intersection point on the prescribed side of the directed
/// line `a -> b` (falls back to the first candidate when `side ~ 0`).
fn pick_side(cands: &[Point], a: Point, b: Point, side: f64) -> Option<Point> {
    if cands.is_empty() {
        return None;
    }
    if side.abs() <= 1e-12 * (1.0 + a.dist2(b)) {
        return Some(cands[0]);
    }
    cands
        .iter()
        .copied()
        .max_by(|p, q| {
            let sp = orient(a, b, *p) * side.signum();
            let sq = orient(a, b, *q) * side.signum();
            sp.partial_cmp(&sq).unwrap()
        })
}

fn point_in_triangle(q: Point, a: Point, b: Point, c: Point, tol: f64) -> bool {
    let d1 = orient(a, b, q);
    let d2 = orient(b, c, q);
    let d3 = orient(c, a, q);
    let neg = d1 < -tol || d2 < -tol || d3 < -tol;
    let pos = d1 > tol || d2 > tol || d3 > tol;
    !(neg && pos)
}

fn closest_point_in_triangle(q: Point, a: Point, b: Point, c: Point, tol: f64) -> Point {
    if point_in_triangle(q, a, b, c, tol) {
        return q;
    }
    let mut best = a;
    let mut bd = f64::INFINITY;
    for (s, e) in [(a, b), (b, c), (c, a)] {
        let p = seg_nearest_point(s, e, q);
        let d = p.dist(q);
        if d < bd {
            bd = d;
            best = p;
        }
    }
    best
}

/// Indices strictly between `from` and `to`, walking forward cyclically.
fn cyc_between(from: usize, to: usize, m: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut k = (from + 1) % m;
    while k != to {
        out.push(k);
        k = (k + 1) % m;
    }
    out
}

fn labels_at(cx: &DegeneratePolygon, vref: VertexRef) -> Vec<usize> {
    cx.iota()
        .iter()
        .filter(|&(_, &v)| v == vref)
        .map(|(&l, _)| l)
        .collect()
}

/// Boundary walk flattened into `(point, labels)` slots; each label is
/// attached to the first slot carrying its vertex.
fn walk_items(cx: &DegeneratePolygon) -> (Vec<Point>, Vec<Vec<usize>>, Vec<VertexRef>) {
    let walk = cx.boundary_walk();
    let mut pts = Vec::with_capacity(walk.len());
    let mut labs = Vec::with_capacity(walk.len());
    let mut refs = Vec::with_capacity(walk.len());
    let mut seen: Vec<VertexRef> = Vec::new();
    for s in &walk {
        let l = if seen.contains(&s.vref) {
            Vec::new()
        } else {
            seen.push(s.vref);
            labels_at(cx, s.vref)
        };
        pts.push(s.pt);
        labs.push(l);
        refs.push(s.vref);
    }
    (pts, labs, refs)
}

fn rebuild(
    pts: Vec<Point>,
    labs: Vec<Vec<usize>>,
    tol: f64,
) -> Result<DegeneratePolygon, MorphError> {
    DegeneratePolygon::from_walk(pts, labs, tol).map_err(MorphError::Complex)
}

/// Rebuilds the same complex with part `pid` moved to index 0.
fn permute_parts(cx: &DegeneratePolygon, pid: usize) -> Result<DegeneratePolygon, MorphError> {
    if pid == 0 {
        return Ok(cx.clone());
    }
    let np = cx.parts().len();
    let mut order: Vec<usize> = vec![pid];
    order.extend((0..np).filter(|&k| k != pid));
    let mut new_index = vec![0usize; np];
    for (slot, &old) in order.iter().enumerate() {
        new_index[old] = slot;
    }
    let parts: Vec<SimplePolygon> = order.iter().map(|&k| cx.parts()[k].clone()).collect();
    let chains: Vec<Chain> = cx
        .chains()
        .iter()
        .map(|c| Chain {
            points: c.points.clone(),
            root_part: new_index[c.root_part],
            root_vertex: c.root_vertex,
        })
        .collect();
    let links: Vec<Link> = cx
        .links()
        .iter()
        .map(|l| Link {
            part_a: new_index[l.part_a],
            vertex_a: l.vertex_a,
            part_b: new_index[l.part_b],
            vertex_b: l.vertex_b,
        })
        .collect();
    let iota: BTreeMap<usize, VertexRef> = cx
        .iota()
        .iter()
        .map(|(&lab, &vr)| {
            let vr = match vr {
                VertexRef::Part { part, vertex } => VertexRef::Part {
                    part: new_index[part],
                    vertex,
                },
                other => other,
            };
            (lab, vr)
        })
        .collect();
    DegeneratePolygon::build(parts, chains, links, iota, cx.tolerance()).map_err(MorphError::Complex)
}

/// Walk-slot indices of the copies of a junction vertex, plus the slot
/// ranges of the attachment blocks emitted between consecutive copies.
fn junction_blocks(refs: &[VertexRef], me: VertexRef) -> (Vec<usize>, Vec<(usize, usize)>) {
    let copies: Vec<usize> = (0..refs.len()).filter(|&k| refs[k] == me).collect();
    let mut blocks = Vec::new();
    for w in copies.windows(2) {
        if w[1] > w[0] + 1 {
            blocks.push((w[0] + 1, w[1]));
        }
    }
    (copies, blocks)
}

/// The geometry, step and back-map produced by one move builder.
struct Moved {
    state: DegeneratePolygon,
    step: MorphStep,
    back: BackMap,
}

/// Re-solves the triangle over one boundary side of a single-part state,
/// rotating the far flank rigidly about the apex. When `u_idx == v_idx`
/// the zero-length side between two coincident labels is opened and a new
/// vertex is inserted; `split_after` names the last label staying behind.
fn move_open_side(
    state: &DegeneratePolygon,
    u_idx: usize,
    v_idx: usize,
    apex_idx: usize,
    split_after: Option<usize>,
    target: f64,
) -> Result<Moved, MorphError> {
    let poly = state
        .single_part()
        .ok_or_else(|| MorphError::BadSupport("side opening needs a single planar part".into()))?;
    if !state.links().is_empty() {
        return Err(MorphError::BadSupport(
            "side opening needs a single planar part".into(),
        ));
    }
    let m = poly.len();
    let coincident = u_idx == v_idx;
    if !coincident && (u_idx + 1) % m != v_idx {
        return Err(MorphError::BadSupport(
            "the stretched side must join consecutive boundary vertices".into(),
        ));
    }
    if apex_idx == u_idx || apex_idx == v_idx {
        return Err(MorphError::BadSupport(
            "the apex must be distinct from the stretched side".into(),
        ));
    }
    let verts = poly.vertices().to_vec();
    let (u, v, z) = (verts[u_idx], verts[v_idx], verts[apex_idx]);
    let r1 = u.dist(z);
    let r2 = v.dist(z);
    let base = u.dist(v);
    let cap = r1 + r2;
    let tol = state.tolerance();
    if target > cap + tol {
        return Err(MorphError::CapExceeded {
            requested: target,
            cap,
        });
    }
    for k in [u_idx, v_idx] {
        if k != apex_idx {
            let ch = poly.classify_chord(k, apex_idx)?;
            if ch.kind == ChordKind::Diagonal {
                return Err(MorphError::NonSmoothApexChord);
            }
        }
    }
    let th_old = triangle_angle(base, r1, r2);
    let th_new = triangle_angle(target, r1, r2);
    // The apex angle grows with the side; the moving chord must swing away
    // from the fixed one, on whichever side of the edge the apex sits.
    let sgn = if orient(u, v, z) < -1e-12 * (1.0 + r1 * r2) {
        -1.0
    } else {
        1.0
    };
    let rot = rot_about(z, sgn * (th_new - th_old));
    let kind = if coincident || orient(u, v, z).abs() <= 1e-9 * (1.0 + r1 * r2) {
        StepKind::DegenerateTypeOne
    } else {
        StepKind::TypeOne
    };

    let mut items: Vec<(Point, Vec<usize>)> = (0..m)
        .map(|k| {
            (
                verts[k],
                labels_at(state, VertexRef::Part { part: 0, vertex: k }),
            )
        })
        .collect();
    let arc = cyc_between(v_idx, apex_idx, m);
    for &k in &arc {
        items[k].0 = rot.apply(items[k].0);
    }
    let v_new = rot.apply(v);
    // The rotated region of the new state, walked from the moved chord
    // endpoint along the rotated arc to the apex; the closing edge is the
    // chord the region pivots on.
    let flank_loop: Vec<Point> = if arc.is_empty() {
        Vec::new()
    } else {
        let mut loop_pts = vec![v_new];
        loop_pts.extend(arc.iter().map(|&k| items[k].0));
        loop_pts.push(z);
        loop_pts
    };
    if coincident {
        let here = std::mem::take(&mut items[u_idx].1);
        let n_total = state.iota().len();
        let after = split_after.ok_or_else(|| {
            MorphError::BadSupport("opening coincident labels needs a split label".into())
        })?;
        if !here.contains(&after) {
            return Err(MorphError::BadSupport(
                "the split label does not sit on the opened vertex".into(),
            ));
        }
        // The labels at the vertex form one cyclic run; those up to and
        // including `after` stay, the rest move onto the inserted vertex.
        let start = here
            .iter()
            .copied()
            .find(|&l| !here.contains(&((l + n_total - 1) % n_total)))
            .unwrap_or(after);
        let rank = |l: usize| (l + n_total - start) % n_total;
        let (stay, moved): (Vec<usize>, Vec<usize>) =
            here.iter().partition(|&&l| rank(l) <= rank(after));
        if moved.is_empty() {
            return Err(MorphError::BadSupport(
                "no label moves onto the opened vertex".into(),
            ));
        }
        items[u_idx].1 = stay;
        items.insert(u_idx + 1, (v_new, moved));
    } else {
        items[v_idx].0 = v_new;
    }
    let (pts, labs): (Vec<Point>, Vec<Vec<usize>>) = items.into_iter().unzip();
    let new_state = rebuild(pts, labs, tol)?;
    let step = MorphStep {
        kind,
        support: vec![
            VertexRef::Part {
                part: 0,
                vertex: u_idx,
            },
            VertexRef::Part {
                part: 0,
                vertex: v_idx,
            },
            VertexRef::Part {
                part: 0,
                vertex: apex_idx,
            },
        ],
        stretched_chord: Chord {
            endpoints: (u_idx, v_idx),
            kind: ChordKind::Side,
            length: base,
            path: vec![u, v],
        },
        before_length: base,
        after_length: target,
    };
    Ok(Moved {
        state: new_state,
        step,
        back: BackMap::TypeOne {
            apex: z,
            u_old: u,
            v_old: v,
            v_new,
            flank: rot,
            flank_loop,
        },
    })
}

/// Quadrilateral data shared by validation and placement.
struct QuadLens {
    l_ux: f64,
    l_xv: f64,
    l_vy: f64,
    l_yu: f64,
    l_xy: f64,
}

impl QuadLens {
    fn cap(&self) -> f64 {
        (self.l_ux + self.l_yu).min(self.l_xv + self.l_vy)
    }

    /// Internal corner angles (u, x, v, y) rebuilt from the side lengths.
    fn corners(&self, diag: f64) -> [f64; 4] {
        let au = triangle_angle(diag, self.l_ux, self.l_yu);
        let ax = triangle_angle(self.l_yu, self.l_ux, diag) + triangle_angle(self.l_vy, self.l_xv, diag);
        let av = triangle_angle(diag, self.l_xv, self.l_vy);
        let ay = triangle_angle(self.l_ux, self.l_yu, diag) + triangle_angle(self.l_xv, self.l_vy, diag);
        [au, ax, av, ay]
    }
}

/// Re-solves the two halves of the quadrilateral `(u, x, v, y)` of a
/// single-part state over the stretched chord `(x, y)`, keeping `u` and
/// `x` fixed and carrying the three flank arcs rigidly.
fn move_quad(
    state: &DegeneratePolygon,
    quad: [usize; 4],
    target: f64,
) -> Result<Moved, MorphError> {
    let poly = state
        .single_part()
        .ok_or_else(|| MorphError::BadSupport("quad move needs a single planar part".into()))?;
    if !state.links().is_empty() {
        return Err(MorphError::BadSupport("quad move needs a single planar part".into()));
    }
    let m = poly.len();
    let [u_idx, x_idx, v_idx, y_idx] = quad;
    let rank = |k: usize| (k + m - u_idx) % m;
    if !(rank(x_idx) > 0 && rank(x_idx) < rank(v_idx) && rank(v_idx) < rank(y_idx)) {
        return Err(MorphError::BadSupport(
            "quad corners must appear in cyclic boundary order".into(),
        ));
    }
    for (a, b) in [(u_idx, x_idx), (x_idx, v_idx), (v_idx, y_idx), (y_idx, u_idx)] {
        let ch = poly.classify_chord(a, b)?;
        if ch.kind == ChordKind::Diagonal {
            return Err(MorphError::BadSupport(format!(
                "quad side chord ({a},{b}) bends around the boundary"
            )));
        }
    }
    let diag = poly.classify_chord(x_idx, y_idx)?;
    if diag.kind == ChordKind::Diagonal {
        return Err(MorphError::BadSupport(
            "the stretched chord bends around the boundary".into(),
        ));
    }
    let verts = poly.vertices().to_vec();
    let (u, x, v, y) = (verts[u_idx], verts[x_idx], verts[v_idx], verts[y_idx]);
    let lens = QuadLens {
        l_ux: u.dist(x),
        l_xv: x.dist(v),
        l_vy: v.dist(y),
        l_yu: y.dist(u),
        l_xy: diag.length,
    };
    let ang_tol = 1e-7;
    let pi = std::f64::consts::PI;
    let corners = lens.corners(lens.l_xy);
    let concave: Vec<usize> = (0..4).filter(|&k| corners[k] > pi + ang_tol).collect();
    if concave.len() != 1 || (concave[0] != 1 && concave[0] != 3) {
        return Err(MorphError::TooManyConcaveAngles);
    }
    let cap = lens.cap();
    let tol = state.tolerance();
    if target > cap + tol {
        return Err(MorphError::CapExceeded {
            requested: target,
            cap,
        });
    }

    let y_hat = pick_side(
        &circle_points(u, lens.l_yu, x, target),
        u,
        x,
        orient(u, x, y),
    )
    .ok_or_else(|| MorphError::BadSupport("the first quad half cannot be re-solved".into()))?;
    let v_hat = pick_side(
        &circle_points(x, lens.l_xv, y_hat, lens.l_vy),
        x,
        y_hat,
        orient(x, y, v),
    )
    .ok_or_else(|| MorphError::BadSupport("the second quad half cannot be re-solved".into()))?;

    let mut items: Vec<(Point, Vec<usize>)> = (0..m)
        .map(|k| {
            (
                verts[k],
                labels_at(state, VertexRef::Part { part: 0, vertex: k }),
            )
        })
        .collect();
    let arcs: [(usize, usize, Rigid); 3] = [
        (x_idx, v_idx, Rigid::matching((x, v), (x, v_hat))),
        (v_idx, y_idx, Rigid::matching((v, y), (v_hat, y_hat))),
        (y_idx, u_idx, Rigid::matching((y, u), (y_hat, u))),
    ];
    for (from, to, rho) in arcs {
        for k in cyc_between(from, to, m) {
            items[k].0 = rho.apply(items[k].0);
        }
    }
    items[v_idx].0 = v_hat;
    items[y_idx].0 = y_hat;
    let (pts, labs): (Vec<Point>, Vec<Vec<usize>>) = items.into_iter().unzip();
    let new_state = rebuild(pts, labs, tol)?;
    let step = MorphStep {
        kind: StepKind::TypeTwo,
        support: quad
            .iter()
            .map(|&k| VertexRef::Part { part: 0, vertex: k })
            .collect(),
        stretched_chord: diag,
        before_length: lens.l_xy,
        after_length: target,
    };
    Ok(Moved {
        state: new_state,
        step,
        back: BackMap::Feasibility,
    })
}

/// Absorbs the first `aprime` of a chain's root segment into its root
/// part, through the degenerate quadrilateral spanned by the junction, its
/// two part neighbours and the first chain point. `stretch_next` selects
/// which of the two junction sides is stretched: the one toward the next
/// boundary vertex, or the one toward the previous. The chain root part
/// must be part 0.
fn move_absorb(
    state: &DegeneratePolygon,
    cid: usize,
    aprime: f64,
    stretch_next: bool,
) -> Result<Moved, MorphError> {
    let ch = &state.chains()[cid];
    if ch.root_part != 0 {
        return Err(MorphError::Internal("chain root must sit on part 0".into()));
    }
    let rv = ch.root_vertex;
    let poly = &state.parts()[0];
    let m = poly.len();
    let prev = (rv + m - 1) % m;
    let next = (rv + 1) % m;
    let (w1, u1, v1) = (poly.vertex(prev), poly.vertex(next), poly.vertex(rv));
    let s = v1.dist(u1);
    let b = v1.dist(w1);
    let a_full = ch.points[0].dist(ch.points[1]);
    let tol = state.tolerance();
    if aprime <= tol {
        return Err(MorphError::BadSupport("nothing to absorb".into()));
    }
    let ap = aprime.min(a_full);
    let chord = poly.classify_chord(prev, next)?;
    if chord.kind == ChordKind::Diagonal {
        return Err(MorphError::BadSupport(
            "the chord joining the junction neighbours bends around the boundary".into(),
        ));
    }
    let e = s + ap;
    let bb = b + ap;
    let v2_hat = pick_side(&circle_points(u1, e, w1, bb), w1, u1, orient(w1, u1, v1))
        .ok_or_else(|| MorphError::BadSupport("the junction triangle cannot be re-solved".into()))?;
    let v1_hat = if stretch_next {
        w1 + (v2_hat - w1).normalized() * b
    } else {
        u1 + (v2_hat - u1).normalized() * s
    };

    let (pts, labs, refs) = walk_items(state);
    let me = VertexRef::Part { part: 0, vertex: rv };
    let (copies, blocks) = junction_blocks(&refs, me);
    if copies.len() < 2 {
        return Err(MorphError::Internal("junction walk run not found".into()));
    }
    let first = copies[0];
    let last = *copies.last().unwrap();
    let mut absorbed: Option<(usize, usize)> = None;
    let mut keeps: Vec<(usize, usize)> = Vec::new();
    for &(b0, b1) in &blocks {
        match refs[b0] {
            VertexRef::ChainPt { chain, .. } if chain == cid => absorbed = Some((b0, b1)),
            _ => keeps.push((b0, b1)),
        }
    }
    let (a0, a1) = absorbed.ok_or_else(|| MorphError::Internal("chain walk block missing".into()))?;
    // Labels carried by the chain points (first copies only).
    let mut point_labels: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in a0..a1 {
        if let VertexRef::ChainPt { point, .. } = refs[k] {
            if !labs[k].is_empty() {
                point_labels.entry(point).or_default().extend(labs[k].iter().copied());
            }
        }
    }
    let full = ap + 1e-9 * (1.0 + a_full) >= a_full;
    let (tail_pts, tail_labels): (Vec<Point>, Vec<Vec<usize>>) = if full {
        let shift = v2_hat - ch.points[1];
        let mut tp = vec![v2_hat];
        tp.extend(ch.points[2..].iter().map(|&p| p + shift));
        let tl = (0..tp.len())
            .map(|j| point_labels.get(&(j + 1)).cloned().unwrap_or_default())
            .collect();
        (tp, tl)
    } else {
        let virt = ch.points[0].lerp(ch.points[1], ap / a_full);
        let shift = v2_hat - virt;
        let mut tp = vec![v2_hat];
        tp.extend(ch.points[1..].iter().map(|&p| p + shift));
        let tl = (0..tp.len())
            .map(|j| if j == 0 { Vec::new() } else { point_labels.get(&j).cloned().unwrap_or_default() })
            .collect();
        (tp, tl)
    };
    let mut tail_items: Vec<(Point, Vec<usize>)> = Vec::new();
    for (j, &p) in tail_pts.iter().enumerate() {
        tail_items.push((p, tail_labels[j].clone()));
    }
    for j in (0..tail_pts.len().saturating_sub(1)).rev() {
        tail_items.push((tail_pts[j], Vec::new()));
    }

    let mut root_labels = labs[first].clone();
    root_labels.extend(point_labels.get(&0).cloned().unwrap_or_default());
    let d1 = v1_hat - v1;
    let mut junction_items: Vec<(Point, Vec<usize>)> = vec![(v1_hat, root_labels)];
    for &(b0, b1) in &keeps {
        for k in b0..b1 {
            junction_items.push((pts[k] + d1, labs[k].clone()));
        }
        junction_items.push((v1_hat, Vec::new()));
    }

    let mut rep = Vec::new();
    if stretch_next {
        rep.extend(junction_items);
        rep.extend(tail_items);
    } else {
        rep.extend(tail_items);
        rep.extend(junction_items);
    }
    let mut new_pts: Vec<Point> = pts[..first].to_vec();
    let mut new_labs: Vec<Vec<usize>> = labs[..first].to_vec();
    for (p, l) in rep {
        new_pts.push(p);
        new_labs.push(l);
    }
    new_pts.extend_from_slice(&pts[last + 1..]);
    new_labs.extend_from_slice(&labs[last + 1..]);
    let new_state = rebuild(new_pts, new_labs, tol)?;

    let (d_end, d_before, d_after, other) = if stretch_next {
        (next, s, v1_hat.dist(u1), u1)
    } else {
        (prev, b, v1_hat.dist(w1), w1)
    };
    let step = MorphStep {
        kind: StepKind::TypeTwo,
        support: vec![
            VertexRef::ChainPt { chain: cid, point: 1 },
            VertexRef::Part { part: 0, vertex: d_end },
            VertexRef::Part {
                part: 0,
                vertex: if stretch_next { prev } else { next },
            },
            me,
        ],
        stretched_chord: Chord {
            endpoints: (d_end, rv),
            kind: ChordKind::Side,
            length: d_before,
            path: vec![other, v1],
        },
        before_length: d_before,
        after_length: d_after,
    };
    Ok(Moved {
        state: new_state,
        step,
        back: BackMap::Feasibility,
    })
}

/// Opens the pinch of `link_idx` by stretching the anchor-part edge from
/// the shared vertex toward one neighbour to length `t`, swinging the
/// other part rigidly across the freed edge. The anchor part must be
/// part 0; `mirror` selects which neighbour pair supports the move.
fn move_pinch(
    state: &DegeneratePolygon,
    link_idx: usize,
    mirror: bool,
    t: f64,
) -> Result<Moved, MorphError> {
    let link = state.links()[link_idx];
    let (va, pb, vb) = if link.part_a == 0 {
        (link.vertex_a, link.part_b, link.vertex_b)
    } else if link.part_b == 0 {
        (link.vertex_b, link.part_a, link.vertex_a)
    } else {
        return Err(MorphError::Internal("anchor part must be part 0".into()));
    };
    let pa = &state.parts()[0];
    let pbp = &state.parts()[pb];
    let ma = pa.len();
    let mb = pbp.len();
    let (v2i, v4i, v3i) = if !mirror {
        ((va + ma - 1) % ma, (va + 1) % ma, (vb + mb - 1) % mb)
    } else {
        ((va + 1) % ma, (va + ma - 1) % ma, (vb + 1) % mb)
    };
    let vq = pa.vertex(va);
    let v2 = pa.vertex(v2i);
    let v4 = pa.vertex(v4i);
    let v3 = pbp.vertex(v3i);
    let s2 = vq.dist(v2);
    let s4 = vq.dist(v4);
    let mb_len = vq.dist(v3);
    let chord = pa.classify_chord(v2i, v4i)?;
    if chord.kind == ChordKind::Diagonal {
        return Err(MorphError::BadSupport(
            "the chord joining the shared-vertex neighbours bends around the boundary".into(),
        ));
    }
    let e_len = chord.length;
    let cap = (e_len + s2).min(s4 + 2.0 * mb_len);
    let tol = state.tolerance();
    if t > cap + tol {
        return Err(MorphError::CapExceeded { requested: t, cap });
    }
    if t <= s4 + tol {
        return Err(MorphError::BadSupport("the stretch must exceed the current edge".into()));
    }
    let vq_hat = pick_side(&circle_points(v2, s2, v4, t), v2, v4, orient(v2, v4, vq))
        .ok_or_else(|| MorphError::BadSupport("the anchor ear cannot be re-solved".into()))?;
    let v3_hat = pick_side(
        &circle_points(v4, s4 + mb_len, vq_hat, mb_len),
        vq_hat,
        v4,
        -orient(vq_hat, v4, v2),
    )
    .ok_or_else(|| MorphError::BadSupport("the swung half cannot be re-solved".into()))?;
    let rho = Rigid::matching((vq, v3), (vq_hat, v3_hat));

    let (pts, labs, refs) = walk_items(state);
    let me = VertexRef::Part { part: 0, vertex: va };
    let (copies, blocks) = junction_blocks(&refs, me);
    if copies.len() < 2 {
        return Err(MorphError::Internal("shared-vertex walk run not found".into()));
    }
    let first = copies[0];
    let last = *copies.last().unwrap();
    let b_start = VertexRef::Part { part: pb, vertex: vb };
    let mut swung: Option<(usize, usize)> = None;
    let mut keeps: Vec<(usize, usize)> = Vec::new();
    for &(b0, b1) in &blocks {
        if swung.is_none() && refs[b0] == b_start {
            swung = Some((b0, b1));
        } else {
            keeps.push((b0, b1));
        }
    }
    let (s0, s1) = swung.ok_or_else(|| MorphError::Internal("pinched part walk block missing".into()))?;
    let mut swung_items: Vec<(Point, Vec<usize>)> = (s0..s1)
        .map(|k| (rho.apply(pts[k]), labs[k].clone()))
        .collect();
    if mirror {
        // Start the swung arc at the far neighbour instead of the shared
        // vertex so the walk meets the new straight side first.
        let pivot_ref = VertexRef::Part {
            part: pb,
            vertex: (vb + 1) % mb,
        };
        let pivot = (s0..s1)
            .position(|k| refs[k] == pivot_ref)
            .ok_or_else(|| MorphError::Internal("swung arc pivot missing".into()))?;
        swung_items.rotate_left(pivot);
    }
    let dv = vq_hat - vq;
    let mut junction_items: Vec<(Point, Vec<usize>)> = vec![(vq_hat, labs[first].clone())];
    for &(b0, b1) in &keeps {
        for k in b0..b1 {
            junction_items.push((pts[k] + dv, labs[k].clone()));
        }
        junction_items.push((vq_hat, Vec::new()));
    }
    let mut rep = Vec::new();
    if !mirror {
        rep.extend(junction_items);
        rep.extend(swung_items);
    } else {
        rep.extend(swung_items);
        rep.extend(junction_items);
    }
    let mut new_pts: Vec<Point> = pts[..first].to_vec();
    let mut new_labs: Vec<Vec<usize>> = labs[..first].to_vec();
    for (p, l) in rep {
        new_pts.push(p);
        new_labs.push(l);
    }
    new_pts.extend_from_slice(&pts[last + 1..]);
    new_labs.extend_from_slice(&labs[last + 1..]);
    let new_state = rebuild(new_pts, new_labs, tol)?;

    let step = MorphStep {
        kind: StepKind::TypeTwo,
        support: vec![
            VertexRef::Part { part: 0, vertex: v2i },
            me,
            VertexRef::Part { part: pb, vertex: v3i },
            VertexRef::Part { part: 0, vertex: v4i },
        ],
        stretched_chord: Chord {
            endpoints: (va, v4i),
            kind: ChordKind::Side,
            length: s4,
            path: vec![vq, v4],
        },
        before_length: s4,
        after_length: t,
    };
    Ok(Moved {
        state: new_state,
        step,
        back: BackMap::Feasibility,
    })
}

/// Re-solves the triangle over `side` toward `apex`, increasing the side
/// to `target_len`. `side` endpoints index the part containing the apex;
/// equal endpoints open the zero-length side between coincident labels.
pub fn step_type_one(
    q: &DegeneratePolygon,
    side: &Chord,
    apex: VertexRef,
    target_len: f64,
) -> Result<(DegeneratePolygon, MorphStep), MorphError> {
    let apex_idx = match apex {
        VertexRef::Part { part: 0, vertex } => vertex,
        _ => {
            return Err(MorphError::BadSupport(
                "the apex must be a vertex of the single part".into(),
            ))
        }
    };
    let (u_idx, v_idx) = side.endpoints;
    let split_after = if u_idx == v_idx {
        labels_at(q, VertexRef::Part { part: 0, vertex: u_idx })
            .into_iter()
            .min()
    } else {
        None
    };
    let moved = move_open_side(q, u_idx, v_idx, apex_idx, split_after, target_len)?;
    Ok((moved.state, moved.step))
}

/// Re-solves the two halves of the quadrilateral `(u, x, v, y)` over its
/// diagonal `(x, y)`, increasing the diagonal to `target_len`. The corner
/// presentation selects the move: a chain point among the corners absorbs
/// the chain's root segment (the order of the two part neighbours selects
/// on which side the freed vertex lands); a corner on a second part opens
/// the pinch between the parts.
pub fn step_type_two(
    q: &DegeneratePolygon,
    quad: [VertexRef; 4],
    diagonal: &Chord,
    target_len: f64,
) -> Result<(DegeneratePolygon, MorphStep), MorphError> {
    let [cu, cx, cv, cy] = quad;
    // Chain-absorption presentation: u is the first chain point, y the root.
    if let VertexRef::ChainPt { chain, point } = cu {
        if point != 1 {
            return Err(MorphError::BadSupport(
                "the chain corner must be the first chain point".into(),
            ));
        }
        let ch = q
            .chains()
            .get(chain)
            .ok_or_else(|| MorphError::BadSupport("no such chain".into()))?;
        let state = permute_parts(q, ch.root_part)?;
        let ch = &state.chains()[chain];
        let rv = ch.root_vertex;
        let m = state.parts()[0].len();
        let next = VertexRef::Part { part: 0, vertex: (rv + 1) % m };
        let prev = VertexRef::Part {
            part: 0,
            vertex: (rv + m - 1) % m,
        };
        let root = VertexRef::Part { part: 0, vertex: rv };
        let remap = |r: VertexRef| match r {
            VertexRef::Part { vertex, .. } => VertexRef::Part { part: 0, vertex },
            other => other,
        };
        if remap(cy) != root {
            return Err(MorphError::BadSupport(
                "the corner opposite the chain point must be the chain root".into(),
            ));
        }
        let stretch_next = if remap(cx) == next && remap(cv) == prev {
            true
        } else if remap(cx) == prev && remap(cv) == next {
            false
        } else {
            return Err(MorphError::BadSupport(
                "the middle corners must be the two junction neighbours".into(),
            ));
        };
        // Invert target diagonal length -> absorbed arclength by bisection.
        let a_full = ch.points[0].dist(ch.points[1]);
        let probe = |ap: f64| -> Result<f64, MorphError> {
            Ok(move_absorb(&state, chain, ap, stretch_next)?.step.after_length)
        };
        let t_max = probe(a_full)?;
        let t0 = diagonal.length;
        if target_len > t_max + state.tolerance() {
            return Err(MorphError::CapExceeded {
                requested: target_len,
                cap: t_max,
            });
        }
        if target_len <= t0 + state.tolerance() {
            return Err(MorphError::BadSupport("the diagonal must increase".into()));
        }
        let mut lo = 0.0;
        let mut hi = a_full;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if probe(mid)? <= target_len {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let moved = move_absorb(&state, chain, 0.5 * (lo + hi), stretch_next)?;
        return Ok((moved.state, moved.step));
    }
    // Pinch presentation: x is a shared vertex, v a corner of the second
    // part, u and y the neighbours of x on its own part.
    if let (
        VertexRef::Part { part: pu, vertex: vu },
        VertexRef::Part { part: px, vertex: vx },
        VertexRef::Part { part: pv, vertex: vcv },
        VertexRef::Part { part: py, vertex: vyy },
    ) = (cu, cx, cv, cy)
    {
        if pv != px && pu == px && py == px {
            let idx = q
                .links()
                .iter()
                .position(|l| {
                    (l.part_a == px && l.vertex_a == vx && l.part_b == pv)
                        || (l.part_b == px && l.vertex_b == vx && l.part_a == pv)
                })
                .ok_or_else(|| {
                    MorphError::BadSupport("the corners do not straddle a pinch".into())
                })?;
            let l = q.links()[idx];
            let vb = if l.part_a == px { l.vertex_b } else { l.vertex_a };
            let ma = q.parts()[px].len();
            let mb = q.parts()[pv].len();
            let mirror = if vu == (vx + ma - 1) % ma && vyy == (vx + 1) % ma {
                false
            } else if vu == (vx + 1) % ma && vyy == (vx + ma - 1) % ma {
                true
            } else {
                return Err(MorphError::BadSupport(
                    "the outer corners must be the shared vertex's neighbours".into(),
                ));
            };
            let want_v3 = if mirror { (vb + 1) % mb } else { (vb + mb - 1) % mb };
            if vcv != want_v3 {
                return Err(MorphError::BadSupport(
                    "the second-part corner must neighbour the shared vertex".into(),
                ));
            }
            if diagonal.endpoints != (vx, vyy) && diagonal.endpoints != (vyy, vx) {
                return Err(MorphError::BadSupport(
                    "the diagonal must join the second and fourth quad corners".into(),
                ));
            }
            let state = permute_parts(q, px)?;
            let moved = move_pinch(&state, idx, mirror, target_len)?;
            return Ok((moved.state, moved.step));
        }
    }
    // Planar presentation on a single part.
    let as_idx = |r: VertexRef| match r {
        VertexRef::Part { part: 0, vertex } => Ok(vertex),
        _ => Err(MorphError::BadSupport(
            "quad corners must be vertices of the single part".into(),
        )),
    };
    let quad_idx = [as_idx(cu)?, as_idx(cx)?, as_idx(cv)?, as_idx(cy)?];
    if diagonal.endpoints != (quad_idx[1], quad_idx[3])
        && diagonal.endpoints != (quad_idx[3], quad_idx[1])
    {
        return Err(MorphError::BadSupport(
            "the diagonal must join the second and fourth quad corners".into(),
        ));
    }
    let moved = move_quad(q, quad_idx, target_len)?;
    Ok((moved.state, moved.step))
}

struct Target {
    p: SimplePolygon,
    /// Intrinsic label distances of the target.
    dp: Vec<Vec<f64>>,
}

/// Drives moves until the state is congruent to the target (or, without a
/// target, until it is one convex part).
struct Engine {
    target: Option<Target>,
    scale: f64,
    budget: usize,
}

impl Engine {
    fn targeted(p: &SimplePolygon) -> Result<Engine, MorphError> {
        let n = p.len();
        let mut dp = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let (d, _) = p.intrinsic_distance(p.vertex(i), p.vertex(j))?;
                dp[i][j] = d;
                dp[j][i] = d;
            }
        }
        Ok(Engine {
            scale: diameter(p.vertices()),
            target: Some(Target { p: p.clone(), dp }),
            budget: STEP_BUDGET,
        })
    }

    fn targetless(scale: f64) -> Engine {
        Engine {
            target: None,
            scale,
            budget: STEP_BUDGET,
        }
    }

    fn cap_slack(&self) -> f64 {
        1e-10 * (1.0 + self.scale)
    }

    fn cut_tol(&self) -> f64 {
        1e-7 * (1.0 + self.scale)
    }

    fn cong_tol(&self) -> f64 {
        1e-7 * (1.0 + self.scale)
    }

    fn cert_slack(&self) -> f64 {
        1e-7 * (1.0 + self.scale)
    }

    fn spend(&mut self) -> Result<(), MorphError> {
        if self.budget == 0 {
            return Err(MorphError::StepBudgetExhausted);
        }
        self.budget -= 1;
        Ok(())
    }

    /// Does a candidate state keep every tracked distance between its
    /// current value and the target bound, in the target's boundary order?
    fn caps_ok(&self, before: &[Vec<f64>], state: &DegeneratePolygon) -> bool {
        let nl = before.len();
        let Ok(mat) = state.label_matrix(nl) else {
            return false;
        };
        let slack = self.cert_slack();
        for i in 0..nl {
            for j in (i + 1)..nl {
                if mat[i][j] < before[i][j] - slack {
                    return false;
                }
            }
        }
        if let Some(tg) = &self.target {
            let n = tg.p.len();
            // A pair may sit a hair past its bound already — a cut hands
            // each half its chord at the parent's slightly looser slack.
            // Such an inherited overshoot is not the move's fault; reject
            // only moves that create or grow one.
            let wobble = 1e-12 * (1.0 + self.scale);
            for i in 0..n {
                for j in (i + 1)..n {
                    if mat[i][j] > tg.dp[i][j] + self.cap_slack()
                        && mat[i][j] > before[i][j] + wobble
                    {
                        return false;
                    }
                }
            }
            if !state.same_order(&tg.p) {
                return false;
            }
        }
        true
    }

    /// Largest feasible parameter in `(0, 1]` for a monotone move family.
    /// Returns the move and whether the natural end was cut short.
    fn capped<F>(&self, before: &[Vec<f64>], f: F) -> Option<(Moved, bool)>
    where
        F: Fn(f64) -> Option<Moved>,
    {
        let ok = |tau: f64| f(tau).filter(|m| self.caps_ok(before, &m.state));
        if let Some(m) = ok(1.0) {
            return Some((m, false));
        }
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        let mut best: Option<Moved> = None;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match ok(mid) {
                Some(m) => {
                    best = Some(m);
                    lo = mid;
                }
                None => hi = mid,
            }
        }
        best.map(|m| (m, true))
    }

    /// Commits a move: certificate, order check, snapshots.
    fn commit(
        &mut self,
        plan: &mut MorphPlan,
        cur: &mut DegeneratePolygon,
        moved: Moved,
    ) -> Result<(), MorphError> {
        self.spend()?;
        let n_labels = cur.iota().len();
        let before_m = cur
            .label_matrix(n_labels)
            .map_err(|e| MorphError::Internal(format!("commit before-matrix: {e}")))?;
        let after_m = moved.state.label_matrix(n_labels).map_err(|e| {
            MorphError::Internal(format!(
                "commit after-matrix ({:?} step): {e}; iota {:?}",
                moved.step.kind,
                moved.state.iota()
            ))
        })?;
        let bound = self
            .target
            .as_ref()
            .map(|t| t.dp.clone())
            .unwrap_or_default();
        let cert = Certificate {
            labels: (0..n_labels).collect(),
            before: before_m,
            after: after_m,
            bound,
        };
        let (shrink, over) = cert.worst_violations();
        // The candidate filter already rejects moves that shrink a tracked
        // distance by more than one slack; the hard guard here sits at twice
        // that so a one-ulp disagreement between the two subtraction orders
        // cannot fail a move the filter accepted.
        if shrink > 2.0 * self.cert_slack() || over > 2.0 * self.cert_slack() {
            let mut worst = (0usize, 0usize, 0.0f64);
            for i in 0..n_labels {
                for j in (i + 1)..n_labels {
                    let d = cert.before[i][j] - cert.after[i][j];
                    if d > worst.2 {
                        worst = (i, j, d);
                    }
                }
            }
            return Err(MorphError::Internal(format!(
                "move certificate violated (shrink {shrink} at pair ({},{}): {} -> {}, overshoot {over}, slack {}, scale {}; step {:?} support {:?} {} -> {})",
                worst.0,
                worst.1,
                cert.before[worst.0][worst.1],
                cert.after[worst.0][worst.1],
                self.cert_slack(),
                self.scale,
                moved.step.kind,
                moved.step.support,
                moved.step.before_length,
                moved.step.after_length,
            )));
        }
        if let Some(tg) = &self.target {
            if !moved.state.same_order(&tg.p) {
                return Err(MorphError::Internal(
                    "move broke the boundary order of the labels".into(),
                ));
            }
        }
        plan.records.push(StepRecord {
            step: Some(moved.step),
            before: cur.clone(),
            after: moved.state.clone(),
            certificate: cert,
            back: moved.back,
        });
        *cur = moved.state;
        Ok(())
    }

    /// Commits a bookkeeping rebuild that does not change the geometry.
    fn commit_bookkeeping(
        &mut self,
        plan: &mut MorphPlan,
        cur: &mut DegeneratePolygon,
        state: DegeneratePolygon,
    ) -> Result<(), MorphError> {
        self.spend()?;
        let n_labels = cur.iota().len();
        let before_m = cur.label_matrix(n_labels)?;
        let after_m = state.label_matrix(n_labels)?;
        let bound = self
            .target
            .as_ref()
            .map(|t| t.dp.clone())
            .unwrap_or_default();
        let cert = Certificate {
            labels: (0..n_labels).collect(),
            before: before_m,
            after: after_m,
            bound,
        };
        plan.records.push(StepRecord {
            step: None,
            before: cur.clone(),
            after: state.clone(),
            certificate: cert,
            back: BackMap::Identity,
        });
        *cur = state;
        Ok(())
    }

    fn is_congruent(&self, cur: &DegeneratePolygon) -> bool {
        let Some(tg) = &self.target else { return false };
        let Some(poly) = cur.single_part() else {
            return false;
        };
        if !cur.links().is_empty() {
            return false;
        }
        let n = tg.p.len();
        for k in 0..poly.len() {
            let vr = VertexRef::Part { part: 0, vertex: k };
            if labels_at(cur, vr).is_empty()
                && (poly.interior_angle(k) - std::f64::consts::PI).abs() > 10.0 * FLAT_DROP
            {
                return false;
            }
        }
        if !cur.same_order(&tg.p) {
            return false;
        }
        let mut pos = Vec::with_capacity(n);
        for l in 0..n {
            match cur.label_point(l) {
                Some((_, p)) => pos.push(p),
                None => return false,
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let want = tg.p.vertex(i).dist(tg.p.vertex(j));
                if (pos[i].dist(pos[j]) - want).abs() > self.cong_tol() {
                    return false;
                }
            }
        }
        true
    }

    /// Both boundary arcs between two labeled vertices must leave the
    /// geodesic joining them, or a cut along the geodesic would leave a
    /// degenerate half.
    fn arcs_leave_chord(&self, cur: &DegeneratePolygon, la: usize, lb: usize, dist: f64) -> bool {
        let Some(poly) = cur.single_part() else {
            return false;
        };
        let (va, vb) = match (cur.label_point(la), cur.label_point(lb)) {
            (
                Some((VertexRef::Part { vertex: a, .. }, _)),
                Some((VertexRef::Part { vertex: b, .. }, _)),
            ) => (a, b),
            _ => return false,
        };
        let m = poly.len();
        let tol = self.cut_tol();
        let arc = |from: usize, to: usize| -> f64 {
            let mut sum = 0.0;
            let mut k = from;
            while k != to {
                let k2 = (k + 1) % m;
                sum += poly.vertex(k).dist(poly.vertex(k2));
                k = k2;
            }
            sum
        };
        arc(va, vb) > dist + tol && arc(vb, va) > dist + tol
    }

    /// A non-adjacent label pair whose intrinsic distance has reached the
    /// target bound, resolved to a pair whose target chord is straight.
    fn cut_pair(&self, cur: &DegeneratePolygon) -> Result<Option<(usize, usize)>, MorphError> {
        let Some(tg) = &self.target else { return Ok(None) };
        if cur.single_part().is_none() || !cur.links().is_empty() {
            return Ok(None);
        }
        let n = tg.p.len();
        if n < 4 {
            return Ok(None);
        }
        let mat = cur.label_matrix(n)?;
        let mut tight: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let gap = (j - i) % n;
                if gap == 1 || gap == n - 1 {
                    continue;
                }
                let excess = mat[i][j] - tg.dp[i][j];
                if excess >= -self.cut_tol() {
                    tight.push((excess, i, j));
                }
            }
        }
        tight.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        'pairs: for &(_, i0, j0) in &tight {
            let (mut i, mut j) = (i0, j0);
            for _ in 0..n {
                let ch = tg.p.classify_chord(i, j)?;
                match ch.kind {
                    ChordKind::Side => continue 'pairs,
                    ChordKind::SmoothDiagonal => {
                        let gap = (j + n - i) % n;
                        if gap == 1 || gap == n - 1 {
                            continue 'pairs;
                        }
                        if mat[i][j] < tg.dp[i][j] - 2.0 * self.cut_tol() {
                            continue 'pairs;
                        }
                        if !self.arcs_leave_chord(cur, i, j, mat[i][j]) {
                            continue 'pairs;
                        }
                        return Ok(Some((i, j)));
                    }
                    ChordKind::Diagonal => {
                        // Cut along the first straight piece of the bent
                        // target chord; tightness propagates piecewise.
                        let bend = ch.path[1];
                        let k = (0..n)
                            .min_by(|&a, &b| {
                                tg.p.vertex(a)
                                    .dist(bend)
                                    .partial_cmp(&tg.p.vertex(b).dist(bend))
                                    .unwrap()
                            })
                            .unwrap();
                        if tg.p.vertex(k).dist(bend) > 1e-6 * (1.0 + self.scale) || k == i {
                            continue 'pairs;
                        }
                        j = k;
                        if j < i {
                            std::mem::swap(&mut i, &mut j);
                        }
                    }
                }
            }
        }
        Ok(None)
    }

    fn drop_flat_once(
        &mut self,
        plan: &mut MorphPlan,
        cur: &mut DegeneratePolygon,
    ) -> Result<bool, MorphError> {
        let Some(poly) = cur.single_part() else {
            return Ok(false);
        };
        if !cur.links().is_empty() {
            return Ok(false);
        }
        let m = poly.len();
        for k in 0..m {
            let vr = VertexRef::Part { part: 0, vertex: k };
            if labels_at(cur, vr).is_empty()
                && (poly.interior_angle(k) - std::f64::consts::PI).abs() <= FLAT_DROP
            {
                let mut items: Vec<(Point, Vec<usize>)> = (0..m)
                    .filter(|&i| i != k)
                    .map(|i| {
                        (
                            poly.vertex(i),
                            labels_at(cur, VertexRef::Part { part: 0, vertex: i }),
                        )
                    })
                    .collect();
                if items.len() < 3 {
                    return Ok(false);
                }
                let (pts, labs): (Vec<Point>, Vec<Vec<usize>>) = items.drain(..).unzip();
                let state = rebuild(pts, labs, cur.tolerance())?;
                self.commit_bookkeeping(plan, cur, state)?;
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// One quad move flattening the most concave vertex, guarded so that
    /// no corner crosses flat in either direction.
    fn flatten_once(
        &mut self,
        plan: &mut MorphPlan,
        cur: &mut DegeneratePolygon,
    ) -> Result<bool, MorphError> {
        let Some(poly) = cur.single_part() else {
            return Ok(false);
        };
        if !cur.links().is_empty() {
            return Ok(false);
        }
        let poly = poly.clone();
        let m = poly.len();
        let pi = std::f64::consts::PI;
        let mut reflex: Vec<(f64, usize)> = (0..m)
            .map(|k| (poly.interior_angle(k) - pi, k))
            .filter(|&(e, _)| e > 10.0 * ANG_GUARD)
            .collect();
        reflex.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let before = cur.label_matrix(cur.iota().len())?;
        for &(_, x_idx) in &reflex {
            if let Some(moved) = self.flatten_vertex(cur, &before, &poly, x_idx)? {
                self.commit(plan, cur, moved)?;
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn flatten_vertex(
        &self,
        cur: &DegeneratePolygon,
        before: &[Vec<f64>],
        poly: &SimplePolygon,
        x_idx: usize,
    ) -> Result<Option<Moved>, MorphError> {
        let m = poly.len();
        let pi = std::f64::consts::PI;
        let x = poly.vertex(x_idx);
        let smooth = |a: usize, b: usize| -> bool {
            matches!(
                poly.classify_chord(a, b).map(|c| c.kind),
                Ok(ChordKind::Side) | Ok(ChordKind::SmoothDiagonal)
            )
        };
        // Quads (u, x, v, y) in boundary order around the reflex corner x;
        // the flanking corners u, v need not be x's direct neighbours.
        let at = |r: usize| (x_idx + r) % m;
        let mut cands: Vec<(f64, [usize; 3], QuadLens)> = Vec::new();
        for rv in 1..m.saturating_sub(2) {
            let v_idx = at(rv);
            if !smooth(x_idx, v_idx) {
                continue;
            }
            for ru in (rv + 2)..m {
                let u_idx = at(ru);
                if !smooth(u_idx, x_idx) {
                    continue;
                }
                for ry in (rv + 1)..ru {
                    let y_idx = at(ry);
                    if !smooth(v_idx, y_idx) || !smooth(y_idx, u_idx) || !smooth(x_idx, y_idx) {
                        continue;
                    }
                    let (u, v, y) = (poly.vertex(u_idx), poly.vertex(v_idx), poly.vertex(y_idx));
                    let lens = QuadLens {
                        l_ux: u.dist(x),
                        l_xv: x.dist(v),
                        l_vy: v.dist(y),
                        l_yu: y.dist(u),
                        l_xy: x.dist(y),
                    };
                    let headroom = lens.cap() - lens.l_xy;
                    if headroom > 1e-9 * (1.0 + self.scale) {
                        cands.push((headroom, [u_idx, v_idx, y_idx], lens));
                    }
                }
            }
        }
        cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for (_, [u_idx, v_idx, y_idx], lens) in cands {
            let t0 = lens.l_xy;
            let t_cap = lens.cap();
            // Flank wedges stay constant: polygon angle = base + quad corner.
            let c0 = lens.corners(t0);
            let base_u = poly.interior_angle(u_idx) - c0[0];
            let base_x = poly.interior_angle(x_idx) - c0[1];
            let base_v = poly.interior_angle(v_idx) - c0[2];
            let base_y = poly.interior_angle(y_idx) - c0[3];
            let u_capped = poly.interior_angle(u_idx) <= pi + ANG_GUARD;
            let v_capped = poly.interior_angle(v_idx) <= pi + ANG_GUARD;
            let y_floored = poly.interior_angle(y_idx) >= pi - ANG_GUARD;
            let guard = |t: f64| -> bool {
                let c = lens.corners(t);
                if u_capped && base_u + c[0] > pi + ANG_GUARD {
                    return false;
                }
                if v_capped && base_v + c[2] > pi + ANG_GUARD {
                    return false;
                }
                if base_x + c[1] < pi - ANG_GUARD {
                    return false;
                }
                if y_floored && base_y + c[3] < pi - ANG_GUARD {
                    return false;
                }
                true
            };
            let quad = [u_idx, x_idx, v_idx, y_idx];
            let builder = |tau: f64| -> Option<Moved> {
                let t = t0 + tau * (t_cap - t0);
                if !guard(t) {
                    return None;
                }
                move_quad(cur, quad, t).ok()
            };
            if let Some((moved, _)) = self.capped(before, builder) {
                let progress = moved.step.after_length - moved.step.before_length;
                if progress > 1e-12 * (1.0 + self.scale) {
                    return Ok(Some(moved));
                }
            }
        }
        Ok(None)
    }

    /// One triangle re-solve increasing a deficient labeled side.
    fn stretch_side_once(
        &mut self,
        plan: &mut MorphPlan,
        cur: &mut DegeneratePolygon,
        eps: f64,
    ) -> Result<bool, MorphError> {
        let Some(tg) = &self.target else { return Ok(false) };
        let tg_p = tg.p.clone();
        let n = tg_p.len();
        let Some(poly) = cur.single_part() else {
            return Ok(false);
        };
        if !cur.links().is_empty() {
            return Ok(false);
        }
        let poly = poly.clone();
        let m = poly.len();
        let side_tol = 1e-9 * (1.0 + self.scale);
        let mut deficient: Vec<(f64, usize)> = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            let (pi_pos, pj_pos) = match (cur.label_point(i), cur.label_point(j)) {
                (Some((_, a)), Some((_, b))) => (a, b),
                _ => return Ok(false),
            };
            let want = self.target.as_ref().unwrap().dp[i][j];
            let have = pi_pos.dist(pj_pos);
            if have < want - side_tol {
                deficient.push((want - have, i));
            }
        }
        deficient.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let before = cur.label_matrix(cur.iota().len())?;
        let pi_c = std::f64::consts::PI;
        for &(_, lab_i) in &deficient {
            let lab_j = (lab_i + 1) % n;
            let (vr_i, pos_i) = cur.label_point(lab_i).unwrap();
            let (vr_j, pos_j) = cur.label_point(lab_j).unwrap();
            let (u_idx, v_idx) = match (vr_i, vr_j) {
                (
                    VertexRef::Part { vertex: a, .. },
                    VertexRef::Part { vertex: b, .. },
                ) => (a, b),
                _ => continue,
            };
            if u_idx != v_idx && (u_idx + 1) % m != v_idx {
                continue;
            }
            let want = self.target.as_ref().unwrap().dp[lab_i][lab_j];
            let have = pos_i.dist(pos_j);
            // Apexes with straight chords to both endpoints, largest cap
            // first. A reflex apex is never sound: paths routed around it
            // through the closing wedge would shrink.
            let mut apexes: Vec<(f64, usize)> = Vec::new();
            for z_idx in 0..m {
                if z_idx == u_idx || z_idx == v_idx {
                    continue;
                }
                if poly.interior_angle(z_idx) > pi_c + 10.0 * ANG_GUARD {
                    continue;
                }
                let ok = [u_idx, v_idx].iter().all(|&k| {
                    k == z_idx
                        || matches!(
                            poly.classify_chord(k, z_idx).map(|c| c.kind),
                            Ok(ChordKind::Side) | Ok(ChordKind::SmoothDiagonal)
                        )
                });
                if !ok {
                    continue;
                }
                let r1 = poly.vertex(z_idx).dist(pos_i);
                let r2 = poly.vertex(z_idx).dist(pos_j);
                apexes.push((r1 + r2, z_idx));
            }
            apexes.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            for &(_, z_idx) in &apexes {
                let z = poly.vertex(z_idx);
                let r1 = z.dist(pos_i);
                let r2 = z.dist(pos_j);
                // Keep the apex angle below pi - eps.
                let t_eps = ((r1 * r1 + r2 * r2 + 2.0 * r1 * r2 * eps.cos()).max(0.0)).sqrt();
                let t_hi = want.min(t_eps).min(r1 + r2);
                if t_hi <= have + side_tol {
                    continue;
                }
                let split = if u_idx == v_idx { Some(lab_i) } else { None };
                let builder = |tau: f64| -> Option<Moved> {
                    let t = have + tau * (t_hi - have);
                    move_open_side(cur, u_idx, v_idx, z_idx, split, t).ok()
                };
                if let Some((moved, _)) = self.capped(&before, builder) {
                    let progress = moved.step.after_length - moved.step.before_length;
                    if progress > 1e-12 * (1.0 + self.scale) {
                        self.commit(plan, cur, moved)?;
                        return Ok(true);
                    }
                }
            }
        }
        Ok(false)
    }

    /// One chain-absorption move on the first chain that accepts one.
    fn absorb_once(
        &mut self,
        plan: &mut MorphPlan,
        cur: &mut DegeneratePolygon,
    ) -> Result<bool, MorphError> {
        for cid in 0..cur.chains().len() {
            let root = cur.chains()[cid].root_part;
            let state = permute_parts(cur, root)?;
            let before = state.label_matrix(state.iota().len())?;
            let ways = self.absorb_ways(&state, cid);
            let a_full = state.chains()[cid].points[0].dist(state.chains()[cid].points[1]);
            for way in ways {
                let builder = |tau: f64| -> Option<Moved> {
                    move_absorb(&state, cid, tau * a_full, way).ok()
                };
                if let Some((moved, _)) = self.capped(&before, builder) {
                    let progress = moved.step.after_length - moved.step.before_length;
                    if progress > 1e-12 * (1.0 + self.scale) {
                        *cur = state;
                        self.commit(plan, cur, moved)?;
                        return Ok(true);
                    }
                }
            }
        }
        Ok(false)
    }

    /// Which junction side to stretch first: when the junction, both
    /// neighbours, and the first chain point are all labeled, the target
    /// dictates the side on which the freed label must land.
    fn absorb_ways(&self, state: &DegeneratePolygon, cid: usize) -> Vec<bool> {
        let both = vec![true, false];
        let Some(tg) = &self.target else { return both };
        let ch = &state.chains()[cid];
        let rv = ch.root_vertex;
        let m = state.parts()[0].len();
        let grab = |vr: VertexRef| labels_at(state, vr).into_iter().next();
        let l_prev = grab(VertexRef::Part { part: 0, vertex: (rv + m - 1) % m });
        let l_next = grab(VertexRef::Part { part: 0, vertex: (rv + 1) % m });
        let l_root = grab(VertexRef::Part { part: 0, vertex: rv })
            .or_else(|| grab(VertexRef::ChainPt { chain: cid, point: 0 }));
        let l_c1 = grab(VertexRef::ChainPt { chain: cid, point: 1 });
        let (Some(lp), Some(ln), Some(lr), Some(lc)) = (l_prev, l_next, l_root, l_c1) else {
            return both;
        };
        let tolc = 1e-9 * (1.0 + self.scale);
        let p = &tg.p;
        let collinear = |a: usize, b: usize, c: usize| {
            (p.vertex(a).dist(p.vertex(b)) + p.vertex(b).dist(p.vertex(c))
                - p.vertex(a).dist(p.vertex(c)))
            .abs()
                <= tolc
        };
        if collinear(lp, lr, lc) {
            vec![true]
        } else if collinear(ln, lr, lc) {
            vec![false]
        } else {
            both
        }
    }

    /// One pinch-opening move on the first link that accepts one.
    fn pinch_once(
        &mut self,
        plan: &mut MorphPlan,
        cur: &mut DegeneratePolygon,
    ) -> Result<bool, MorphError> {
        for idx in 0..cur.links().len() {
            let link = cur.links()[idx];
            for anchor in [link.part_a, link.part_b] {
                let state = match permute_parts(cur, anchor) {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                let before = state.label_matrix(state.iota().len())?;
                for mirror in [false, true] {
                    if let Some(moved) = self.pinch_candidate(&state, &before, idx, mirror) {
                        *cur = state;
                        self.commit(plan, cur, moved)?;
                        return Ok(true);
                    }
                }
            }
        }
        Ok(false)
    }

    fn pinch_candidate(
        &self,
        state: &DegeneratePolygon,
        before: &[Vec<f64>],
        link_idx: usize,
        mirror: bool,
    ) -> Option<Moved> {
        let link = state.links()[link_idx];
        let (va, pb, vb) = if link.part_a == 0 {
            (link.vertex_a, link.part_b, link.vertex_b)
        } else if link.part_b == 0 {
            (link.vertex_b, link.part_a, link.vertex_a)
        } else {
            return None;
        };
        let pa = &state.parts()[0];
        let pbp = &state.parts()[pb];
        let ma = pa.len();
        let mb = pbp.len();
        let (v2i, v4i, v3i) = if !mirror {
            ((va + ma - 1) % ma, (va + 1) % ma, (vb + mb - 1) % mb)
        } else {
            ((va + 1) % ma, (va + ma - 1) % ma, (vb + 1) % mb)
        };
        let vq = pa.vertex(va);
        let s2 = vq.dist(pa.vertex(v2i));
        let s4 = vq.dist(pa.vertex(v4i));
        let mlen = vq.dist(pbp.vertex(v3i));
        let chord = pa.classify_chord(v2i, v4i).ok()?;
        if chord.kind == ChordKind::Diagonal {
            return None;
        }
        let e_len = chord.length;
        let cap = (e_len + s2).min(s4 + 2.0 * mlen);
        if cap <= s4 + 1e-9 * (1.0 + self.scale) {
            return None;
        }
        // Natural end: the opened corner of the shared vertex reaches flat.
        let pi = std::f64::consts::PI;
        let corner = |t: f64| triangle_angle(e_len, s2, t) + triangle_angle(s4 + mlen, t, mlen);
        let t_star = if corner(cap * (1.0 - 1e-12)) > pi {
            cap * (1.0 - 1e-9)
        } else {
            let mut lo = s4;
            let mut hi = cap * (1.0 - 1e-12);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if corner(mid) > pi {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        // The rebuilt pose may only embed near the natural end, so scan
        // downward from it rather than bisecting.
        let mut ts = vec![t_star];
        for k in 1..12 {
            ts.push(s4 + (t_star - s4) * (1.0 - k as f64 / 12.0));
        }
        for t in ts {
            if t <= s4 {
                continue;
            }
            if let Ok(moved) = move_pinch(state, link_idx, mirror, t) {
                if self.caps_ok(before, &moved.state) {
                    return Some(moved);
                }
            }
        }
        None
    }

    /// Cuts the current single-part state along the tight label chord and
    /// solves the halves independently.
    fn perform_cut(
        &mut self,
        cur: &DegeneratePolygon,
        la: usize,
        lb: usize,
    ) -> Result<SplitRecord, MorphError> {
        let tg = self.target.as_ref().unwrap();
        let p = tg.p.clone();
        let n = p.len();
        let poly = cur
            .single_part()
            .ok_or_else(|| MorphError::Internal("cut needs a single part".into()))?;
        let grab_idx = |lab: usize| -> Result<usize, MorphError> {
            match cur.label_point(lab) {
                Some((VertexRef::Part { vertex, .. }, _)) => Ok(vertex),
                _ => Err(MorphError::Internal(format!(
                    "label {lab} is not on the part boundary"
                ))),
            }
        };
        let vi = grab_idx(la)?;
        let vj = grab_idx(lb)?;
        let (_, path) = poly.intrinsic_distance(poly.vertex(vi), poly.vertex(vj))?;
        let interior: Vec<Point> = path[1..path.len() - 1].to_vec();
        let m = poly.len();

        let arc_labels = |from: usize, to: usize| -> Vec<usize> {
            let mut out = vec![from];
            let mut k = from;
            while k != to {
                k = (k + 1) % n;
                out.push(k);
            }
            out
        };
        let first_labels = arc_labels(la, lb);
        let second_labels = arc_labels(lb, la);
        let build_half = |labels: &[usize]| -> Result<SimplePolygon, MorphError> {
            let verts: Vec<Point> = labels.iter().map(|&l| p.vertex(l)).collect();
            SimplePolygon::build(verts, p.tolerance()).map_err(MorphError::Geom)
        };
        let p1 = build_half(&first_labels)?;
        let p2 = build_half(&second_labels)?;

        let local = |labels: &[usize], g: usize| labels.iter().position(|&x| x == g);
        let half_walk = |v_from: usize,
                         v_to: usize,
                         cut_rev: bool,
                         labels: &[usize]|
         -> Result<DegeneratePolygon, MorphError> {
            let mut pts = Vec::new();
            let mut labs: Vec<Vec<usize>> = Vec::new();
            let mut k = v_from;
            loop {
                pts.push(poly.vertex(k));
                let ls = labels_at(cur, VertexRef::Part { part: 0, vertex: k });
                labs.push(ls.iter().filter_map(|&g| local(labels, g)).collect());
                if k == v_to {
                    break;
                }
                k = (k + 1) % m;
            }
            if cut_rev {
                for q in interior.iter().rev() {
                    pts.push(*q);
                    labs.push(Vec::new());
                }
            } else {
                for q in interior.iter() {
                    pts.push(*q);
                    labs.push(Vec::new());
                }
            }
            rebuild(pts, labs, cur.tolerance())
        };
        let c1 = half_walk(vi, vj, true, &first_labels)?;
        let c2 = half_walk(vj, vi, false, &second_labels)?;

        let mut e1 = Engine::targeted(&p1)?;
        let plan1 = e1.run(c1)?;
        let mut e2 = Engine::targeted(&p2)?;
        let plan2 = e2.run(c2)?;
        Ok(SplitRecord {
            label_a: la,
            label_b: lb,
            target_first: p1,
            target_second: p2,
            first_labels,
            second_labels,
            first: plan1,
            second: plan2,
        })
    }

    fn run(&mut self, c0: DegeneratePolygon) -> Result<MorphPlan, MorphError> {
        let target = self
            .target
            .as_ref()
            .map(|t| t.p.clone())
            .unwrap_or_else(|| c0.parts()[0].clone());
        let mut plan = MorphPlan {
            target,
            initial: c0.clone(),
            records: Vec::new(),
            split: None,
        };
        let mut cur = c0;
        let mut eps = EPS0;
        let mut stall = 0usize;
        loop {
            self.spend()?;
            if self.is_congruent(&cur) {
                return Ok(plan);
            }
            if let Some((la, lb)) = self
                .cut_pair(&cur)
                .map_err(|e| MorphError::Internal(format!("cut_pair: {e}")))?
            {
                let split = self
                    .perform_cut(&cur, la, lb)
                    .map_err(|e| MorphError::Internal(format!("cut at ({la},{lb}): {e}")))?;
                plan.split = Some(Box::new(split));
                return Ok(plan);
            }
            if !cur.chains().is_empty()
                && self
                    .absorb_once(&mut plan, &mut cur)
                    .map_err(|e| MorphError::Internal(format!("absorb: {e}")))?
            {
                stall = 0;
                continue;
            }
            if !cur.links().is_empty()
                && self
                    .pinch_once(&mut plan, &mut cur)
                    .map_err(|e| MorphError::Internal(format!("pinch: {e}")))?
            {
                stall = 0;
                continue;
            }
            if self
                .drop_flat_once(&mut plan, &mut cur)
                .map_err(|e| MorphError::Internal(format!("drop_flat: {e}")))?
            {
                stall = 0;
                continue;
            }
            if self
                .flatten_once(&mut plan, &mut cur)
                .map_err(|e| MorphError::Internal(format!("flatten: {e}")))?
            {
                stall = 0;
                continue;
            }
            if self
                .stretch_side_once(&mut plan, &mut cur, eps)
                .map_err(|e| MorphError::Internal(format!("stretch: {e}")))?
            {
                stall = 0;
                continue;
            }
            stall += 1;
            eps *= 0.5;
            if eps < 1e-13 || stall > 60 {
                let detail = self.stall_report(&cur);
                return Err(MorphError::Internal(format!(
                    "no opening move advances the deformation; {detail}"
                )));
            }
        }
    }

    /// Summarizes a stalled state: which marked pairs are still short of
    /// their targets and what the current geometry looks like.
    fn stall_report(&self, cur: &DegeneratePolygon) -> String {
        let n = cur.iota().len();
        let mut out = String::new();
        if let (Some(tg), Ok(mat)) = (&self.target, cur.label_matrix(n)) {
            let mut short = Vec::new();
            let mut over = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    let gap = tg.dp[i][j] - mat[i][j];
                    if gap > self.cert_slack() {
                        short.push(format!(
                            "({i},{j}) at {} of {}",
                            mat[i][j], tg.dp[i][j]
                        ));
                    }
                    if -gap > self.cap_slack() {
                        over.push(format!("({i},{j}) by {:e}", -gap));
                    }
                }
            }
            out.push_str(&format!("short pairs: [{}]", short.join(", ")));
            if !over.is_empty() {
                out.push_str(&format!("; overshot pairs: [{}]", over.join(", ")));
            }
        }
        if let Some(p) = cur.single_part() {
            out.push_str(&format!("; boundary {:?}", p.vertices()));
        } else {
            out.push_str(&format!(
                "; {} parts, {} chains, {} links",
                cur.parts().len(),
                cur.chains().len(),
                cur.links().len()
            ));
        }
        out
    }

    /// Runs without a target until the state is a single convex part.
    fn run_convexify(
        &mut self,
        c0: DegeneratePolygon,
    ) -> Result<(SimplePolygon, Vec<MorphStep>), MorphError> {
        let mut plan = MorphPlan {
            target: c0.parts()[0].clone(),
            initial: c0.clone(),
            records: Vec::new(),
            split: None,
        };
        let mut cur = c0;
        let pi = std::f64::consts::PI;
        loop {
            self.spend()?;
            let done = match cur.single_part() {
                Some(poly) if cur.links().is_empty() => {
                    (0..poly.len()).all(|k| poly.interior_angle(k) <= pi + 1e-7)
                }
                _ => false,
            };
            if done {
                let steps = plan.records.into_iter().filter_map(|r| r.step).collect();
                return Ok((cur.single_part().unwrap().clone(), steps));
            }
            if !cur.links().is_empty() && self.pinch_once(&mut plan, &mut cur)? {
                continue;
            }
            if self.flatten_once(&mut plan, &mut cur)? {
                continue;
            }
            return Err(MorphError::StepBudgetExhausted);
        }
    }
}

/// Checks the structural and metric conditions under which a deformation
/// of `pp` onto `p` exists, naming the violated condition otherwise.
fn check_comparable(
    p: &SimplePolygon,
    pp: &DegeneratePolygon,
    dp: &[Vec<f64>],
) -> Result<(), MorphError> {
    let n = p.len();
    let keys: Vec<usize> = pp.iota().keys().copied().collect();
    if keys != (0..n).collect::<Vec<_>>() {
        return Err(MorphError::NotComparable(
            "every target vertex needs exactly one marked image point".into(),
        ));
    }
    let np = pp.parts().len();
    if pp.links().len() + 1 != np {
        return Err(MorphError::NotComparable(
            "the parts must form a tree of pinches".into(),
        ));
    }
    let mut degree = vec![0usize; np];
    for l in pp.links() {
        degree[l.part_a] += 1;
        degree[l.part_b] += 1;
    }
    for c in pp.chains() {
        degree[c.root_part] += 1;
    }
    if np > 1 || !pp.chains().is_empty() {
        if degree.iter().any(|&d| d > 2) {
            return Err(MorphError::NotComparable(
                "a part is linked to more than two other components".into(),
            ));
        }
    }
    let scale = diameter(p.vertices());
    let slack = 1e-9 * (1.0 + scale);
    for i in 0..n {
        for j in (i + 1)..n {
            let dc = pp.label_distance(i, j)?;
            if dc > dp[i][j] + slack {
                return Err(MorphError::NotComparable(format!(
                    "the target distances must dominate the marked distances: pair ({i},{j}) has {} < {}",
                    dp[i][j], dc
                )));
            }
        }
    }
    if !pp.same_order(p) {
        return Err(MorphError::NotComparable(
            "the marked points must appear in the target's boundary order".into(),
        ));
    }
    Ok(())
}

/// Deforms the complex `pp` onto the polygon `p` through certified
/// elementary moves, overriding the marking of `pp` with `iota`.
pub fn morph_to(
    p: &SimplePolygon,
    pp: &DegeneratePolygon,
    iota: &BTreeMap<usize, VertexRef>,
) -> Result<MorphPlan, MorphError> {
    let start = DegeneratePolygon::build(
        pp.parts().to_vec(),
        pp.chains().to_vec(),
        pp.links().to_vec(),
        iota.clone(),
        pp.tolerance(),
    )?;
    let mut engine = Engine::targeted(p)?;
    check_comparable(p, &start, &engine.target.as_ref().unwrap().dp)?;
    engine.run(start)
}

/// Flattens every concave vertex of a chain-free complex through quad
/// moves (opening pinches along the way) until one convex part remains.
/// Side lengths are preserved by every move.
pub fn convexify(q: &DegeneratePolygon) -> Result<(SimplePolygon, Vec<MorphStep>), MorphError> {
    if !q.chains().is_empty() {
        return Err(MorphError::OneDimensional);
    }
    let scale = q
        .parts()
        .iter()
        .map(|p| diameter(p.vertices()))
        .fold(0.0, f64::max);
    let mut engine = Engine::targetless(scale);
    engine.run_convexify(q.clone())
}

// ---------------------------------------------------------------------------
// Reverse transport
// ---------------------------------------------------------------------------

/// Nearest point of the complex, with its component.
fn snap_cx(cx: &DegeneratePolygon, p: Point) -> CxPoint {
    if let Some(host) = cx.locate(p) {
        return CxPoint { host, p };
    }
    let mut best = CxPoint {
        host: Host::Part(0),
        p: cx.parts()[0].vertex(0),
    };
    let mut bd = f64::INFINITY;
    for (k, part) in cx.parts().iter().enumerate() {
        let mpts = part.len();
        for i in 0..mpts {
            let (a, b) = part.edge(i);
            let q = seg_nearest_point(a, b, p);
            let d = q.dist(p);
            if d < bd {
                bd = d;
                best = CxPoint {
                    host: Host::Part(k),
                    p: q,
                };
            }
        }
    }
    for (k, ch) in cx.chains().iter().enumerate() {
        for w in ch.points.windows(2) {
            let q = seg_nearest_point(w[0], w[1], p);
            let d = q.dist(p);
            if d < bd {
                bd = d;
                best = CxPoint {
                    host: Host::Chain(k),
                    p: q,
                };
            }
        }
    }
    best
}

/// Distance between two points of a complex, through pinches and chains.
fn cx_dist(cx: &DegeneratePolygon, a: Point, b: Point) -> Result<f64, MorphError> {
    let ca = snap_cx(cx, a);
    let cb = snap_cx(cx, b);
    let (d, _) = cx.cx_distance(ca, cb)?;
    Ok(d)
}

/// Walks from `a` toward `b` along their geodesic by arclength `delta`,
/// staying on the complex.
fn pull_toward(cx: &DegeneratePolygon, a: Point, b: Point, delta: f64) -> Option<Point> {
    let ca = snap_cx(cx, a);
    let cb = snap_cx(cx, b);
    let (total, path) = cx.cx_distance(ca, cb).ok()?;
    if delta >= total {
        return Some(cb.p);
    }
    let mut left = delta;
    for w in path.windows(2) {
        let seg = w[0].dist(w[1]);
        if seg >= left && seg > 0.0 {
            return Some(w[0].lerp(w[1], left / seg));
        }
        left -= seg;
    }
    Some(*path.last()?)
}

/// The point of `cx` minimizing the worst slack of the ball constraints,
/// searched over a grid, the constraint centers, part vertices, the given
/// seeds, and a local refinement.
fn best_feasible_point(
    cx: &DegeneratePolygon,
    constraints: &[(Point, f64)],
    seeds: &[Point],
) -> Result<(Point, f64), MorphError> {
    let eval = |q: Point| -> f64 {
        let mut worst: f64 = 0.0;
        for &(c, r) in constraints {
            match cx_dist(cx, q, c) {
                Ok(d) => worst = worst.max(d - r),
                Err(_) => return f64::INFINITY,
            }
        }
        worst
    };
    let mut cands: Vec<Point> = Vec::new();
    for part in cx.parts() {
        cands.extend_from_slice(part.vertices());
        let (mut lo, mut hi) = (part.vertex(0), part.vertex(0));
        for &v in part.vertices() {
            lo = Point::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Point::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        let steps = 14;
        for i in 0..=steps {
            for j in 0..=steps {
                let q = Point::new(
                    lo.x + (hi.x - lo.x) * i as f64 / steps as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / steps as f64,
                );
                if part.contains(q) {
                    cands.push(q);
                }
            }
        }
    }
    for ch in cx.chains() {
        for w in ch.points.windows(2) {
            for k in 0..=4 {
                cands.push(w[0].lerp(w[1], k as f64 / 4.0));
            }
        }
    }
    for &(c, _) in constraints {
        cands.push(snap_cx(cx, c).p);
    }
    for &s in seeds {
        cands.push(snap_cx(cx, s).p);
    }
    // Anywhere two balls are tight the solution is pinned near their
    // connecting geodesic; the balanced point there and the Euclidean
    // circle intersections catch those corners exactly.
    for i in 0..constraints.len() {
        for j in (i + 1)..constraints.len() {
            let (ci, ri) = constraints[i];
            let (cj, rj) = constraints[j];
            let Ok(d) = cx_dist(cx, ci, cj) else { continue };
            if d <= 1e-12 {
                continue;
            }
            let t = (0.5 * (d + ri - rj)).clamp(0.0, d);
            if let Some(p) = pull_toward(cx, ci, cj, t) {
                cands.push(p);
            }
            for p in circle_points(ci, ri, cj, rj) {
                cands.push(snap_cx(cx, p).p);
            }
        }
    }
    let mut best = cands[0];
    let mut bv = eval(best);
    for &q in &cands[1..] {
        let v = eval(q);
        if v < bv {
            bv = v;
            best = q;
        }
    }
    // Cyclic projection onto the violated balls: geodesic balls of the
    // intrinsic metric are convex, so walking toward a violated center by
    // the excess projects onto that ball, and sweeping the constraints
    // converges to the (nonempty) intersection.
    let mut scale = 0.0f64;
    for part in cx.parts() {
        scale = scale.max(diameter(part.vertices()));
    }
    let settle = 1e-10 * (1.0 + scale);
    let mut x = best;
    for sweep in 0..80 {
        let mut moved = 0.0f64;
        for &(c, r) in constraints {
            let Ok(d) = cx_dist(cx, x, c) else { continue };
            let excess = d - r;
            if excess > 0.0 {
                if let Some(nx) = pull_toward(cx, x, c, excess) {
                    x = nx;
                    moved = moved.max(excess);
                }
            }
        }
        let v = eval(x);
        if v < bv {
            bv = v;
            best = x;
        }
        if moved <= settle || bv <= settle {
            break;
        }
        if sweep == 40 && bv > 0.0 {
            // Restart the sweep from the best point seen so far.
            x = best;
        }
    }
    // Local refinement around the best point.
    let mut radius = (scale / 40.0).max(1e-9);
    for _ in 0..12 {
        let mut improved = false;
        for i in -3i32..=3 {
            for j in -3i32..=3 {
                let q0 = Point::new(
                    best.x + radius * i as f64 / 3.0,
                    best.y + radius * j as f64 / 3.0,
                );
                let q = snap_cx(cx, q0).p;
                let v = eval(q);
                if v < bv {
                    bv = v;
                    best = q;
                    improved = true;
                }
            }
        }
        if !improved {
            radius *= 0.4;
        }
    }
    Ok((best, bv))
}

/// Even-odd membership test for a closed loop of points, counting the
/// boundary as inside (within `tol` of an edge).
fn point_in_loop(q: Point, loop_pts: &[Point], tol: f64) -> bool {
    let n = loop_pts.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (loop_pts[i], loop_pts[(i + 1) % n]);
        if seg_point_dist(a, b, q) <= tol {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (loop_pts[i], loop_pts[(i + 1) % n]);
        if (a.y > q.y) != (b.y > q.y) {
            let t = (q.y - a.y) / (b.y - a.y);
            if q.x < a.x + t * (b.x - a.x) {
                inside = !inside;
            }
        }
    }
    inside
}

/// Pulls one point backwards through a triangle re-solve in closed form.
fn type_one_back(
    q: Point,
    apex: Point,
    u_old: Point,
    v_old: Point,
    v_new: Point,
    flank: &Rigid,
    flank_loop: &[Point],
) -> Point {
    let r = q.dist(apex);
    let scale2 = 1.0 + u_old.dist2(apex) + v_new.dist2(apex);
    if r <= 1e-12 * scale2.sqrt() {
        return q;
    }
    if point_in_triangle(q, u_old, v_new, apex, 1e-9 * scale2) {
        let th_new = wedge_angle(apex, u_old, v_new);
        let th_old = wedge_angle(apex, u_old, v_old);
        if th_new <= 1e-12 {
            return closest_point_in_triangle(q, u_old, v_old, apex, 1e-9 * scale2);
        }
        let phi = wedge_angle(apex, u_old, q);
        let phi_old = phi * th_old / th_new;
        let sg = {
            let s_new = (u_old - apex).cross(v_new - apex);
            let s_old = (u_old - apex).cross(v_old - apex);
            if s_new.abs() > 1e-12 * scale2 {
                s_new.signum()
            } else if s_old.abs() > 1e-12 * scale2 {
                s_old.signum()
            } else {
                1.0
            }
        };
        let base = (u_old - apex).angle();
        let dir = Point::new((base + sg * phi_old).cos(), (base + sg * phi_old).sin());
        let q_old = apex + dir * r;
        return closest_point_in_triangle(q_old, u_old, v_old, apex, 1e-9 * scale2);
    }
    // The region behind the moved chord rotated rigidly about the apex;
    // undo that rotation for points inside it and leave the rest alone.
    if point_in_loop(q, flank_loop, 1e-9 * scale2) {
        return flank.inverse().apply(q);
    }
    q
}

fn back_step(rec: &StepRecord, qs: &[Point], feas_slack: f64) -> Result<Vec<Point>, MorphError> {
    match &rec.back {
        BackMap::Identity => Ok(qs.to_vec()),
        BackMap::TypeOne {
            apex,
            u_old,
            v_old,
            v_new,
            flank,
            flank_loop,
        } => Ok(qs
            .iter()
            .map(|&q| {
                let b = type_one_back(q, *apex, *u_old, *v_old, *v_new, flank, flank_loop);
                snap_cx(&rec.before, b).p
            })
            .collect()),
        BackMap::Feasibility => {
            let labels = &rec.certificate.labels;
            let mut out: Vec<Point> = Vec::with_capacity(qs.len());
            for &q in qs.iter() {
                let mut constraints: Vec<(Point, f64)> = Vec::new();
                let mut seeds: Vec<Point> = vec![q];
                let mut pin: Option<(f64, Point)> = None;
                for &l in labels {
                    let (_, after_pos) = rec
                        .after
                        .label_point(l)
                        .ok_or_else(|| MorphError::Internal(format!("label {l} missing")))?;
                    let (_, before_pos) = rec
                        .before
                        .label_point(l)
                        .ok_or_else(|| MorphError::Internal(format!("label {l} missing")))?;
                    let r = cx_dist(&rec.after, q, after_pos)?;
                    if pin.map_or(true, |(pr, _)| r < pr) {
                        pin = Some((r, before_pos));
                    }
                    constraints.push((before_pos, r));
                    seeds.push(before_pos);
                }
                // A point sitting on a marked point rides it exactly: this
                // keeps repeated solves from accumulating drift on probes
                // that coincide with a label.
                if let Some((pr, pos)) = pin {
                    if pr <= feas_slack {
                        out.push(pos);
                        continue;
                    }
                }
                for (j, &prev) in out.iter().enumerate() {
                    let r = cx_dist(&rec.after, q, qs[j])?;
                    constraints.push((prev, r));
                    seeds.push(prev);
                }
                let (best, violation) = best_feasible_point(&rec.before, &constraints, &seeds)?;
                if violation > feas_slack {
                    return Err(MorphError::FeasibilityFailed {
                        violation,
                        allowed: feas_slack,
                    });
                }
                out.push(best);
            }
            Ok(out)
        }
    }
}

/// Transports points of the target polygon backwards through the plan into
/// the starting complex. Points are handled jointly: each transported
/// point also constrains the next ones, so distances between the returned
/// points do not exceed the corresponding target distances.
pub fn transport_points(plan: &MorphPlan, ps: &[Point]) -> Result<Vec<Point>, MorphError> {
    let scale = diameter(plan.target.vertices());
    let feas_slack = 1e-6 * (1.0 + scale);
    let mut qs: Vec<Point> = match &plan.split {
        Some(sr) => {
            let mut first_idx = Vec::new();
            let mut second_idx = Vec::new();
            for (k, &p) in ps.iter().enumerate() {
                if sr.target_first.contains(p) {
                    first_idx.push(k);
                } else if sr.target_second.contains(p) {
                    second_idx.push(k);
                } else {
                    return Err(MorphError::BadSupport(format!(
                        "point ({}, {}) lies outside the target",
                        p.x, p.y
                    )));
                }
            }
            let ps1: Vec<Point> = first_idx.iter().map(|&k| ps[k]).collect();
            let ps2: Vec<Point> = second_idx.iter().map(|&k| ps[k]).collect();
            let q1 = transport_points(&sr.first, &ps1)?;
            let q2 = transport_points(&sr.second, &ps2)?;
            let mut out = vec![Point::ORIGIN; ps.len()];
            for (pos, &k) in first_idx.iter().enumerate() {
                out[k] = q1[pos];
            }
            for (pos, &k) in second_idx.iter().enumerate() {
                out[k] = q2[pos];
            }
            out
        }
        None => {
            if ps.iter().any(|&p| !plan.target.contains(p)) {
                return Err(MorphError::BadSupport(
                    "a point lies outside the target".into(),
                ));
            }
            // Align the target frame onto the final state through the
            // farthest-apart label pair.
            let n = plan.target.len();
            let fin = plan.final_positions()?;
            let (mut bi, mut bj, mut bd) = (0, 1, -1.0);
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = plan.target.vertex(i).dist(plan.target.vertex(j));
                    if d > bd {
                        bd = d;
                        bi = i;
                        bj = j;
                    }
                }
            }
            let rho = Rigid::matching(
                (plan.target.vertex(bi), plan.target.vertex(bj)),
                (fin[bi], fin[bj]),
            );
            ps.iter()
                .map(|&p| snap_cx(plan.final_state(), rho.apply(p)).p)
                .collect()
        }
    };
    for rec in plan.records.iter().rev() {
        qs = back_step(rec, &qs, feas_slack)?;
    }
    Ok(qs)
}

/// Transports one point of the target polygon backwards through the plan.
/// The returned point is no farther from each marked point of the initial
/// complex than the input is from the matching target vertex.
pub fn transport_point(plan: &MorphPlan, p_final: Point) -> Result<Point, MorphError> {
    Ok(transport_points(plan, &[p_final])?[0])
}
