//! Degenerate polygons: tree-like complexes of planar parts and 1-D chains.
//!
//! A [`DegeneratePolygon`] is a connected, simply connected complex made of
//! simple polygons ("parts") glued at single pinch vertices, with polyline
//! "chains" sticking out of part vertices. It carries an intrinsic metric
//! (part-wise shortest paths concatenated through the junction vertices) and
//! a labeling `iota` from external vertex labels to internal vertices. Two
//! distinct labeled vertices may lie at distance zero — a pinch carries one
//! copy per part, and a chain root is a separate vertex from the part vertex
//! it touches.

use crate::geom::{orient, seg_point_dist, Point};
use crate::poly::{GeomError, SimplePolygon};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ComplexError {
    #[error("complex needs at least one planar part")]
    NoPlanarPart,
    #[error("part {0} is invalid: {1}")]
    BadPart(usize, GeomError),
    #[error("link {0} does not join coincident vertices")]
    LinkMismatch(usize),
    #[error("link {0} references a missing part or vertex")]
    LinkOutOfRange(usize),
    #[error("part link graph is not a tree (must be connected, no cycles)")]
    NotATree,
    #[error("part {0} is linked to more than two other parts")]
    TooManyLinks(usize),
    #[error("chain {0} is malformed: {1}")]
    BadChain(usize, String),
    #[error("label {0} references a missing vertex")]
    LabelOutOfRange(usize),
    #[error("chain {0} ends at an unlabeled tip")]
    UnlabeledTip(usize),
    #[error("part {part} vertex {vertex} is strictly convex but neither labeled, shared, nor a chain root")]
    ConvexUnlabeledVertex { part: usize, vertex: usize },
    #[error("point ({0}, {1}) is not on the complex")]
    PointNotOnComplex(f64, f64),
    #[error("walk cannot be normalized: {0}")]
    BadWalk(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// An internal vertex of a degenerate polygon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VertexRef {
    Part { part: usize, vertex: usize },
    ChainPt { chain: usize, point: usize },
}

/// A 1-D polyline component attached to a part at its first point.
/// `points[0]` coincides with the root part vertex but is a distinct
/// internal vertex (a vertex pair at distance zero).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Chain {
    pub points: Vec<Point>,
    pub root_part: usize,
    pub root_vertex: usize,
}

/// A pinch: one vertex of one part identified with one vertex of another.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub part_a: usize,
    pub vertex_a: usize,
    pub part_b: usize,
    pub vertex_b: usize,
}

impl Link {
    fn touches(&self, part: usize, vertex: usize) -> bool {
        (self.part_a == part && self.vertex_a == vertex)
            || (self.part_b == part && self.vertex_b == vertex)
    }

    fn other_side(&self, part: usize, vertex: usize) -> (usize, usize) {
        if self.part_a == part && self.vertex_a == vertex {
            (self.part_b, self.vertex_b)
        } else {
            (self.part_a, self.vertex_a)
        }
    }
}

/// Which component of the complex a point lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Host {
    Part(usize),
    Chain(usize),
}

/// A point of the complex, tagged with its component.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CxPoint {
    pub host: Host,
    pub p: Point,
}

/// One slot of a boundary walk: the internal vertex met and its coordinates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WalkSlot {
    pub vref: VertexRef,
    pub pt: Point,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegeneratePolygon {
    parts: Vec<SimplePolygon>,
    chains: Vec<Chain>,
    links: Vec<Link>,
    iota: BTreeMap<usize, VertexRef>,
    tolerance: f64,
}

impl DegeneratePolygon {
    /// Validates a complex:
    /// - at least one part, all parts valid simple polygons;
    /// - links join coincident vertices and form a tree over the parts,
    ///   with at most two links per part;
    /// - chains have at least two points, no zero-length segments, and root
    ///   at a coincident part vertex; chain tips carry a label;
    /// - a part vertex that is strictly convex must be labeled, shared
    ///   through a link, or the root of a chain.
    pub fn build(
        parts: Vec<SimplePolygon>,
        chains: Vec<Chain>,
        links: Vec<Link>,
        iota: BTreeMap<usize, VertexRef>,
        tolerance: f64,
    ) -> Result<DegeneratePolygon, ComplexError> {
        if parts.is_empty() {
            return Err(ComplexError::NoPlanarPart);
        }
        for (li, l) in links.iter().enumerate() {
            if l.part_a >= parts.len()
                || l.part_b >= parts.len()
                || l.vertex_a >= parts[l.part_a].len()
                || l.vertex_b >= parts[l.part_b].len()
                || l.part_a == l.part_b
            {
                return Err(ComplexError::LinkOutOfRange(li));
            }
            let pa = parts[l.part_a].vertex(l.vertex_a);
            let pb = parts[l.part_b].vertex(l.vertex_b);
            if pa.dist(pb) > tolerance {
                return Err(ComplexError::LinkMismatch(li));
            }
        }
        // tree over parts: connected with exactly parts-1 links
        if links.len() + 1 != parts.len() {
            return Err(ComplexError::NotATree);
        }
        let mut adj = vec![Vec::new(); parts.len()];
        for l in &links {
            adj[l.part_a].push(l.part_b);
            adj[l.part_b].push(l.part_a);
        }
        for (p, nbrs) in adj.iter().enumerate() {
            if nbrs.len() > 2 {
                return Err(ComplexError::TooManyLinks(p));
            }
        }
        let mut seen = vec![false; parts.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(ComplexError::NotATree);
        }
        for (ci, c) in chains.iter().enumerate() {
            if c.points.len() < 2 {
                return Err(ComplexError::BadChain(ci, "fewer than 2 points".into()));
            }
            for w in c.points.windows(2) {
                if w[0].dist(w[1]) <= tolerance {
                    return Err(ComplexError::BadChain(ci, "zero-length segment".into()));
                }
            }
            if c.root_part >= parts.len() || c.root_vertex >= parts[c.root_part].len() {
                return Err(ComplexError::BadChain(ci, "root out of range".into()));
            }
            let rv = parts[c.root_part].vertex(c.root_vertex);
            if rv.dist(c.points[0]) > tolerance {
                return Err(ComplexError::BadChain(
                    ci,
                    "first point does not coincide with the root vertex".into(),
                ));
            }
        }
        for (&lab, &vref) in &iota {
            let ok = match vref {
                VertexRef::Part { part, vertex } => {
                    part < parts.len() && vertex < parts[part].len()
                }
                VertexRef::ChainPt { chain, point } => {
                    chain < chains.len() && point < chains[chain].points.len()
                }
            };
            if !ok {
                return Err(ComplexError::LabelOutOfRange(lab));
            }
        }
        for (ci, c) in chains.iter().enumerate() {
            let tip = VertexRef::ChainPt {
                chain: ci,
                point: c.points.len() - 1,
            };
            if !iota.values().any(|&v| v == tip) {
                return Err(ComplexError::UnlabeledTip(ci));
            }
        }
        // angle condition: strictly convex part vertices need a reason
        for (pi, part) in parts.iter().enumerate() {
            let n = part.len();
            for vi in 0..n {
                let a = part.vertex((vi + n - 1) % n);
                let b = part.vertex(vi);
                let c = part.vertex((vi + 1) % n);
                let strictly_convex = orient(a, b, c) > tolerance * (a.dist(b) + b.dist(c));
                if !strictly_convex {
                    continue;
                }
                let vref = VertexRef::Part {
                    part: pi,
                    vertex: vi,
                };
                let labeled = iota.values().any(|&v| v == vref);
                let shared = links.iter().any(|l| l.touches(pi, vi));
                let root = chains
                    .iter()
                    .any(|c| c.root_part == pi && c.root_vertex == vi);
                if !(labeled || shared || root) {
                    return Err(ComplexError::ConvexUnlabeledVertex {
                        part: pi,
                        vertex: vi,
                    });
                }
            }
        }
        Ok(DegeneratePolygon {
            parts,
            chains,
            links,
            iota,
            tolerance,
        })
    }

    pub fn parts(&self) -> &[SimplePolygon] {
        &self.parts
    }

    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn iota(&self) -> &BTreeMap<usize, VertexRef> {
        &self.iota
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// The sole part, when the complex has no chains and no pinches.
    pub fn single_part(&self) -> Option<&SimplePolygon> {
        if self.parts.len() == 1 && self.chains.is_empty() {
            Some(&self.parts[0])
        } else {
            None
        }
    }

    pub fn vertex_point(&self, vref: VertexRef) -> Point {
        match vref {
            VertexRef::Part { part, vertex } => self.parts[part].vertex(vertex),
            VertexRef::ChainPt { chain, point } => self.chains[chain].points[point],
        }
    }

    pub fn label_point(&self, label: usize) -> Option<(VertexRef, Point)> {
        let &vref = self.iota.get(&label)?;
        Some((vref, self.vertex_point(vref)))
    }

    fn host_of(&self, vref: VertexRef) -> Host {
        match vref {
            VertexRef::Part { part, .. } => Host::Part(part),
            VertexRef::ChainPt { chain, .. } => Host::Chain(chain),
        }
    }

    /// First component whose closed region contains `p`.
    pub fn locate(&self, p: Point) -> Option<Host> {
        for (i, part) in self.parts.iter().enumerate() {
            if part.contains(p) {
                return Some(Host::Part(i));
            }
        }
        for i in 0..self.chains.len() {
            if self.chain_locate(i, p).is_some() {
                return Some(Host::Chain(i));
            }
        }
        None
    }

    fn chain_locate(&self, chain: usize, p: Point) -> Option<f64> {
        let pts = &self.chains[chain].points;
        let mut arc = 0.0;
        for w in pts.windows(2) {
            if seg_point_dist(w[0], w[1], p) <= self.tolerance {
                return Some(arc + w[0].dist(p));
            }
            arc += w[0].dist(w[1]);
        }
        None
    }

    fn chain_subpath(&self, chain: usize, arc0: f64, arc1: f64) -> (f64, Vec<Point>) {
        let pts = &self.chains[chain].points;
        let (lo, hi) = if arc0 <= arc1 {
            (arc0, arc1)
        } else {
            (arc1, arc0)
        };
        // chain vertices strictly between the two arc positions
        let mut path = vec![self.chain_point_at(chain, lo)];
        let mut acc = 0.0;
        for (i, w) in pts.windows(2).enumerate() {
            acc += w[0].dist(w[1]);
            if i + 2 <= pts.len() - 1 && acc > lo + self.tolerance && acc < hi - self.tolerance {
                path.push(pts[i + 1]);
            }
        }
        path.push(self.chain_point_at(chain, hi));
        if arc1 < arc0 {
            path.reverse();
        }
        (hi - lo, path)
    }

    fn chain_point_at(&self, chain: usize, arc: f64) -> Point {
        let pts = &self.chains[chain].points;
        let mut acc = 0.0;
        for w in pts.windows(2) {
            let seg = w[0].dist(w[1]);
            if arc <= acc + seg {
                let t = if seg > 0.0 { (arc - acc) / seg } else { 0.0 };
                return w[0].lerp(w[1], t.clamp(0.0, 1.0));
            }
            acc += seg;
        }
        *pts.last().unwrap()
    }

    fn dist_within(&self, host: Host, a: Point, b: Point) -> Result<(f64, Vec<Point>), ComplexError> {
        match host {
            Host::Part(i) => Ok(self.parts[i].intrinsic_distance(a, b)?),
            Host::Chain(i) => {
                let arc_a = self
                    .chain_locate(i, a)
                    .ok_or(ComplexError::PointNotOnComplex(a.x, a.y))?;
                let arc_b = self
                    .chain_locate(i, b)
                    .ok_or(ComplexError::PointNotOnComplex(b.x, b.y))?;
                Ok(self.chain_subpath(i, arc_a, arc_b))
            }
        }
    }

    /// Junction coordinates between two directly attached components.
    fn junction(&self, u: usize, v: usize) -> Option<Point> {
        let np = self.parts.len();
        for l in &self.links {
            if (l.part_a == u && l.part_b == v) || (l.part_a == v && l.part_b == u) {
                return Some(self.parts[l.part_a].vertex(l.vertex_a));
            }
        }
        for (ci, c) in self.chains.iter().enumerate() {
            let cn = np + ci;
            if (cn == u && c.root_part == v) || (cn == v && c.root_part == u) {
                return Some(c.points[0]);
            }
        }
        None
    }

    fn component_index(&self, host: Host) -> usize {
        match host {
            Host::Part(i) => i,
            Host::Chain(i) => self.parts.len() + i,
        }
    }

    fn component_host(&self, idx: usize) -> Host {
        if idx < self.parts.len() {
            Host::Part(idx)
        } else {
            Host::Chain(idx - self.parts.len())
        }
    }

    /// Intrinsic distance between two tagged points of the complex, with the
    /// realizing path. Paths between components pass through the junctions
    /// on the unique component-tree path.
    pub fn cx_distance(&self, a: CxPoint, b: CxPoint) -> Result<(f64, Vec<Point>), ComplexError> {
        if a.host == b.host {
            return self.dist_within(a.host, a.p, b.p);
        }
        // BFS on the component tree
        let n = self.parts.len() + self.chains.len();
        let src = self.component_index(a.host);
        let dst = self.component_index(b.host);
        let mut prev = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        seen[src] = true;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            if u == dst {
                break;
            }
            for v in 0..n {
                if !seen[v] && self.junction(u, v).is_some() {
                    seen[v] = true;
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if !seen[dst] {
            return Err(ComplexError::NotATree);
        }
        let mut comp_path = vec![dst];
        let mut cur = dst;
        while prev[cur] != usize::MAX {
            cur = prev[cur];
            comp_path.push(cur);
        }
        comp_path.reverse();
        // accumulate through junctions
        let mut total = 0.0;
        let mut path: Vec<Point> = Vec::new();
        let mut at = a.p;
        for w in comp_path.windows(2) {
            let j = self.junction(w[0], w[1]).unwrap();
            let (d, seg) = self.dist_within(self.component_host(w[0]), at, j)?;
            total += d;
            append_path(&mut path, &seg);
            at = j;
        }
        let (d, seg) = self.dist_within(self.component_host(*comp_path.last().unwrap()), at, b.p)?;
        total += d;
        append_path(&mut path, &seg);
        Ok((total, path))
    }

    /// Intrinsic distance between two plain points, located on the complex
    /// by component membership (first containing component wins).
    pub fn intrinsic_distance(&self, a: Point, b: Point) -> Result<(f64, Vec<Point>), ComplexError> {
        let ha = self
            .locate(a)
            .ok_or(ComplexError::PointNotOnComplex(a.x, a.y))?;
        let hb = self
            .locate(b)
            .ok_or(ComplexError::PointNotOnComplex(b.x, b.y))?;
        self.cx_distance(CxPoint { host: ha, p: a }, CxPoint { host: hb, p: b })
    }

    /// Intrinsic distance between two labeled vertices.
    pub fn label_distance(&self, l0: usize, l1: usize) -> Result<f64, ComplexError> {
        let (r0, p0) = self
            .label_point(l0)
            .ok_or(ComplexError::LabelOutOfRange(l0))?;
        let (r1, p1) = self
            .label_point(l1)
            .ok_or(ComplexError::LabelOutOfRange(l1))?;
        let a = CxPoint {
            host: self.host_of(r0),
            p: p0,
        };
        let b = CxPoint {
            host: self.host_of(r1),
            p: p1,
        };
        Ok(self.cx_distance(a, b)?.0)
    }

    /// Pairwise intrinsic distances between labels `0..n`.
    pub fn label_matrix(&self, n: usize) -> Result<Vec<Vec<f64>>, ComplexError> {
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.label_distance(i, j)?;
                m[i][j] = d;
                m[j][i] = d;
            }
        }
        Ok(m)
    }

    fn attachments_at(&self, part: usize, vertex: usize) -> Vec<Attachment> {
        let mut out = Vec::new();
        for (li, l) in self.links.iter().enumerate() {
            if l.touches(part, vertex) {
                out.push(Attachment::Lnk(li));
            }
        }
        for (ci, c) in self.chains.iter().enumerate() {
            if c.root_part == part && c.root_vertex == vertex {
                out.push(Attachment::Chn(ci));
            }
        }
        out
    }

    /// The boundary of the complex as one closed walk, counterclockwise
    /// around each part. Pinch vertices are met once per passage (both the
    /// copy being left and the copy being entered are emitted), and chains
    /// are traversed out and back.
    pub fn boundary_walk(&self) -> Vec<WalkSlot> {
        let mut out = Vec::new();
        let mut used_links = vec![false; self.links.len()];
        self.emit_component(0, 0, None, &mut out, &mut used_links);
        out
    }

    fn emit_component(
        &self,
        part: usize,
        start_vertex: usize,
        entry: Option<usize>,
        out: &mut Vec<WalkSlot>,
        used_links: &mut Vec<bool>,
    ) {
        let n = self.parts[part].len();
        for k in 0..n {
            let v = (start_vertex + k) % n;
            let skip = if k == 0 { entry } else { None };
            self.emit_junction(part, v, skip, out, used_links);
        }
    }

    fn emit_junction(
        &self,
        part: usize,
        vertex: usize,
        entry: Option<usize>,
        out: &mut Vec<WalkSlot>,
        used_links: &mut Vec<bool>,
    ) {
        let here = WalkSlot {
            vref: VertexRef::Part { part, vertex },
            pt: self.parts[part].vertex(vertex),
        };
        out.push(here);
        for att in self.attachments_at(part, vertex) {
            match att {
                Attachment::Lnk(li) => {
                    if Some(li) == entry || used_links[li] {
                        continue;
                    }
                    used_links[li] = true;
                    let (q, j) = self.links[li].other_side(part, vertex);
                    self.emit_component(q, j, Some(li), out, used_links);
                }
                Attachment::Chn(ci) => {
                    let pts = &self.chains[ci].points;
                    let m = pts.len();
                    for k in 0..m {
                        out.push(WalkSlot {
                            vref: VertexRef::ChainPt {
                                chain: ci,
                                point: k,
                            },
                            pt: pts[k],
                        });
                    }
                    for k in (0..m - 1).rev() {
                        out.push(WalkSlot {
                            vref: VertexRef::ChainPt {
                                chain: ci,
                                point: k,
                            },
                            pt: pts[k],
                        });
                    }
                }
            }
            out.push(here);
        }
    }

    /// Does the boundary walk meet the labels `0..p.len()` in the cyclic
    /// order of `p`'s vertices? Labels at coincident vertices (walk slots
    /// sharing a geometric point) may be read in any relative order.
    pub fn same_order(&self, p: &SimplePolygon) -> bool {
        self.order_witness(p).is_some()
    }

    /// Walk-slot indices realizing the cyclic order, label by label.
    pub fn order_witness(&self, p: &SimplePolygon) -> Option<Vec<usize>> {
        let n = p.len();
        if n == 0 {
            return Some(Vec::new());
        }
        let walk = self.boundary_walk();
        let m = walk.len();
        let slot_labels: Vec<Vec<usize>> = walk
            .iter()
            .map(|s| {
                self.iota
                    .iter()
                    .filter(|(_, &v)| v == s.vref)
                    .map(|(&l, _)| l)
                    .collect()
            })
            .collect();
        let anchors: Vec<usize> = (0..m).filter(|&i| slot_labels[i].contains(&0)).collect();
        for a in anchors {
            let mut witness = vec![a];
            let mut pos = a;
            let mut ok = true;
            'labels: for lab in 1..n {
                let mut t = pos;
                while t <= a + m {
                    if slot_labels[t % m].contains(&lab) {
                        witness.push(t % m);
                        pos = t;
                        continue 'labels;
                    }
                    t += 1;
                }
                ok = false;
                break;
            }
            if ok {
                return Some(witness);
            }
        }
        None
    }

    /// Normalizes a closed walk (cyclic point sequence with labels per slot)
    /// into a complex. Doubled out-and-back runs become chains, repeated
    /// points become pinches between parts, and zero-area lobes collapse to
    /// 1-D material. The walk must wind counterclockwise around each lobe.
    pub fn from_walk(
        points: Vec<Point>,
        labels: Vec<Vec<usize>>,
        tolerance: f64,
    ) -> Result<DegeneratePolygon, ComplexError> {
        assert_eq!(points.len(), labels.len());
        let mut nz = Normalizer::new(points, labels, tolerance);
        nz.merge_zero_edges();
        nz.subdivide();
        nz.merge_zero_edges();
        nz.collapse_spikes();
        nz.extract_lobes()?;
        nz.finish()
    }
}

impl From<SimplePolygon> for DegeneratePolygon {
    fn from(p: SimplePolygon) -> DegeneratePolygon {
        let tolerance = p.tolerance();
        let iota = (0..p.len())
            .map(|i| (i, VertexRef::Part { part: 0, vertex: i }))
            .collect();
        DegeneratePolygon {
            parts: vec![p],
            chains: Vec::new(),
            links: Vec::new(),
            iota,
            tolerance,
        }
    }
}

enum Attachment {
    Lnk(usize),
    Chn(usize),
}

fn append_path(path: &mut Vec<Point>, seg: &[Point]) {
    for &p in seg {
        if path.last().map_or(true, |&q| q.dist(p) > 1e-12) {
            path.push(p);
        }
    }
}

/// Working state for [`DegeneratePolygon::from_walk`].
struct Normalizer {
    coords: Vec<Point>,
    labels: Vec<Vec<usize>>,
    redirect: Vec<usize>,
    walk: Vec<usize>,
    segs: Vec<Seg>,
    parts: Vec<Vec<Point>>,
    part_slots: Vec<Vec<usize>>,
    pending_links: Vec<((usize, usize), usize)>,
    final_ref: Vec<Option<VertexRef>>,
    tol: f64,
}

struct Seg {
    root_slot: usize,
    tip_slot: usize,
}

impl Normalizer {
    fn new(points: Vec<Point>, labels: Vec<Vec<usize>>, tol: f64) -> Normalizer {
        let n = points.len();
        Normalizer {
            coords: points,
            labels,
            redirect: (0..n).collect(),
            walk: (0..n).collect(),
            segs: Vec::new(),
            parts: Vec::new(),
            part_slots: Vec::new(),
            pending_links: Vec::new(),
            final_ref: vec![None; n],
            tol,
        }
    }

    fn find(&self, mut s: usize) -> usize {
        while self.redirect[s] != s {
            s = self.redirect[s];
        }
        s
    }

    fn new_slot(&mut self, p: Point) -> usize {
        self.coords.push(p);
        self.labels.push(Vec::new());
        let id = self.redirect.len();
        self.redirect.push(id);
        self.final_ref.push(None);
        id
    }

    fn merge_zero_edges(&mut self) {
        loop {
            let m = self.walk.len();
            if m < 2 {
                return;
            }
            let mut hit = None;
            for i in 0..m {
                let a = self.walk[i];
                let b = self.walk[(i + 1) % m];
                if self.coords[a].dist(self.coords[b]) <= self.tol {
                    hit = Some(i);
                    break;
                }
            }
            match hit {
                Some(i) => {
                    let m = self.walk.len();
                    let keep = self.walk[i];
                    let drop = self.walk[(i + 1) % m];
                    self.redirect[drop] = keep;
                    self.walk.remove((i + 1) % m);
                }
                None => return,
            }
        }
    }

    fn subdivide(&mut self) {
        let unique: Vec<Point> = {
            let mut u: Vec<Point> = Vec::new();
            for &s in &self.walk {
                let p = self.coords[s];
                if !u.iter().any(|&q| q.dist(p) <= self.tol) {
                    u.push(p);
                }
            }
            u
        };
        let m = self.walk.len();
        let mut new_walk = Vec::new();
        for i in 0..m {
            let a_slot = self.walk[i];
            let a = self.coords[a_slot];
            let b = self.coords[self.walk[(i + 1) % m]];
            new_walk.push(a_slot);
            let len = a.dist(b);
            if len <= self.tol {
                continue;
            }
            let mut inner: Vec<(f64, Point)> = unique
                .iter()
                .filter(|&&q| {
                    q.dist(a) > self.tol
                        && q.dist(b) > self.tol
                        && seg_point_dist(a, b, q) <= self.tol
                })
                .map(|&q| (crate::geom::line_param(a, b, q), q))
                .collect();
            inner.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            for (_, q) in inner {
                let s = self.new_slot(q);
                new_walk.push(s);
            }
        }
        self.walk = new_walk;
    }

    fn collapse_spikes(&mut self) {
        loop {
            let m = self.walk.len();
            if m < 3 {
                if m == 2 {
                    // out-and-back pair: one last chain segment
                    let root = self.walk[0];
                    let tip = self.walk[1];
                    self.segs.push(Seg {
                        root_slot: root,
                        tip_slot: tip,
                    });
                    self.walk.pop();
                }
                return;
            }
            let mut hit = None;
            for i in 0..m {
                let prev = self.walk[(i + m - 1) % m];
                let next = self.walk[(i + 1) % m];
                if self.coords[prev].dist(self.coords[next]) <= self.tol {
                    hit = Some(i);
                    break;
                }
            }
            let Some(i) = hit else { return };
            let prev_idx = (i + m - 1) % m;
            let next_idx = (i + 1) % m;
            let root = self.walk[prev_idx];
            let tip = self.walk[i];
            let dup = self.walk[next_idx];
            self.segs.push(Seg {
                root_slot: root,
                tip_slot: tip,
            });
            self.redirect[dup] = root;
            // remove positions i and next_idx (careful with ordering)
            let mut kill = [i, next_idx];
            kill.sort_unstable();
            self.walk.remove(kill[1]);
            self.walk.remove(kill[0]);
        }
    }

    fn extract_lobes(&mut self) -> Result<(), ComplexError> {
        loop {
            let m = self.walk.len();
            if m == 0 {
                return Err(ComplexError::NoPlanarPart);
            }
            // find the tightest pair of equal-coordinate visits
            let mut best: Option<(usize, usize)> = None;
            for i in 0..m {
                for j in (i + 1)..m {
                    if self.coords[self.walk[i]].dist(self.coords[self.walk[j]]) <= self.tol {
                        let gap = j - i;
                        if best.map_or(true, |(bi, bj)| gap < bj - bi) {
                            best = Some((i, j));
                        }
                    }
                }
            }
            let Some((s1, s2)) = best else {
                // simple cycle: the root part
                let slots: Vec<usize> = self.walk.clone();
                self.push_part(slots)?;
                self.walk.clear();
                return Ok(());
            };
            // defensive: no straddling junction in the lobe
            for i in (s1 + 1)..s2 {
                let p = self.coords[self.walk[i]];
                for j in 0..m {
                    if (j < s1 || j > s2)
                        && self.coords[self.walk[j]].dist(p) <= self.tol
                    {
                        return Err(ComplexError::BadWalk(
                            "junction visits are not properly nested".into(),
                        ));
                    }
                }
            }
            let lobe: Vec<usize> = self.walk[s1..s2].to_vec();
            let part_idx = self.push_part(lobe)?;
            let survivor = self.walk[s2];
            self.pending_links.push(((part_idx, 0), survivor));
            self.walk.drain(s1..s2);
        }
    }

    fn push_part(&mut self, slots: Vec<usize>) -> Result<usize, ComplexError> {
        let pts: Vec<Point> = slots.iter().map(|&s| self.coords[s]).collect();
        let mut area2 = 0.0;
        for i in 0..pts.len() {
            area2 += pts[i].cross(pts[(i + 1) % pts.len()]);
        }
        if area2 < 0.0 {
            return Err(ComplexError::BadWalk(
                "clockwise lobe in a counterclockwise walk".into(),
            ));
        }
        let idx = self.parts.len();
        for (k, &s) in slots.iter().enumerate() {
            self.final_ref[s] = Some(VertexRef::Part {
                part: idx,
                vertex: k,
            });
        }
        self.parts.push(pts);
        self.part_slots.push(slots);
        Ok(idx)
    }

    fn finish(mut self) -> Result<DegeneratePolygon, ComplexError> {
        // assemble chains from recorded out-and-back segments
        let mut chains: Vec<Chain> = Vec::new();
        let mut used = vec![false; self.segs.len()];
        // a segment continues from a tip slot; map tip -> seg index
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.segs.iter().enumerate() {
            by_root.entry(self.find(s.root_slot)).or_default().push(i);
        }
        let tip_canon: Vec<usize> = self.segs.iter().map(|s| self.find(s.tip_slot)).collect();
        for i in 0..self.segs.len() {
            let root = self.find(self.segs[i].root_slot);
            let rooted_at_part = self.final_ref[root]
                .map_or(false, |r| matches!(r, VertexRef::Part { .. }));
            if !rooted_at_part {
                continue;
            }
            // walk the continuation
            let Some(VertexRef::Part { part, vertex }) = self.final_ref[root] else {
                unreachable!()
            };
            let mut pts = vec![self.coords[root]];
            let mut slot_of_point = vec![root];
            let mut cur = i;
            loop {
                used[cur] = true;
                let tip = tip_canon[cur];
                pts.push(self.coords[tip]);
                slot_of_point.push(tip);
                match by_root.get(&tip).map(|v| v.as_slice()) {
                    None | Some([]) => break,
                    Some([next]) => cur = *next,
                    Some(_) => {
                        return Err(ComplexError::BadWalk(
                            "branching 1-D material off a chain point".into(),
                        ))
                    }
                }
            }
            let chain_idx = chains.len();
            for (k, &s) in slot_of_point.iter().enumerate() {
                // the root slot keeps its part ref; chain points get chain refs
                if k > 0 {
                    self.final_ref[s] = Some(VertexRef::ChainPt {
                        chain: chain_idx,
                        point: k,
                    });
                }
            }
            chains.push(Chain {
                points: pts,
                root_part: part,
                root_vertex: vertex,
            });
        }
        if used.iter().any(|&u| !u) {
            return Err(ComplexError::BadWalk(
                "1-D material not attached to any planar part".into(),
            ));
        }
        // resolve pinch links
        let mut links = Vec::new();
        for &((pa, va), slot) in &self.pending_links {
            let canon = self.find(slot);
            match self.final_ref[canon] {
                Some(VertexRef::Part { part, vertex }) => links.push(Link {
                    part_a: pa,
                    vertex_a: va,
                    part_b: part,
                    vertex_b: vertex,
                }),
                _ => {
                    return Err(ComplexError::BadWalk(
                        "pinch survivor did not end up on a planar part".into(),
                    ))
                }
            }
        }
        // labels follow their slots
        let mut iota = BTreeMap::new();
        for s in 0..self.labels.len() {
            if self.labels[s].is_empty() {
                continue;
            }
            let canon = self.find(s);
            let Some(vref) = self.final_ref[canon] else {
                return Err(ComplexError::BadWalk(format!(
                    "labeled slot {s} vanished during normalization"
                )));
            };
            for &lab in &self.labels[s] {
                if iota.insert(lab, vref).is_some() {
                    return Err(ComplexError::BadWalk(format!(
                        "label {lab} appears on two walk slots"
                    )));
                }
            }
        }
        let parts = self
            .parts
            .into_iter()
            .map(|pts| SimplePolygon::build(pts, self.tol))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ComplexError::BadWalk(format!("lobe is not a simple polygon: {e}")))?;
        DegeneratePolygon::build(parts, chains, links, iota, self.tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-9;

    fn tri(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> SimplePolygon {
        SimplePolygon::build(
            vec![
                Point::new(a.0, a.1),
                Point::new(b.0, b.1),
                Point::new(c.0, c.1),
            ],
            TOL,
        )
        .unwrap()
    }

    /// Two triangles pinched at the origin, all corners labeled.
    fn wedge() -> DegeneratePolygon {
        let a = tri((-2.0, 0.0), (0.0, 0.0), (-1.0, 1.0));
        let b = tri((0.0, 0.0), (2.0, 0.0), (1.0, 1.0));
        let mut iota = BTreeMap::new();
        iota.insert(0, VertexRef::Part { part: 0, vertex: 0 });
        iota.insert(1, VertexRef::Part { part: 0, vertex: 1 });
        iota.insert(2, VertexRef::Part { part: 1, vertex: 1 });
        iota.insert(3, VertexRef::Part { part: 1, vertex: 2 });
        iota.insert(4, VertexRef::Part { part: 0, vertex: 2 });
        DegeneratePolygon::build(
            vec![a, b],
            vec![],
            vec![Link {
                part_a: 0,
                vertex_a: 1,
                part_b: 1,
                vertex_b: 0,
            }],
            iota,
            TOL,
        )
        .unwrap()
    }

    #[test]
    fn wedge_builds_and_walks() {
        let w = wedge();
        let walk = w.boundary_walk();
        // 3 + 3 vertices, pinch emitted once extra on return
        assert_eq!(walk.len(), 7);
    }

    #[test]
    fn wedge_distance_routes_through_pinch() {
        let w = wedge();
        let a = Point::new(-2.0, 0.0);
        let b = Point::new(2.0, 0.0);
        let (d, path) = w.intrinsic_distance(a, b).unwrap();
        assert!((d - 4.0).abs() < 1e-12);
        assert!(path.iter().any(|p| p.dist(Point::ORIGIN) < 1e-12));
        // symmetry
        let (d2, _) = w.intrinsic_distance(b, a).unwrap();
        assert!((d - d2).abs() < 1e-12);
    }

    #[test]
    fn wedge_label_order_matches_pentagon() {
        // target: convex pentagon whose vertices 0..5 should be met in order
        let p = SimplePolygon::build(
            vec![
                Point::new(-2.0, 0.0),
                Point::new(0.0, -1.0),
                Point::new(2.0, 0.0),
                Point::new(1.0, 2.0),
                Point::new(-1.0, 2.0),
            ],
            TOL,
        )
        .unwrap();
        let w = wedge();
        assert!(w.same_order(&p));
    }

    #[test]
    fn swapped_labels_break_the_order() {
        let p = SimplePolygon::build(
            vec![
                Point::new(-2.0, 0.0),
                Point::new(0.0, -1.0),
                Point::new(2.0, 0.0),
                Point::new(1.0, 2.0),
                Point::new(-1.0, 2.0),
            ],
            TOL,
        )
        .unwrap();
        let a = tri((-2.0, 0.0), (0.0, 0.0), (-1.0, 1.0));
        let b = tri((0.0, 0.0), (2.0, 0.0), (1.0, 1.0));
        let mut iota = BTreeMap::new();
        iota.insert(0, VertexRef::Part { part: 0, vertex: 0 });
        // labels 1 and 4 exchanged relative to the boundary order
        iota.insert(4, VertexRef::Part { part: 0, vertex: 1 });
        iota.insert(2, VertexRef::Part { part: 1, vertex: 1 });
        iota.insert(3, VertexRef::Part { part: 1, vertex: 2 });
        iota.insert(1, VertexRef::Part { part: 0, vertex: 2 });
        let w = DegeneratePolygon::build(
            vec![a, b],
            vec![],
            vec![Link {
                part_a: 0,
                vertex_a: 1,
                part_b: 1,
                vertex_b: 0,
            }],
            iota,
            TOL,
        )
        .unwrap();
        assert!(!w.same_order(&p));
    }

    #[test]
    fn pinch_labels_must_respect_the_arc_partition() {
        // the pinch splits the boundary into two arcs; labels on one lobe
        // must be cyclically consecutive, so of the two ways to place a
        // coincident label pair on the pinch copies exactly one is valid
        let hex = SimplePolygon::build(
            vec![
                Point::new(-2.0, 0.0),
                Point::new(-0.1, -1.0),
                Point::new(0.1, -1.0),
                Point::new(2.0, 0.0),
                Point::new(1.0, 2.0),
                Point::new(-1.0, 2.0),
            ],
            TOL,
        )
        .unwrap();
        for (l1, l2, expect) in [(1usize, 2usize, true), (2, 1, false)] {
            let a = tri((-2.0, 0.0), (0.0, 0.0), (-1.0, 1.0));
            let b = tri((0.0, 0.0), (2.0, 0.0), (1.0, 1.0));
            let mut iota = BTreeMap::new();
            iota.insert(0, VertexRef::Part { part: 0, vertex: 0 });
            iota.insert(l1, VertexRef::Part { part: 0, vertex: 1 });
            iota.insert(l2, VertexRef::Part { part: 1, vertex: 0 });
            iota.insert(3, VertexRef::Part { part: 1, vertex: 1 });
            iota.insert(4, VertexRef::Part { part: 1, vertex: 2 });
            iota.insert(5, VertexRef::Part { part: 0, vertex: 2 });
            let w = DegeneratePolygon::build(
                vec![a, b],
                vec![],
                vec![Link {
                    part_a: 0,
                    vertex_a: 1,
                    part_b: 1,
                    vertex_b: 0,
                }],
                iota,
                TOL,
            )
            .unwrap();
            assert_eq!(
                w.same_order(&hex),
                expect,
                "pinch pair ({l1},{l2}) expected {expect}"
            );
        }
    }

    #[test]
    fn unlabeled_convex_vertex_is_rejected() {
        let a = tri((-2.0, 0.0), (0.0, 0.0), (-1.0, 1.0));
        let b = tri((0.0, 0.0), (2.0, 0.0), (1.0, 1.0));
        let mut iota = BTreeMap::new();
        iota.insert(0, VertexRef::Part { part: 0, vertex: 0 });
        iota.insert(1, VertexRef::Part { part: 0, vertex: 2 });
        iota.insert(2, VertexRef::Part { part: 1, vertex: 1 });
        // (1, 2) stays unlabeled and convex -> invalid
        let r = DegeneratePolygon::build(
            vec![a, b],
            vec![],
            vec![Link {
                part_a: 0,
                vertex_a: 1,
                part_b: 1,
                vertex_b: 0,
            }],
            iota,
            TOL,
        );
        assert!(matches!(
            r,
            Err(ComplexError::ConvexUnlabeledVertex { part: 1, vertex: 2 })
        ));
    }

    #[test]
    fn chain_distance_and_tip_label() {
        // unit square with an antenna out of corner (1,1)
        let sq = SimplePolygon::build(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ],
            TOL,
        )
        .unwrap();
        let chain = Chain {
            points: vec![Point::new(1.0, 1.0), Point::new(2.0, 2.0)],
            root_part: 0,
            root_vertex: 2,
        };
        let mut iota = BTreeMap::new();
        for i in 0..4 {
            iota.insert(i, VertexRef::Part { part: 0, vertex: i });
        }
        iota.insert(4, VertexRef::ChainPt { chain: 0, point: 1 });
        let d = DegeneratePolygon::build(vec![sq], vec![chain], vec![], iota, TOL).unwrap();
        let (dist, _) = d
            .intrinsic_distance(Point::new(0.0, 0.0), Point::new(2.0, 2.0))
            .unwrap();
        assert!((dist - (2.0f64.sqrt() + 2.0f64.sqrt())).abs() < 1e-12);
        // walk visits chain interior twice, tip once
        let walk = d.boundary_walk();
        assert_eq!(walk.len(), 4 + 3 + 1);
    }

    #[test]
    fn unlabeled_tip_is_rejected() {
        let sq = SimplePolygon::build(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ],
            TOL,
        )
        .unwrap();
        let chain = Chain {
            points: vec![Point::new(1.0, 1.0), Point::new(2.0, 2.0)],
            root_part: 0,
            root_vertex: 2,
        };
        let mut iota = BTreeMap::new();
        for i in 0..4 {
            iota.insert(i, VertexRef::Part { part: 0, vertex: i });
        }
        let r = DegeneratePolygon::build(vec![sq], vec![chain], vec![], iota, TOL);
        assert!(matches!(r, Err(ComplexError::UnlabeledTip(0))));
    }

    #[test]
    fn walk_normalizer_rebuilds_square_with_antenna() {
        // square boundary with an out-and-back excursion at corner 2
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 2.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let mut labels = vec![Vec::new(); 6];
        labels[0] = vec![0];
        labels[1] = vec![1];
        labels[2] = vec![2];
        labels[3] = vec![3];
        labels[5] = vec![4];
        let d = DegeneratePolygon::from_walk(pts, labels, TOL).unwrap();
        assert_eq!(d.parts().len(), 1);
        assert_eq!(d.chains().len(), 1);
        assert_eq!(d.links().len(), 0);
        assert_eq!(
            d.label_point(3).unwrap().0,
            VertexRef::ChainPt { chain: 0, point: 1 }
        );
        let (dist, _) = d
            .intrinsic_distance(Point::new(0.0, 0.0), Point::new(2.0, 2.0))
            .unwrap();
        assert!((dist - 2.0 * 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn walk_normalizer_splits_figure_eight_into_pinched_parts() {
        let pts = vec![
            Point::new(-2.0, 0.0),
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 0.0),
            Point::new(-1.0, 1.0),
        ];
        let labels = vec![vec![0], vec![1], vec![2], vec![3], vec![4], vec![5]];
        let d = DegeneratePolygon::from_walk(pts, labels, TOL).unwrap();
        assert_eq!(d.parts().len(), 2);
        assert_eq!(d.links().len(), 1);
        // both pinch copies labeled: 1 on one part, 4 on the other
        let (r1, p1) = d.label_point(1).unwrap();
        let (r4, p4) = d.label_point(4).unwrap();
        assert!(p1.dist(p4) < 1e-12);
        assert_ne!(r1, r4);
        let (dist, _) = d
            .intrinsic_distance(Point::new(-2.0, 0.0), Point::new(2.0, 0.0))
            .unwrap();
        assert!((dist - 4.0).abs() < 1e-12);
    }

    #[test]
    fn walk_normalizer_collapses_flat_lobe_to_chain() {
        // square plus a zero-area triangular lobe lying along a line
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(3.0, 3.0), // collinear excursion through (2,2)
            Point::new(2.0, 2.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let mut labels = vec![Vec::new(); 7];
        labels[0] = vec![0];
        labels[1] = vec![1];
        labels[2] = vec![2];
        labels[3] = vec![3];
        labels[4] = vec![4];
        labels[6] = vec![5];
        let d = DegeneratePolygon::from_walk(pts, labels, TOL).unwrap();
        assert_eq!(d.parts().len(), 1);
        assert_eq!(d.chains().len(), 1);
        let c = &d.chains()[0];
        assert_eq!(c.points.len(), 3);
        // the mid point (2,2) is a chain vertex carrying label 4
        let (r4, p4) = d.label_point(4).unwrap();
        assert_eq!(r4, VertexRef::ChainPt { chain: 0, point: 1 });
        assert!(p4.dist(Point::new(2.0, 2.0)) < 1e-12);
    }

    #[test]
    fn walk_normalizer_triple_visit_builds_a_path_of_parts() {
        // three lobes around the origin; the walk visits it three times
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, -1.0),
            Point::new(2.0, 0.0),
            Point::new(0.0, 0.0),
            Point::new(2.0, 2.0),
            Point::new(0.0, 2.0),
            Point::new(0.0, 0.0),
            Point::new(-2.0, 0.0),
            Point::new(-1.0, -1.0),
        ];
        let labels: Vec<Vec<usize>> = (0..9).map(|i| vec![i]).collect();
        let d = DegeneratePolygon::from_walk(pts, labels, TOL).unwrap();
        assert_eq!(d.parts().len(), 3);
        assert_eq!(d.links().len(), 2);
        for p in 0..3 {
            let cnt = d
                .links()
                .iter()
                .filter(|l| l.part_a == p || l.part_b == p)
                .count();
            assert!(cnt <= 2);
        }
    }

    #[test]
    fn metric_triangle_inequality_across_components() {
        let w = wedge();
        let pts = [
            Point::new(-2.0, 0.0),
            Point::new(-1.0, 0.5),
            Point::new(1.0, 0.5),
            Point::new(2.0, 0.0),
            Point::new(0.0, 0.0),
        ];
        for &a in &pts {
            for &b in &pts {
                for &c in &pts {
                    let dab = w.intrinsic_distance(a, b).unwrap().0;
                    let dbc = w.intrinsic_distance(b, c).unwrap().0;
                    let dac = w.intrinsic_distance(a, c).unwrap().0;
                    assert!(dac <= dab + dbc + 1e-9);
                }
            }
        }
    }

    #[test]
    fn simple_polygon_converts_to_single_part_complex() {
        let sq = SimplePolygon::build(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ],
            TOL,
        )
        .unwrap();
        let d: DegeneratePolygon = sq.clone().into();
        assert!(d.single_part().is_some());
        assert!(d.same_order(&sq));
        assert_eq!(d.label_matrix(4).unwrap()[0][2], 2.0f64.sqrt());
    }
}
