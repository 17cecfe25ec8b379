//! Randomized soundness checks for the deformation planner: every planned
//! morph must verify, and sampled backward transports must respect both the
//! marked-point bounds and the pairwise non-expansion guarantee.

use std::collections::BTreeMap;

use flatlip::complex::{Chain, DegeneratePolygon, Link, VertexRef};
use flatlip::geom::Point;
use flatlip::morph::{morph_to, transport_points, MorphPlan};
use flatlip::poly::SimplePolygon;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

fn convex_gon(rng: &mut ChaCha8Rng, m: usize, radius: f64) -> SimplePolygon {
    // Jittered angles around a circle keep the polygon convex and generic.
    let tau = std::f64::consts::TAU;
    let mut angles: Vec<f64> = (0..m)
        .map(|k| tau * (k as f64 + rng.gen_range(-0.3..0.3)) / m as f64)
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pts = angles
        .iter()
        .map(|&th| {
            let r = radius * rng.gen_range(0.8..1.2);
            Point::new(r * th.cos(), r * th.sin())
        })
        .collect();
    SimplePolygon::build(pts, 1e-9).unwrap()
}

fn full_iota(n: usize) -> BTreeMap<usize, VertexRef> {
    (0..n)
        .map(|k| (k, VertexRef::Part { part: 0, vertex: k }))
        .collect()
}

/// Distance inside the initial complex, falling back to the straight-line
/// length (a lower bound for any intrinsic distance) when a transported
/// point sits too close to the boundary to be located.
fn initial_dist(q: &DegeneratePolygon, a: Point, b: Point) -> f64 {
    q.intrinsic_distance(a, b)
        .map(|(d, _)| d)
        .unwrap_or_else(|_| a.dist(b))
}

/// Samples a handful of probe points of the target: all vertices, the
/// centroid and a few random interior points.
fn probes(rng: &mut ChaCha8Rng, p: &SimplePolygon) -> Vec<Point> {
    let mut out: Vec<Point> = p.vertices().to_vec();
    out.push(p.centroid());
    let c = p.centroid();
    let mut added = 0;
    while added < 2 {
        let k = rng.gen_range(0..p.len());
        let v = p.vertex(k);
        let t = rng.gen_range(0.2..0.8);
        let cand = Point::new(c.x + t * (v.x - c.x), c.y + t * (v.y - c.y));
        if p.contains(cand) {
            out.push(cand);
            added += 1;
        }
    }
    out
}

/// Plans the morph, verifies it, and spot-checks the backward transport.
fn exercise(tag: &str, rng: &mut ChaCha8Rng, p: &SimplePolygon, q: &DegeneratePolygon) {
    let iota = q.iota().clone();
    let plan: MorphPlan = match morph_to(p, q, &iota) {
        Ok(plan) => plan,
        Err(e) => panic!("{tag}: planning failed: {e}"),
    };
    plan.verify().unwrap_or_else(|e| panic!("{tag}: plan failed verification: {e}"));

    let pts = probes(rng, p);
    let back = match transport_points(&plan, &pts) {
        Ok(back) => back,
        Err(e) => panic!("{tag}: transport failed: {e}"),
    };
    // Marked-point bounds: moving a probe back must keep it at least as
    // close to each marked point as the probe was to that label's vertex.
    for (s, (&a, &ta)) in pts.iter().zip(back.iter()).enumerate() {
        for (&l, _) in q.iota() {
            let (_, marked) = q.label_point(l).unwrap();
            let (want, _) = p.intrinsic_distance(a, p.vertex(l)).unwrap();
            let got = initial_dist(q, ta, marked);
            assert!(
                got <= want + TOL,
                "{tag}: probe {s} sits {got} from marked point {l}, allowed {want}"
            );
        }
    }
    // Pairwise non-expansion of the backward map.
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let (want, _) = p.intrinsic_distance(pts[i], pts[j]).unwrap();
            let got = initial_dist(q, back[i], back[j]);
            assert!(
                got <= want + TOL,
                "{tag}: probes ({i},{j}) moved apart: {got} > {want}"
            );
        }
    }
}

#[test]
fn scaled_copies_morph_onto_their_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for round in 0..25 {
        let m = rng.gen_range(4..8);
        let p = convex_gon(&mut rng, m, 2.0);
        let s = rng.gen_range(0.4..0.9);
        let c = p.centroid();
        let small = SimplePolygon::build(
            p.vertices()
                .iter()
                .map(|v| Point::new(c.x + s * (v.x - c.x), c.y + s * (v.y - c.y)))
                .collect(),
            1e-9,
        )
        .unwrap();
        let q: DegeneratePolygon = small.into();
        exercise(&format!("scaled round {round}"), &mut rng, &p, &q);
    }
}

#[test]
fn dented_polygons_morph_back_onto_their_convex_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for round in 0..25 {
        let m = rng.gen_range(4..7);
        let p = convex_gon(&mut rng, m, 2.0);
        let w = rng.gen_range(0..m);
        let mut vs = p.vertices().to_vec();
        // Pull the vertex along its interior angle bisector: at a convex
        // corner every other vertex lies within the corner's wedge, so a
        // short enough move shrinks all distances from the moved vertex.
        let v = vs[w];
        let to_prev = unit(vs[(w + m - 1) % m] - v);
        let to_next = unit(vs[(w + 1) % m] - v);
        let d = unit(Point::new(to_prev.x + to_next.x, to_prev.y + to_next.y));
        let reach = (0..m)
            .filter(|&j| j != w)
            .map(|j| d.x * (vs[j].x - v.x) + d.y * (vs[j].y - v.y))
            .fold(f64::INFINITY, f64::min);
        let t = rng.gen_range(0.2..0.5) * reach;
        vs[w] = Point::new(v.x + t * d.x, v.y + t * d.y);
        let dented = SimplePolygon::build(vs, 1e-9).unwrap();
        let q: DegeneratePolygon = dented.into();
        exercise(&format!("dented round {round}"), &mut rng, &p, &q);
    }
}

#[test]
fn triangles_with_hanging_chains_morph_onto_roomy_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for round in 0..25 {
        let tri = convex_gon(&mut rng, 3, 1.5);
        let va = rng.gen_range(0..3);
        let kc = rng.gen_range(1..3usize);
        // Chain heads outward along the external bisector at the root.
        let v = tri.vertex(va);
        let c = tri.centroid();
        let out = Point::new(v.x - c.x, v.y - c.y);
        let norm = (out.x * out.x + out.y * out.y).sqrt();
        let dir = Point::new(out.x / norm, out.y / norm);
        let mut chain_pts = vec![v];
        for step in 1..=kc {
            let swing = rng.gen_range(-0.4..0.4);
            let len = rng.gen_range(0.3..0.7) * step as f64;
            chain_pts.push(Point::new(
                v.x + len * (dir.x - swing * dir.y),
                v.y + len * (dir.y + swing * dir.x),
            ));
        }
        let mut iota = BTreeMap::new();
        let mut next = 0usize;
        for k in 0..3 {
            iota.insert(next, VertexRef::Part { part: 0, vertex: k });
            next += 1;
            if k == va {
                for j in 1..=kc {
                    iota.insert(next, VertexRef::ChainPt { chain: 0, point: j });
                    next += 1;
                }
            }
        }
        let q = DegeneratePolygon::build(
            vec![tri.clone()],
            vec![Chain {
                points: chain_pts,
                root_part: 0,
                root_vertex: va,
            }],
            vec![],
            iota,
            1e-9,
        )
        .unwrap();
        let n = q.iota().len();
        let mat = q.label_matrix(n).unwrap();
        let dmax = mat
            .iter()
            .flatten()
            .cloned()
            .fold(0.0f64, f64::max);
        let p = regular_gon(n, 2.0 * dmax);
        exercise(&format!("chain round {round}"), &mut rng, &p, &q);
    }
}

#[test]
fn pinched_pairs_morph_onto_roomy_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for round in 0..25 {
        let m = rng.gen_range(3..5);
        let base = convex_gon(&mut rng, m, 1.5);
        let va = rng.gen_range(0..m);
        let v = base.vertex(va);
        let c = base.centroid();
        let out = Point::new(v.x - c.x, v.y - c.y);
        let norm = (out.x * out.x + out.y * out.y).sqrt();
        let dir = Point::new(out.x / norm, out.y / norm);
        let side = Point::new(-dir.y, dir.x);
        let r = rng.gen_range(0.3..0.6);
        let spread = rng.gen_range(0.2..0.5);
        // A small triangle in the exterior wedge, sharing only the vertex.
        let b1 = Point::new(
            v.x + r * (dir.x - spread * side.x),
            v.y + r * (dir.y - spread * side.y),
        );
        let b2 = Point::new(
            v.x + r * (dir.x + spread * side.x),
            v.y + r * (dir.y + spread * side.y),
        );
        let wing = SimplePolygon::build(vec![v, b1, b2], 1e-9).unwrap();
        let mut iota = BTreeMap::new();
        let mut next = 0usize;
        for k in 0..m {
            iota.insert(next, VertexRef::Part { part: 0, vertex: k });
            next += 1;
            if k == va {
                iota.insert(next, VertexRef::Part { part: 1, vertex: 1 });
                next += 1;
                iota.insert(next, VertexRef::Part { part: 1, vertex: 2 });
                next += 1;
            }
        }
        let q = DegeneratePolygon::build(
            vec![base.clone(), wing],
            vec![],
            vec![Link {
                part_a: 0,
                vertex_a: va,
                part_b: 1,
                vertex_b: 0,
            }],
            iota,
            1e-9,
        )
        .unwrap();
        let n = q.iota().len();
        let mat = q.label_matrix(n).unwrap();
        let dmax = mat
            .iter()
            .flatten()
            .cloned()
            .fold(0.0f64, f64::max);
        let p = regular_gon(n, 2.0 * dmax);
        exercise(&format!("pinched round {round}"), &mut rng, &p, &q);
    }
}

fn unit(p: Point) -> Point {
    let n = (p.x * p.x + p.y * p.y).sqrt();
    Point::new(p.x / n, p.y / n)
}

fn regular_gon(m: usize, radius: f64) -> SimplePolygon {
    let tau = std::f64::consts::TAU;
    SimplePolygon::build(
        (0..m)
            .map(|k| {
                let th = tau * k as f64 / m as f64;
                Point::new(radius * th.cos(), radius * th.sin())
            })
            .collect(),
        1e-9,
    )
    .unwrap()
}
