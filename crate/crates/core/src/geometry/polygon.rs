//! Intersection of planar convex sets (points, segments, polygons) given as
//! point clouds in plane coordinates.

type P2 = [f64; 2];

#[inline]
fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn cross(a: P2, b: P2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn norm(a: P2) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn lerp(a: P2, b: P2, t: f64) -> P2 {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

fn dedup(points: &[P2], tol: f64) -> Vec<P2> {
    let mut out: Vec<P2> = Vec::with_capacity(points.len());
    for &p in points {
        if !out.iter().any(|&q| norm(sub(p, q)) <= tol) {
            out.push(p);
        }
    }
    out
}

/// Convex hull, counterclockwise, collinear points dropped. Returns one point
/// for a point set, two for a segment.
fn hull(points: &[P2], tol: f64) -> Vec<P2> {
    let mut pts = dedup(points, tol);
    if pts.len() <= 2 {
        return pts;
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let turn = |o: P2, a: P2, b: P2| {
        let (u, v) = (sub(a, o), sub(b, o));
        cross(u, v) > tol * norm(u).max(norm(v))
    };
    let mut lower: Vec<P2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && !turn(lower[lower.len() - 2], lower[lower.len() - 1], p) {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<P2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && !turn(upper[upper.len() - 2], upper[upper.len() - 1], p) {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        // collinear input: keep the two extreme points
        let (a, b) = (pts[0], pts[pts.len() - 1]);
        return if norm(sub(a, b)) <= tol { vec![a] } else { vec![a, b] };
    }
    lower
}

fn point_in_polygon(p: P2, poly: &[P2], tol: f64) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let e = sub(b, a);
        cross(e, sub(p, a)) >= -tol * norm(e)
    })
}

fn clip_polygon(subject: &[P2], clip: &[P2], tol: f64) -> Vec<P2> {
    let mut output = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let e = sub(b, a);
        let len = norm(e);
        let side = |p: P2| cross(e, sub(p, a)) / len;
        let input = std::mem::take(&mut output);
        let m = input.len();
        for k in 0..m {
            let cur = input[k];
            let prev = input[(k + m - 1) % m];
            let (sc, sp) = (side(cur), side(prev));
            let (cin, pin) = (sc >= -tol, sp >= -tol);
            if cin {
                if !pin {
                    output.push(lerp(prev, cur, sp / (sp - sc)));
                }
                output.push(cur);
            } else if pin {
                output.push(lerp(prev, cur, sp / (sp - sc)));
            }
        }
    }
    output
}

fn clip_segment(a: P2, b: P2, poly: &[P2], tol: f64) -> Vec<P2> {
    let d = sub(b, a);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let n = poly.len();
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let e = sub(q, p);
        let len = norm(e);
        // signed inward distance: s(t) = s0 + t * ds >= -tol
        let s0 = cross(e, sub(a, p)) / len;
        let ds = cross(e, d) / len;
        if ds.abs() < 1e-300 {
            if s0 < -tol {
                return Vec::new();
            }
            continue;
        }
        let t = -s0 / ds;
        if ds > 0.0 {
            lo = lo.max(t);
        } else {
            hi = hi.min(t);
        }
    }
    if lo > hi {
        if (lo - hi) * norm(d) > 2.0 * tol {
            return Vec::new();
        }
        let mid = 0.5 * (lo + hi);
        return vec![lerp(a, b, mid)];
    }
    dedup(&[lerp(a, b, lo), lerp(a, b, hi)], tol)
}

fn intersect_segments(a0: P2, a1: P2, b0: P2, b1: P2, tol: f64) -> Vec<P2> {
    let da = sub(a1, a0);
    let db = sub(b1, b0);
    let la = norm(da);
    let lb = norm(db);
    let denom = cross(da, db);
    if denom.abs() <= 1e-12 * la * lb {
        // parallel: overlap only if collinear
        if (cross(da, sub(b0, a0)) / la).abs() > tol {
            return Vec::new();
        }
        let t0 = dot(sub(b0, a0), da) / (la * la);
        let t1 = dot(sub(b1, a0), da) / (la * la);
        let (lo, hi) = (t0.min(t1).max(0.0), t0.max(t1).min(1.0));
        let slack = tol / la;
        if lo > hi + slack {
            return Vec::new();
        }
        let hi = hi.max(lo);
        return dedup(&[lerp(a0, a1, lo), lerp(a0, a1, hi)], tol);
    }
    let w = sub(b0, a0);
    let t = cross(w, db) / denom;
    let u = cross(w, da) / denom;
    let (st, su) = (tol / la, tol / lb);
    if t < -st || t > 1.0 + st || u < -su || u > 1.0 + su {
        return Vec::new();
    }
    vec![lerp(a0, a1, t.clamp(0.0, 1.0))]
}

/// Intersection of the convex hulls of two planar point sets. Either set may
/// be degenerate (a single point or a segment). The result lists the vertices
/// of the intersection, counterclockwise when it is a polygon.
pub fn intersect_convex_2d(p: &[P2], q: &[P2], tol: f64) -> Vec<P2> {
    let hp = hull(p, tol);
    let hq = hull(q, tol);
    if hp.is_empty() || hq.is_empty() {
        return Vec::new();
    }
    match (hp.len(), hq.len()) {
        (1, _) | (_, 1) => {
            let (pt, other) = if hp.len() == 1 { (hp[0], &hq) } else { (hq[0], &hp) };
            let inside = match other.len() {
                1 => norm(sub(pt, other[0])) <= tol,
                2 => {
                    let (a, b) = (other[0], other[1]);
                    let d = sub(b, a);
                    let t = (dot(sub(pt, a), d) / dot(d, d)).clamp(0.0, 1.0);
                    norm(sub(pt, lerp(a, b, t))) <= tol
                }
                _ => point_in_polygon(pt, other, tol),
            };
            if inside {
                vec![pt]
            } else {
                Vec::new()
            }
        }
        (2, 2) => intersect_segments(hp[0], hp[1], hq[0], hq[1], tol),
        (2, _) => clip_segment(hp[0], hp[1], &hq, tol),
        (_, 2) => clip_segment(hq[0], hq[1], &hp, tol),
        _ => {
            let clipped = clip_polygon(&hp, &hq, tol);
            hull(&clipped, tol)
        }
    }
}
