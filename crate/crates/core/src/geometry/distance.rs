use super::{tangent_basis, ConvexPolytope, Feature, GeometryError, Pose, DEFAULT_EPS_GEO, PENETRATION_TOLERANCE};
use crate::Vec3;

/// Minimum distance between two posed polytopes with a witness pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceResult {
    /// Euclidean distance, zero when touching.
    pub distance: f64,
    /// Signed distance: equals `distance` when disjoint, the (non-positive)
    /// separating-axis separation when touching or slightly overlapping.
    pub signed_distance: f64,
    /// Unit direction from A's closest point toward B's closest point. For
    /// touching bodies this is the best separating axis.
    pub direction: Vec3,
    pub closest_point_a: Vec3,
    pub closest_point_b: Vec3,
    pub feature_a: Feature,
    pub feature_b: Feature,
    /// Best separating axis (unit, from A toward B) and its separation.
    pub sat_axis: Vec3,
    pub sat_separation: f64,
}

impl DistanceResult {
    pub fn is_touching(&self, eps_geo: f64) -> bool {
        self.distance <= eps_geo
    }
}

pub(crate) fn world_vertices(p: &ConvexPolytope, pose: &Pose) -> Vec<Vec3> {
    p.vertices().iter().map(|v| pose.transform_point(v)).collect()
}

fn projection_range(verts: &[Vec3], axis: &Vec3) -> (f64, f64) {
    verts.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| {
        let s = axis.dot(v);
        (lo.min(s), hi.max(s))
    })
}

/// Largest separation over all candidate separating axes (face normals of
/// both bodies and cross products of their edge directions). Positive means
/// disjoint; otherwise its magnitude is the penetration depth. The returned
/// axis points from A toward B.
pub fn sat_separation(a: &ConvexPolytope, pose_a: &Pose, b: &ConvexPolytope, pose_b: &Pose) -> (f64, Vec3) {
    let va = world_vertices(a, pose_a);
    let vb = world_vertices(b, pose_b);
    sat_from_vertices(a, pose_a, &va, b, pose_b, &vb)
}

pub(crate) fn sat_from_vertices(
    a: &ConvexPolytope,
    pose_a: &Pose,
    va: &[Vec3],
    b: &ConvexPolytope,
    pose_b: &Pose,
    vb: &[Vec3],
) -> (f64, Vec3) {
    let mut best = (f64::MIN, Vec3::z());
    let mut test = |axis: Vec3, both_signs: bool| {
        let (alo, ahi) = projection_range(va, &axis);
        let (blo, bhi) = projection_range(vb, &axis);
        let forward = blo - ahi;
        if forward > best.0 {
            best = (forward, axis);
        }
        if both_signs {
            let backward = alo - bhi;
            if backward > best.0 {
                best = (backward, -axis);
            }
        }
    };
    for f in a.faces() {
        test(pose_a.transform_vector(&f.normal), false);
    }
    for f in b.faces() {
        test(-pose_b.transform_vector(&f.normal), false);
    }
    for ea in a.edge_directions() {
        let ea = pose_a.transform_vector(ea);
        for eb in b.edge_directions() {
            let eb = pose_b.transform_vector(eb);
            let c = ea.cross(&eb);
            let n = c.norm();
            if n > 1e-9 {
                test(c / n, true);
            }
        }
    }
    best
}

/// Closest points between segments `p0-p1` and `q0-q1`; returns the points
/// and the segment parameters.
pub(crate) fn closest_segment_segment(p0: &Vec3, p1: &Vec3, q0: &Vec3, q1: &Vec3) -> (Vec3, Vec3, f64, f64) {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let (mut s, mut t);
    let c = d1.dot(&r);
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    s = if denom > 1e-14 * a * e { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (p0 + d1 * s, q0 + d2 * t, s, t)
}

/// Distance from point `p` to a face (given by world vertices and outward
/// normal) when the projection of `p` lies inside the face; `None` otherwise.
fn point_face(p: &Vec3, verts: &[Vec3], face: &[usize], normal: &Vec3) -> Option<(f64, Vec3)> {
    let origin = verts[face[0]];
    let h = normal.dot(&(p - origin));
    let proj = p - normal * h;
    let m = face.len();
    for k in 0..m {
        let a = verts[face[k]];
        let b = verts[face[(k + 1) % m]];
        if (b - a).cross(&(proj - a)).dot(normal) < -1e-14 * (b - a).norm_squared() {
            return None;
        }
    }
    Some((h.abs(), proj))
}

/// Reference distance by exhaustive minimization over feature pairs
/// (vertex-face, face-vertex and edge-edge, which covers vertex-vertex and
/// vertex-edge). Valid for disjoint bodies. Returns the distance and the
/// closest points on A and B.
pub fn brute_force_distance(
    a: &ConvexPolytope,
    pose_a: &Pose,
    b: &ConvexPolytope,
    pose_b: &Pose,
) -> (f64, Vec3, Vec3) {
    let va = world_vertices(a, pose_a);
    let vb = world_vertices(b, pose_b);
    brute_force_from_vertices(a, pose_a, &va, b, pose_b, &vb)
}

fn brute_force_from_vertices(
    a: &ConvexPolytope,
    pose_a: &Pose,
    va: &[Vec3],
    b: &ConvexPolytope,
    pose_b: &Pose,
    vb: &[Vec3],
) -> (f64, Vec3, Vec3) {
    let mut best = (f64::MAX, Vec3::zeros(), Vec3::zeros());
    for f in b.faces() {
        let n = pose_b.transform_vector(&f.normal);
        for p in va {
            if let Some((d, q)) = point_face(p, vb, &f.vertices, &n) {
                if d < best.0 {
                    best = (d, *p, q);
                }
            }
        }
    }
    for f in a.faces() {
        let n = pose_a.transform_vector(&f.normal);
        for p in vb {
            if let Some((d, q)) = point_face(p, va, &f.vertices, &n) {
                if d < best.0 {
                    best = (d, q, *p);
                }
            }
        }
    }
    for ea in a.edges() {
        let (p0, p1) = (va[ea.vertices[0]], va[ea.vertices[1]]);
        for eb in b.edges() {
            let (q0, q1) = (vb[eb.vertices[0]], vb[eb.vertices[1]]);
            let (x, y, _, _) = closest_segment_segment(&p0, &p1, &q0, &q1);
            let d = (y - x).norm();
            if d < best.0 {
                best = (d, x, y);
            }
        }
    }
    best
}

/// Vertices of A within `tol` of A's maximum along `axis`, and of B within
/// `tol` of B's minimum.
pub(crate) fn support_sets(va: &[Vec3], vb: &[Vec3], axis: &Vec3, tol: f64) -> (Vec<usize>, Vec<usize>) {
    let (_, ahi) = projection_range(va, axis);
    let (blo, _) = projection_range(vb, axis);
    let sa = (0..va.len()).filter(|&i| axis.dot(&va[i]) >= ahi - tol).collect();
    let sb = (0..vb.len()).filter(|&i| axis.dot(&vb[i]) <= blo + tol).collect();
    (sa, sb)
}

/// Minimum distance between two posed polytopes.
///
/// Returns [`GeometryError::Interpenetration`] when the bodies overlap by
/// more than [`PENETRATION_TOLERANCE`]; smaller overlaps are reported as
/// touching (distance zero, negative `signed_distance`).
pub fn pairwise_distance(
    a: &ConvexPolytope,
    pose_a: &Pose,
    b: &ConvexPolytope,
    pose_b: &Pose,
) -> Result<DistanceResult, GeometryError> {
    let va = world_vertices(a, pose_a);
    let vb = world_vertices(b, pose_b);
    let (sep, axis) = sat_from_vertices(a, pose_a, &va, b, pose_b, &vb);
    if sep < -PENETRATION_TOLERANCE {
        return Err(GeometryError::Interpenetration { depth: -sep });
    }
    if sep <= 0.0 {
        let (sa, sb) = support_sets(&va, &vb, &axis, DEFAULT_EPS_GEO);
        let (t1, t2) = tangent_basis(&axis);
        let to2 = |p: &Vec3| [p.dot(&t1), p.dot(&t2)];
        let pa: Vec<[f64; 2]> = sa.iter().map(|&i| to2(&va[i])).collect();
        let pb: Vec<[f64; 2]> = sb.iter().map(|&i| to2(&vb[i])).collect();
        let region = super::intersect_convex_2d(&pa, &pb, 1e-9);
        let height = 0.5 * (sa.iter().map(|&i| axis.dot(&va[i])).fold(f64::MIN, f64::max)
            + sb.iter().map(|&i| axis.dot(&vb[i])).fold(f64::MAX, f64::min));
        let planar = if region.is_empty() {
            let c = sa.iter().map(|&i| va[i]).sum::<Vec3>() / sa.len() as f64;
            [c.dot(&t1), c.dot(&t2)]
        } else {
            let n = region.len() as f64;
            [region.iter().map(|p| p[0]).sum::<f64>() / n, region.iter().map(|p| p[1]).sum::<f64>() / n]
        };
        let point = t1 * planar[0] + t2 * planar[1] + axis * height;
        return Ok(DistanceResult {
            distance: 0.0,
            signed_distance: sep,
            direction: axis,
            closest_point_a: point,
            closest_point_b: point,
            feature_a: Feature::from_support(sa),
            feature_b: Feature::from_support(sb),
            sat_axis: axis,
            sat_separation: sep,
        });
    }
    let (distance, pa, pb) = brute_force_from_vertices(a, pose_a, &va, b, pose_b, &vb);
    let direction = (pb - pa) / distance;
    let (sa, sb) = support_sets(&va, &vb, &direction, 1e-9 * (1.0 + distance));
    Ok(DistanceResult {
        distance,
        signed_distance: distance,
        direction,
        closest_point_a: pa,
        closest_point_b: pb,
        feature_a: Feature::from_support(sa),
        feature_b: Feature::from_support(sb),
        sat_axis: axis,
        sat_separation: sep,
    })
}
