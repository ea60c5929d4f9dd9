use super::distance::{support_sets, world_vertices};
use super::{intersect_convex_2d, tangent_basis, ConvexPolytope, DistanceResult, FeatureKind, Pose};
use crate::Vec3;

/// How the touching features determine the separating plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlaneUniqueness {
    VertexFace,
    EdgeFace,
    FaceFace,
    /// Two edges crossing at a single point; the plane through both edges is
    /// unique.
    EdgeEdgeCrossing,
    DegenerateVertexVertex,
    DegenerateVertexEdge,
    /// Collinear edges overlapping in a segment.
    DegenerateEdgeEdge,
    Disjoint,
}

impl PlaneUniqueness {
    pub fn is_degenerate(self) -> bool {
        matches!(
            self,
            Self::DegenerateVertexVertex | Self::DegenerateVertexEdge | Self::DegenerateEdgeEdge
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::VertexFace => "vertex_face",
            Self::EdgeFace => "edge_face",
            Self::FaceFace => "face_face",
            Self::EdgeEdgeCrossing => "edge_edge_crossing",
            Self::DegenerateVertexVertex => "degenerate_vertex_vertex",
            Self::DegenerateVertexEdge => "degenerate_vertex_edge",
            Self::DegenerateEdgeEdge => "degenerate_edge_edge",
            Self::Disjoint => "disjoint",
        }
    }
}

/// Plane `{x : normal . x = offset}` with A below and B above.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatingPlane {
    /// Unit normal pointing from A toward B.
    pub normal: Vec3,
    pub offset: f64,
    pub uniqueness: PlaneUniqueness,
    pub touching_points_a: Vec<Vec3>,
    pub touching_points_b: Vec<Vec3>,
    /// Indices of A's (B's) vertices lying on the plane.
    pub on_plane_a: Vec<usize>,
    pub on_plane_b: Vec<usize>,
    /// Vertices (world frame, on the plane) of the region where both bodies
    /// touch the plane.
    pub contact_region: Vec<Vec3>,
}

impl SeparatingPlane {
    #[inline]
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        self.normal.dot(x) - self.offset
    }
}

fn smallest_feature(points: &[Vec3], on_set: &[usize], verts: &[Vec3], poly: &ConvexPolytope, tol: f64) -> FeatureKind {
    let on_segment = |p: &Vec3, a: usize, b: usize| {
        let (u, w) = (verts[a], verts[b]);
        let d = w - u;
        let t = ((p - u).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        (u + d * t - p).norm() <= tol
    };
    let edges_in_set = || {
        poly.edges()
            .iter()
            .filter(|e| on_set.contains(&e.vertices[0]) && on_set.contains(&e.vertices[1]))
    };
    match points.len() {
        1 => {
            let p = &points[0];
            if on_set.iter().any(|&i| (verts[i] - p).norm() <= tol) {
                FeatureKind::Vertex
            } else if edges_in_set().any(|e| on_segment(p, e.vertices[0], e.vertices[1])) {
                FeatureKind::Edge
            } else {
                FeatureKind::Face
            }
        }
        2 => {
            if edges_in_set()
                .any(|e| points.iter().all(|p| on_segment(p, e.vertices[0], e.vertices[1])))
            {
                FeatureKind::Edge
            } else {
                FeatureKind::Face
            }
        }
        _ => FeatureKind::Face,
    }
}

fn classify(region_len: usize, fa: FeatureKind, fb: FeatureKind) -> PlaneUniqueness {
    use FeatureKind::*;
    use PlaneUniqueness::*;
    if region_len >= 3 {
        return FaceFace;
    }
    match (region_len, fa, fb) {
        (2, Edge, Face) | (2, Face, Edge) => EdgeFace,
        (2, Edge, Edge) => DegenerateEdgeEdge,
        (2, _, _) => FaceFace,
        (_, Vertex, Vertex) => DegenerateVertexVertex,
        (_, Vertex, Edge) | (_, Edge, Vertex) => DegenerateVertexEdge,
        (_, Vertex, Face) | (_, Face, Vertex) => VertexFace,
        (_, Edge, Edge) => EdgeEdgeCrossing,
        _ => EdgeFace,
    }
}

/// Separating plane for two bodies that are disjoint or touching.
///
/// Disjoint bodies (distance above `eps_geo`) get the plane through the
/// midpoint of the witness segment with normal along it. Touching bodies get
/// the best separating axis as normal and the plane halfway between the two
/// support sets; the touching features are classified to tell unique planes
/// from degenerate ones.
pub fn separating_plane(
    a: &ConvexPolytope,
    pose_a: &Pose,
    b: &ConvexPolytope,
    pose_b: &Pose,
    dist: &DistanceResult,
    eps_geo: f64,
) -> SeparatingPlane {
    if dist.distance > eps_geo {
        let normal = dist.direction;
        let mid = 0.5 * (dist.closest_point_a + dist.closest_point_b);
        return SeparatingPlane {
            normal,
            offset: normal.dot(&mid),
            uniqueness: PlaneUniqueness::Disjoint,
            touching_points_a: Vec::new(),
            touching_points_b: Vec::new(),
            on_plane_a: Vec::new(),
            on_plane_b: Vec::new(),
            contact_region: Vec::new(),
        };
    }

    let va = world_vertices(a, pose_a);
    let vb = world_vertices(b, pose_b);
    let normal = dist.sat_axis;
    let top_a = va.iter().map(|v| normal.dot(v)).fold(f64::MIN, f64::max);
    let bottom_b = vb.iter().map(|v| normal.dot(v)).fold(f64::MAX, f64::min);
    let offset = 0.5 * (top_a + bottom_b);
    let (on_a, on_b) = {
        let (sa, sb) = support_sets(&va, &vb, &normal, 2.0 * eps_geo);
        let keep = |set: Vec<usize>, verts: &[Vec3]| -> Vec<usize> {
            set.into_iter().filter(|&i| (normal.dot(&verts[i]) - offset).abs() <= eps_geo).collect()
        };
        (keep(sa, &va), keep(sb, &vb))
    };

    let (t1, t2) = tangent_basis(&normal);
    let to2 = |p: &Vec3| [p.dot(&t1), p.dot(&t2)];
    let pa: Vec<[f64; 2]> = on_a.iter().map(|&i| to2(&va[i])).collect();
    let pb: Vec<[f64; 2]> = on_b.iter().map(|&i| to2(&vb[i])).collect();
    let region2 = intersect_convex_2d(&pa, &pb, eps_geo);
    let contact_region: Vec<Vec3> =
        region2.iter().map(|p| t1 * p[0] + t2 * p[1] + normal * offset).collect();

    let uniqueness = if contact_region.is_empty() {
        PlaneUniqueness::Disjoint
    } else {
        // compare in-plane positions only
        let flatten = |verts: &[Vec3]| -> Vec<Vec3> {
            verts.iter().map(|v| v - normal * (normal.dot(v) - offset)).collect()
        };
        let fa = smallest_feature(&contact_region, &on_a, &flatten(&va), a, 10.0 * eps_geo);
        let fb = smallest_feature(&contact_region, &on_b, &flatten(&vb), b, 10.0 * eps_geo);
        classify(contact_region.len(), fa, fb)
    };

    SeparatingPlane {
        normal,
        offset,
        uniqueness,
        touching_points_a: on_a.iter().map(|&i| va[i]).collect(),
        touching_points_b: on_b.iter().map(|&i| vb[i]).collect(),
        on_plane_a: on_a,
        on_plane_b: on_b,
        contact_region,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{pairwise_distance, DEFAULT_EPS_GEO};
    use crate::Quat;
    use approx::assert_relative_eq;

    fn plane_for(a: &ConvexPolytope, pa: &Pose, b: &ConvexPolytope, pb: &Pose) -> SeparatingPlane {
        let d = pairwise_distance(a, pa, b, pb).unwrap();
        separating_plane(a, pa, b, pb, &d, DEFAULT_EPS_GEO)
    }

    fn ground() -> (ConvexPolytope, Pose) {
        (ConvexPolytope::cuboid(Vec3::new(10.0, 10.0, 1.0)), Pose::from_position(Vec3::new(0.0, 0.0, -1.5)))
    }

    #[test]
    fn face_on_face() {
        let cube = ConvexPolytope::cuboid(Vec3::new(0.5, 0.5, 0.5));
        let (g, gp) = ground();
        let p = plane_for(&g, &gp, &cube, &Pose::identity());
        assert_relative_eq!(p.normal, Vec3::z(), epsilon = 1e-15);
        assert_relative_eq!(p.offset, -0.5, epsilon = 1e-15);
        assert_eq!(p.uniqueness, PlaneUniqueness::FaceFace);
        assert_eq!(p.contact_region.len(), 4);
        // with the arguments swapped the normal flips
        let q = plane_for(&cube, &Pose::identity(), &g, &gp);
        assert_relative_eq!(q.normal, -Vec3::z(), epsilon = 1e-15);
        assert_relative_eq!(q.offset, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn disjoint_plane_bisects_witness() {
        let cube = ConvexPolytope::cuboid(Vec3::new(0.5, 0.5, 0.5));
        let p = plane_for(&cube, &Pose::identity(), &cube, &Pose::from_position(Vec3::new(3.0, 0.0, 0.0)));
        assert_eq!(p.uniqueness, PlaneUniqueness::Disjoint);
        assert_relative_eq!(p.normal, Vec3::x(), epsilon = 1e-12);
        assert_relative_eq!(p.offset, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn corner_to_corner_is_degenerate() {
        let cube = ConvexPolytope::cuboid(Vec3::new(0.5, 0.5, 0.5));
        let p = plane_for(&cube, &Pose::identity(), &cube, &Pose::from_position(Vec3::new(1.0, 1.0, 1.0)));
        assert_eq!(p.uniqueness, PlaneUniqueness::DegenerateVertexVertex);
        assert_eq!(p.contact_region.len(), 1);
    }

    #[test]
    fn edge_and_vertex_contacts() {
        let cube = ConvexPolytope::cuboid(Vec3::new(0.5, 0.5, 0.5));
        let (g, gp) = ground();
        let tilt = Quat::from_axis_angle(&Vec3::x_axis(), std::f64::consts::FRAC_PI_4);
        let h = 0.5 * 2f64.sqrt() - 0.5;
        let p = plane_for(&g, &gp, &cube, &Pose::new(Vec3::new(0.0, 0.0, h), tilt));
        assert_eq!(p.uniqueness, PlaneUniqueness::EdgeFace);
        assert_eq!(p.contact_region.len(), 2);

        // corner down: rotate so a body diagonal is vertical
        let diag = Vec3::new(1.0, 1.0, 1.0).normalize();
        let corner = Quat::rotation_between(&diag, &-Vec3::z()).unwrap();
        let h = 0.75f64.sqrt() - 0.5;
        let p = plane_for(&g, &gp, &cube, &Pose::new(Vec3::new(0.0, 0.0, h), corner));
        assert_eq!(p.uniqueness, PlaneUniqueness::VertexFace);
        assert_eq!(p.contact_region.len(), 1);
    }

    #[test]
    fn crossing_edges() {
        let cube = ConvexPolytope::cuboid(Vec3::new(0.5, 0.5, 0.5));
        let ax = Quat::from_axis_angle(&Vec3::x_axis(), std::f64::consts::FRAC_PI_4);
        let ay = Quat::from_axis_angle(&Vec3::y_axis(), std::f64::consts::FRAC_PI_4);
        let r = 0.5 * 2f64.sqrt();
        let p = plane_for(&cube, &Pose::new(Vec3::zeros(), ax), &cube, &Pose::new(Vec3::new(0.0, 0.0, 2.0 * r), ay));
        assert_eq!(p.uniqueness, PlaneUniqueness::EdgeEdgeCrossing);
        assert_relative_eq!(p.normal, Vec3::z(), epsilon = 1e-12);
    }
}
