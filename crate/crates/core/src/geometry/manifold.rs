use super::distance::world_vertices;
use super::{ConvexPolytope, GeometryError, PlaneUniqueness, Pose, SeparatingPlane};
use crate::Vec3;

/// One point of contact between two touching bodies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    /// Location on the separating plane.
    pub position: Vec3,
    /// Material point of A (on A's side of the plane).
    pub position_a: Vec3,
    /// Material point of B.
    pub position_b: Vec3,
    /// Separation along the plane normal, nonnegative when not overlapping.
    pub gap: f64,
    /// Rate of change of `gap`; positive when the bodies are separating.
    pub normal_velocity: f64,
}

/// Structural identity of a manifold, used to detect contact changes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ManifoldKey {
    pub uniqueness: PlaneUniqueness,
    pub vertices_a: Vec<usize>,
    pub vertices_b: Vec<usize>,
    pub point_count: usize,
}

impl std::fmt::Display for ManifoldKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        write!(
            f,
            "{} pts={} a=[{}] b=[{}]",
            self.uniqueness.as_str(),
            self.point_count,
            join(&self.vertices_a),
            join(&self.vertices_b)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactManifold {
    pub plane: SeparatingPlane,
    pub points: Vec<ContactPoint>,
}

impl ContactManifold {
    pub fn key(&self) -> ManifoldKey {
        let mut a = self.plane.on_plane_a.clone();
        let mut b = self.plane.on_plane_b.clone();
        a.sort_unstable();
        b.sort_unstable();
        ManifoldKey {
            uniqueness: self.plane.uniqueness,
            vertices_a: a,
            vertices_b: b,
            point_count: self.points.len(),
        }
    }

    pub fn max_abs_normal_velocity(&self) -> f64 {
        self.points.iter().map(|p| p.normal_velocity.abs()).fold(0.0, f64::max)
    }
}

/// Contact points between two touching bodies: the vertices of the region
/// where both bodies meet the separating plane.
///
/// `vel_a` and `vel_b` give the world-frame velocity of a material point of
/// each body.
#[allow(clippy::too_many_arguments)]
pub fn contact_manifold<FA, FB>(
    a: &ConvexPolytope,
    pose_a: &Pose,
    vel_a: FA,
    b: &ConvexPolytope,
    pose_b: &Pose,
    vel_b: FB,
    plane: &SeparatingPlane,
    eps_geo: f64,
) -> Result<ContactManifold, GeometryError>
where
    FA: Fn(&Vec3) -> Vec3,
    FB: Fn(&Vec3) -> Vec3,
{
    if plane.contact_region.is_empty() {
        return Err(GeometryError::EmptyManifold);
    }
    let n = plane.normal;
    let level = |verts: &[Vec3], idx: &[usize]| -> f64 {
        idx.iter().map(|&i| n.dot(&verts[i])).sum::<f64>() / idx.len() as f64
    };
    let va = world_vertices(a, pose_a);
    let vb = world_vertices(b, pose_b);
    let top_a = level(&va, &plane.on_plane_a);
    let bottom_b = level(&vb, &plane.on_plane_b);
    if (top_a - plane.offset).abs() > eps_geo || (bottom_b - plane.offset).abs() > eps_geo {
        return Err(GeometryError::NotTouching(bottom_b - top_a));
    }
    let points = plane
        .contact_region
        .iter()
        .map(|x| {
            let position_a = x + n * (top_a - plane.offset);
            let position_b = x + n * (bottom_b - plane.offset);
            ContactPoint {
                position: *x,
                position_a,
                position_b,
                gap: n.dot(&(position_b - position_a)),
                normal_velocity: n.dot(&(vel_b(&position_b) - vel_a(&position_a))),
            }
        })
        .collect();
    Ok(ContactManifold { plane: plane.clone(), points })
}

/// Manifold point farthest from `r`; the lowest index wins ties.
pub fn farthest_manifold_point(manifold: &ContactManifold, r: &Vec3) -> Result<Vec3, GeometryError> {
    let mut best: Option<(f64, Vec3)> = None;
    for p in &manifold.points {
        let d = (r - p.position).norm();
        if best.map_or(true, |(bd, _)| d > bd) {
            best = Some((d, p.position));
        }
    }
    best.map(|(_, p)| p).ok_or(GeometryError::EmptyManifold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffPlaneVertex {
    pub side: Side,
    pub index: usize,
    pub position: Vec3,
    /// `|n . r - offset|`
    pub distance: f64,
}

/// Every vertex of either body farther than `eps_geo` from the plane.
pub fn vertices_off_plane(
    a: &ConvexPolytope,
    pose_a: &Pose,
    b: &ConvexPolytope,
    pose_b: &Pose,
    plane: &SeparatingPlane,
    eps_geo: f64,
) -> Vec<OffPlaneVertex> {
    let mut out = Vec::new();
    for (side, poly, pose) in [(Side::A, a, pose_a), (Side::B, b, pose_b)] {
        for (index, position) in world_vertices(poly, pose).into_iter().enumerate() {
            let distance = plane.signed_distance(&position).abs();
            if distance > eps_geo {
                out.push(OffPlaneVertex { side, index, position, distance });
            }
        }
    }
    out
}
