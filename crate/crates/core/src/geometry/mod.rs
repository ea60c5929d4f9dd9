//! Convex polytopes, pairwise distance, separating planes and contact
//! manifolds.

mod distance;
mod manifold;
mod plane;
mod polygon;
mod polytope;

pub use distance::{brute_force_distance, pairwise_distance, sat_separation, DistanceResult};
pub use manifold::{
    ManifoldKey, OffPlaneVertex, Side,
    contact_manifold, farthest_manifold_point, vertices_off_plane, ContactManifold, ContactPoint,
};
pub use plane::{separating_plane, PlaneUniqueness, SeparatingPlane};
pub use polygon::intersect_convex_2d;
pub use polytope::{ConvexPolytope, Edge, Face, MassProperties, RegularSolid};

use crate::{Quat, Vec3};
use thiserror::Error;

/// Default touching tolerance (m).
pub const DEFAULT_EPS_GEO: f64 = 1e-8;

/// Largest overlap (m) still treated as touching rather than interpenetration.
pub const PENETRATION_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("bodies interpenetrate by {depth:e} m")]
    Interpenetration { depth: f64 },
    #[error("polytope needs at least 4 non-coplanar vertices (got {0})")]
    TooFewVertices(usize),
    #[error("vertex {0} is not an extreme point of the convex hull")]
    NonConvex(usize),
    #[error("polytope is flat (all vertices coplanar)")]
    Flat,
    #[error("polytope topology is inconsistent: {0}")]
    Topology(String),
    #[error("contact manifold is empty")]
    EmptyManifold,
    #[error("bodies are not touching (distance {0:e} m)")]
    NotTouching(f64),
}

/// Rigid placement of a body frame in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { position: Vec3::zeros(), orientation: Quat::identity() }
    }

    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self { position, orientation }
    }

    pub fn from_position(position: Vec3) -> Self {
        Self { position, orientation: Quat::identity() }
    }

    /// Body-frame point to world frame.
    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation * p + self.position
    }

    /// Body-frame direction to world frame.
    #[inline]
    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation * v
    }

    /// World-frame point to body frame.
    #[inline]
    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.inverse_transform_vector(&(p - self.position))
    }

    pub fn quaternion_norm_error(&self) -> f64 {
        (self.orientation.quaternion().norm() - 1.0).abs()
    }
}

/// Kind of polytope feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Vertex,
    Edge,
    Face,
}

/// A vertex, edge or face of a polytope, identified by its vertex indices
/// (sorted).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Feature {
    pub kind: FeatureKind,
    pub indices: Vec<usize>,
}

impl Feature {
    /// Classifies a set of coplanar support vertices by its size.
    pub fn from_support(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        let kind = match indices.len() {
            0 | 1 => FeatureKind::Vertex,
            2 => FeatureKind::Edge,
            _ => FeatureKind::Face,
        };
        Self { kind, indices }
    }
}

/// Orthonormal pair spanning the plane orthogonal to `n`.
pub fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.57 { Vec3::x() } else if n.y.abs() < 0.57 { Vec3::y() } else { Vec3::z() };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}
