use super::GeometryError;
use crate::{Mat3, Vec3};
use std::collections::BTreeMap;

/// A planar face; `vertices` wind counterclockwise about `normal`.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub vertices: Vec<usize>,
    /// Outward unit normal (body frame).
    pub normal: Vec3,
    /// Plane offset: `normal . x = offset` for points on the face.
    pub offset: f64,
}

/// An edge between two vertices, with the two faces that share it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub faces: [usize; 2],
}

/// Convex polytope in its body frame. The body-frame origin is the center
/// of mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolytope {
    vertices: Vec<Vec3>,
    faces: Vec<Face>,
    edges: Vec<Edge>,
    /// Unique edge directions (unit, up to sign), used by separating-axis tests.
    edge_directions: Vec<Vec3>,
    bounding_radius: f64,
}

/// Uniform-density mass properties of a polytope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassProperties {
    pub volume: f64,
    pub centroid: Vec3,
    /// Inertia about the centroid for unit density.
    pub unit_inertia: Mat3,
}

/// Regular convex solids available as primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularSolid {
    Tetrahedron,
    Cube,
    Octahedron,
    Icosahedron,
    Dodecahedron,
}

impl ConvexPolytope {
    /// Builds the polytope from its vertex list by convex-hull construction.
    ///
    /// Every input vertex must be an extreme point of the hull; interior,
    /// face-interior and edge-interior points are rejected.
    pub fn from_vertices(vertices: Vec<Vec3>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 4 {
            return Err(GeometryError::TooFewVertices(n));
        }
        let scale = vertices.iter().map(|v| v.amax()).fold(1.0_f64, f64::max);
        let tol = 1e-10 * scale;

        let mut planes: Vec<(Vec3, f64)> = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let cross = (vertices[j] - vertices[i]).cross(&(vertices[k] - vertices[i]));
                    let len = cross.norm();
                    if len < 1e-12 * scale * scale {
                        continue;
                    }
                    let mut normal = cross / len;
                    let mut offset = normal.dot(&vertices[i]);
                    let (lo, hi) = vertices.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| {
                        let s = normal.dot(v) - offset;
                        (lo.min(s), hi.max(s))
                    });
                    if hi > tol {
                        if lo < -tol {
                            continue;
                        }
                        normal = -normal;
                        offset = -offset;
                    }
                    if hi <= tol && lo >= -tol {
                        return Err(GeometryError::Flat);
                    }
                    let duplicate = planes
                        .iter()
                        .any(|(m, o)| m.dot(&normal) > 1.0 - 1e-9 && (o - offset).abs() < 10.0 * tol);
                    if !duplicate {
                        planes.push((normal, offset));
                    }
                }
            }
        }
        if planes.len() < 4 {
            return Err(GeometryError::Flat);
        }

        let mut faces = Vec::with_capacity(planes.len());
        let mut on_hull = vec![false; n];
        for (normal, offset) in planes {
            let on: Vec<usize> =
                (0..n).filter(|&i| (normal.dot(&vertices[i]) - offset).abs() <= tol).collect();
            let centroid = on.iter().map(|&i| vertices[i]).sum::<Vec3>() / on.len() as f64;
            let (t1, t2) = super::tangent_basis(&normal);
            let mut ordered: Vec<(f64, usize)> = on
                .iter()
                .map(|&i| {
                    let r = vertices[i] - centroid;
                    (r.dot(&t2).atan2(r.dot(&t1)), i)
                })
                .collect();
            ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
            let loop_: Vec<usize> = ordered.into_iter().map(|(_, i)| i).collect();
            let m = loop_.len();
            for idx in 0..m {
                let a = vertices[loop_[idx]];
                let b = vertices[loop_[(idx + 1) % m]];
                let c = vertices[loop_[(idx + 2) % m]];
                let turn = (b - a).cross(&(c - b)).dot(&normal);
                if turn <= tol * scale {
                    return Err(GeometryError::NonConvex(loop_[(idx + 1) % m]));
                }
            }
            for &i in &loop_ {
                on_hull[i] = true;
            }
            faces.push(Face { vertices: loop_, normal, offset });
        }
        if let Some(i) = on_hull.iter().position(|&h| !h) {
            return Err(GeometryError::NonConvex(i));
        }
        Self::from_parts(vertices, faces)
    }

    /// Assembles a polytope from vertices and counterclockwise faces, deriving
    /// edges and checking topology.
    pub fn from_parts(vertices: Vec<Vec3>, faces: Vec<Face>) -> Result<Self, GeometryError> {
        let mut edge_faces: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (fi, face) in faces.iter().enumerate() {
            let m = face.vertices.len();
            for k in 0..m {
                let a = face.vertices[k];
                let b = face.vertices[(k + 1) % m];
                edge_faces.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        let mut edges = Vec::with_capacity(edge_faces.len());
        for ((a, b), fs) in edge_faces {
            if fs.len() != 2 {
                return Err(GeometryError::Topology(format!(
                    "edge ({a}, {b}) is shared by {} faces",
                    fs.len()
                )));
            }
            edges.push(Edge { vertices: [a, b], faces: [fs[0], fs[1]] });
        }
        let euler = vertices.len() as i64 - edges.len() as i64 + faces.len() as i64;
        if euler != 2 {
            return Err(GeometryError::Topology(format!("V - E + F = {euler}")));
        }

        let mut edge_directions: Vec<Vec3> = Vec::new();
        for e in &edges {
            let d = (vertices[e.vertices[1]] - vertices[e.vertices[0]]).normalize();
            if !edge_directions.iter().any(|u| u.cross(&d).norm() < 1e-9) {
                edge_directions.push(d);
            }
        }
        let bounding_radius = vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(Self { vertices, faces, edges, edge_directions, bounding_radius })
    }

    /// Axis-aligned box centered at the origin.
    pub fn cuboid(half_extents: Vec3) -> Self {
        let h = half_extents;
        let mut vertices = Vec::with_capacity(8);
        for &sx in &[-1.0, 1.0] {
            for &sy in &[-1.0, 1.0] {
                for &sz in &[-1.0, 1.0] {
                    vertices.push(Vec3::new(sx * h.x, sy * h.y, sz * h.z));
                }
            }
        }
        Self::from_vertices(vertices).expect("box hull is valid")
    }

    /// Regular solid with the given circumradius, centered at the origin.
    pub fn regular(kind: RegularSolid, circumradius: f64) -> Self {
        let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
        let raw: Vec<Vec3> = match kind {
            RegularSolid::Tetrahedron => vec![
                Vec3::new(1.0, 1.0, 1.0),
                Vec3::new(1.0, -1.0, -1.0),
                Vec3::new(-1.0, 1.0, -1.0),
                Vec3::new(-1.0, -1.0, 1.0),
            ],
            RegularSolid::Cube => {
                let mut v = Vec::new();
                for &x in &[-1.0, 1.0] {
                    for &y in &[-1.0, 1.0] {
                        for &z in &[-1.0, 1.0] {
                            v.push(Vec3::new(x, y, z));
                        }
                    }
                }
                v
            }
            RegularSolid::Octahedron => vec![
                Vec3::x(),
                -Vec3::x(),
                Vec3::y(),
                -Vec3::y(),
                Vec3::z(),
                -Vec3::z(),
            ],
            RegularSolid::Icosahedron => {
                let mut v = Vec::new();
                for &a in &[-1.0, 1.0] {
                    for &b in &[-phi, phi] {
                        v.push(Vec3::new(0.0, a, b));
                        v.push(Vec3::new(a, b, 0.0));
                        v.push(Vec3::new(b, 0.0, a));
                    }
                }
                v
            }
            RegularSolid::Dodecahedron => {
                let mut v = Vec::new();
                for &x in &[-1.0, 1.0] {
                    for &y in &[-1.0, 1.0] {
                        for &z in &[-1.0, 1.0] {
                            v.push(Vec3::new(x, y, z));
                        }
                    }
                }
                let inv = 1.0 / phi;
                for &a in &[-inv, inv] {
                    for &b in &[-phi, phi] {
                        v.push(Vec3::new(0.0, a, b));
                        v.push(Vec3::new(a, b, 0.0));
                        v.push(Vec3::new(b, 0.0, a));
                    }
                }
                v
            }
        };
        let vertices = raw.into_iter().map(|v| v.normalize() * circumradius).collect();
        Self::from_vertices(vertices).expect("regular solid hull is valid")
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_directions(&self) -> &[Vec3] {
        &self.edge_directions
    }

    /// Radius of the smallest origin-centered sphere containing the polytope.
    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    /// True when `a` and `b` are the endpoints of an edge.
    pub fn is_edge(&self, a: usize, b: usize) -> bool {
        let key = [a.min(b), a.max(b)];
        self.edges.iter().any(|e| e.vertices == key)
    }

    /// Volume, centroid and unit-density inertia, by decomposing the solid
    /// into tetrahedra (equivalent to the divergence-theorem integrals).
    pub fn mass_properties(&self) -> MassProperties {
        let o = self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64;
        let mut volume = 0.0;
        let mut first = Vec3::zeros();
        let mut second = Mat3::zeros();
        for face in &self.faces {
            let a = self.vertices[face.vertices[0]] - o;
            for k in 1..face.vertices.len() - 1 {
                let b = self.vertices[face.vertices[k]] - o;
                let c = self.vertices[face.vertices[k + 1]] - o;
                let det = a.dot(&b.cross(&c));
                volume += det / 6.0;
                first += det / 24.0 * (a + b + c);
                let s = a + b + c;
                second += det / 120.0
                    * (a * a.transpose() + b * b.transpose() + c * c.transpose() + s * s.transpose());
            }
        }
        let g = first / volume;
        let cov = second - volume * g * g.transpose();
        let unit_inertia = Mat3::identity() * cov.trace() - cov;
        MassProperties { volume, centroid: o + g, unit_inertia }
    }

    /// Inertia about the centroid for a uniform-density body of `mass`.
    pub fn uniform_inertia(&self, mass: f64) -> Mat3 {
        let mp = self.mass_properties();
        mp.unit_inertia * (mass / mp.volume)
    }

    /// Returns the polytope translated so its centroid is at the origin, and
    /// the body-frame shift that was removed. Already-centered polytopes are
    /// returned unchanged (bit for bit).
    pub fn recentered(self) -> (Self, Vec3) {
        let c = self.mass_properties().centroid;
        let scale = self.bounding_radius.max(1e-300);
        if c.norm() <= 1e-12 * scale {
            return (self, Vec3::zeros());
        }
        let verts = self.vertices.iter().map(|v| v - c).collect();
        let faces = self
            .faces
            .iter()
            .map(|f| Face { vertices: f.vertices.clone(), normal: f.normal, offset: f.offset - f.normal.dot(&c) })
            .collect();
        (Self::from_parts(verts, faces).expect("translation preserves topology"), c)
    }
}
