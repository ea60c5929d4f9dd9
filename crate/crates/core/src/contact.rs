//! Constraint functions and the no-slip, zero-restitution contact impulse
//! solve applied after each velocity update.

use crate::dynamics::{BodyRef, SystemState};
use crate::geometry::ContactManifold;
use crate::lcp::{self, LcpError};
use crate::{Mat3, Vec3};
use nalgebra::{DMatrix, DVector, RowDVector};
use thiserror::Error;

/// Default threshold (m/s) on the normal velocity below which a contact
/// point is treated as resting or approaching.
pub const DEFAULT_EPS_V: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("contact impulse solve failed: {0}")]
    Lcp(#[from] LcpError),
    #[error("mass matrix of a contact participant is not positive definite")]
    SingularMass,
}

/// Gap between two points along `n`.
#[inline]
pub fn phi(point_a: &Vec3, point_b: &Vec3, n: &Vec3) -> f64 {
    n.dot(&(point_a - point_b))
}

/// Rate of change of the gap at a shared contact point `p`.
pub fn phi_dot(state: &SystemState, a: BodyRef, b: BodyRef, p: &Vec3, n: &Vec3) -> f64 {
    use crate::dynamics::point_velocity;
    n.dot(&(point_velocity(state, a, p) - point_velocity(state, b, p)))
}

/// Contact between two participants. A is below the separating plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PairContact {
    pub a: BodyRef,
    pub b: BodyRef,
    pub manifold: ContactManifold,
}

impl PairContact {
    /// Normal pointing from B toward A, so that gaps and their rates are
    /// positive when the bodies separate.
    pub fn contact_normal(&self) -> Vec3 {
        -self.manifold.plane.normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DofGroup {
    Body(usize),
    Chain(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedPoint {
    pub pair: usize,
    pub position: Vec3,
    pub normal: Vec3,
    pub tangents: [Vec3; 2],
}

/// Impulse-level contact problem over the generalized velocities of every
/// participant that can move.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactProblem {
    pub groups: Vec<(DofGroup, usize)>,
    pub points: Vec<ConstrainedPoint>,
    /// Normal Jacobian (one row per constrained point).
    pub normal_jacobian: DMatrix<f64>,
    /// Tangential Jacobian (two rows per constrained point).
    pub tangent_jacobian: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub velocity: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactSolution {
    pub normal_impulses: DVector<f64>,
    pub tangent_impulses: DVector<f64>,
    pub velocity: DVector<f64>,
    pub pivots: usize,
}

impl ContactSolution {
    pub fn total_normal_impulse(&self) -> f64 {
        self.normal_impulses.sum()
    }
}

fn skew(v: &Vec3) -> Mat3 {
    v.cross_matrix()
}

impl ContactProblem {
    pub fn dof(&self) -> usize {
        self.velocity.len()
    }

    fn offset(&self, g: DofGroup) -> Option<usize> {
        self.groups.iter().find(|(k, _)| *k == g).map(|&(_, o)| o)
    }

    pub fn kinetic_energy(&self, v: &DVector<f64>) -> f64 {
        0.5 * v.dot(&(&self.mass * v))
    }

    /// Writes generalized velocities back into the state.
    pub fn store_velocity(&self, state: &mut SystemState, v: &DVector<f64>) {
        for &(g, o) in &self.groups {
            match g {
                DofGroup::Body(i) => {
                    let b = &mut state.bodies[i];
                    b.linear_velocity = Vec3::new(v[o], v[o + 1], v[o + 2]);
                    b.angular_velocity = Vec3::new(v[o + 3], v[o + 4], v[o + 5]);
                }
                DofGroup::Chain(c) => {
                    let n = state.chains[c].len();
                    let qd: Vec<f64> = (0..n).map(|k| v[o + k]).collect();
                    state.chains[c].set_velocities(&qd);
                }
            }
        }
    }
}

fn group_of(state: &SystemState, r: BodyRef) -> Option<DofGroup> {
    match r {
        BodyRef::Body(i) if state.bodies[i].is_static => None,
        BodyRef::Body(i) => Some(DofGroup::Body(i)),
        BodyRef::Link { chain, .. } => Some(DofGroup::Chain(chain)),
    }
}

/// Velocity Jacobian row block (3 x dof) of the material point of `r` at `p`.
fn point_jacobian(state: &SystemState, problem: &ContactProblem, r: BodyRef, p: &Vec3) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(3, problem.dof());
    let Some(g) = group_of(state, r) else { return j };
    let o = problem.offset(g).expect("participant registered");
    match r {
        BodyRef::Body(i) => {
            let c = state.bodies[i].pose.position;
            j.fixed_view_mut::<3, 3>(0, o).copy_from(&Mat3::identity());
            j.fixed_view_mut::<3, 3>(0, o + 3).copy_from(&(-skew(&(p - c))));
        }
        BodyRef::Link { chain, link } => {
            let jl = state.chains[chain].point_jacobian(link, p);
            j.view_mut((0, o), (3, jl.ncols())).copy_from(&jl);
        }
    }
    j
}

/// Assembles the contact problem. Points whose normal velocity exceeds
/// `eps_v` (receding) are left unconstrained.
pub fn build_contact_problem(state: &SystemState, contacts: &[PairContact], eps_v: f64) -> ContactProblem {
    let mut groups: Vec<(DofGroup, usize)> = Vec::new();
    let mut dof = 0;
    for c in contacts {
        for r in [c.a, c.b] {
            if let Some(g) = group_of(state, r) {
                if !groups.iter().any(|(k, _)| *k == g) {
                    groups.push((g, dof));
                    dof += match g {
                        DofGroup::Body(_) => 6,
                        DofGroup::Chain(ch) => state.chains[ch].len(),
                    };
                }
            }
        }
    }
    let mut mass = DMatrix::zeros(dof, dof);
    let mut velocity = DVector::zeros(dof);
    for &(g, o) in &groups {
        match g {
            DofGroup::Body(i) => {
                let b = &state.bodies[i];
                mass.fixed_view_mut::<3, 3>(o, o).copy_from(&(Mat3::identity() * b.mass));
                mass.fixed_view_mut::<3, 3>(o + 3, o + 3).copy_from(&b.world_inertia());
                velocity.fixed_rows_mut::<3>(o).copy_from(&b.linear_velocity);
                velocity.fixed_rows_mut::<3>(o + 3).copy_from(&b.angular_velocity);
            }
            DofGroup::Chain(c) => {
                let ch = &state.chains[c];
                let n = ch.len();
                mass.view_mut((o, o), (n, n)).copy_from(&ch.mass_matrix());
                velocity.rows_mut(o, n).copy_from(&DVector::from_column_slice(ch.velocities()));
            }
        }
    }
    let mut problem = ContactProblem {
        groups,
        points: Vec::new(),
        normal_jacobian: DMatrix::zeros(0, dof),
        tangent_jacobian: DMatrix::zeros(0, dof),
        mass,
        velocity,
    };

    let mut n_rows: Vec<RowDVector<f64>> = Vec::new();
    let mut t_rows: Vec<RowDVector<f64>> = Vec::new();
    for (k, c) in contacts.iter().enumerate() {
        let n = c.contact_normal();
        let (t1, t2) = crate::geometry::tangent_basis(&n);
        for p in &c.manifold.points {
            let rel = point_jacobian(state, &problem, c.a, &p.position)
                - point_jacobian(state, &problem, c.b, &p.position);
            let nrow = n.transpose() * &rel;
            let approach = nrow.dot(&problem.velocity.transpose());
            if approach > eps_v {
                continue;
            }
            n_rows.push(nrow);
            t_rows.push(t1.transpose() * &rel);
            t_rows.push(t2.transpose() * &rel);
            problem.points.push(ConstrainedPoint { pair: k, position: p.position, normal: n, tangents: [t1, t2] });
        }
    }
    let stack = |rows: &[RowDVector<f64>]| {
        let mut m = DMatrix::zeros(rows.len(), dof);
        for (i, r) in rows.iter().enumerate() {
            m.row_mut(i).copy_from(r);
        }
        m
    };
    problem.normal_jacobian = stack(&n_rows);
    problem.tangent_jacobian = stack(&t_rows);
    problem
}

/// Computes the post-impulse velocities `k(v*)`.
pub fn solve_contact(problem: &ContactProblem) -> Result<ContactSolution, ContactError> {
    let k = problem.points.len();
    if k == 0 {
        return Ok(ContactSolution {
            normal_impulses: DVector::zeros(0),
            tangent_impulses: DVector::zeros(0),
            velocity: problem.velocity.clone(),
            pivots: 0,
        });
    }
    let dof = problem.dof();
    let mut j = DMatrix::zeros(3 * k, dof);
    j.rows_mut(0, k).copy_from(&problem.normal_jacobian);
    j.rows_mut(k, 2 * k).copy_from(&problem.tangent_jacobian);
    let chol = problem.mass.clone().cholesky().ok_or(ContactError::SingularMass)?;
    let minv_jt = chol.solve(&j.transpose());
    let a = &j * &minv_jt;
    let a = 0.5 * (&a + a.transpose());
    let b = &j * &problem.velocity;
    let sol = lcp::solve_mixed(&a, &b, k, None)?;
    let lambda = DVector::from_iterator(3 * k, sol.normal.iter().chain(sol.free.iter()).copied());
    let velocity = &problem.velocity + minv_jt * lambda;
    Ok(ContactSolution { normal_impulses: sol.normal, tangent_impulses: sol.free, velocity, pivots: sol.pivots })
}

/// Builds, solves and applies the contact impulses; returns the solution
/// when at least one point was constrained.
pub fn apply_contact_impulses(
    state: &mut SystemState,
    contacts: &[PairContact],
    eps_v: f64,
) -> Result<Option<ContactSolution>, ContactError> {
    if contacts.is_empty() {
        return Ok(None);
    }
    let problem = build_contact_problem(state, contacts, eps_v);
    if problem.points.is_empty() {
        return Ok(None);
    }
    let sol = solve_contact(&problem)?;
    problem.store_velocity(state, &sol.velocity);
    Ok(Some(sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{contact_manifold, pairwise_distance, separating_plane, DEFAULT_EPS_GEO};
    use crate::{ConvexPolytope, Pose, RigidBody};
    use approx::assert_relative_eq;

    fn resting_cube(v: Vec3, w: Vec3) -> (SystemState, Vec<PairContact>) {
        let mut s = SystemState::default();
        let g = s.add_body(RigidBody::fixed(
            "ground",
            ConvexPolytope::cuboid(Vec3::new(5.0, 5.0, 0.5)),
            Pose::from_position(Vec3::new(0.0, 0.0, -1.0)),
        ));
        let c = s.add_body(
            RigidBody::new("cube", ConvexPolytope::cuboid(Vec3::new(0.5, 0.5, 0.5)), 1.0).unwrap().moving(v, w),
        );
        let contacts = contacts_between(&s, g, c);
        (s, contacts)
    }

    fn contacts_between(s: &SystemState, a: BodyRef, b: BodyRef) -> Vec<PairContact> {
        let (pa, pb) = (s.pose(a), s.pose(b));
        let d = pairwise_distance(s.polytope(a), &pa, s.polytope(b), &pb).unwrap();
        let plane = separating_plane(s.polytope(a), &pa, s.polytope(b), &pb, &d, DEFAULT_EPS_GEO);
        let m = contact_manifold(
            s.polytope(a),
            &pa,
            |p| crate::dynamics::point_velocity(s, a, p),
            s.polytope(b),
            &pb,
            |p| crate::dynamics::point_velocity(s, b, p),
            &plane,
            DEFAULT_EPS_GEO,
        )
        .unwrap();
        vec![PairContact { a, b, manifold: m }]
    }

    #[test]
    fn gap_functions() {
        let z = Vec3::z();
        assert_eq!(phi(&Vec3::x(), &Vec3::x(), &z), 0.0);
        assert_eq!(phi(&z, &Vec3::zeros(), &z), 1.0);
        assert_eq!(phi(&z, &Vec3::zeros(), &-z), -1.0);

        let mut s = SystemState::default();
        let poly = ConvexPolytope::cuboid(Vec3::new(0.5, 0.5, 0.5));
        let a = s.add_body(RigidBody::new("a", poly.clone(), 1.0).unwrap().moving(z, Vec3::zeros()));
        let b = s.add_body(RigidBody::fixed("b", poly.clone(), Pose::from_position(Vec3::new(0.0, 0.0, -1.0))));
        let st = s.add_body(RigidBody::fixed("c", poly.clone(), Pose::identity()));
        assert_eq!(phi_dot(&s, st, b, &Vec3::zeros(), &z), 0.0);
        assert_eq!(phi_dot(&s, a, b, &Vec3::zeros(), &z), 1.0);
        let r = s.add_body(
            RigidBody::new("r", poly, 1.0)
                .unwrap()
                .at(Pose::from_position(Vec3::new(0.0, 0.0, 0.5)))
                .moving(Vec3::zeros(), Vec3::y()),
        );
        assert_eq!(phi_dot(&s, r, b, &Vec3::zeros(), &z), 0.0);
    }

    #[test]
    fn problem_shape_for_resting_cube() {
        let (s, contacts) = resting_cube(Vec3::new(0.0, 0.0, -1.0), Vec3::zeros());
        let p = build_contact_problem(&s, &contacts, DEFAULT_EPS_V);
        assert_eq!(p.normal_jacobian.nrows(), 4);
        assert_eq!(p.tangent_jacobian.nrows(), 8);
        assert_eq!(p.dof(), 6);
        // receding: nothing constrained
        let (s, contacts) = resting_cube(Vec3::new(0.0, 0.0, 1.0), Vec3::zeros());
        assert!(build_contact_problem(&s, &contacts, DEFAULT_EPS_V).points.is_empty());
    }

    #[test]
    fn falling_cube_stops() {
        let (mut s, contacts) = resting_cube(Vec3::new(0.0, 0.0, -1.0), Vec3::zeros());
        let sol = apply_contact_impulses(&mut s, &contacts, DEFAULT_EPS_V).unwrap().unwrap();
        assert_relative_eq!(sol.total_normal_impulse(), 1.0, epsilon = 1e-8);
        assert!(s.bodies[1].linear_velocity.norm() < 1e-8);
        assert!(s.bodies[1].angular_velocity.norm() < 1e-8);
    }

    #[test]
    fn feasible_velocity_untouched() {
        let (s, contacts) = resting_cube(Vec3::new(0.0, 0.0, 1e-12), Vec3::zeros());
        let p = build_contact_problem(&s, &contacts, DEFAULT_EPS_V);
        let sol = solve_contact(&p).unwrap();
        assert!(sol.normal_impulses.iter().all(|&l| l.abs() < 1e-12));
        assert_relative_eq!(sol.velocity, p.velocity, epsilon = 1e-12);
    }

    #[test]
    fn off_center_vertex_impact() {
        let mut s = SystemState::default();
        let g = s.add_body(RigidBody::fixed(
            "ground",
            ConvexPolytope::cuboid(Vec3::new(5.0, 5.0, 0.5)),
            Pose::from_position(Vec3::new(0.0, 0.0, -0.5)),
        ));
        let diag = Vec3::new(1.0, 1.0, 1.0).normalize();
        let tilt = crate::Quat::rotation_between(&diag, &Vec3::new(0.3, 0.1, -1.0).normalize()).unwrap();
        let cube = ConvexPolytope::cuboid(Vec3::new(0.5, 0.5, 0.5));
        let lowest = cube.vertices().iter().map(|v| (tilt * v).z).fold(f64::MAX, f64::min);
        let c = s.add_body(
            RigidBody::new("cube", cube, 1.0)
                .unwrap()
                .at(Pose::new(Vec3::new(0.0, 0.0, -lowest), tilt))
                .moving(Vec3::new(0.2, 0.0, -1.0), Vec3::zeros()),
        );
        let contacts = contacts_between(&s, g, c);
        assert_eq!(contacts[0].manifold.points.len(), 1);
        let p = build_contact_problem(&s, &contacts, DEFAULT_EPS_V);
        assert_eq!(p.normal_jacobian.nrows(), 1);
        let sol = solve_contact(&p).unwrap();
        let after = &p.normal_jacobian * &sol.velocity;
        assert!(after[0] >= -1e-9);
        assert!((&p.tangent_jacobian * &sol.velocity).amax() < 1e-9);
        assert!(p.kinetic_energy(&sol.velocity) <= p.kinetic_energy(&p.velocity) + 1e-9);
        // the impulse sets the cube spinning
        let w = Vec3::new(sol.velocity[3], sol.velocity[4], sol.velocity[5]);
        assert!(w.norm() > 1e-3);
    }
}
