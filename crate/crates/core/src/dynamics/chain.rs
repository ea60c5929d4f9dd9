use super::{check_mass_properties, DynamicsError};
use crate::geometry::{ConvexPolytope, Pose};
use crate::{Mat3, Quat, Vec3};
use nalgebra::{DMatrix, DVector, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JointType {
    Revolute,
    Prismatic,
}

/// One link of a serial chain together with the joint connecting it to its
/// parent.
///
/// The parent frame is the previous link's frame (or the base frame for the
/// first link). A link frame sits at the link's center of mass and has the
/// orientation of the joint frame after joint motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub joint: JointType,
    /// Unit joint axis in the parent frame.
    pub joint_axis: Vec3,
    /// Joint position in the parent frame.
    pub joint_location: Vec3,
    /// From the joint to this link's center of mass, in the link frame.
    pub com_offset: Vec3,
    pub polytope: ConvexPolytope,
    pub mass: f64,
    /// Link-frame inertia about the center of mass.
    pub inertia: Mat3,
}

impl Link {
    /// Revolute link with uniform-density inertia.
    pub fn revolute(axis: Vec3, joint_location: Vec3, com_offset: Vec3, polytope: ConvexPolytope, mass: f64) -> Self {
        let inertia = polytope.uniform_inertia(mass);
        Self { joint: JointType::Revolute, joint_axis: axis, joint_location, com_offset, polytope, mass, inertia }
    }

    pub fn prismatic(axis: Vec3, joint_location: Vec3, com_offset: Vec3, polytope: ConvexPolytope, mass: f64) -> Self {
        Self { joint: JointType::Prismatic, ..Self::revolute(axis, joint_location, com_offset, polytope, mass) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Base {
    pub pose: Pose,
    pub fixed: bool,
    /// Velocity of the base frame origin.
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
}

impl Base {
    pub fn fixed(pose: Pose) -> Self {
        Self { pose, fixed: true, linear_velocity: Vec3::zeros(), angular_velocity: Vec3::zeros() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frame {
    joint: Vec3,
    axis: Vec3,
    pose: Pose,
    linear: Vec3,
    angular: Vec3,
}

/// Serial chain of links attached to a base.
#[derive(Debug, Clone, PartialEq)]
pub struct MultibodyChain {
    pub name: String,
    base: Base,
    links: Vec<Link>,
    q: Vec<f64>,
    qd: Vec<f64>,
    /// Applied joint forces or torques.
    pub joint_forces: Vec<f64>,
    frames: Vec<Frame>,
}

impl MultibodyChain {
    pub fn new(name: impl Into<String>, base: Base, mut links: Vec<Link>) -> Result<Self, DynamicsError> {
        let name = name.into();
        let fail = |reason: String| DynamicsError::InvalidChain { name: name.clone(), reason };
        for (i, l) in links.iter_mut().enumerate() {
            let n = l.joint_axis.norm();
            if (n - 1.0).abs() > 1e-9 {
                return Err(fail(format!("joint {i} axis is not unit length (norm {n})")));
            }
            l.joint_axis /= n;
            check_mass_properties(l.mass, &l.inertia).map_err(|r| fail(format!("link {i}: {r}")))?;
        }
        let n = links.len();
        let mut chain =
            Self { name, base, links, q: vec![0.0; n], qd: vec![0.0; n], joint_forces: vec![0.0; n], frames: Vec::new() };
        chain.refresh();
        Ok(chain)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn base(&self) -> &Base {
        &self.base
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn coordinates(&self) -> &[f64] {
        &self.q
    }

    pub fn velocities(&self) -> &[f64] {
        &self.qd
    }

    /// # Panics
    /// If the length differs from the link count.
    pub fn set_coordinates(&mut self, q: &[f64]) {
        assert_eq!(q.len(), self.len(), "coordinate count");
        self.q.copy_from_slice(q);
        self.refresh();
    }

    /// # Panics
    /// If the length differs from the link count.
    pub fn set_velocities(&mut self, qd: &[f64]) {
        assert_eq!(qd.len(), self.len(), "velocity count");
        self.qd.copy_from_slice(qd);
        self.refresh();
    }

    pub fn set_base(&mut self, base: Base) {
        self.base = base;
        self.refresh();
    }

    pub(crate) fn advance_coordinates(&mut self, h: f64) {
        if h == 0.0 {
            return;
        }
        for (q, v) in self.q.iter_mut().zip(&self.qd) {
            *q += h * v;
        }
        if !self.base.fixed {
            let b = &mut self.base;
            b.pose.position += b.linear_velocity * h;
            b.pose.orientation = super::integrate_orientation(&b.pose.orientation, &b.angular_velocity, h);
        }
        self.refresh();
    }

    fn refresh(&mut self) {
        let mut frames = Vec::with_capacity(self.links.len());
        let mut origin = self.base.pose.position;
        let mut rot = self.base.pose.orientation;
        let mut v = self.base.linear_velocity;
        let mut w = self.base.angular_velocity;
        for (i, l) in self.links.iter().enumerate() {
            let joint = origin + rot * l.joint_location;
            let axis = rot * l.joint_axis;
            let (q, qd) = (self.q[i], self.qd[i]);
            let (new_rot, com, lin, ang) = match l.joint {
                JointType::Revolute => {
                    let r = rot * Quat::from_axis_angle(&Unit::new_unchecked(l.joint_axis), q);
                    let ang = w + axis * qd;
                    let com = joint + r * l.com_offset;
                    let lin = v + w.cross(&(joint - origin)) + ang.cross(&(com - joint));
                    (r, com, lin, ang)
                }
                JointType::Prismatic => {
                    let com = joint + axis * q + rot * l.com_offset;
                    let lin = v + w.cross(&(com - origin)) + axis * qd;
                    (rot, com, lin, w)
                }
            };
            frames.push(Frame { joint, axis, pose: Pose::new(com, new_rot), linear: lin, angular: ang });
            origin = com;
            rot = new_rot;
            v = lin;
            w = ang;
        }
        self.frames = frames;
    }

    pub fn link_pose(&self, link: usize) -> Pose {
        self.frames[link].pose
    }

    /// Velocity of the link's center of mass and its angular velocity.
    pub fn link_twist(&self, link: usize) -> (Vec3, Vec3) {
        let f = &self.frames[link];
        (f.linear, f.angular)
    }

    /// World positions of all joints.
    pub fn joint_positions(&self) -> Vec<Vec3> {
        if self.frames.is_empty() {
            return vec![self.base.pose.position];
        }
        self.frames.iter().map(|f| f.joint).collect()
    }

    /// World joint axes.
    pub fn joint_axes(&self) -> Vec<Vec3> {
        self.frames.iter().map(|f| f.axis).collect()
    }

    pub fn point_velocity(&self, link: usize, p: &Vec3) -> Vec3 {
        let f = &self.frames[link];
        f.linear + f.angular.cross(&(p - f.pose.position))
    }

    /// Linear velocity Jacobian (3 x n) of the point of `link` at world `p`.
    pub fn point_jacobian(&self, link: usize, p: &Vec3) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(3, self.len());
        for (k, f) in self.frames.iter().enumerate().take(link + 1) {
            let col = match self.links[k].joint {
                JointType::Revolute => f.axis.cross(&(p - f.joint)),
                JointType::Prismatic => f.axis,
            };
            j.fixed_view_mut::<3, 1>(0, k).copy_from(&col);
        }
        j
    }

    fn world_inertia(&self, link: usize) -> Mat3 {
        let r = self.frames[link].pose.orientation.to_rotation_matrix();
        r.matrix() * self.links[link].inertia * r.matrix().transpose()
    }

    /// Joint-space mass matrix.
    pub fn mass_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        let mut lin = vec![Vec3::zeros(); n];
        let mut ang = vec![Vec3::zeros(); n];
        for i in 0..n {
            let c = self.frames[i].pose.position;
            for k in 0..=i {
                let f = &self.frames[k];
                (lin[k], ang[k]) = match self.links[k].joint {
                    JointType::Revolute => (f.axis.cross(&(c - f.joint)), f.axis),
                    JointType::Prismatic => (f.axis, Vec3::zeros()),
                };
            }
            let mass = self.links[i].mass;
            let iw = self.world_inertia(i);
            for j in 0..=i {
                let iaj = iw * ang[j];
                for k in 0..=j {
                    let v = mass * lin[j].dot(&lin[k]) + ang[k].dot(&iaj);
                    m[(j, k)] += v;
                }
            }
        }
        for j in 0..n {
            for k in 0..j {
                m[(k, j)] = m[(j, k)];
            }
        }
        m
    }

    /// Generalized forces needed for zero joint acceleration: Coriolis,
    /// centrifugal and gravity terms.
    pub fn bias_forces(&self, gravity: &Vec3) -> DVector<f64> {
        let n = self.len();
        let mut acc = Vec::with_capacity(n);
        let mut alpha_prev = Vec3::zeros();
        let mut a_prev = -gravity;
        let mut w_prev = self.base.angular_velocity;
        let mut origin = self.base.pose.position;
        for (i, f) in self.frames.iter().enumerate() {
            let (c, w) = (f.pose.position, f.angular);
            let (alpha, a) = match self.links[i].joint {
                JointType::Revolute => {
                    let alpha = alpha_prev + w_prev.cross(&(f.axis * self.qd[i]));
                    let r1 = f.joint - origin;
                    let r2 = c - f.joint;
                    let a = a_prev
                        + alpha_prev.cross(&r1)
                        + w_prev.cross(&w_prev.cross(&r1))
                        + alpha.cross(&r2)
                        + w.cross(&w.cross(&r2));
                    (alpha, a)
                }
                JointType::Prismatic => {
                    let r = c - origin;
                    let a = a_prev
                        + alpha_prev.cross(&r)
                        + w_prev.cross(&w_prev.cross(&r))
                        + 2.0 * w_prev.cross(&(f.axis * self.qd[i]));
                    (alpha_prev, a)
                }
            };
            acc.push((alpha, a));
            alpha_prev = alpha;
            a_prev = a;
            w_prev = w;
            origin = c;
        }
        let mut tau = DVector::zeros(n);
        let mut f_next = Vec3::zeros();
        let mut n_next = Vec3::zeros();
        let mut joint_next = Vec3::zeros();
        for i in (0..n).rev() {
            let fr = &self.frames[i];
            let (alpha, a) = acc[i];
            let c = fr.pose.position;
            let iw = self.world_inertia(i);
            let force = self.links[i].mass * a + f_next;
            // moment about this link's joint
            let moment = iw * alpha + fr.angular.cross(&(iw * fr.angular))
                + n_next
                + (joint_next - c).cross(&f_next)
                + (c - fr.joint).cross(&force);
            tau[i] = match self.links[i].joint {
                JointType::Revolute => fr.axis.dot(&moment),
                JointType::Prismatic => fr.axis.dot(&force),
            };
            f_next = force;
            n_next = moment;
            joint_next = fr.joint;
        }
        tau
    }

    /// Joint accelerations under gravity and the applied joint forces.
    pub fn forward_dynamics(&self, gravity: &Vec3) -> Result<DVector<f64>, DynamicsError> {
        if !self.base.fixed {
            return Err(DynamicsError::FloatingBase(0));
        }
        if self.is_empty() {
            return Ok(DVector::zeros(0));
        }
        let rhs = DVector::from_column_slice(&self.joint_forces) - self.bias_forces(gravity);
        let chol = self.mass_matrix().cholesky().ok_or(DynamicsError::SingularMassMatrix)?;
        Ok(chol.solve(&rhs))
    }

    pub fn kinetic_energy(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let f = &self.frames[i];
                0.5 * self.links[i].mass * f.linear.norm_squared()
                    + 0.5 * f.angular.dot(&(self.world_inertia(i) * f.angular))
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn rod() -> ConvexPolytope {
        ConvexPolytope::cuboid(Vec3::new(0.5, 0.05, 0.05))
    }

    fn planar(n: usize) -> MultibodyChain {
        let links = (0..n)
            .map(|i| {
                let loc = if i == 0 { Vec3::zeros() } else { Vec3::new(0.5, 0.0, 0.0) };
                Link::revolute(Vec3::z(), loc, Vec3::new(0.5, 0.0, 0.0), rod(), 1.0)
            })
            .collect();
        MultibodyChain::new("arm", Base::fixed(Pose::identity()), links).unwrap()
    }

    #[test]
    fn joint_locations_by_hand() {
        let mut c = planar(2);
        let j = c.joint_positions();
        assert_relative_eq!(j[0], Vec3::zeros());
        assert_relative_eq!(j[1], Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        c.set_coordinates(&[FRAC_PI_2, 0.0]);
        assert_relative_eq!(c.joint_positions()[1], Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
        let empty = MultibodyChain::new("e", Base::fixed(Pose::from_position(Vec3::x())), vec![]).unwrap();
        assert_eq!(empty.joint_positions(), vec![Vec3::x()]);
    }

    #[test]
    fn pendulum_acceleration() {
        // nearly a point mass at distance 1.3 below a horizontal axis
        let ell = 1.3;
        let mut link = Link::revolute(Vec3::y(), Vec3::zeros(), Vec3::new(0.0, 0.0, -ell), rod(), 2.0);
        link.inertia = Mat3::identity() * 1e-14;
        let mut c = MultibodyChain::new("p", Base::fixed(Pose::identity()), vec![link]).unwrap();
        for theta in [0.0, 0.3, 1.0, FRAC_PI_2, 2.5] {
            c.set_coordinates(&[theta]);
            c.set_velocities(&[0.7]);
            let qdd = c.forward_dynamics(&Vec3::new(0.0, 0.0, -9.8)).unwrap()[0];
            assert_relative_eq!(qdd, -(9.8 / ell) * theta.sin(), epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn pendulum_velocity_step() {
        let mut link = Link::revolute(Vec3::y(), Vec3::zeros(), Vec3::new(0.0, 0.0, -1.0), rod(), 1.0);
        link.inertia = Mat3::identity() * 1e-14;
        let mut c = MultibodyChain::new("p", Base::fixed(Pose::identity()), vec![link]).unwrap();
        c.set_coordinates(&[FRAC_PI_2]);
        let mut s = crate::SystemState::default();
        s.add_chain(c);
        super::super::integrate_velocity(&mut s, 0.01).unwrap();
        assert_relative_eq!(s.chains[0].velocities()[0], -0.098, epsilon = 1e-12);
    }

    #[test]
    fn jacobian_matches_twist() {
        let mut c = planar(3);
        c.set_coordinates(&[0.3, -0.4, 1.1]);
        c.set_velocities(&[0.5, 2.0, -1.0]);
        let p = c.link_pose(2).transform_point(&Vec3::new(0.2, 0.05, 0.0));
        let j = c.point_jacobian(2, &p);
        let v = j * DVector::from_column_slice(c.velocities());
        assert_relative_eq!(Vec3::new(v[0], v[1], v[2]), c.point_velocity(2, &p), epsilon = 1e-14);
    }

    #[test]
    fn energy_matches_mass_matrix() {
        let mut c = planar(3);
        c.set_coordinates(&[0.3, -0.4, 1.1]);
        c.set_velocities(&[0.5, 2.0, -1.0]);
        let v = DVector::from_column_slice(c.velocities());
        let m = c.mass_matrix();
        assert_relative_eq!(0.5 * v.dot(&(&m * &v)), c.kinetic_energy(), epsilon = 1e-12);
    }

    #[test]
    fn floating_base_rejected() {
        let mut base = Base::fixed(Pose::identity());
        base.fixed = false;
        let c = MultibodyChain::new("f", base, vec![]).unwrap();
        assert_eq!(c.forward_dynamics(&Vec3::zeros()), Err(DynamicsError::FloatingBase(0)));
    }

    #[test]
    fn bad_axis_rejected() {
        let l = Link::revolute(Vec3::new(1.0, 1.0, 0.0), Vec3::zeros(), Vec3::x(), rod(), 1.0);
        assert!(MultibodyChain::new("x", Base::fixed(Pose::identity()), vec![l]).is_err());
    }
}
