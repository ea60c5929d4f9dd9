//! Rigid bodies, serial chains and the first-order integration primitives.

mod chain;

pub use chain::{Base, JointType, Link, MultibodyChain};

use crate::geometry::{ConvexPolytope, Pose};
use crate::{Mat3, Quat, Vec3};
use nalgebra::{DVector, Quaternion};
use thiserror::Error;

/// Default gravitational acceleration (m/s^2).
pub const DEFAULT_GRAVITY: Vec3 = Vec3::new(0.0, 0.0, -9.8);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("mass matrix is not positive definite")]
    SingularMassMatrix,
    #[error("chain {0} has a floating base; only fixed-base chains are simulated")]
    FloatingBase(usize),
    #[error("invalid body '{name}': {reason}")]
    InvalidBody { name: String, reason: String },
    #[error("invalid chain '{name}': {reason}")]
    InvalidChain { name: String, reason: String },
}

/// A free (or static) rigid body. The body frame origin is its center of
/// mass.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBody {
    pub name: String,
    pub polytope: ConvexPolytope,
    pub mass: f64,
    /// Body-frame inertia tensor about the center of mass.
    pub inertia: Mat3,
    pub pose: Pose,
    pub linear_velocity: Vec3,
    /// World frame.
    pub angular_velocity: Vec3,
    pub external_force: Vec3,
    pub external_torque: Vec3,
    pub is_static: bool,
}

pub(crate) fn check_mass_properties(mass: f64, inertia: &Mat3) -> Result<(), String> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(format!("mass must be positive (got {mass})"));
    }
    if (inertia - inertia.transpose()).abs().max() > 1e-9 * inertia.abs().max() {
        return Err("inertia tensor is not symmetric".into());
    }
    let eig = inertia.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err("inertia tensor is not positive definite".into());
    }
    Ok(())
}

impl RigidBody {
    /// Dynamic body with uniform density.
    pub fn new(name: impl Into<String>, polytope: ConvexPolytope, mass: f64) -> Result<Self, DynamicsError> {
        let inertia = polytope.uniform_inertia(mass);
        Self::with_inertia(name, polytope, mass, inertia)
    }

    pub fn with_inertia(
        name: impl Into<String>,
        polytope: ConvexPolytope,
        mass: f64,
        inertia: Mat3,
    ) -> Result<Self, DynamicsError> {
        let name = name.into();
        check_mass_properties(mass, &inertia).map_err(|reason| DynamicsError::InvalidBody { name: name.clone(), reason })?;
        Ok(Self {
            name,
            polytope,
            mass,
            inertia,
            pose: Pose::identity(),
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            external_force: Vec3::zeros(),
            external_torque: Vec3::zeros(),
            is_static: false,
        })
    }

    /// Immovable body (mass properties are irrelevant but kept valid).
    pub fn fixed(name: impl Into<String>, polytope: ConvexPolytope, pose: Pose) -> Self {
        let inertia = polytope.uniform_inertia(1.0);
        Self {
            name: name.into(),
            polytope,
            mass: 1.0,
            inertia,
            pose,
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            external_force: Vec3::zeros(),
            external_torque: Vec3::zeros(),
            is_static: true,
        }
    }

    pub fn at(mut self, pose: Pose) -> Self {
        self.pose = pose;
        self
    }

    pub fn moving(mut self, linear: Vec3, angular: Vec3) -> Self {
        self.linear_velocity = linear;
        self.angular_velocity = angular;
        self
    }

    pub fn world_inertia(&self) -> Mat3 {
        let r = self.pose.orientation.to_rotation_matrix();
        r.matrix() * self.inertia * r.matrix().transpose()
    }

    pub fn point_velocity(&self, p: &Vec3) -> Vec3 {
        if self.is_static {
            return Vec3::zeros();
        }
        self.linear_velocity + self.angular_velocity.cross(&(p - self.pose.position))
    }

    pub fn kinetic_energy(&self) -> f64 {
        if self.is_static {
            return 0.0;
        }
        let w = &self.angular_velocity;
        0.5 * self.mass * self.linear_velocity.norm_squared() + 0.5 * w.dot(&(self.world_inertia() * w))
    }

    /// Linear and angular acceleration from gravity and the applied wrench,
    /// including the gyroscopic term.
    pub fn acceleration(&self, gravity: &Vec3) -> Result<(Vec3, Vec3), DynamicsError> {
        if self.is_static {
            return Ok((Vec3::zeros(), Vec3::zeros()));
        }
        let iw = self.world_inertia();
        let w = &self.angular_velocity;
        let rhs = self.external_torque - w.cross(&(iw * w));
        let alpha = iw.cholesky().ok_or(DynamicsError::SingularMassMatrix)?.solve(&rhs);
        Ok((gravity + self.external_force / self.mass, alpha))
    }
}

/// A participant in a contact: a free body or one link of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BodyRef {
    Body(usize),
    Link { chain: usize, link: usize },
}

impl std::fmt::Display for BodyRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BodyRef::Body(i) => write!(f, "b{i}"),
            BodyRef::Link { chain, link } => write!(f, "c{chain}.{link}"),
        }
    }
}

/// Everything that evolves during a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub time: f64,
    pub gravity: Vec3,
    pub bodies: Vec<RigidBody>,
    pub chains: Vec<MultibodyChain>,
}

impl Default for SystemState {
    fn default() -> Self {
        Self { time: 0.0, gravity: DEFAULT_GRAVITY, bodies: Vec::new(), chains: Vec::new() }
    }
}

/// Generalized accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct Accelerations {
    /// (linear, angular) per free body.
    pub bodies: Vec<(Vec3, Vec3)>,
    /// Joint accelerations per chain.
    pub chains: Vec<DVector<f64>>,
}

impl SystemState {
    pub fn new(gravity: Vec3) -> Self {
        Self { gravity, ..Self::default() }
    }

    pub fn add_body(&mut self, body: RigidBody) -> BodyRef {
        self.bodies.push(body);
        BodyRef::Body(self.bodies.len() - 1)
    }

    pub fn add_chain(&mut self, chain: MultibodyChain) -> usize {
        self.chains.push(chain);
        self.chains.len() - 1
    }

    /// Every collidable participant, bodies first, then links in chain order.
    pub fn participants(&self) -> Vec<BodyRef> {
        let mut out: Vec<BodyRef> = (0..self.bodies.len()).map(BodyRef::Body).collect();
        for (c, chain) in self.chains.iter().enumerate() {
            out.extend((0..chain.len()).map(|l| BodyRef::Link { chain: c, link: l }));
        }
        out
    }

    pub fn polytope(&self, r: BodyRef) -> &ConvexPolytope {
        match r {
            BodyRef::Body(i) => &self.bodies[i].polytope,
            BodyRef::Link { chain, link } => &self.chains[chain].links()[link].polytope,
        }
    }

    pub fn pose(&self, r: BodyRef) -> Pose {
        match r {
            BodyRef::Body(i) => self.bodies[i].pose,
            BodyRef::Link { chain, link } => self.chains[chain].link_pose(link),
        }
    }

    /// Linear velocity of the frame origin and angular velocity.
    pub fn twist(&self, r: BodyRef) -> (Vec3, Vec3) {
        match r {
            BodyRef::Body(i) => {
                let b = &self.bodies[i];
                if b.is_static {
                    (Vec3::zeros(), Vec3::zeros())
                } else {
                    (b.linear_velocity, b.angular_velocity)
                }
            }
            BodyRef::Link { chain, link } => self.chains[chain].link_twist(link),
        }
    }

    /// Whether the participant can never move.
    pub fn is_immobile(&self, r: BodyRef) -> bool {
        match r {
            BodyRef::Body(i) => self.bodies[i].is_static,
            BodyRef::Link { .. } => false,
        }
    }

    pub fn name(&self, r: BodyRef) -> String {
        match r {
            BodyRef::Body(i) => self.bodies[i].name.clone(),
            BodyRef::Link { chain, link } => format!("{}[{}]", self.chains[chain].name, link),
        }
    }

    /// Largest linear or joint speed, used for quiescence detection.
    pub fn max_speed(&self) -> f64 {
        let mut s: f64 = 0.0;
        for b in self.bodies.iter().filter(|b| !b.is_static) {
            s = s.max(b.linear_velocity.norm()).max(b.angular_velocity.norm());
        }
        for c in &self.chains {
            s = s.max(c.velocities().iter().fold(0.0, |m: f64, v| m.max(v.abs())));
        }
        s
    }
}

/// Generalized accelerations at the current state.
pub fn forward_dynamics(state: &SystemState) -> Result<Accelerations, DynamicsError> {
    let bodies = state.bodies.iter().map(|b| b.acceleration(&state.gravity)).collect::<Result<_, _>>()?;
    let chains = state
        .chains
        .iter()
        .enumerate()
        .map(|(i, c)| c.forward_dynamics(&state.gravity).map_err(|e| relabel(e, i)))
        .collect::<Result<_, _>>()?;
    Ok(Accelerations { bodies, chains })
}

fn relabel(e: DynamicsError, chain: usize) -> DynamicsError {
    match e {
        DynamicsError::FloatingBase(_) => DynamicsError::FloatingBase(chain),
        other => other,
    }
}

/// First-order quaternion update `q + (h/2) w*q`, renormalized.
pub fn integrate_orientation(q: &Quat, omega: &Vec3, h: f64) -> Quat {
    if h == 0.0 || *omega == Vec3::zeros() {
        return *q;
    }
    let w = Quaternion::new(0.0, omega.x, omega.y, omega.z);
    let raw = q.quaternion() + (w * q.quaternion()) * (0.5 * h);
    Quat::from_quaternion(raw)
}

/// Advances positions by `h` times the current velocities.
pub fn integrate_position(state: &mut SystemState, h: f64) {
    for b in state.bodies.iter_mut().filter(|b| !b.is_static) {
        b.pose.position += b.linear_velocity * h;
        b.pose.orientation = integrate_orientation(&b.pose.orientation, &b.angular_velocity, h);
    }
    for c in &mut state.chains {
        c.advance_coordinates(h);
    }
    state.time += h;
}

/// Advances velocities by `h` times the accelerations at the current state.
pub fn integrate_velocity(state: &mut SystemState, h: f64) -> Result<(), DynamicsError> {
    if h == 0.0 {
        return Ok(());
    }
    let acc = forward_dynamics(state)?;
    apply_accelerations(state, &acc, h);
    Ok(())
}

pub(crate) fn apply_accelerations(state: &mut SystemState, acc: &Accelerations, h: f64) {
    for (b, (a, alpha)) in state.bodies.iter_mut().zip(&acc.bodies) {
        if !b.is_static {
            b.linear_velocity += a * h;
            b.angular_velocity += alpha * h;
        }
    }
    for (c, qdd) in state.chains.iter_mut().zip(&acc.chains) {
        let v: Vec<f64> = c.velocities().iter().zip(qdd.iter()).map(|(v, a)| v + h * a).collect();
        c.set_velocities(&v);
    }
}

/// World velocity of the material point of `r` currently at `p`.
pub fn point_velocity(state: &SystemState, r: BodyRef, p: &Vec3) -> Vec3 {
    match r {
        BodyRef::Body(i) => state.bodies[i].point_velocity(p),
        BodyRef::Link { chain, link } => state.chains[chain].point_velocity(link, p),
    }
}

/// World positions of the chain's joints.
pub fn joint_world_locations(chain: &MultibodyChain) -> Vec<Vec3> {
    chain.joint_positions()
}

/// Kinetic plus gravitational potential energy (zero potential at the
/// origin).
pub fn mechanical_energy(state: &SystemState) -> f64 {
    let g = &state.gravity;
    let mut e = 0.0;
    for b in &state.bodies {
        e += b.kinetic_energy() - b.mass * g.dot(&b.pose.position);
    }
    for c in &state.chains {
        e += c.kinetic_energy();
        for (l, link) in c.links().iter().enumerate() {
            e -= link.mass * g.dot(&c.link_pose(l).position);
        }
    }
    e
}
