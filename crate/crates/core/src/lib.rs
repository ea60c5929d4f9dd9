//! Interpenetration-free simulation of rigid bodies and serial articulated
//! chains with convex polytopic geometry.
//!
//! The integrator is first order (position with the old velocity, then
//! velocity at the new position, then contact impulses). Every step is sized
//! by a safe-step controller so that changes to the contact manifold between
//! any two bodies are never skipped:
//!
//! * disjoint pairs use conservative advancement ([`advancement::ca_step`],
//!   [`advancement::multibody_motion_bound`]);
//! * touching pairs use the separating plane: a bound on the time before an
//!   off-plane vertex can reach it ([`advancement::delta_t_star`]) and a trial
//!   integration bound on the time before an on-plane vertex leaves it
//!   ([`advancement::delta_t_dagger`]);
//! * transient contacts are advanced by a minimum step.
//!
//! Contact impulses are computed by a no-slip, zero-restitution mixed LCP
//! solved with Lemke's algorithm ([`lcp`]).

pub mod advancement;
pub mod contact;
pub mod dynamics;
pub mod geometry;
pub mod lcp;
pub mod output;
pub mod scenario;
pub mod simulator;
pub mod verify;

pub use nalgebra;

/// World-frame 3-vector.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;
/// Unit quaternion used for orientations.
pub type Quat = nalgebra::UnitQuaternion<f64>;

pub use dynamics::{BodyRef, MultibodyChain, RigidBody, SystemState};
pub use geometry::{ConvexPolytope, Pose};

pub use simulator::{SimConfig, SimEvent, Simulator};
