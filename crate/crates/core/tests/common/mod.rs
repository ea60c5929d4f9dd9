//! Random scenes shared by the property and acceptance tests.
#![allow(dead_code)]

use polysim::contact::{apply_contact_impulses, DEFAULT_EPS_V};
use polysim::dynamics::{integrate_orientation, Base, Link};
use polysim::geometry::{pairwise_distance, DistanceResult, GeometryError, RegularSolid, DEFAULT_EPS_GEO};
use polysim::simulator::contact_snapshot;
use polysim::{ConvexPolytope, MultibodyChain, Pose, Quat, RigidBody, SystemState, Vec3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn in_ball(rng: &mut impl Rng, radius: f64) -> Vec3 {
    unit(rng) * radius * rng.gen::<f64>().cbrt()
}

/// Uniformly random rotation.
pub fn rotation(rng: &mut impl Rng) -> Quat {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = polysim::nalgebra::Quaternion::new(
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
        b * (2.0 * PI * u3).cos(),
    );
    Quat::from_quaternion(q)
}

/// Log-uniform sample in `[lo, hi]`.
pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

pub fn shape(rng: &mut impl Rng) -> ConvexPolytope {
    match rng.gen_range(0..6) {
        0 => ConvexPolytope::regular(RegularSolid::Tetrahedron, rng.gen_range(0.2..1.0)),
        1 => ConvexPolytope::regular(RegularSolid::Octahedron, rng.gen_range(0.2..1.0)),
        2 => ConvexPolytope::regular(RegularSolid::Icosahedron, rng.gen_range(0.2..1.0)),
        3 => ConvexPolytope::regular(RegularSolid::Dodecahedron, rng.gen_range(0.2..1.0)),
        _ => ConvexPolytope::cuboid(Vec3::new(rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0))),
    }
}

/// A randomly shaped, oriented and moving body at the origin.
pub fn body(rng: &mut impl Rng, name: &str) -> RigidBody {
    let speed = rng.gen_range(0.0..3.0);
    let spin = if rng.gen_bool(0.2) { 0.0 } else { log_uniform(rng, 1e-3, 10.0) };
    RigidBody::new(name, shape(rng), rng.gen_range(0.2..5.0))
        .unwrap()
        .at(Pose::new(Vec3::zeros(), rotation(rng)))
        .moving(unit(rng) * speed, unit(rng) * spin)
}

pub fn distance(a: &RigidBody, b: &RigidBody) -> Result<DistanceResult, GeometryError> {
    pairwise_distance(&a.polytope, &a.pose, &b.polytope, &b.pose)
}

/// Moves `b` along `dir` from `a`'s center until the distance is `gap`.
/// The distance along the ray is convex and zero at the start, so
/// bisection converges.
pub fn place_at_gap(a: &RigidBody, b: &mut RigidBody, dir: &Vec3, gap: f64) {
    let sep = |b: &mut RigidBody, s: f64| -> f64 {
        b.pose.position = a.pose.position + dir * s;
        distance(a, b).map(|d| d.distance).unwrap_or(-1.0)
    };
    let (mut lo, mut hi) = (0.0, a.polytope.bounding_radius() + b.polytope.bounding_radius() + gap + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if sep(b, mid) < gap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    sep(b, hi);
}

/// `body` after a first-order step of length `t` with constant velocities.
pub fn advanced(body: &RigidBody, t: f64) -> RigidBody {
    let mut out = body.clone();
    if !body.is_static {
        out.pose.position += body.linear_velocity * t;
        out.pose.orientation = integrate_orientation(&body.pose.orientation, &body.angular_velocity, t);
    }
    out
}

/// A disjoint pair at a log-uniform gap in `[1e-8, 1]`. Some pairs make
/// `b` pivot about its closest point, the hard case for step bounds.
pub fn disjoint_pair(rng: &mut impl Rng) -> (RigidBody, RigidBody) {
    let mut a = body(rng, "a");
    if rng.gen_bool(0.3) {
        a = RigidBody::fixed("a", a.polytope.clone(), a.pose);
    }
    let mut b = body(rng, "b");
    let gap = log_uniform(rng, 1.1e-8, 1.0);
    place_at_gap(&a, &mut b, &unit(rng), gap);
    if rng.gen_bool(0.3) {
        let d = distance(&a, &b).unwrap();
        let pivot = d.closest_point_b;
        let w = unit(rng) * rng.gen_range(0.1..10.0);
        b.angular_velocity = w;
        b.linear_velocity = w.cross(&(b.pose.position - pivot)) - d.direction * rng.gen_range(0.0..1e-3);
    }
    (a, b)
}

pub fn ground() -> RigidBody {
    RigidBody::fixed("ground", ConvexPolytope::cuboid(Vec3::new(10.0, 10.0, 0.5)), Pose::from_position(Vec3::new(0.0, 0.0, -0.5)))
}

/// A body resting on the ground (within the touching tolerance) in a face,
/// edge or vertex-down pose, with velocities made consistent with the
/// contact by one impulse solve.
pub fn touching_state(rng: &mut impl Rng) -> SystemState {
    let mut s = SystemState::default();
    s.add_body(ground());
    let mut b = body(rng, "b");
    match rng.gen_range(0..3) {
        0 => b.pose.orientation = Quat::identity(),
        1 => b.pose.orientation = Quat::from_axis_angle(&polysim::nalgebra::Unit::new_normalize(Vec3::new(rng.gen(), rng.gen(), 0.0)), rng.gen_range(0.1..1.0)),
        _ => {}
    }
    // fall on the ground
    b.linear_velocity.z = -b.linear_velocity.z.abs() - 0.1;
    let gap = rng.gen_range(0.0..0.5) * DEFAULT_EPS_GEO;
    place_at_gap(&s.bodies[0].clone(), &mut b, &Vec3::z(), gap);
    s.add_body(b);
    let snap = contact_snapshot(&s, DEFAULT_EPS_GEO).unwrap();
    apply_contact_impulses(&mut s, &snap.contacts, DEFAULT_EPS_V).unwrap();
    s
}

/// A random chain of one to five links, fixed or floating base.
pub fn chain(rng: &mut impl Rng) -> MultibodyChain {
    let n = rng.gen_range(1..=5);
    let links: Vec<Link> = (0..n)
        .map(|i| {
            let axis = unit(rng);
            let loc = if i == 0 { Vec3::zeros() } else { in_ball(rng, 1.0) };
            let com = in_ball(rng, 0.8);
            let poly = shape(rng);
            let mass = rng.gen_range(0.2..3.0);
            if rng.gen_bool(0.3) {
                Link::prismatic(axis, loc, com, poly, mass)
            } else {
                Link::revolute(axis, loc, com, poly, mass)
            }
        })
        .collect();
    let pose = Pose::new(in_ball(rng, 2.0), rotation(rng));
    let base = if rng.gen_bool(0.5) {
        Base::fixed(pose)
    } else {
        Base { pose, fixed: false, linear_velocity: in_ball(rng, 2.0), angular_velocity: in_ball(rng, 3.0) }
    };
    let mut c = MultibodyChain::new("c", base, links).unwrap();
    let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let qd: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    c.set_coordinates(&q);
    c.set_velocities(&qd);
    c
}

/// `chain` after a first-order step of length `t`.
pub fn chain_at(chain: &MultibodyChain, t: f64) -> MultibodyChain {
    let mut c = chain.clone();
    let q: Vec<f64> = c.coordinates().iter().zip(c.velocities()).map(|(q, v)| q + v * t).collect();
    c.set_coordinates(&q);
    let mut base = *c.base();
    if !base.fixed {
        base.pose.position += base.linear_velocity * t;
        base.pose.orientation = integrate_orientation(&base.pose.orientation, &base.angular_velocity, t);
        c.set_base(base);
    }
    c
}

/// Largest speed along `d` over the vertices of `link`.
pub fn sampled_link_speed(chain: &MultibodyChain, link: usize, d: &Vec3) -> f64 {
    let pose = chain.link_pose(link);
    chain.links()[link]
        .polytope
        .vertices()
        .iter()
        .map(|v| chain.point_velocity(link, &pose.transform_point(v)).dot(d).abs())
        .fold(0.0, f64::max)
}
