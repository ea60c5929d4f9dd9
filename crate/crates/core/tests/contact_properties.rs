use nalgebra::DVector;
use polysim::contact::{build_contact_problem, solve_contact, PairContact, DEFAULT_EPS_V};
use polysim::dynamics::{point_velocity, BodyRef};
use polysim::geometry::{contact_manifold, pairwise_distance, separating_plane, DEFAULT_EPS_GEO};
use polysim::{ConvexPolytope, Pose, Quat, RigidBody, SystemState, Vec3};
use proptest::prelude::*;

fn contacts(s: &SystemState, a: BodyRef, b: BodyRef) -> Vec<PairContact> {
    let (pa, pb) = (s.pose(a), s.pose(b));
    let d = pairwise_distance(s.polytope(a), &pa, s.polytope(b), &pb).unwrap();
    let plane = separating_plane(s.polytope(a), &pa, s.polytope(b), &pb, &d, DEFAULT_EPS_GEO);
    let m = contact_manifold(
        s.polytope(a),
        &pa,
        |p| point_velocity(s, a, p),
        s.polytope(b),
        &pb,
        |p| point_velocity(s, b, p),
        &plane,
        DEFAULT_EPS_GEO,
    )
    .unwrap();
    vec![PairContact { a, b, manifold: m }]
}

/// A box lying on the ground in one of three orientations (face, edge or
/// vertex down), optionally with a second box stacked on it.
fn scene(kind: u8, stacked: bool, v: [f64; 6], v2: [f64; 6]) -> (SystemState, Vec<PairContact>) {
    let mut s = SystemState::default();
    let g = s.add_body(RigidBody::fixed(
        "ground",
        ConvexPolytope::cuboid(Vec3::new(5.0, 5.0, 0.5)),
        Pose::from_position(Vec3::new(0.0, 0.0, -0.5)),
    ));
    let poly = ConvexPolytope::cuboid(Vec3::new(0.5, 0.4, 0.3));
    let rot = match kind {
        0 => Quat::identity(),
        1 => Quat::from_axis_angle(&Vec3::x_axis(), 0.6),
        _ => Quat::rotation_between(&Vec3::new(0.5, 0.4, 0.3).normalize(), &-Vec3::z()).unwrap(),
    };
    let low = poly.vertices().iter().map(|p| (rot * p).z).fold(f64::MAX, f64::min);
    let body = RigidBody::new("box", poly.clone(), 1.3)
        .unwrap()
        .at(Pose::new(Vec3::new(0.0, 0.0, -low), rot))
        .moving(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]));
    let b = s.add_body(body);
    let mut all = contacts(&s, g, b);
    if stacked && kind == 0 {
        let top = RigidBody::new("top", ConvexPolytope::cuboid(Vec3::new(0.2, 0.2, 0.2)), 0.7)
            .unwrap()
            .at(Pose::from_position(Vec3::new(0.1, 0.0, -2.0 * low + 0.2)))
            .moving(Vec3::new(v2[0], v2[1], v2[2]), Vec3::new(v2[3], v2[4], v2[5]));
        let t = s.add_body(top);
        all.extend(contacts(&s, b, t));
    }
    (s, all)
}

fn velocity() -> impl Strategy<Value = [f64; 6]> {
    prop::array::uniform6(-2.0..2.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn impulses_satisfy_contact_invariants(kind in 0u8..3, stacked: bool, v in velocity(), v2 in velocity()) {
        let (s, c) = scene(kind, stacked, v, v2);
        let p = build_contact_problem(&s, &c, DEFAULT_EPS_V);
        let sol = solve_contact(&p).unwrap();
        let k = p.points.len();
        prop_assert_eq!(p.normal_jacobian.nrows(), k);
        prop_assert_eq!(p.tangent_jacobian.nrows(), 2 * k);
        if k == 0 {
            prop_assert_eq!(&sol.velocity, &p.velocity);
            return Ok(());
        }
        let nv = &p.normal_jacobian * &sol.velocity;
        let tv = &p.tangent_jacobian * &sol.velocity;
        prop_assert!(sol.normal_impulses.min() >= -1e-12);
        prop_assert!(nv.min() >= -1e-9, "normal velocity {}", nv.min());
        prop_assert!(tv.amax() <= 1e-9, "slip {}", tv.amax());
        let comp = sol.normal_impulses.iter().zip(nv.iter()).map(|(l, w)| (l * w).abs()).fold(0.0, f64::max);
        prop_assert!(comp <= 1e-9, "complementarity {comp}");
        prop_assert!(p.kinetic_energy(&sol.velocity) <= p.kinetic_energy(&p.velocity) + 1e-9);
        // M (v+ - v*) = N^T ln + D^T lt
        let lhs = &p.mass * (&sol.velocity - &p.velocity);
        let rhs = p.normal_jacobian.transpose() * &sol.normal_impulses
            + p.tangent_jacobian.transpose() * &sol.tangent_impulses;
        prop_assert!((lhs - rhs).amax() <= 1e-9);
    }
}

#[test]
fn empty_constrained_set_is_identity() {
    let (s, c) = scene(0, false, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0], [0.0; 6]);
    let p = build_contact_problem(&s, &c, DEFAULT_EPS_V);
    assert!(p.points.is_empty());
    let sol = solve_contact(&p).unwrap();
    assert_eq!(sol.velocity, DVector::from_column_slice(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]));
}
