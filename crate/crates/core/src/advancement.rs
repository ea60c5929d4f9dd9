//! Safe integration steps: conservative advancement for disjoint pairs and
//! the separating-plane bounds for touching pairs.

use crate::contact::{self, ContactError, PairContact};
use crate::dynamics::{self, BodyRef, DynamicsError, JointType, MultibodyChain, RigidBody, SystemState};
use crate::geometry::{
    contact_manifold, farthest_manifold_point, pairwise_distance, separating_plane, vertices_off_plane,
    ContactManifold, ContactPoint, ManifoldKey, DistanceResult, GeometryError, PlaneUniqueness, Side,
};
use crate::Vec3;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdvancementError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("conservative advancement needs a positive distance (got {0:e})")]
    NotDisjoint(f64),
    #[error("vertex lies on the separating plane (height {0:e})")]
    VertexOnPlane(f64),
}

/// Tolerances used by the step controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTolerances {
    /// Touching distance (m).
    pub eps_geo: f64,
    /// Zero test for normal velocities (m/s).
    pub eps_v: f64,
    /// Smallest step (s).
    pub dt_min: f64,
    /// Allowed step-doubling error in contact gaps during trial
    /// integration (m).
    pub phi_tolerance: f64,
    /// Growth factor of the minimum step over consecutive transient steps of
    /// one pair; 1 keeps every transient step at `dt_min`.
    pub transient_growth: f64,
    /// Also bound disjoint rigid pairs by the vertex-height bound and take
    /// the larger of it and conservative advancement.
    pub vertex_bound: bool,
    /// Samples per disjoint pair used to locate the first contact inside a
    /// step; 0 turns event location off.
    pub band_samples: usize,
}

impl Default for StepTolerances {
    fn default() -> Self {
        Self {
            eps_geo: crate::geometry::DEFAULT_EPS_GEO,
            eps_v: contact::DEFAULT_EPS_V,
            dt_min: 1e-9,
            phi_tolerance: 1e-10,
            transient_growth: 2.0,
            vertex_bound: true,
            band_samples: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    DisjointCa,
    Constrained,
    TransientMinStep,
    Unbounded,
    /// Cut just after the first contact found inside the step.
    EventLocated,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::DisjointCa => "disjoint_ca",
            Branch::Constrained => "constrained",
            Branch::TransientMinStep => "transient_min_step",
            Branch::Unbounded => "unbounded",
            Branch::EventLocated => "event_located",
        }
    }
}

pub type PairId = (BodyRef, BodyRef);

#[derive(Debug, Clone, PartialEq)]
pub struct SafeStepResult {
    pub dt: f64,
    pub branch: Branch,
    pub limiting_pair: Option<PairId>,
    pub limiting_vertex: Option<(Side, usize)>,
    pub dt_star: Option<f64>,
    pub dt_dagger: Option<f64>,
    /// Trial integration hit the minimum step without acceptance.
    pub forced_min_step: bool,
    /// Smallest signed distance over all pairs.
    pub min_distance: f64,
    /// Shortest [`free_fall_time`] over disjoint pairs. Not part of `dt`.
    pub fall_time: f64,
    /// Manifolds of all touching pairs.
    pub contacts: Vec<PairContact>,
    pub transient_pairs: Vec<PairId>,
    pub degenerate_pairs: Vec<(PairId, PlaneUniqueness)>,
}

/// Largest speed along `d` of any point of a rigid body.
fn rigid_speed_bound(body: &RigidBody, d: &Vec3) -> f64 {
    if body.is_static {
        return 0.0;
    }
    body.linear_velocity.dot(d).abs() + body.angular_velocity.cross(d).norm() * body.polytope.bounding_radius()
}

/// Conservative advancement step between two rigid bodies:
/// `|d|/(|d.(vA - vB)| + |wA x d| rA + |wB x d| rB)`, infinite when nothing
/// moves.
pub fn ca_step(a: &RigidBody, b: &RigidBody, dist: &DistanceResult) -> Result<f64, AdvancementError> {
    if !(dist.distance > 0.0) {
        return Err(AdvancementError::NotDisjoint(dist.distance));
    }
    let d = &dist.direction;
    let lin = |body: &RigidBody| if body.is_static { Vec3::zeros() } else { body.linear_velocity };
    let ang = |body: &RigidBody| {
        if body.is_static {
            0.0
        } else {
            body.angular_velocity.cross(d).norm() * body.polytope.bounding_radius()
        }
    };
    let denom = d.dot(&(lin(a) - lin(b))).abs() + ang(a) + ang(b);
    Ok(safe_ratio(dist.distance, denom))
}

#[inline]
fn safe_ratio(num: f64, denom: f64) -> f64 {
    if denom > 0.0 {
        num / denom
    } else {
        f64::INFINITY
    }
}

/// Reach of link `i` about its joint, doubled: the `2 r` term of the bound.
fn link_reach(chain: &MultibodyChain, i: usize, joint: &Vec3) -> f64 {
    let link = &chain.links()[i];
    let center = chain.link_pose(i).position;
    let mut to_com = (center - joint).norm();
    if link.joint == JointType::Prismatic {
        to_com += chain.velocities()[i].abs();
    }
    2.0 * link.polytope.bounding_radius().max(to_com)
}

/// Per-joint distance terms: `|q| + |qd|` plus the fixed offset for
/// prismatic joints, the joint spacing for revolute ones.
fn joint_spacings(chain: &MultibodyChain, joints: &[Vec3]) -> Vec<f64> {
    let axes = chain.joint_axes();
    (0..chain.len().saturating_sub(1))
        .map(|k| {
            let gap = joints[k + 1] - joints[k];
            match chain.links()[k].joint {
                JointType::Revolute => gap.norm(),
                JointType::Prismatic => {
                    let q = chain.coordinates()[k];
                    (gap - axes[k] * q).norm() + q.abs() + chain.velocities()[k].abs()
                }
            }
        })
        .collect()
}

/// Pose of a participant after moving for `t` with its current velocities,
/// exactly as the position update moves it.
pub fn pose_after(state: &SystemState, r: BodyRef, t: f64) -> crate::Pose {
    match r {
        BodyRef::Body(i) => {
            let b = &state.bodies[i];
            let mut pose = b.pose;
            if !b.is_static {
                pose.position += b.linear_velocity * t;
                pose.orientation = dynamics::integrate_orientation(&pose.orientation, &b.angular_velocity, t);
            }
            pose
        }
        BodyRef::Link { chain, link } => {
            let mut c = state.chains[chain].clone();
            c.advance_coordinates(t);
            c.link_pose(link)
        }
    }
}

/// Time before a disjoint pair can come within the touching distance: the
/// same bounds as the step, with the band width as margin.
pub fn band_clear_time(
    state: &SystemState,
    a: BodyRef,
    b: BodyRef,
    dist: &DistanceResult,
    tol: &StepTolerances,
) -> Result<f64, AdvancementError> {
    let eps = tol.eps_geo;
    if !(dist.distance > eps) {
        return Ok(0.0);
    }
    // conservative advancement is linear in the distance
    let mut clear = ca_step_between(state, a, b, dist)? * ((dist.distance - eps) / dist.distance);
    if let (true, BodyRef::Body(i), BodyRef::Body(j)) = (tol.vertex_bound, a, b) {
        clear = clear.max(disjoint_vertex_bound(&state.bodies[i], &state.bodies[j], dist, eps)?);
    }
    Ok(clear)
}

/// Contact structure of one pair after moving for `t`, as a contact
/// snapshot would report it: `None` unless touching with a common region.
pub fn pair_key(state: &SystemState, a: BodyRef, b: BodyRef, t: f64, eps_geo: f64) -> Result<Option<ManifoldKey>, AdvancementError> {
    let (pa, pb) = (pose_after(state, a, t), pose_after(state, b, t));
    let (pola, polb) = (state.polytope(a), state.polytope(b));
    let dist = pairwise_distance(pola, &pa, polb, &pb)?;
    if dist.distance > eps_geo {
        return Ok(None);
    }
    let plane = separating_plane(pola, &pa, polb, &pb, &dist, eps_geo);
    if plane.contact_region.is_empty() {
        return Ok(None);
    }
    let m = contact_manifold(pola, &pa, |_| Vec3::zeros(), polb, &pb, |_| Vec3::zeros(), &plane, eps_geo)?;
    Ok(Some(m.key()))
}

/// A pair with no contact at the start of the step.
struct PendingCheck {
    a: BodyRef,
    b: BodyRef,
    /// No contact is possible before this time.
    clear: f64,
}

/// Event location: shortens `dt` so that it ends just after the first
/// contact of any pair without one, unless that pair then keeps its new
/// structure until the end of the step.
///
/// The disjoint bounds target contact rather than the edge of the touching
/// band, so a step can dip into the band and out again, or gain vertices one
/// after the other. Past each pair's clear time the path is sampled, and a
/// first contact is narrowed down by bisection. Touching pairs are left to
/// their own bounds.
fn locate_first_change(state: &SystemState, checks: &[PendingCheck], mut dt: f64, tol: &StepTolerances) -> Result<f64, AdvancementError> {
    let n = tol.band_samples;
    for c in checks {
        if dt <= c.clear {
            continue;
        }
        let key = |t: f64| pair_key(state, c.a, c.b, t, tol.eps_geo);
        let end = key(dt)?;
        // bracket of the first contact
        let mut switch: Option<(f64, f64)> = None;
        let mut lo = c.clear;
        let mut single = true;
        for k in 1..=n {
            let t = c.clear + (dt - c.clear) * k as f64 / n as f64;
            let kt = if k == n { end.clone() } else { key(t)? };
            match switch {
                None if kt.is_none() => lo = t,
                None => {
                    switch = Some((lo, t));
                    single = kt == end;
                }
                Some(_) => single &= kt == end,
            }
            if !single {
                break;
            }
        }
        let Some((mut lo, mut hi)) = switch.filter(|_| !single) else { continue };
        while hi - lo > tol.dt_min.max(1e-9 * hi) {
            let mid = 0.5 * (lo + hi);
            if key(mid)?.is_none() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        dt = dt.min(hi.max(tol.dt_min));
    }
    Ok(dt)
}

/// Time for a free body starting at rest to fall `gap` under gravity onto
/// an immobile one; infinite for other pairs.
///
/// An accuracy cap for the integrator, not a safety bound. Positions move
/// with the velocity from before the step, so a body resting a hair above
/// the ground sits still for a full step while gravity builds up a velocity
/// it then lands with.
pub fn free_fall_time(state: &SystemState, a: BodyRef, b: BodyRef, gap: f64) -> f64 {
    let g = state.gravity.norm();
    let falls = |r: BodyRef| matches!(r, BodyRef::Body(i) if !state.bodies[i].is_static);
    let onto_fixed = (falls(a) && state.is_immobile(b)) || (falls(b) && state.is_immobile(a));
    if onto_fixed && g > 0.0 {
        (2.0 * gap / g).sqrt()
    } else {
        f64::INFINITY
    }
}

/// Upper bound on the speed along `d` of any point of link `link`.
pub fn multibody_motion_bound(chain: &MultibodyChain, link: usize, d: &Vec3) -> f64 {
    let joints = chain.joint_positions();
    let spacing = joint_spacings(chain, &joints);
    motion_bound_with(chain, link, d, &joints, &spacing)
}

fn motion_bound_with(chain: &MultibodyChain, link: usize, d: &Vec3, joints: &[Vec3], spacing: &[f64]) -> f64 {
    let reach = link_reach(chain, link, &joints[link]);
    // gamma_j = sum_{k=j}^{i-1} spacing_k + 2r
    let mut gamma = vec![0.0; link + 1];
    let mut acc = reach;
    for j in (0..=link).rev() {
        if j < link {
            acc += spacing[j];
        }
        gamma[j] = acc;
    }
    let base = chain.base();
    let mut bound = 0.0;
    if !base.fixed {
        // the first joint turns about the base origin during the step, so
        // its lever counts in full rather than its current direction
        let lever = (joints[0] - base.pose.position).norm();
        bound += base.linear_velocity.dot(d).abs() + base.angular_velocity.norm() * (lever + gamma[0]);
    }
    for (j, g) in gamma.iter().enumerate() {
        let qd = chain.velocities()[j].abs();
        bound += match chain.links()[j].joint {
            JointType::Revolute => qd * g,
            JointType::Prismatic => qd,
        };
    }
    bound
}

/// Speed bound along `d` for any participant.
pub fn participant_speed_bound(state: &SystemState, r: BodyRef, d: &Vec3) -> f64 {
    match r {
        BodyRef::Body(i) => rigid_speed_bound(&state.bodies[i], d),
        BodyRef::Link { chain, link } => multibody_motion_bound(&state.chains[chain], link, d),
    }
}

/// Conservative advancement for any pair of participants.
pub fn ca_step_between(state: &SystemState, a: BodyRef, b: BodyRef, dist: &DistanceResult) -> Result<f64, AdvancementError> {
    if let (BodyRef::Body(i), BodyRef::Body(j)) = (a, b) {
        return ca_step(&state.bodies[i], &state.bodies[j], dist);
    }
    if !(dist.distance > 0.0) {
        return Err(AdvancementError::NotDisjoint(dist.distance));
    }
    let d = &dist.direction;
    let denom = participant_speed_bound(state, a, d) + participant_speed_bound(state, b, d);
    Ok(safe_ratio(dist.distance, denom))
}

/// Time two disjoint rigid bodies are certainly kept apart by a separating
/// plane that moves rigidly with one of them.
///
/// A plane supporting one body (the carrier) is carried along with it; the
/// other body's vertices must stay on their side. Measured in the carrier's
/// frame a vertex height changes at first order by the relative normal
/// velocity at the vertex, with a remainder of at most `k t^2` (see
/// [`carried_plane_bound`]). Every separating normal and either carrier
/// give a valid certificate, so the largest one is returned. The normals
/// tried are the closest-point direction, the face normals and the edge
/// cross products; the closest-point direction alone is ill-conditioned
/// when the distance is tiny.
///
/// With a positive `margin` the result bounds the time before the distance
/// can fall to `margin` instead of zero.
pub fn disjoint_vertex_bound(
    a: &RigidBody,
    b: &RigidBody,
    dist: &DistanceResult,
    margin: f64,
) -> Result<f64, AdvancementError> {
    if !(dist.distance > margin) {
        return Err(AdvancementError::NotDisjoint(dist.distance - margin));
    }
    let world = |body: &RigidBody| -> Vec<Vec3> {
        body.polytope.vertices().iter().map(|v| body.pose.transform_point(v)).collect()
    };
    let (va, vb) = (world(a), world(b));
    let between = b.pose.position - a.pose.position;
    let mut normals = vec![dist.direction];
    normals.extend(a.polytope.faces().iter().map(|f| a.pose.transform_vector(&f.normal)));
    normals.extend(b.polytope.faces().iter().map(|f| -b.pose.transform_vector(&f.normal)));
    for ea in a.polytope.edge_directions() {
        for eb in b.polytope.edge_directions() {
            let n = a.pose.transform_vector(ea).cross(&b.pose.transform_vector(eb));
            let len = n.norm();
            if len > 1e-6 {
                normals.push(if n.dot(&between) < 0.0 { -n / len } else { n / len });
            }
        }
    }
    let mut best: f64 = 0.0;
    for n in normals {
        // n points from A toward B
        let top_a = va.iter().map(|p| n.dot(p)).fold(f64::NEG_INFINITY, f64::max);
        let low_b = vb.iter().map(|p| n.dot(p)).fold(f64::INFINITY, f64::min);
        if low_b - top_a <= margin {
            continue;
        }
        best = best.max(carried_plane_bound(b, &vb, a, &n, top_a + margin));
        best = best.max(carried_plane_bound(a, &va, b, &-n, margin - low_b));
    }
    Ok(best)
}

fn motion(body: &RigidBody) -> (Vec3, Vec3) {
    if body.is_static {
        (Vec3::zeros(), Vec3::zeros())
    } else {
        (body.linear_velocity, body.angular_velocity)
    }
}

/// Time before any vertex of `mover` (world positions `points`) can reach
/// the plane `normal . x = level` carried rigidly by `carrier`, with the
/// mover on the positive side.
///
/// With `c` the carrier's center, `r` a vertex offset in the mover and
/// `y0 = p - c`, `y1 = (v_m - v_c) + w_m x r`, the vertex seen from the
/// carrier is `y0 + t (y1 - w_c x y0)` plus a remainder bounded by
/// `t^2 k` for `t <= T = min(2/|w_m|, 2/|w_c|, 1)`, with
///
/// `k = |w_m|^2 |r| (1 + |w_c| T) + |w_c| |y1| + |w_c|^2 (|y0| + T |y1| + T^2 |w_m|^2 |r|)`.
///
/// This uses `|R(t) x - x - t w x x| <= (|w| t)^2 |x|` for `|w| t <= 2`,
/// which holds for the exact rotation and for the normalized first-order
/// quaternion update.
fn carried_plane_bound(mover: &RigidBody, points: &[Vec3], carrier: &RigidBody, normal: &Vec3, level: f64) -> f64 {
    let (vm, wm) = motion(mover);
    let (vc, wc) = motion(carrier);
    let (wm_n, wc_n) = (wm.norm(), wc.norm());
    let mut cap: f64 = 1.0;
    for w in [wm_n, wc_n] {
        if w > 0.0 {
            cap = cap.min(2.0 / w);
        }
    }
    let c = carrier.pose.position;
    let mut best = cap;
    for p in points {
        let height = normal.dot(p) - level;
        if height <= 0.0 {
            return 0.0;
        }
        let r = p - mover.pose.position;
        let y0 = p - c;
        let y1 = vm - vc + wm.cross(&r);
        let rate = -normal.dot(&(y1 - wc.cross(&y0)));
        let spin = wm_n * wm_n * r.norm();
        let quad = spin * (1.0 + wc_n * cap)
            + wc_n * y1.norm()
            + wc_n * wc_n * (y0.norm() + cap * y1.norm() + cap * cap * spin);
        let t = if quad > 0.0 {
            2.0 * height / (rate + (rate * rate + 4.0 * quad * height).sqrt())
        } else {
            safe_ratio(height, rate)
        };
        best = best.min(t);
    }
    best
}

/// Angular term of the constrained vertex bound: `|w x n|` for a rigid
/// body, `|w_base| + sum |qd_j|` up to the link for a chain link.
pub fn angular_rate_term(state: &SystemState, r: BodyRef, n: &Vec3) -> f64 {
    match r {
        BodyRef::Body(i) => {
            let b = &state.bodies[i];
            if b.is_static {
                0.0
            } else {
                b.angular_velocity.cross(n).norm()
            }
        }
        BodyRef::Link { chain, link } => {
            let c = &state.chains[chain];
            let base = if c.base().fixed { 0.0 } else { c.base().angular_velocity.norm() };
            base + c.velocities()[..=link].iter().map(|v| v.abs()).sum::<f64>()
        }
    }
}

/// Time before a vertex at height `|n.r - sigma|` can reach the plane while
/// rotating about the manifold point `xi`.
pub fn constrained_vertex_bound(
    vertex: &Vec3,
    normal: &Vec3,
    offset: f64,
    rate_a: f64,
    rate_b: f64,
    xi: &Vec3,
    eps_geo: f64,
) -> Result<f64, AdvancementError> {
    let height = (normal.dot(vertex) - offset).abs();
    if height <= eps_geo {
        return Err(AdvancementError::VertexOnPlane(height));
    }
    Ok(safe_ratio(height, (rate_a + rate_b) * (vertex - xi).norm()))
}

/// Minimum of the vertex bound over all off-plane vertices of both bodies.
pub fn delta_t_star(
    state: &SystemState,
    a: BodyRef,
    b: BodyRef,
    manifold: &ContactManifold,
    eps_geo: f64,
) -> Result<(f64, Option<(Side, usize)>), AdvancementError> {
    let plane = &manifold.plane;
    let n = &plane.normal;
    let rate_a = angular_rate_term(state, a, n);
    let rate_b = angular_rate_term(state, b, n);
    let mut best = (f64::INFINITY, None);
    if rate_a + rate_b == 0.0 {
        return Ok(best);
    }
    let off = vertices_off_plane(state.polytope(a), &state.pose(a), state.polytope(b), &state.pose(b), plane, eps_geo);
    for v in off {
        let xi = farthest_manifold_point(manifold, &v.position)?;
        let t = constrained_vertex_bound(&v.position, n, plane.offset, rate_a, rate_b, &xi, eps_geo)?;
        if t < best.0 {
            best = (t, Some((v.side, v.index)));
        }
    }
    Ok(best)
}

/// Contact point carried by the bodies during trial integration.
#[derive(Debug, Clone)]
struct TrialContact {
    a: BodyRef,
    b: BodyRef,
    local_a: Vec<Vec3>,
    local_b: Vec<Vec3>,
    /// Plane normal in the frame of `owner`.
    normal_local: Vec3,
    owner: BodyRef,
    monitored: bool,
    template: ContactManifold,
}

impl TrialContact {
    fn new(state: &SystemState, c: &PairContact, monitored: bool) -> Self {
        let (pa, pb) = (state.pose(c.a), state.pose(c.b));
        let owner = if c.manifold.plane.on_plane_a.len() >= c.manifold.plane.on_plane_b.len() { c.a } else { c.b };
        let po = state.pose(owner);
        Self {
            a: c.a,
            b: c.b,
            local_a: c.manifold.points.iter().map(|p| pa.inverse_transform_point(&p.position_a)).collect(),
            local_b: c.manifold.points.iter().map(|p| pb.inverse_transform_point(&p.position_b)).collect(),
            normal_local: po.orientation.inverse_transform_vector(&c.manifold.plane.normal),
            owner,
            monitored,
            template: c.manifold.clone(),
        }
    }

    /// Current manifold (material points and normal moved with the bodies).
    fn current(&self, state: &SystemState) -> PairContact {
        let (pa, pb) = (state.pose(self.a), state.pose(self.b));
        let normal = state.pose(self.owner).transform_vector(&self.normal_local);
        let mut m = self.template.clone();
        m.plane.normal = normal;
        m.points = self
            .local_a
            .iter()
            .zip(&self.local_b)
            .map(|(la, lb)| {
                let xa = pa.transform_point(la);
                let xb = pb.transform_point(lb);
                let x = 0.5 * (xa + xb);
                ContactPoint {
                    position: x,
                    position_a: xa,
                    position_b: xb,
                    gap: normal.dot(&(xb - xa)),
                    normal_velocity: normal.dot(
                        &(dynamics::point_velocity(state, self.b, &xb) - dynamics::point_velocity(state, self.a, &xa)),
                    ),
                }
            })
            .collect();
        m.plane.offset = normal.dot(&m.points[0].position);
        PairContact { a: self.a, b: self.b, manifold: m }
    }
}

#[derive(Debug, Clone, Default)]
struct Island {
    bodies: Vec<usize>,
    chains: Vec<usize>,
}

/// One first-order step of the island members only; everything else is
/// held fixed.
fn trial_step(
    state: &mut SystemState,
    island: &Island,
    contacts: &[TrialContact],
    h: f64,
    eps_v: f64,
) -> Result<Vec<PairContact>, AdvancementError> {
    for &i in &island.bodies {
        let b = &mut state.bodies[i];
        b.pose.position += b.linear_velocity * h;
        b.pose.orientation = dynamics::integrate_orientation(&b.pose.orientation, &b.angular_velocity, h);
    }
    for &c in &island.chains {
        state.chains[c].advance_coordinates(h);
    }
    let g = state.gravity;
    for &i in &island.bodies {
        let (lin, ang) = state.bodies[i].acceleration(&g)?;
        let b = &mut state.bodies[i];
        b.linear_velocity += lin * h;
        b.angular_velocity += ang * h;
    }
    for &c in &island.chains {
        let qdd = state.chains[c].forward_dynamics(&g)?;
        let v: Vec<f64> = state.chains[c].velocities().iter().zip(qdd.iter()).map(|(v, a)| v + h * a).collect();
        state.chains[c].set_velocities(&v);
    }
    let current: Vec<PairContact> = contacts.iter().map(|c| c.current(state)).collect();
    contact::apply_contact_impulses(state, &current, eps_v)?;
    Ok(contacts.iter().map(|c| c.current(state)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaggerOutcome {
    pub dt: f64,
    pub forced: bool,
}

/// Trial-integrates the island of `contacts` from the current state to find
/// a step over which no monitored contact point starts to leave its plane.
///
/// The step starts at `h_candidate`; it is halved whenever a normal velocity
/// exceeds `eps_v` and reduced by `0.9 tol/err` whenever the step-doubling
/// estimate of the gap error exceeds `tol`.
pub fn delta_t_dagger(
    state: &SystemState,
    contacts: &[PairContact],
    monitored: &[bool],
    h_candidate: f64,
    tol: &StepTolerances,
) -> Result<DaggerOutcome, AdvancementError> {
    let mut island = Island::default();
    for c in contacts {
        for r in [c.a, c.b] {
            match r {
                BodyRef::Body(i) if !state.bodies[i].is_static && !island.bodies.contains(&i) => island.bodies.push(i),
                BodyRef::Link { chain, .. } if !island.chains.contains(&chain) => island.chains.push(chain),
                _ => {}
            }
        }
    }
    let trial: Vec<TrialContact> =
        contacts.iter().zip(monitored).map(|(c, &m)| TrialContact::new(state, c, m)).collect();

    let exceeds = |cs: &[PairContact]| {
        cs.iter()
            .zip(&trial)
            .filter(|(_, t)| t.monitored)
            .any(|(c, _)| c.manifold.points.iter().any(|p| p.normal_velocity.abs() > tol.eps_v))
    };
    let gaps = |cs: &[PairContact]| -> Vec<f64> {
        cs.iter()
            .zip(&trial)
            .filter(|(_, t)| t.monitored)
            .flat_map(|(c, _)| c.manifold.points.iter().map(|p| p.gap).collect::<Vec<_>>())
            .collect()
    };

    let mut h = h_candidate;
    loop {
        if h <= tol.dt_min {
            return Ok(DaggerOutcome { dt: tol.dt_min, forced: h < h_candidate || h_candidate < tol.dt_min });
        }
        let mut full = state.clone();
        let after_full = trial_step(&mut full, &island, &trial, h, tol.eps_v)?;
        if exceeds(&after_full) {
            h *= 0.5;
            continue;
        }
        let mut half = state.clone();
        let mid = trial_step(&mut half, &island, &trial, 0.5 * h, tol.eps_v)?;
        if exceeds(&mid) {
            h *= 0.5;
            continue;
        }
        let after_half = trial_step(&mut half, &island, &trial, 0.5 * h, tol.eps_v)?;
        if exceeds(&after_half) {
            h *= 0.5;
            continue;
        }
        let err = gaps(&after_full).iter().zip(gaps(&after_half)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err > tol.phi_tolerance {
            h *= 0.9 * tol.phi_tolerance / err;
            continue;
        }
        return Ok(DaggerOutcome { dt: h, forced: false });
    }
}

/// All pairs that could collide: not both immobile, not two links of one
/// chain.
pub fn candidate_pairs(state: &SystemState) -> Vec<PairId> {
    let parts = state.participants();
    let mut out = Vec::new();
    for (i, &a) in parts.iter().enumerate() {
        for &b in &parts[i + 1..] {
            if state.is_immobile(a) && state.is_immobile(b) {
                continue;
            }
            if let (BodyRef::Link { chain: ca, .. }, BodyRef::Link { chain: cb, .. }) = (a, b) {
                if ca == cb {
                    continue;
                }
            }
            out.push((a, b));
        }
    }
    out
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

struct Candidate {
    dt: f64,
    branch: Branch,
    pair: PairId,
    vertex: Option<(Side, usize)>,
    star: Option<f64>,
    dagger: Option<f64>,
    forced: bool,
}

/// The step controller: the largest step, at most `budget`, over which no
/// pair can interpenetrate and no contact manifold can change unseen.
///
/// `transient_streaks` counts, per pair, the consecutive preceding steps on
/// which the pair was in transient contact.
pub fn safe_step(
    state: &SystemState,
    tol: &StepTolerances,
    budget: f64,
    transient_streaks: &BTreeMap<PairId, u32>,
) -> Result<SafeStepResult, AdvancementError> {
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut min_distance = f64::INFINITY;
    let mut fall_time = f64::INFINITY;
    let mut checks: Vec<PendingCheck> = Vec::new();
    let mut touching: Vec<(PairContact, f64, Option<(Side, usize)>)> = Vec::new();
    let mut transient_pairs = Vec::new();
    let mut degenerate_pairs = Vec::new();

    for (a, b) in candidate_pairs(state) {
        let (pa, pb) = (state.pose(a), state.pose(b));
        let (pola, polb) = (state.polytope(a), state.polytope(b));
        let dist = pairwise_distance(pola, &pa, polb, &pb)?;
        min_distance = min_distance.min(dist.signed_distance);
        if dist.distance > tol.eps_geo {
            let mut dt = ca_step_between(state, a, b, &dist)?;
            if let (true, BodyRef::Body(i), BodyRef::Body(j)) = (tol.vertex_bound, a, b) {
                dt = dt.max(disjoint_vertex_bound(&state.bodies[i], &state.bodies[j], &dist, 0.0)?);
            }
            fall_time = fall_time.min(free_fall_time(state, a, b, dist.distance));
            if tol.band_samples > 0 {
                let clear = band_clear_time(state, a, b, &dist, tol)?;
                checks.push(PendingCheck { a, b, clear });
            }
            candidates.push(Candidate {
                dt,
                branch: Branch::DisjointCa,
                pair: (a, b),
                vertex: None,
                star: None,
                dagger: None,
                forced: false,
            });
            continue;
        }
        let plane = separating_plane(pola, &pa, polb, &pb, &dist, tol.eps_geo);
        if plane.contact_region.is_empty() {
            // touching within tolerance but no common support region
            let (dt, branch) = if dist.distance > 0.0 {
                (ca_step_between(state, a, b, &dist)?, Branch::DisjointCa)
            } else {
                (tol.dt_min, Branch::TransientMinStep)
            };
            candidates.push(Candidate { dt, branch, pair: (a, b), vertex: None, star: None, dagger: None, forced: false });
            checks.push(PendingCheck { a, b, clear: 0.0 });
            continue;
        }
        if plane.uniqueness.is_degenerate() {
            degenerate_pairs.push(((a, b), plane.uniqueness));
        }
        let manifold = contact_manifold(
            pola,
            &pa,
            |p| dynamics::point_velocity(state, a, p),
            polb,
            &pb,
            |p| dynamics::point_velocity(state, b, p),
            &plane,
            tol.eps_geo,
        )?;
        let (star, vertex) = delta_t_star(state, a, b, &manifold, tol.eps_geo)?;
        let contact = PairContact { a, b, manifold };
        let rates: Vec<f64> = contact.manifold.points.iter().map(|p| p.normal_velocity).collect();
        if rates.iter().any(|v| v.abs() > tol.eps_v) {
            transient_pairs.push((a, b));
            let approaching = rates.iter().any(|&v| v < -tol.eps_v);
            let streak = transient_streaks.get(&(a, b)).copied().unwrap_or(0);
            let grown = if approaching {
                tol.dt_min
            } else {
                // stop near the first departure so each one gets its own step
                let leave = contact
                    .manifold
                    .points
                    .iter()
                    .filter(|p| p.normal_velocity > tol.eps_v)
                    .map(|p| (tol.eps_geo - p.gap).max(0.0) / p.normal_velocity)
                    .fold(f64::INFINITY, f64::min);
                (tol.dt_min * tol.transient_growth.max(1.0).powi(streak.min(200) as i32))
                    .min(star)
                    .min(leave)
                    .max(tol.dt_min)
            };
            candidates.push(Candidate {
                dt: grown,
                branch: Branch::TransientMinStep,
                pair: (a, b),
                vertex: None,
                star: None,
                dagger: None,
                forced: false,
            });
        }
        touching.push((contact, star, vertex));
    }

    // islands of touching pairs linked through mobile participants
    let parts = state.participants();
    let index = |r: BodyRef| parts.iter().position(|&p| p == r).expect("participant");
    let mut parent: Vec<usize> = (0..parts.len()).collect();
    for (c, _, _) in &touching {
        let (ia, ib) = (index(c.a), index(c.b));
        let link_a = !state.is_immobile(c.a);
        let link_b = !state.is_immobile(c.b);
        if link_a && link_b {
            let (ra, rb) = (find(&mut parent, ia), find(&mut parent, ib));
            parent[ra] = rb;
        }
    }
    // chain links move together
    for (k, &p) in parts.iter().enumerate() {
        if let BodyRef::Link { chain, link } = p {
            if link > 0 {
                let prev = index(BodyRef::Link { chain, link: 0 });
                let (ra, rb) = (find(&mut parent, k), find(&mut parent, prev));
                parent[ra] = rb;
            }
        }
    }
    let mut islands: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, (c, _, _)) in touching.iter().enumerate() {
        let r = if state.is_immobile(c.a) { index(c.b) } else { index(c.a) };
        islands.entry(find(&mut parent, r)).or_default().push(k);
    }

    for members in islands.values() {
        let contacts: Vec<PairContact> = members.iter().map(|&k| touching[k].0.clone()).collect();
        let monitored: Vec<bool> = contacts.iter().map(|c| !transient_pairs.contains(&(c.a, c.b))).collect();
        let star_min = members.iter().map(|&k| touching[k].1).fold(f64::INFINITY, f64::min);
        let (limit_k, _) = members
            .iter()
            .map(|&k| (k, touching[k].1))
            .fold((members[0], f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        if monitored.iter().all(|m| !m) {
            continue;
        }
        let candidate = star_min.min(budget).max(tol.dt_min);
        let dagger = delta_t_dagger(state, &contacts, &monitored, candidate, tol)?;
        let c = &touching[limit_k];
        let (pair, vertex) = if dagger.dt < star_min {
            let k = members.iter().copied().find(|&k| monitored[members.iter().position(|&m| m == k).unwrap()]).unwrap();
            ((touching[k].0.a, touching[k].0.b), None)
        } else {
            ((c.0.a, c.0.b), c.2)
        };
        candidates.push(Candidate {
            dt: star_min.min(dagger.dt),
            branch: Branch::Constrained,
            pair,
            vertex,
            star: Some(star_min),
            dagger: Some(dagger.dt),
            forced: dagger.forced,
        });
    }

    let best = candidates.into_iter().fold(None::<Candidate>, |acc, c| match acc {
        Some(a) if a.dt <= c.dt => Some(a),
        _ => Some(c),
    });
    let contacts = touching.into_iter().map(|(c, _, _)| c).collect();
    let mut out = SafeStepResult {
        dt: budget,
        branch: Branch::Unbounded,
        limiting_pair: None,
        limiting_vertex: None,
        dt_star: None,
        dt_dagger: None,
        forced_min_step: false,
        min_distance,
        fall_time,
        contacts,
        transient_pairs,
        degenerate_pairs,
    };
    if let Some(c) = best {
        out.forced_min_step = c.forced;
        if c.dt < budget {
            out.dt = c.dt;
            out.branch = c.branch;
            out.limiting_pair = Some(c.pair);
            out.limiting_vertex = c.vertex;
            out.dt_star = c.star;
            out.dt_dagger = c.dagger;
        }
    }
    if tol.band_samples > 0 {
        let located = locate_first_change(state, &checks, out.dt, tol)?;
        if located < out.dt {
            out.dt = located;
            out.branch = Branch::EventLocated;
        }
    }
    debug_assert!(out.dt > 0.0);
    Ok(out)
}
