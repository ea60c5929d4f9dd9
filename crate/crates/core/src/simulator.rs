//! The stepping loop: safe step, first-order integration, contact impulses
//! and event detection.

use crate::advancement::{self, AdvancementError, Branch, PairId, SafeStepResult, StepTolerances};
use crate::contact::{self, ContactError, PairContact};
use crate::dynamics::{self, DynamicsError, SystemState};
use crate::geometry::{contact_manifold, pairwise_distance, separating_plane, GeometryError, ManifoldKey, PlaneUniqueness};
use crate::Vec3;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("step at t = {time}: {source}")]
    Advancement { time: f64, source: AdvancementError },
    #[error("contact solve failed at t = {time} down to the minimum step: {source}")]
    Contact { time: f64, source: ContactError },
    #[error("dynamics at t = {time}: {source}")]
    Dynamics { time: f64, source: DynamicsError },
    #[error("geometry at t = {time}: {source}")]
    Geometry { time: f64, source: GeometryError },
    #[error("{0}")]
    Sink(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Largest step (s).
    pub max_step: f64,
    pub tolerances: StepTolerances,
    pub gravity: Vec3,
    pub end_time: f64,
    pub seed: u64,
    /// Speed below which the world counts as at rest (m/s).
    pub quiescence_speed: f64,
    /// Consecutive resting steps that end a run.
    pub quiescence_steps: usize,
    /// Also cap each step by the time a resting free body would take to
    /// fall onto an immobile one (see [`advancement::free_fall_time`]).
    pub free_fall_cap: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            max_step: 0.01,
            tolerances: StepTolerances::default(),
            gravity: dynamics::DEFAULT_GRAVITY,
            end_time: 10.0,
            seed: 0,
            quiescence_speed: 1e-6,
            quiescence_steps: 100,
            free_fall_cap: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let t = &self.tolerances;
        let positive = [
            ("eps_geo", t.eps_geo),
            ("eps_v", t.eps_v),
            ("dt_min", t.dt_min),
            ("phi_tolerance", t.phi_tolerance),
            ("max_step", self.max_step),
            ("quiescence_speed", self.quiescence_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(t.transient_growth >= 1.0 && t.transient_growth.is_finite()) {
            return Err(SimError::InvalidConfig(format!("transient_growth must be >= 1, got {}", t.transient_growth)));
        }
        if self.max_step <= t.dt_min {
            return Err(SimError::InvalidConfig(format!(
                "max_step {} must exceed dt_min {}",
                self.max_step, t.dt_min
            )));
        }
        if !(self.end_time >= 0.0) {
            return Err(SimError::InvalidConfig(format!("end_time must be non-negative, got {}", self.end_time)));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(SimError::InvalidConfig("gravity must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    ManifoldChange,
    TransientContact,
    ImpulseApplied,
    DegeneratePlaneWarning,
    ForcedMinStep,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ManifoldChange => "manifold_change",
            EventKind::TransientContact => "transient_contact",
            EventKind::ImpulseApplied => "impulse_applied",
            EventKind::DegeneratePlaneWarning => "degenerate_plane_warning",
            EventKind::ForcedMinStep => "forced_min_step",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub pair: Option<PairId>,
    pub before: Option<ManifoldKey>,
    pub after: Option<ManifoldKey>,
    /// Kinetic energy before and after an impulse.
    pub kinetic_energy: Option<(f64, f64)>,
    pub detail: String,
}

impl SimEvent {
    fn new(time: f64, kind: EventKind, pair: Option<PairId>, detail: String) -> Self {
        Self { time, kind, pair, before: None, after: None, kinetic_energy: None, detail }
    }
}

/// One row of the per-step trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Time at the end of the step.
    pub time: f64,
    pub h: f64,
    pub branch: Branch,
    /// Smallest signed distance over all pairs after the step.
    pub min_distance: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub record: StepRecord,
    pub events: Vec<SimEvent>,
    pub safe: SafeStepResult,
}

/// Touching pairs and their manifolds in one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSnapshot {
    pub contacts: Vec<PairContact>,
    pub min_distance: f64,
    pub degenerate: Vec<(PairId, PlaneUniqueness)>,
}

impl ContactSnapshot {
    pub fn keys(&self) -> BTreeMap<PairId, ManifoldKey> {
        self.contacts.iter().map(|c| ((c.a, c.b), c.manifold.key())).collect()
    }
}

/// Finds every touching pair of `state` and builds its manifold.
pub fn contact_snapshot(state: &SystemState, eps_geo: f64) -> Result<ContactSnapshot, GeometryError> {
    let mut out = ContactSnapshot { contacts: Vec::new(), min_distance: f64::INFINITY, degenerate: Vec::new() };
    for (a, b) in advancement::candidate_pairs(state) {
        let (pa, pb) = (state.pose(a), state.pose(b));
        let (pola, polb) = (state.polytope(a), state.polytope(b));
        let dist = pairwise_distance(pola, &pa, polb, &pb)?;
        out.min_distance = out.min_distance.min(dist.signed_distance);
        if dist.distance > eps_geo {
            continue;
        }
        let plane = separating_plane(pola, &pa, polb, &pb, &dist, eps_geo);
        if plane.contact_region.is_empty() {
            continue;
        }
        if plane.uniqueness.is_degenerate() {
            out.degenerate.push(((a, b), plane.uniqueness));
        }
        let manifold = contact_manifold(
            pola,
            &pa,
            |p| dynamics::point_velocity(state, a, p),
            polb,
            &pb,
            |p| dynamics::point_velocity(state, b, p),
            &plane,
            eps_geo,
        )?;
        out.contacts.push(PairContact { a, b, manifold });
    }
    if out.min_distance == f64::INFINITY {
        out.min_distance = f64::NAN;
    }
    Ok(out)
}

/// Structural difference between two manifold sets: one event per pair
/// whose feature pairs changed, appeared or vanished.
pub fn detect_manifold_change(
    before: &BTreeMap<PairId, ManifoldKey>,
    after: &BTreeMap<PairId, ManifoldKey>,
    time: f64,
) -> Vec<SimEvent> {
    let mut pairs: Vec<PairId> = before.keys().chain(after.keys()).copied().collect();
    pairs.sort();
    pairs.dedup();
    pairs
        .into_iter()
        .filter_map(|p| {
            let (b, a) = (before.get(&p), after.get(&p));
            if b == a {
                return None;
            }
            let detail = format!(
                "{} -> {}",
                b.map_or("none".to_string(), |k| k.to_string()),
                a.map_or("none".to_string(), |k| k.to_string())
            );
            let mut e = SimEvent::new(time, EventKind::ManifoldChange, Some(p), detail);
            e.before = b.cloned();
            e.after = a.cloned();
            Some(e)
        })
        .collect()
}

/// Kinetic energy of all bodies and chains.
pub fn kinetic_energy(state: &SystemState) -> f64 {
    state.bodies.iter().map(|b| b.kinetic_energy()).sum::<f64>()
        + state.chains.iter().map(|c| c.kinetic_energy()).sum::<f64>()
}

/// Power-of-two step histogram from the step budget down to the minimum
/// step: bucket `k` holds steps in `(max/2^(k+1), max/2^k]`, the last bucket
/// everything smaller.
#[derive(Debug, Clone, PartialEq)]
pub struct StepHistogram {
    pub upper_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl StepHistogram {
    pub fn new(max_step: f64, dt_min: f64) -> Self {
        let mut upper_edges = vec![max_step];
        while upper_edges.last().unwrap() / 2.0 > dt_min {
            let next = upper_edges.last().unwrap() / 2.0;
            upper_edges.push(next);
        }
        let counts = vec![0; upper_edges.len()];
        Self { upper_edges, counts }
    }

    pub fn add(&mut self, h: f64) {
        let last = self.counts.len() - 1;
        let k = self.upper_edges.iter().rposition(|&e| h <= e).unwrap_or(0).min(last);
        self.counts[k] += 1;
    }

    /// Lower edge of bucket `k` (0 for the last bucket).
    pub fn lower_edge(&self, k: usize) -> f64 {
        if k + 1 < self.upper_edges.len() {
            self.upper_edges[k + 1]
        } else {
            0.0
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Index of the most populated bucket (the largest steps win ties).
    pub fn modal_bucket(&self) -> usize {
        let mut best = 0;
        for (k, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub steps: u64,
    pub safe_step_calls: u64,
    pub manifold_changes: u64,
    pub min_distance: f64,
    pub min_step: f64,
    pub mean_step: f64,
    /// Mean time between successive manifold changes; `None` with fewer than two.
    pub mean_inter_event_time: Option<f64>,
    pub histogram: StepHistogram,
    pub end_time: f64,
    pub quiescent: bool,
}

/// Owns the state and advances it.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub state: SystemState,
    pub config: SimConfig,
    events: Vec<SimEvent>,
    manifolds: BTreeMap<PairId, ManifoldKey>,
    streaks: BTreeMap<PairId, u32>,
    degenerate: BTreeMap<PairId, PlaneUniqueness>,
    safe_step_calls: u64,
}

impl Simulator {
    pub fn new(mut state: SystemState, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        state.gravity = config.gravity;
        let snap = contact_snapshot(&state, config.tolerances.eps_geo)
            .map_err(|source| SimError::Geometry { time: state.time, source })?;
        Ok(Self {
            manifolds: snap.keys(),
            state,
            config,
            events: Vec::new(),
            streaks: BTreeMap::new(),
            degenerate: BTreeMap::new(),
            safe_step_calls: 0,
        })
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    pub fn safe_step_calls(&self) -> u64 {
        self.safe_step_calls
    }

    /// Current manifold keys by pair.
    pub fn manifolds(&self) -> &BTreeMap<PairId, ManifoldKey> {
        &self.manifolds
    }

    /// Advances by one safe step of at most `budget`.
    pub fn simulate_step(&mut self, budget: f64) -> Result<StepOutcome, SimError> {
        let tol = self.config.tolerances;
        let t0 = self.state.time;
        let safe = advancement::safe_step(&self.state, &tol, budget, &self.streaks)
            .map_err(|source| SimError::Advancement { time: t0, source })?;
        self.safe_step_calls += 1;
        let mut events = Vec::new();

        for &p in &safe.transient_pairs {
            *self.streaks.entry(p).or_insert(0) += 1;
            events.push(SimEvent::new(t0, EventKind::TransientContact, Some(p), format!("h={:e}", safe.dt)));
        }
        self.streaks.retain(|p, _| safe.transient_pairs.contains(p));
        if safe.forced_min_step {
            events.push(SimEvent::new(t0, EventKind::ForcedMinStep, safe.limiting_pair, format!("h={:e}", safe.dt)));
        }

        let mut h = safe.dt;
        if self.config.free_fall_cap {
            h = h.min(safe.fall_time);
        }
        let (next, snap, impulse) = loop {
            let mut next = self.state.clone();
            dynamics::integrate_position(&mut next, h);
            dynamics::integrate_velocity(&mut next, h).map_err(|source| SimError::Dynamics { time: t0, source })?;
            let snap = contact_snapshot(&next, tol.eps_geo).map_err(|source| SimError::Geometry { time: next.time, source })?;
            let ke_before = kinetic_energy(&next);
            match contact::apply_contact_impulses(&mut next, &snap.contacts, tol.eps_v) {
                Ok(sol) => {
                    let impulse = sol.map(|s| (s.total_normal_impulse(), ke_before, kinetic_energy(&next)));
                    break (next, snap, impulse);
                }
                Err(source) => {
                    if h * 0.5 < tol.dt_min {
                        return Err(SimError::Contact { time: t0, source });
                    }
                    log::debug!("contact solve failed at t={t0}, halving h={h}");
                    h *= 0.5;
                }
            }
        };
        let t1 = next.time;

        if let Some((lambda, before, after)) = impulse {
            let constrained: Vec<PairId> = snap.contacts.iter().map(|c| (c.a, c.b)).collect();
            let pair = if constrained.len() == 1 { Some(constrained[0]) } else { None };
            let mut e = SimEvent::new(
                t1,
                EventKind::ImpulseApplied,
                pair,
                format!("pairs={} normal_impulse={lambda:e} ke_before={before:e} ke_after={after:e}", constrained.len()),
            );
            e.kinetic_energy = Some((before, after));
            events.push(e);
        }

        let keys = snap.keys();
        events.extend(detect_manifold_change(&self.manifolds, &keys, t1));
        let degenerate: BTreeMap<PairId, PlaneUniqueness> = snap.degenerate.iter().copied().collect();
        for (p, u) in &degenerate {
            if self.degenerate.get(p) != Some(u) {
                events.push(SimEvent::new(t1, EventKind::DegeneratePlaneWarning, Some(*p), u.as_str().to_string()));
            }
        }
        self.degenerate = degenerate;
        self.manifolds = keys;
        self.state = next;

        let record = StepRecord {
            time: t1,
            h,
            branch: safe.branch,
            min_distance: snap.min_distance,
            energy: dynamics::mechanical_energy(&self.state),
        };
        self.events.extend(events.iter().cloned());
        Ok(StepOutcome { record, events, safe })
    }

    /// Runs to the end time or to rest, reporting every step and the state
    /// after it to `on_step`.
    pub fn run_with<F>(&mut self, mut on_step: F) -> Result<RunStats, SimError>
    where
        F: FnMut(&StepOutcome, &SystemState) -> Result<(), SimError>,
    {
        let cfg = self.config.clone();
        let mut hist = StepHistogram::new(cfg.max_step, cfg.tolerances.dt_min);
        let mut steps = 0u64;
        let mut sum_h = 0.0;
        let mut min_step = f64::INFINITY;
        let mut min_distance = f64::INFINITY;
        let mut resting = 0usize;
        let mut quiescent = false;
        let mut change_times = Vec::new();
        let mobile = self.state.participants().iter().any(|&r| !self.state.is_immobile(r));
        while mobile {
            let remaining = cfg.end_time - self.state.time;
            if remaining <= 0.0 {
                break;
            }
            let out = self.simulate_step(cfg.max_step.min(remaining))?;
            let r = &out.record;
            steps += 1;
            sum_h += r.h;
            min_step = min_step.min(r.h);
            if !r.min_distance.is_nan() {
                min_distance = min_distance.min(r.min_distance);
            }
            hist.add(r.h);
            change_times.extend(out.events.iter().filter(|e| e.kind == EventKind::ManifoldChange).map(|e| e.time));
            on_step(&out, &self.state)?;
            if self.state.max_speed() < cfg.quiescence_speed {
                resting += 1;
                if resting >= cfg.quiescence_steps {
                    quiescent = true;
                    break;
                }
            } else {
                resting = 0;
            }
        }
        change_times.dedup();
        let mean_inter_event_time = (change_times.len() >= 2).then(|| {
            (change_times[change_times.len() - 1] - change_times[0]) / (change_times.len() - 1) as f64
        });
        Ok(RunStats {
            steps,
            safe_step_calls: self.safe_step_calls,
            manifold_changes: self.events.iter().filter(|e| e.kind == EventKind::ManifoldChange).count() as u64,
            min_distance: if min_distance.is_finite() { min_distance } else { f64::NAN },
            min_step: if min_step.is_finite() { min_step } else { f64::NAN },
            mean_step: if steps > 0 { sum_h / steps as f64 } else { f64::NAN },
            mean_inter_event_time,
            histogram: hist,
            end_time: self.state.time,
            quiescent,
        })
    }

    pub fn run(&mut self) -> Result<RunStats, SimError> {
        self.run_with(|_, _| Ok(()))
    }
}

/// Builds a simulator from `state` and `config` and runs it.
pub fn run(state: SystemState, config: SimConfig) -> Result<(SystemState, Vec<SimEvent>, RunStats), SimError> {
    let mut sim = Simulator::new(state, config)?;
    let stats = sim.run()?;
    Ok((sim.state, sim.events, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{ConvexPolytope, Pose, RigidBody};

    fn cube_at(z: f64) -> RigidBody {
        RigidBody::new("cube", ConvexPolytope::cuboid(Vec3::new(0.5, 0.5, 0.5)), 1.0)
            .unwrap()
            .at(Pose::from_position(Vec3::new(0.0, 0.0, z)))
    }

    fn ground() -> RigidBody {
        RigidBody::fixed("ground", ConvexPolytope::cuboid(Vec3::new(5.0, 5.0, 0.5)), Pose::from_position(Vec3::new(0.0, 0.0, -0.5)))
    }

    #[test]
    fn ballistic_step_has_no_events() {
        let mut s = SystemState::default();
        s.add_body(cube_at(5.0).moving(Vec3::x(), Vec3::zeros()));
        let mut sim = Simulator::new(s, SimConfig::default()).unwrap();
        let out = sim.simulate_step(0.01).unwrap();
        assert_eq!(out.record.h, 0.01);
        assert!(out.events.is_empty());
        let b = &sim.state.bodies[0];
        assert!((b.pose.position - Vec3::new(0.01, 0.0, 5.0)).norm() < 1e-15);
        assert!((b.linear_velocity - Vec3::new(1.0, 0.0, -0.098)).norm() < 1e-15);
    }

    #[test]
    fn resting_cube_stays() {
        let mut s = SystemState::default();
        s.add_body(ground());
        s.add_body(cube_at(0.5));
        let mut sim = Simulator::new(s, SimConfig::default()).unwrap();
        let key = sim.manifolds().clone();
        let out = sim.simulate_step(0.01).unwrap();
        assert_eq!(out.record.h, 0.01);
        assert_eq!(sim.manifolds(), &key);
        assert!(out.events.iter().all(|e| e.kind != EventKind::ManifoldChange));
        assert!(sim.state.bodies[1].linear_velocity.norm() < 1e-9);
        assert!(sim.state.bodies[1].angular_velocity.norm() < 1e-9);
    }

    #[test]
    fn impact_reports_change_and_impulse() {
        let mut s = SystemState::default();
        s.add_body(ground());
        s.add_body(cube_at(0.6).moving(-Vec3::z(), Vec3::zeros()));
        let mut sim = Simulator::new(s, SimConfig::default()).unwrap();
        let mut seen = Vec::new();
        for _ in 0..50 {
            let out = sim.simulate_step(0.01).unwrap();
            seen.extend(out.events.into_iter().map(|e| e.kind));
            if seen.contains(&EventKind::ManifoldChange) {
                break;
            }
        }
        assert!(seen.contains(&EventKind::ManifoldChange));
        assert!(seen.contains(&EventKind::ImpulseApplied));
        assert!(sim.state.bodies[1].linear_velocity.norm() < 1e-9);
    }

    #[test]
    fn hovering_cube_falls_instead_of_being_kicked() {
        let gap = 2e-8;
        let mut s = SystemState::default();
        s.add_body(ground());
        s.add_body(cube_at(0.5 + gap));
        let mut sim = Simulator::new(s.clone(), SimConfig::default()).unwrap();
        let out = sim.simulate_step(0.01).unwrap();
        let fall = (2.0 * gap / 9.8).sqrt();
        assert!((out.record.h - fall).abs() < 1e-6 * fall);

        let config = SimConfig { free_fall_cap: false, ..SimConfig::default() };
        let mut sim = Simulator::new(s, config).unwrap();
        assert_eq!(sim.simulate_step(0.01).unwrap().record.h, 0.01);
    }

    #[test]
    fn empty_world_completes() {
        let (_, events, stats) = run(SystemState::default(), SimConfig::default()).unwrap();
        assert!(events.is_empty());
        assert_eq!(stats.steps, 0);
    }

    #[test]
    fn manifold_diff() {
        use crate::dynamics::BodyRef;
        let key = |n| ManifoldKey {
            uniqueness: PlaneUniqueness::FaceFace,
            vertices_a: vec![0, 1, 2, 3],
            vertices_b: vec![4],
            point_count: n,
        };
        let p = (BodyRef::Body(0), BodyRef::Body(1));
        let one: BTreeMap<_, _> = [(p, key(4))].into_iter().collect();
        assert!(detect_manifold_change(&one, &one, 0.0).is_empty());
        let two: BTreeMap<_, _> = [(p, key(2))].into_iter().collect();
        assert_eq!(detect_manifold_change(&one, &two, 0.0).len(), 1);
        let none = BTreeMap::new();
        let e = detect_manifold_change(&none, &one, 1.0);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].before, None);
    }

    #[test]
    fn histogram_conserves_counts() {
        let mut h = StepHistogram::new(0.01, 1e-9);
        for x in [0.01, 0.005, 0.0051, 1e-9, 1e-12, 3e-5] {
            h.add(x);
        }
        assert_eq!(h.total(), 6);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(*h.counts.last().unwrap(), 2);
        assert!(h.upper_edges.last().unwrap() / 2.0 <= 1e-9);
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::default();
        c.max_step = 1e-10;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.tolerances.eps_v = 0.0;
        assert!(c.validate().is_err());
    }
}
