//! Scenario files: a TOML description of the world, the bodies and the
//! chains, plus overrides of the simulation settings.
//!
//! ```toml
//! [world]
//! gravity = [0.0, 0.0, -9.8]
//! end_time = 5.0
//! seed = 1
//!
//! [config]
//! max_step = 0.01
//!
//! [[bodies]]
//! name = "ground"
//! static = true
//! shape = { kind = "box", half_extents = [5.0, 5.0, 0.5] }
//! position = [0.0, 0.0, -0.5]
//!
//! [[bodies]]
//! name = "die"
//! mass = 1.0
//! shape = { kind = "box", half_extents = [0.5, 0.5, 0.5] }
//! position = [0.0, 0.0, 2.0]
//! randomize = { position_spread = [0.2, 0.2, 0.2], orientation = true, linear_speed = 1.0, angular_speed = 3.0 }
//! ```
//!
//! See the README for the full grammar.

use crate::advancement::StepTolerances;
use crate::dynamics::{Base, DynamicsError, Link, MultibodyChain, RigidBody, SystemState};
use crate::geometry::{GeometryError, RegularSolid};
use crate::simulator::SimConfig;
use crate::{ConvexPolytope, Mat3, Pose, Quat, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize scenario: {0}")]
    Emit(#[from] toml::ser::Error),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("{field}: {source}")]
    Geometry { field: String, source: GeometryError },
    #[error("{field}: {source}")]
    Dynamics { field: String, source: DynamicsError },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub world: World,
    #[serde(default, skip_serializing_if = "ConfigOverrides::is_empty")]
    pub config: ConfigOverrides,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bodies: Vec<BodySpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chains: Vec<ChainSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    #[serde(default = "default_end_time")]
    pub end_time: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.8]
}

fn default_end_time() -> f64 {
    10.0
}

impl Default for World {
    fn default() -> Self {
        Self { gravity: default_gravity(), end_time: default_end_time(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_geo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient_growth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertex_bound: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quiescence_speed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quiescence_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_fall_cap: Option<bool>,
}

impl ConfigOverrides {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Box { half_extents: [f64; 3] },
    Regular { solid: String, circumradius: f64 },
    Vertices { points: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InertiaSpec {
    /// `"auto"`: uniform density.
    Auto(String),
    Matrix([[f64; 3]; 3]),
}

impl Default for InertiaSpec {
    fn default() -> Self {
        InertiaSpec::Auto("auto".into())
    }
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

fn default_mass() -> f64 {
    1.0
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn is_identity_quat(q: &[f64; 4]) -> bool {
    *q == identity_quat()
}

fn is_zero3(v: &[f64; 3]) -> bool {
    *v == [0.0; 3]
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    pub name: String,
    #[serde(rename = "static", default, skip_serializing_if = "is_false")]
    pub is_static: bool,
    pub shape: ShapeSpec,
    #[serde(default = "default_mass")]
    pub mass: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub inertia: InertiaSpec,
    #[serde(default)]
    pub position: [f64; 3],
    /// Unit quaternion `[w, x, y, z]`.
    #[serde(default = "identity_quat", skip_serializing_if = "is_identity_quat")]
    pub orientation: [f64; 4],
    #[serde(default, skip_serializing_if = "is_zero3")]
    pub linear_velocity: [f64; 3],
    #[serde(default, skip_serializing_if = "is_zero3")]
    pub angular_velocity: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub randomize: Option<Randomize>,
}

/// Seeded perturbation of a body's initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Randomize {
    /// Uniform offsets in `[-s, s]` per axis.
    #[serde(default)]
    pub position_spread: [f64; 3],
    /// Uniformly random orientation.
    #[serde(default)]
    pub orientation: bool,
    /// Linear velocity uniform in the ball of this radius.
    #[serde(default)]
    pub linear_speed: f64,
    /// Angular velocity uniform in the ball of this radius.
    #[serde(default)]
    pub angular_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub name: String,
    #[serde(default)]
    pub base_position: [f64; 3],
    #[serde(default = "identity_quat", skip_serializing_if = "is_identity_quat")]
    pub base_orientation: [f64; 4],
    #[serde(default = "default_true")]
    pub fixed: bool,
    pub links: Vec<LinkSpec>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointSpec {
    Revolute,
    Prismatic,
}

fn default_repeat() -> usize {
    1
}

fn is_one(n: &usize) -> bool {
    *n == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub joint: JointSpec,
    pub axis: [f64; 3],
    /// Joint position in the parent frame (the base frame for the first
    /// link, the parent's center of mass frame otherwise).
    pub location: [f64; 3],
    /// Joint to center of mass, in the link frame.
    pub com_offset: [f64; 3],
    pub shape: ShapeSpec,
    #[serde(default = "default_mass")]
    pub mass: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub inertia: InertiaSpec,
    #[serde(default)]
    pub q: f64,
    #[serde(default)]
    pub qd: f64,
    /// Number of identical consecutive links this entry stands for.
    #[serde(default = "default_repeat", skip_serializing_if = "is_one")]
    pub repeat: usize,
}

fn vec3(v: &[f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

fn quat(q: &[f64; 4], field: &str) -> Result<Quat, ScenarioError> {
    let raw = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    let n = raw.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(invalid(field, "orientation must be a non-zero quaternion"));
    }
    // keep unit inputs bit-exact
    Ok(if (n - 1.0).abs() <= 1e-12 { Quat::new_unchecked(raw) } else { Quat::new_normalize(raw) })
}

fn finite(field: &str, values: &[f64]) -> Result<(), ScenarioError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(field, "values must be finite"))
    }
}

fn regular_solid(name: &str, field: &str) -> Result<RegularSolid, ScenarioError> {
    Ok(match name {
        "tetrahedron" => RegularSolid::Tetrahedron,
        "cube" => RegularSolid::Cube,
        "octahedron" => RegularSolid::Octahedron,
        "icosahedron" => RegularSolid::Icosahedron,
        "dodecahedron" => RegularSolid::Dodecahedron,
        other => return Err(invalid(field, format!("unknown regular solid {other:?}"))),
    })
}

impl ShapeSpec {
    /// Builds the polytope, centered on its centroid.
    pub fn build(&self, field: &str) -> Result<ConvexPolytope, ScenarioError> {
        let poly = match self {
            ShapeSpec::Box { half_extents } => {
                finite(field, half_extents)?;
                if half_extents.iter().any(|&h| h <= 0.0) {
                    return Err(invalid(field, "half extents must be positive"));
                }
                ConvexPolytope::cuboid(vec3(half_extents))
            }
            ShapeSpec::Regular { solid, circumradius } => {
                if !(*circumradius > 0.0 && circumradius.is_finite()) {
                    return Err(invalid(field, "circumradius must be positive"));
                }
                ConvexPolytope::regular(regular_solid(solid, field)?, *circumradius)
            }
            ShapeSpec::Vertices { points } => {
                for p in points {
                    finite(field, p)?;
                }
                ConvexPolytope::from_vertices(points.iter().map(vec3).collect())
                    .map_err(|source| ScenarioError::Geometry { field: field.into(), source })?
            }
        };
        Ok(poly.recentered().0)
    }
}

fn inertia(spec: &InertiaSpec, poly: &ConvexPolytope, mass: f64, field: &str) -> Result<Mat3, ScenarioError> {
    match spec {
        InertiaSpec::Auto(s) if s == "auto" => Ok(poly.uniform_inertia(mass)),
        InertiaSpec::Auto(s) => Err(invalid(field, format!("expected \"auto\" or a 3x3 matrix, got {s:?}"))),
        InertiaSpec::Matrix(m) => {
            for row in m {
                finite(field, row)?;
            }
            Ok(Mat3::from_fn(|i, j| m[i][j]))
        }
    }
}

fn random_in_ball(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 3] {
    if radius <= 0.0 {
        return [0.0; 3];
    }
    loop {
        let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if n2 <= 1.0 {
            return v.map(|x| x * radius);
        }
    }
}

/// Uniform random unit quaternion (Shoemake).
fn random_orientation(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = nalgebra::Quaternion::new(b * (tau * u3).cos(), a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin());
    let q = Quat::new_normalize(q);
    [q.w, q.i, q.j, q.k]
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(self)?)
    }

    /// The scenario with every `randomize` section applied using `seed`
    /// (the world seed when `None`) and removed. Building the result gives
    /// the same state as building `self` with that seed.
    pub fn resolved(&self, seed: Option<u64>) -> Scenario {
        let seed = seed.unwrap_or(self.world.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        out.world.seed = seed;
        for body in &mut out.bodies {
            let Some(r) = body.randomize.take() else { continue };
            for k in 0..3 {
                let s = r.position_spread[k];
                if s > 0.0 {
                    body.position[k] += rng.gen_range(-s..=s);
                }
            }
            if r.orientation {
                body.orientation = random_orientation(&mut rng);
            }
            let v = random_in_ball(&mut rng, r.linear_speed);
            let w = random_in_ball(&mut rng, r.angular_speed);
            for k in 0..3 {
                body.linear_velocity[k] += v[k];
                body.angular_velocity[k] += w[k];
            }
        }
        out
    }

    /// Resolves randomization and builds the initial state and settings.
    pub fn build(&self, seed: Option<u64>) -> Result<(SystemState, SimConfig), ScenarioError> {
        let sc = self.resolved(seed);
        let config = sc.sim_config()?;
        let mut state = SystemState::new(config.gravity);
        let mut names = BTreeSet::new();
        for (i, b) in sc.bodies.iter().enumerate() {
            let field = format!("bodies[{i}] ({})", b.name);
            if !names.insert(b.name.clone()) {
                return Err(invalid(format!("bodies[{i}].name"), format!("duplicate name {:?}", b.name)));
            }
            state.add_body(b.build(&field)?);
        }
        for (i, c) in sc.chains.iter().enumerate() {
            if !names.insert(c.name.clone()) {
                return Err(invalid(format!("chains[{i}].name"), format!("duplicate name {:?}", c.name)));
            }
            state.add_chain(c.build(&format!("chains[{i}] ({})", c.name))?);
        }
        Ok((state, config))
    }

    fn sim_config(&self) -> Result<SimConfig, ScenarioError> {
        finite("world.gravity", &self.world.gravity)?;
        let d = SimConfig::default();
        let t = StepTolerances::default();
        let o = &self.config;
        let cfg = SimConfig {
            max_step: o.max_step.unwrap_or(d.max_step),
            tolerances: StepTolerances {
                eps_geo: o.eps_geo.unwrap_or(t.eps_geo),
                eps_v: o.eps_v.unwrap_or(t.eps_v),
                dt_min: o.dt_min.unwrap_or(t.dt_min),
                phi_tolerance: o.phi_tolerance.unwrap_or(t.phi_tolerance),
                transient_growth: o.transient_growth.unwrap_or(t.transient_growth),
                vertex_bound: o.vertex_bound.unwrap_or(t.vertex_bound),
                band_samples: o.band_samples.unwrap_or(t.band_samples),
            },
            gravity: vec3(&self.world.gravity),
            end_time: self.world.end_time,
            seed: self.world.seed,
            quiescence_speed: o.quiescence_speed.unwrap_or(d.quiescence_speed),
            quiescence_steps: o.quiescence_steps.unwrap_or(d.quiescence_steps),
            free_fall_cap: o.free_fall_cap.unwrap_or(d.free_fall_cap),
        };
        cfg.validate().map_err(|e| invalid("config", e.to_string()))?;
        Ok(cfg)
    }
}

impl BodySpec {
    fn build(&self, field: &str) -> Result<RigidBody, ScenarioError> {
        let poly = self.shape.build(&format!("{field}.shape"))?;
        finite(&format!("{field}.position"), &self.position)?;
        finite(&format!("{field}.linear_velocity"), &self.linear_velocity)?;
        finite(&format!("{field}.angular_velocity"), &self.angular_velocity)?;
        let pose = Pose::new(vec3(&self.position), quat(&self.orientation, &format!("{field}.orientation"))?);
        if self.is_static {
            return Ok(RigidBody::fixed(self.name.clone(), poly, pose));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(invalid(format!("{field}.mass"), format!("dynamic body needs a positive mass, got {}", self.mass)));
        }
        let inertia = inertia(&self.inertia, &poly, self.mass, &format!("{field}.inertia"))?;
        Ok(RigidBody::with_inertia(self.name.clone(), poly, self.mass, inertia)
            .map_err(|source| ScenarioError::Dynamics { field: field.into(), source })?
            .at(pose)
            .moving(vec3(&self.linear_velocity), vec3(&self.angular_velocity)))
    }
}

impl ChainSpec {
    fn build(&self, field: &str) -> Result<MultibodyChain, ScenarioError> {
        finite(&format!("{field}.base_position"), &self.base_position)?;
        let pose = Pose::new(vec3(&self.base_position), quat(&self.base_orientation, &format!("{field}.base_orientation"))?);
        let base = Base { fixed: self.fixed, ..Base::fixed(pose) };
        let mut links = Vec::new();
        let mut q = Vec::new();
        let mut qd = Vec::new();
        for (i, l) in self.links.iter().enumerate() {
            let lf = format!("{field}.links[{i}]");
            if l.repeat == 0 {
                return Err(invalid(format!("{lf}.repeat"), "must be at least 1"));
            }
            if !(l.mass > 0.0 && l.mass.is_finite()) {
                return Err(invalid(format!("{lf}.mass"), format!("link needs a positive mass, got {}", l.mass)));
            }
            finite(&lf, &[l.q, l.qd])?;
            let poly = l.shape.build(&format!("{lf}.shape"))?;
            let inertia = inertia(&l.inertia, &poly, l.mass, &format!("{lf}.inertia"))?;
            let axis = vec3(&l.axis);
            let mut link = match l.joint {
                JointSpec::Revolute => Link::revolute(axis, vec3(&l.location), vec3(&l.com_offset), poly, l.mass),
                JointSpec::Prismatic => Link::prismatic(axis, vec3(&l.location), vec3(&l.com_offset), poly, l.mass),
            };
            link.inertia = inertia;
            for _ in 0..l.repeat {
                links.push(link.clone());
                q.push(l.q);
                qd.push(l.qd);
            }
        }
        let mut chain = MultibodyChain::new(self.name.clone(), base, links)
            .map_err(|source| ScenarioError::Dynamics { field: field.into(), source })?;
        chain.set_coordinates(&q);
        chain.set_velocities(&qd);
        Ok(chain)
    }
}

/// Loads a scenario file and builds its initial state.
pub fn load_scenario(path: &Path, seed: Option<u64>) -> Result<(SystemState, SimConfig), ScenarioError> {
    Scenario::load(path)?.build(seed)
}

/// Bundled scenarios by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("ball_vs_box", include_str!("../scenarios/ball_vs_box.toml")),
    ("die_drop", include_str!("../scenarios/die_drop.toml")),
    ("chain100", include_str!("../scenarios/chain100.toml")),
    ("two_cube_stack", include_str!("../scenarios/two_cube_stack.toml")),
    ("tipping_cube", include_str!("../scenarios/tipping_cube.toml")),
    ("resting_cube", include_str!("../scenarios/resting_cube.toml")),
    ("face_down_drop", include_str!("../scenarios/face_down_drop.toml")),
];

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| Scenario::from_toml_str(text).expect("bundled scenario parses"))
}
