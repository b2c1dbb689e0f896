//! Scene description files: a JSON schema mirroring the model types, with
//! SI units and decimal floats throughout.
//!
//! ```json
//! {
//!   "gravity": [0.0, 0.0, -9.81],
//!   "dt": 0.001,
//!   "friction": 0.7,
//!   "restitution": 0.0,
//!   "bodies": [
//!     { "name": "ground", "geometry": { "plane": {} } },
//!     { "name": "box", "mass": 1.0,
//!       "geometry": { "box": { "half_extents": [0.1, 0.1, 0.1] } },
//!       "position": [0.0, 0.0, 0.1] }
//!   ],
//!   "joints": [
//!     { "kind": "revolute", "base": "ground", "follower": "box",
//!       "anchor_base": [0,0,0], "anchor_follower": [0,0,0],
//!       "axis": [0,1,0], "limits": { "min": -0.785, "max": 0.785 } }
//!   ]
//! }
//! ```
//!
//! Body inertia defaults to the solid-shape inertia of the geometry; an
//! explicit `inertia_diagonal` overrides it. `axis` is the hinge axis for
//! revolute joints and the sliding axis for prismatic joints; full `axes`
//! rows may be given instead.

use crate::error::CliError;
use crate::scenario::Scenario;
use dualfd::collision::CollisionConfig;
use dualfd::dynamics::{
    contact_frame_basis, BodyRef, BodySpec, BodyState, Geometry, JointKind, JointLimit, JointSpec,
    SystemModel,
};
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

fn default_dt() -> f64 {
    1e-3
}

fn default_duration() -> f64 {
    5.0
}

fn default_friction() -> f64 {
    0.7
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneFile {
    pub gravity: [f64; 3],
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_friction")]
    pub friction: f64,
    #[serde(default)]
    pub restitution: f64,
    pub bodies: Vec<SceneBody>,
    #[serde(default)]
    pub joints: Vec<SceneJoint>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneBody {
    pub name: String,
    #[serde(default)]
    pub mass: Option<f64>,
    pub geometry: SceneGeometry,
    #[serde(default)]
    pub inertia_diagonal: Option<[f64; 3]>,
    #[serde(default)]
    pub position: Option<[f64; 3]>,
    /// Quaternion (x, y, z, w).
    #[serde(default)]
    pub orientation: Option<[f64; 4]>,
    #[serde(default)]
    pub linear_velocity: Option<[f64; 3]>,
    #[serde(default)]
    pub angular_velocity: Option<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneGeometry {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    Plane {},
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneJoint {
    pub kind: String,
    pub base: String,
    pub follower: String,
    pub anchor_base: [f64; 3],
    pub anchor_follower: [f64; 3],
    #[serde(default)]
    pub axis: Option<[f64; 3]>,
    #[serde(default)]
    pub axes_columns: Option<[[f64; 3]; 3]>,
    #[serde(default)]
    pub limits: Option<SceneLimit>,
    #[serde(default)]
    pub actuated: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SceneLimit {
    pub min: f64,
    pub max: f64,
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<SceneFile, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Scene(e.to_string()))
    }

    fn body_index(&self, name: &str) -> Result<usize, CliError> {
        self.bodies
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| CliError::Scene(format!("unknown body '{name}'")))
    }

    /// Builds a runnable scenario from the file.
    pub fn to_scenario(&self, id: &str) -> Result<Scenario, CliError> {
        let mut bodies = Vec::new();
        let mut states = Vec::new();
        for b in &self.bodies {
            let spec = match &b.geometry {
                SceneGeometry::Plane {} => BodySpec::ground_plane(),
                SceneGeometry::Sphere { radius } => {
                    let mass = b.mass.ok_or_else(|| {
                        CliError::Scene(format!("body '{}' needs a mass", b.name))
                    })?;
                    let mut spec = BodySpec::sphere(mass, *radius);
                    if let Some(diag) = b.inertia_diagonal {
                        spec.local_inertia = Matrix3::from_diagonal(&v3(diag));
                    }
                    spec
                }
                SceneGeometry::Box { half_extents } => {
                    let mass = b.mass.ok_or_else(|| {
                        CliError::Scene(format!("body '{}' needs a mass", b.name))
                    })?;
                    let mut spec = BodySpec::cuboid(mass, v3(*half_extents));
                    if let Some(diag) = b.inertia_diagonal {
                        spec.local_inertia = Matrix3::from_diagonal(&v3(diag));
                    }
                    spec
                }
            };
            let mut state = BodyState::at_rest(b.position.map(v3).unwrap_or_else(Vector3::zeros));
            if let Some(q) = b.orientation {
                state.orientation = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                    q[3], q[0], q[1], q[2],
                ));
            }
            if let Some(v) = b.linear_velocity {
                state.linear_velocity = v3(v);
            }
            if let Some(w) = b.angular_velocity {
                state.angular_velocity = v3(w);
            }
            bodies.push(spec);
            states.push(state);
        }

        let mut joints = Vec::new();
        for j in &self.joints {
            let kind = match j.kind.as_str() {
                "fixed" => JointKind::Fixed,
                "revolute" => JointKind::Revolute,
                "spherical" => JointKind::Spherical,
                "prismatic" => JointKind::Prismatic,
                other => return Err(CliError::Scene(format!("unknown joint kind '{other}'"))),
            };
            let base = if j.base == "world" {
                BodyRef::World
            } else {
                BodyRef::Body(self.body_index(&j.base)?)
            };
            let follower = self.body_index(&j.follower)?;
            let axes = if let Some(cols) = j.axes_columns {
                Matrix3::from_columns(&[v3(cols[0]), v3(cols[1]), v3(cols[2])])
            } else if let Some(axis) = j.axis {
                // the free axis becomes the joint-frame z
                contact_frame_basis(&v3(axis))
                    .map_err(|e| CliError::Scene(format!("joint axis: {e}")))?
            } else {
                Matrix3::identity()
            };
            let mut spec =
                JointSpec::new(kind, base, follower, v3(j.anchor_base), v3(j.anchor_follower), axes);
            if let Some(l) = j.limits {
                spec = spec.with_limits(JointLimit { min: l.min, max: l.max });
            }
            if j.actuated {
                spec = spec.with_actuation();
            }
            joints.push(spec);
        }

        let model = SystemModel::new(bodies, joints, v3(self.gravity));
        model.validate()?;
        Ok(Scenario {
            id: id.to_string(),
            model,
            initial_states: states,
            schedule: vec![],
            duration: self.duration,
            dt: self.dt,
            collision: CollisionConfig {
                friction: self.friction,
                restitution: self.restitution,
                ..CollisionConfig::default()
            },
            extra_filtered_pairs: vec![],
        })
    }
}

/// Serializes a scenario back to the scene schema (used for run manifests).
pub fn scenario_to_scene(scenario: &Scenario) -> SceneFile {
    let bodies = scenario
        .model
        .bodies
        .iter()
        .zip(&scenario.initial_states)
        .enumerate()
        .map(|(i, (spec, state))| SceneBody {
            name: format!("body{i}"),
            mass: Some(spec.mass),
            geometry: match &spec.geometry {
                Geometry::Sphere { radius } => SceneGeometry::Sphere { radius: *radius },
                Geometry::Box { half_extents } => SceneGeometry::Box {
                    half_extents: [half_extents.x, half_extents.y, half_extents.z],
                },
                Geometry::Plane => SceneGeometry::Plane {},
            },
            inertia_diagonal: None,
            position: Some([state.position.x, state.position.y, state.position.z]),
            orientation: Some([
                state.orientation.coords.x,
                state.orientation.coords.y,
                state.orientation.coords.z,
                state.orientation.coords.w,
            ]),
            linear_velocity: Some([
                state.linear_velocity.x,
                state.linear_velocity.y,
                state.linear_velocity.z,
            ]),
            angular_velocity: Some([
                state.angular_velocity.x,
                state.angular_velocity.y,
                state.angular_velocity.z,
            ]),
        })
        .collect();
    let joints = scenario
        .model
        .joints
        .iter()
        .map(|j| SceneJoint {
            kind: match j.kind {
                JointKind::Fixed => "fixed",
                JointKind::Revolute => "revolute",
                JointKind::Spherical => "spherical",
                JointKind::Prismatic => "prismatic",
            }
            .to_string(),
            base: match j.base {
                BodyRef::World => "world".to_string(),
                BodyRef::Body(b) => format!("body{b}"),
            },
            follower: format!("body{}", j.follower),
            anchor_base: [j.anchor_base.x, j.anchor_base.y, j.anchor_base.z],
            anchor_follower: [j.anchor_follower.x, j.anchor_follower.y, j.anchor_follower.z],
            axis: None,
            axes_columns: Some([
                [j.axes[(0, 0)], j.axes[(1, 0)], j.axes[(2, 0)]],
                [j.axes[(0, 1)], j.axes[(1, 1)], j.axes[(2, 1)]],
                [j.axes[(0, 2)], j.axes[(1, 2)], j.axes[(2, 2)]],
            ]),
            limits: j.limits.iter().flatten().next().map(|l| SceneLimit { min: l.min, max: l.max }),
            actuated: j.actuated,
        })
        .collect();
    SceneFile {
        gravity: [scenario.model.gravity.x, scenario.model.gravity.y, scenario.model.gravity.z],
        dt: scenario.dt,
        duration: scenario.duration,
        friction: scenario.collision.friction,
        restitution: scenario.collision.restitution,
        bodies,
        joints,
    }
}
