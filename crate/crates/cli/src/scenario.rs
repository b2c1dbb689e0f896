//! The primitive benchmark scenes and their schedules.

use crate::error::CliError;
use dualfd::collision::CollisionConfig;
use dualfd::dynamics::{
    contact_frame_basis, BodyRef, BodySpec, BodyState, JointKind, JointLimit, JointSpec,
    SystemModel,
};
use nalgebra::{Matrix3, Vector3};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioId {
    BoxOnPlane,
    BoxesFixed,
    Nunchaku,
    FourbarFixed,
    FourbarFree,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] = [
        ScenarioId::BoxOnPlane,
        ScenarioId::BoxesFixed,
        ScenarioId::Nunchaku,
        ScenarioId::FourbarFixed,
        ScenarioId::FourbarFree,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioId::BoxOnPlane => "box_on_plane",
            ScenarioId::BoxesFixed => "boxes_fixed",
            ScenarioId::Nunchaku => "nunchaku",
            ScenarioId::FourbarFixed => "fourbar_fixed",
            ScenarioId::FourbarFree => "fourbar_free",
        }
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| CliError::UnknownScenario(s.to_string()))
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A timed external-force event. Forces act at the CoM of the target body.
#[derive(Debug, Clone)]
pub enum ForceEvent {
    /// Linear ramp of the force magnitude along a fixed direction.
    Ramp { body: usize, direction: Vector3<f64>, t_start: f64, t_end: f64, f_start: f64, f_end: f64 },
    /// Constant force over a time window.
    Constant { body: usize, force: Vector3<f64>, t_start: f64, t_end: f64 },
    /// Constant force applied to whichever dynamic body is highest when the
    /// window opens (resolved once by the runner).
    PushHighest { direction: Vector3<f64>, magnitude: f64, t_start: f64, t_end: f64 },
}

/// A runnable scene: model, initial state, schedule and collision settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub model: SystemModel,
    pub initial_states: Vec<BodyState>,
    pub schedule: Vec<ForceEvent>,
    pub duration: f64,
    pub dt: f64,
    pub collision: CollisionConfig,
    /// Collision pairs excluded beyond the automatic jointed-neighbor filter.
    pub extra_filtered_pairs: Vec<(usize, usize)>,
}

/// Knobs the CLI and tests may override on the built-in scenarios.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub friction: Option<f64>,
    pub restitution: Option<f64>,
    pub margin: Option<f64>,
    pub min_separation: Option<f64>,
    /// Masses of the Boxes-Fixed pair.
    pub bottom_mass: Option<f64>,
    pub top_mass: Option<f64>,
    /// Drop clearance above the resting height.
    pub drop_height: Option<f64>,
    /// Disable the external-force schedule.
    pub no_schedule: bool,
}

fn collision_defaults(ov: &Overrides) -> CollisionConfig {
    CollisionConfig {
        margin: ov.margin.unwrap_or(1e-4),
        min_separation: ov.min_separation.unwrap_or(1e-3),
        friction: ov.friction.unwrap_or(0.7),
        restitution: ov.restitution.unwrap_or(0.0),
    }
}

/// Cuboid of 20 cm sides and 1 kg resting on the plane; an external force
/// along +x ramps from zero to twice the stiction bound between t = 2 s and
/// t = 8 s, then releases.
fn box_on_plane(ov: &Overrides) -> Scenario {
    let half = 0.1;
    let mass = 1.0;
    let collision = collision_defaults(ov);
    let model = SystemModel::new(
        vec![BodySpec::ground_plane(), BodySpec::cuboid(mass, Vector3::new(half, half, half))],
        vec![],
        Vector3::new(0.0, 0.0, -GRAVITY),
    );
    let drop = ov.drop_height.unwrap_or(0.0);
    let states = vec![
        BodyState::at_rest(Vector3::zeros()),
        BodyState::at_rest(Vector3::new(0.0, 0.0, half + drop)),
    ];
    let f_max = 2.0 * collision.friction * mass * GRAVITY;
    let schedule = if ov.no_schedule {
        vec![]
    } else {
        vec![ForceEvent::Ramp {
            body: 1,
            direction: Vector3::x(),
            t_start: 2.0,
            t_end: 8.0,
            f_start: 0.0,
            f_end: f_max,
        }]
    };
    Scenario {
        id: ScenarioId::BoxOnPlane.name().into(),
        model,
        initial_states: states,
        schedule,
        duration: ov.duration.unwrap_or(10.0),
        dt: ov.dt.unwrap_or(1e-3),
        collision,
        extra_filtered_pairs: vec![],
    }
}

/// Two rigidly joined 20 cm boxes with a 10⁴ mass ratio; dragged by a ramp
/// force that marginally exceeds stiction, then released.
fn boxes_fixed(ov: &Overrides) -> Scenario {
    let half = 0.1;
    let m_b = ov.bottom_mass.unwrap_or(0.1);
    let m_t = ov.top_mass.unwrap_or(1e3);
    let collision = collision_defaults(ov);
    let joint = JointSpec::new(
        JointKind::Fixed,
        BodyRef::Body(1),
        2,
        Vector3::new(0.0, 0.0, half),
        Vector3::new(0.0, 0.0, -half),
        Matrix3::identity(),
    );
    let model = SystemModel::new(
        vec![
            BodySpec::ground_plane(),
            BodySpec::cuboid(m_b, Vector3::new(half, half, half)),
            BodySpec::cuboid(m_t, Vector3::new(half, half, half)),
        ],
        vec![joint],
        Vector3::new(0.0, 0.0, -GRAVITY),
    );
    let drop = ov.drop_height.unwrap_or(0.0);
    let states = vec![
        BodyState::at_rest(Vector3::zeros()),
        BodyState::at_rest(Vector3::new(0.0, 0.0, half + drop)),
        BodyState::at_rest(Vector3::new(0.0, 0.0, 3.0 * half + drop)),
    ];
    let f_max = 1.01 * collision.friction * (m_b + m_t) * GRAVITY;
    let schedule = if ov.no_schedule {
        vec![]
    } else {
        vec![
            ForceEvent::Ramp {
                body: 1,
                direction: Vector3::x(),
                t_start: 0.0,
                t_end: 2.0,
                f_start: 0.0,
                f_end: f_max,
            },
            ForceEvent::Constant {
                body: 1,
                force: Vector3::x() * f_max,
                t_start: 2.0,
                t_end: 8.0,
            },
        ]
    };
    Scenario {
        id: ScenarioId::BoxesFixed.name().into(),
        model,
        initial_states: states,
        schedule,
        duration: ov.duration.unwrap_or(10.0),
        dt: ov.dt.unwrap_or(1e-3),
        collision,
        extra_filtered_pairs: vec![],
    }
}

/// Two slender boxes ball-jointed through an intermediate sphere, dropped
/// vertically; collapsing produces internal box-box and external plane
/// contacts.
fn nunchaku(ov: &Overrides) -> Scenario {
    let box_half = Vector3::new(0.05, 0.05, 0.25);
    let r = 0.05;
    let drop = ov.drop_height.unwrap_or(0.3);
    let collision = collision_defaults(ov);
    // boxes touch the sphere surface; both joints anchor at the sphere center
    let joints = vec![
        JointSpec::new(
            JointKind::Spherical,
            BodyRef::Body(1),
            2,
            Vector3::new(0.0, 0.0, box_half.z + r),
            Vector3::zeros(),
            Matrix3::identity(),
        ),
        JointSpec::new(
            JointKind::Spherical,
            BodyRef::Body(2),
            3,
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, -(box_half.z + r)),
            Matrix3::identity(),
        ),
    ];
    let model = SystemModel::new(
        vec![
            BodySpec::ground_plane(),
            BodySpec::cuboid(1.0, box_half),
            BodySpec::sphere(1.0, r),
            BodySpec::cuboid(1.0, box_half),
        ],
        joints,
        Vector3::new(0.0, 0.0, -GRAVITY),
    );
    let z0 = box_half.z + drop;
    let states = vec![
        BodyState::at_rest(Vector3::zeros()),
        BodyState::at_rest(Vector3::new(0.0, 0.0, z0)),
        BodyState::at_rest(Vector3::new(0.0, 0.0, z0 + box_half.z + r)),
        BodyState::at_rest(Vector3::new(0.0, 0.0, z0 + 2.0 * (box_half.z + r))),
    ];
    Scenario {
        id: ScenarioId::Nunchaku.name().into(),
        model,
        initial_states: states,
        schedule: vec![],
        duration: ov.duration.unwrap_or(6.0),
        dt: ov.dt.unwrap_or(1e-3),
        collision,
        extra_filtered_pairs: vec![],
    }
}

/// Planar parallelogram four-bar (RRRR about the y axis) of slender links
/// with ±π/4 limits on every hinge; the fixed variant anchors the bottom
/// link to the world with a unary fixed joint. An in-plane push on the
/// highest link lands at t = 10 s.
fn fourbar(ov: &Overrides, fixed_base: bool) -> Scenario {
    let long = 0.05; // link half length
    let thin = 0.005;
    let mass = 1.0;
    let side = 2.0 * long; // anchor-to-anchor square side
    let z_b = ov.drop_height.unwrap_or(0.10);
    let z0 = z_b + thin; // bottom link center
    let collision = collision_defaults(ov);
    let hinge_axes = contact_frame_basis(&Vector3::y()).expect("unit axis");
    let limit = JointLimit { min: -std::f64::consts::FRAC_PI_4, max: std::f64::consts::FRAC_PI_4 };

    // bodies: 1 bottom (x-long), 2 left (z-long), 3 top (x-long), 4 right
    let horizontal = Vector3::new(long, thin, thin);
    let vertical = Vector3::new(thin, thin, long);
    let mut bodies = vec![
        BodySpec::ground_plane(),
        BodySpec::cuboid(mass, horizontal),
        BodySpec::cuboid(mass, vertical),
        BodySpec::cuboid(mass, horizontal),
        BodySpec::cuboid(mass, vertical),
    ];
    if let (Some(m_l), Some(m_h)) = (ov.bottom_mass, ov.top_mass) {
        // lateral-link mass override used by the inertial-disparity runs
        bodies[2] = BodySpec::cuboid(m_l, vertical);
        bodies[4] = BodySpec::cuboid(m_h, vertical);
    }

    let states = vec![
        BodyState::at_rest(Vector3::zeros()),
        BodyState::at_rest(Vector3::new(0.0, 0.0, z0)),
        BodyState::at_rest(Vector3::new(-long, 0.0, z0 + long)),
        BodyState::at_rest(Vector3::new(0.0, 0.0, z0 + side)),
        BodyState::at_rest(Vector3::new(long, 0.0, z0 + long)),
    ];

    let rev = |base: usize, follower: usize, anchor_base: Vector3<f64>, anchor_f: Vector3<f64>| {
        JointSpec::new(JointKind::Revolute, BodyRef::Body(base), follower, anchor_base, anchor_f, hinge_axes)
            .with_limits(limit)
    };
    let mut joints = vec![
        // bottom-left corner
        rev(1, 2, Vector3::new(-long, 0.0, 0.0), Vector3::new(0.0, 0.0, -long)).with_actuation(),
        // top-left corner
        rev(2, 3, Vector3::new(0.0, 0.0, long), Vector3::new(-long, 0.0, 0.0)),
        // top-right corner
        rev(3, 4, Vector3::new(long, 0.0, 0.0), Vector3::new(0.0, 0.0, long)).with_actuation(),
        // bottom-right corner
        rev(4, 1, Vector3::new(0.0, 0.0, -long), Vector3::new(long, 0.0, 0.0)),
    ];
    if fixed_base {
        joints.push(JointSpec::new(
            JointKind::Fixed,
            BodyRef::World,
            1,
            Vector3::new(0.0, 0.0, z0),
            Vector3::zeros(),
            Matrix3::identity(),
        ));
    }

    let model = SystemModel::new(bodies, joints, Vector3::new(0.0, 0.0, -GRAVITY));
    let total_mass: f64 = model.bodies.iter().filter(|b| !b.is_static()).map(|b| b.mass).sum();
    let schedule = if ov.no_schedule {
        vec![]
    } else {
        vec![ForceEvent::PushHighest {
            direction: -Vector3::x(),
            magnitude: total_mass * GRAVITY,
            t_start: 10.0,
            t_end: 11.0,
        }]
    };
    let id = if fixed_base { ScenarioId::FourbarFixed } else { ScenarioId::FourbarFree };
    Scenario {
        id: id.name().into(),
        model,
        initial_states: states,
        schedule,
        duration: ov.duration.unwrap_or(12.0),
        dt: ov.dt.unwrap_or(1e-3),
        collision,
        extra_filtered_pairs: vec![],
    }
}

/// Builds one of the named benchmark scenarios.
pub fn build_scenario(id: ScenarioId, overrides: &Overrides) -> Scenario {
    match id {
        ScenarioId::BoxOnPlane => box_on_plane(overrides),
        ScenarioId::BoxesFixed => boxes_fixed(overrides),
        ScenarioId::Nunchaku => nunchaku(overrides),
        ScenarioId::FourbarFixed => fourbar(overrides, true),
        ScenarioId::FourbarFree => fourbar(overrides, false),
    }
}

/// A dropped sphere with configurable restitution; used for the impact
/// experiments. Not part of the named suite, so it lives beside it.
pub fn sphere_drop(restitution: f64, drop_height: f64, ov: &Overrides) -> Scenario {
    let r = 0.2;
    let collision = CollisionConfig { restitution, ..collision_defaults(ov) };
    let model = SystemModel::new(
        vec![BodySpec::ground_plane(), BodySpec::sphere(1.0, r)],
        vec![],
        Vector3::new(0.0, 0.0, -GRAVITY),
    );
    let states = vec![
        BodyState::at_rest(Vector3::zeros()),
        BodyState::at_rest(Vector3::new(0.0, 0.0, r + drop_height)),
    ];
    Scenario {
        id: "sphere_drop".into(),
        model,
        initial_states: states,
        schedule: vec![],
        duration: ov.duration.unwrap_or(1.0),
        dt: ov.dt.unwrap_or(1e-3),
        collision,
        extra_filtered_pairs: vec![],
    }
}

/// Evaluates the schedule at time `t`. `push_targets` carries the resolved
/// body of each `PushHighest` event.
pub fn schedule_wrenches(
    schedule: &[ForceEvent],
    push_targets: &[Option<usize>],
    t: f64,
    n_bodies: usize,
) -> Vec<nalgebra::Vector6<f64>> {
    let mut wrenches = vec![nalgebra::Vector6::zeros(); n_bodies];
    for (i, event) in schedule.iter().enumerate() {
        match event {
            ForceEvent::Ramp { body, direction, t_start, t_end, f_start, f_end } => {
                if t >= *t_start && t < *t_end {
                    let s = (t - t_start) / (t_end - t_start);
                    let f = direction * (f_start + s * (f_end - f_start));
                    for k in 0..3 {
                        wrenches[*body][k] += f[k];
                    }
                }
            }
            ForceEvent::Constant { body, force, t_start, t_end } => {
                if t >= *t_start && t < *t_end {
                    for k in 0..3 {
                        wrenches[*body][k] += force[k];
                    }
                }
            }
            ForceEvent::PushHighest { direction, magnitude, t_start, t_end } => {
                if t >= *t_start && t < *t_end {
                    if let Some(body) = push_targets[i] {
                        let f = direction * *magnitude;
                        for k in 0..3 {
                            wrenches[body][k] += f[k];
                        }
                    }
                }
            }
        }
    }
    wrenches
}
