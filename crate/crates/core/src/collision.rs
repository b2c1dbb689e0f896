//! Analytic narrow-phase collision detection for primitive shape pairs,
//! plus contact post-processing (activation margin, duplicate culling).
//!
//! Determinism is load-bearing here: splitting solvers are sensitive to the
//! order in which contacts are generated, so identical inputs must produce
//! identical contact lists, bitwise and in the same order.

use crate::dynamics::{BodyRef, BodySpec, BodyState, ContactPoint, Geometry};
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CollisionError {
    #[error("unsupported shape pair: {0} vs {1}")]
    UnsupportedPair(&'static str, &'static str),
    #[error("invalid collision config: {0}")]
    InvalidConfig(String),
}

/// Narrow-phase configuration.
#[derive(Debug, Clone)]
pub struct CollisionConfig {
    /// Activation margin `δ_c` (m): contacts with gap ≤ margin are emitted.
    /// May be negative to require actual penetration.
    pub margin: f64,
    /// Minimum distance between kept contact points of the same body pair.
    pub min_separation: f64,
    /// Friction and restitution assigned to generated contacts.
    pub friction: f64,
    pub restitution: f64,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        Self { margin: 1e-4, min_separation: 1e-3, friction: 0.7, restitution: 0.0 }
    }
}

impl CollisionConfig {
    pub fn validate(&self) -> Result<(), CollisionError> {
        if self.min_separation < 0.0 {
            return Err(CollisionError::InvalidConfig("min_separation must be ≥ 0".into()));
        }
        Ok(())
    }
}

fn geometry_name(g: &Geometry) -> &'static str {
    match g {
        Geometry::Sphere { .. } => "sphere",
        Geometry::Box { .. } => "box",
        Geometry::Plane => "plane",
    }
}

fn box_corners(half: &Vector3<f64>) -> [Vector3<f64>; 8] {
    let mut c = [Vector3::zeros(); 8];
    for (i, corner) in c.iter_mut().enumerate() {
        *corner = Vector3::new(
            if i & 1 == 0 { -half.x } else { half.x },
            if i & 2 == 0 { -half.y } else { half.y },
            if i & 4 == 0 { -half.z } else { half.z },
        );
    }
    c
}

struct RawContact {
    position: Vector3<f64>,
    normal: Vector3<f64>,
    gap: f64,
}

fn plane_of(state: &BodyState) -> (Vector3<f64>, Vector3<f64>) {
    // plane point and outward normal (local +z)
    (state.position, state.rotation() * Vector3::z())
}

fn sphere_plane(
    plane_state: &BodyState,
    center: &Vector3<f64>,
    radius: f64,
    margin: f64,
) -> Vec<RawContact> {
    let (p0, n) = plane_of(plane_state);
    let dist = n.dot(&(center - p0));
    let gap = dist - radius;
    if gap > margin {
        return vec![];
    }
    let position = center - n * dist;
    vec![RawContact { position, normal: n, gap }]
}

fn box_plane(
    plane_state: &BodyState,
    box_state: &BodyState,
    half: &Vector3<f64>,
    margin: f64,
) -> Vec<RawContact> {
    let (p0, n) = plane_of(plane_state);
    let r = box_state.rotation();
    let mut hits: Vec<(f64, usize, Vector3<f64>)> = Vec::new();
    for (i, corner) in box_corners(half).iter().enumerate() {
        let world = box_state.position + r * corner;
        let gap = n.dot(&(world - p0));
        if gap <= margin {
            hits.push((gap, i, world));
        }
    }
    // deepest corners first, corner index breaks ties deterministically
    hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    hits.truncate(4);
    hits.iter()
        .map(|&(gap, _, world)| RawContact { position: world - n * gap, normal: n, gap })
        .collect()
}

fn sphere_sphere(
    state_a: &BodyState,
    r_a: f64,
    state_b: &BodyState,
    r_b: f64,
    margin: f64,
) -> Vec<RawContact> {
    let delta = state_b.position - state_a.position;
    let dist = delta.norm();
    let normal = if dist > 1e-12 { delta / dist } else { Vector3::z() };
    let gap = dist - r_a - r_b;
    if gap > margin {
        return vec![];
    }
    vec![RawContact { position: state_a.position + normal * r_a, normal, gap }]
}

fn sphere_box(
    sphere_state: &BodyState,
    radius: f64,
    box_state: &BodyState,
    half: &Vector3<f64>,
    margin: f64,
) -> Vec<RawContact> {
    // work in the box frame; emitted contact is sphere → box (a = sphere)
    let r = box_state.rotation();
    let local = r.transpose() * (sphere_state.position - box_state.position);
    let clamped = Vector3::new(
        local.x.clamp(-half.x, half.x),
        local.y.clamp(-half.y, half.y),
        local.z.clamp(-half.z, half.z),
    );
    if (local - clamped).norm() > 1e-12 {
        // center outside the box: nearest point on the surface
        let delta = local - clamped;
        let dist = delta.norm();
        let gap = dist - radius;
        if gap > margin {
            return vec![];
        }
        let n_local = -delta / dist; // sphere → box
        let normal = r * n_local;
        let position = sphere_state.position + normal * radius;
        vec![RawContact { position, normal, gap }]
    } else {
        // center inside the box: exit through the nearest face
        let mut best_axis = 0;
        let mut best_depth = f64::INFINITY;
        let mut best_sign = 1.0;
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let depth = half[axis] - sign * local[axis];
                if depth < best_depth {
                    best_depth = depth;
                    best_axis = axis;
                    best_sign = sign;
                }
            }
        }
        let mut n_local = Vector3::zeros();
        n_local[best_axis] = -best_sign; // sphere → box interior direction
        let normal = r * n_local;
        let gap = -(radius + best_depth);
        let position = sphere_state.position + normal * radius;
        vec![RawContact { position, normal, gap }]
    }
}

/// Separating-axis overlap test over the 15 candidate axes of two oriented
/// boxes. Returns the minimum-penetration face axis (world frame, pointing
/// from a to b) when overlapping within the margin.
fn box_box_sat(
    state_a: &BodyState,
    half_a: &Vector3<f64>,
    state_b: &BodyState,
    half_b: &Vector3<f64>,
    margin: f64,
) -> Option<Vector3<f64>> {
    let ra = state_a.rotation();
    let rb = state_b.rotation();
    let delta = state_b.position - state_a.position;

    let mut axes: Vec<Vector3<f64>> = Vec::with_capacity(15);
    for i in 0..3 {
        axes.push(ra.column(i).into_owned());
    }
    for i in 0..3 {
        axes.push(rb.column(i).into_owned());
    }
    for i in 0..3 {
        for j in 0..3 {
            let cross = axes[i].cross(&axes[3 + j]);
            if cross.norm() > 1e-9 {
                axes.push(cross.normalize());
            }
        }
    }

    let project = |rot: &Matrix3<f64>, half: &Vector3<f64>, axis: &Vector3<f64>| -> f64 {
        (0..3).map(|i| half[i] * rot.column(i).dot(axis).abs()).sum()
    };

    let mut best: Option<(f64, Vector3<f64>)> = None;
    // face axes first: preferred as contact normals
    for (idx, axis) in axes.iter().enumerate() {
        let ext_a = project(&ra, half_a, axis);
        let ext_b = project(&rb, half_b, axis);
        let center_dist = delta.dot(axis);
        let overlap = ext_a + ext_b - center_dist.abs();
        if overlap < -margin {
            return None; // separating axis
        }
        if idx < 6 {
            let oriented = if center_dist >= 0.0 { *axis } else { -*axis };
            match best {
                Some((o, _)) if o <= overlap => {}
                _ => best = Some((overlap, oriented)),
            }
        }
    }
    best.map(|(_, axis)| axis)
}

fn box_box(
    state_a: &BodyState,
    half_a: &Vector3<f64>,
    state_b: &BodyState,
    half_b: &Vector3<f64>,
    margin: f64,
) -> Vec<RawContact> {
    let Some(normal) = box_box_sat(state_a, half_a, state_b, half_b, margin) else {
        return vec![];
    };

    // supporting face of a along the contact normal
    let ra = state_a.rotation();
    let face_offset: f64 = (0..3).map(|i| half_a[i] * ra.column(i).dot(&normal).abs()).sum();
    let face_point = state_a.position + normal * face_offset;

    let mut hits: Vec<(f64, usize, Vector3<f64>)> = Vec::new();
    // vertices of b measured against a's supporting face
    let rb = state_b.rotation();
    for (i, corner) in box_corners(half_b).iter().enumerate() {
        let world = state_b.position + rb * corner;
        let gap = normal.dot(&(world - face_point));
        if gap <= margin {
            hits.push((gap, i, world));
        }
    }
    // vertices of a measured against b's supporting face (shifted index range
    // keeps the ordering deterministic)
    let face_offset_b: f64 = (0..3).map(|i| half_b[i] * rb.column(i).dot(&normal).abs()).sum();
    let face_point_b = state_b.position - normal * face_offset_b;
    for (i, corner) in box_corners(half_a).iter().enumerate() {
        let world = state_a.position + ra * corner;
        let gap = normal.dot(&(face_point_b - world));
        if gap <= margin {
            hits.push((gap, 8 + i, world + normal * gap));
        }
    }

    hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    hits.truncate(4);
    hits.iter()
        .map(|&(gap, _, world)| RawContact { position: world - normal * gap, normal, gap })
        .collect()
}

/// Narrow-phase dispatch for one body pair. Contacts follow the a→b normal
/// convention with the contact position on body a's surface.
pub fn collide_pair(
    spec_a: &BodySpec,
    state_a: &BodyState,
    spec_b: &BodySpec,
    state_b: &BodyState,
    body_a: BodyRef,
    body_b: usize,
    config: &CollisionConfig,
) -> Result<Vec<ContactPoint>, CollisionError> {
    config.validate()?;
    let raw = match (&spec_a.geometry, &spec_b.geometry) {
        (Geometry::Plane, Geometry::Sphere { radius }) => {
            sphere_plane(state_a, &state_b.position, *radius, config.margin)
        }
        (Geometry::Plane, Geometry::Box { half_extents }) => {
            box_plane(state_a, state_b, half_extents, config.margin)
        }
        (Geometry::Sphere { radius: ra }, Geometry::Sphere { radius: rb }) => {
            sphere_sphere(state_a, *ra, state_b, *rb, config.margin)
        }
        (Geometry::Sphere { radius }, Geometry::Box { half_extents }) => {
            sphere_box(state_a, *radius, state_b, half_extents, config.margin)
        }
        (Geometry::Box { half_extents: ha }, Geometry::Box { half_extents: hb }) => {
            box_box(state_a, ha, state_b, hb, config.margin)
        }
        // flipped orders re-dispatch through the canonical form
        (Geometry::Sphere { .. }, Geometry::Plane)
        | (Geometry::Box { .. }, Geometry::Plane)
        | (Geometry::Box { .. }, Geometry::Sphere { .. }) => {
            let flipped = collide_pair(spec_b, state_b, spec_a, state_a, body_a, body_b, config)?;
            return Ok(flipped
                .into_iter()
                .map(|c| ContactPoint {
                    position: c.position + c.normal * c.gap,
                    normal: -c.normal,
                    ..c
                })
                .collect());
        }
        (a, b) => return Err(CollisionError::UnsupportedPair(geometry_name(a), geometry_name(b))),
    };
    Ok(raw
        .into_iter()
        .map(|r| ContactPoint {
            body_a,
            body_b,
            position: r.position,
            normal: r.normal,
            gap: r.gap,
            friction: config.friction,
            restitution: config.restitution,
        })
        .collect())
}

/// Greedy duplicate culling: a pass in input order drops any point within
/// `min_separation` of an already-kept point of the same body pair. Output
/// order is stable.
pub fn cull_contacts(points: Vec<ContactPoint>, config: &CollisionConfig) -> Vec<ContactPoint> {
    let mut kept: Vec<ContactPoint> = Vec::with_capacity(points.len());
    for p in points {
        let duplicate = kept.iter().any(|q| {
            q.body_a == p.body_a
                && q.body_b == p.body_b
                && (q.position - p.position).norm() < config.min_separation
        });
        if !duplicate {
            kept.push(p);
        }
    }
    kept
}
