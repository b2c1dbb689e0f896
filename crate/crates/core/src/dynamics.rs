//! Maximal-coordinate rigid-body model: state representation, joint/limit
//! kinematics, constraint Jacobian assembly and semi-implicit integration.
//!
//! Every body carries a full 6-DoF Cartesian state (CoM position, unit
//! quaternion, twist). Constraints are expressed against the stacked twist
//! vector `u ∈ R^{6 n_b}` of the *dynamic* bodies; world-fixed bodies (planes)
//! and `WORLD` joint anchors contribute no columns.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

/// Degrees of freedom carried by one rigid body.
pub const BODY_DOF: usize = 6;

/// Unilateral constraint rows contributed by one contact (tangent-x,
/// tangent-y, normal).
pub const CONTACT_ROWS: usize = 3;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("body {0} referenced but model has {1} bodies")]
    BodyIndex(usize, usize),
    #[error("body {0} is world-fixed and cannot be a joint follower or contact body_b")]
    StaticBody(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid body spec: {0}")]
    InvalidBody(String),
    #[error("invalid joint spec: {0}")]
    InvalidJoint(String),
    #[error("contact normal has zero length")]
    ZeroNormal,
}

/// Collision geometry attached to a body. Planes are world-fixed: a body with
/// plane geometry is excluded from the generalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Sphere { radius: f64 },
    Box { half_extents: Vector3<f64> },
    Plane,
}

/// Intrinsic body parameters: inertial properties and surface geometry.
#[derive(Debug, Clone)]
pub struct BodySpec {
    pub mass: f64,
    /// Moment of inertia about the CoM, in body-fixed coordinates.
    pub local_inertia: Matrix3<f64>,
    pub geometry: Geometry,
}

impl BodySpec {
    pub fn new(mass: f64, local_inertia: Matrix3<f64>, geometry: Geometry) -> Self {
        Self { mass, local_inertia, geometry }
    }

    /// Sphere with the inertia of a solid ball.
    pub fn sphere(mass: f64, radius: f64) -> Self {
        let i = 0.4 * mass * radius * radius;
        Self::new(mass, Matrix3::from_diagonal_element(i), Geometry::Sphere { radius })
    }

    /// Box with the inertia of a solid cuboid.
    pub fn cuboid(mass: f64, half_extents: Vector3<f64>) -> Self {
        let d = 2.0 * half_extents;
        let c = mass / 12.0;
        let inertia = Matrix3::from_diagonal(&Vector3::new(
            c * (d.y * d.y + d.z * d.z),
            c * (d.x * d.x + d.z * d.z),
            c * (d.x * d.x + d.y * d.y),
        ));
        Self::new(mass, inertia, Geometry::Box { half_extents })
    }

    /// World-fixed half-space. Mass and inertia are placeholders; the body
    /// never enters the equations of motion.
    pub fn ground_plane() -> Self {
        Self::new(1.0, Matrix3::identity(), Geometry::Plane)
    }

    /// Plane-geometry bodies are world-fixed.
    pub fn is_static(&self) -> bool {
        matches!(self.geometry, Geometry::Plane)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(DynamicsError::InvalidBody(format!("mass {} must be > 0", self.mass)));
        }
        if (self.local_inertia - self.local_inertia.transpose()).norm() > 1e-12 {
            return Err(DynamicsError::InvalidBody("inertia not symmetric".into()));
        }
        let eig = self.local_inertia.symmetric_eigenvalues();
        if eig.min() <= 0.0 {
            return Err(DynamicsError::InvalidBody("inertia not positive definite".into()));
        }
        let geom_ok = match &self.geometry {
            Geometry::Sphere { radius } => *radius > 0.0,
            Geometry::Box { half_extents } => half_extents.min() > 0.0,
            Geometry::Plane => true,
        };
        if !geom_ok {
            return Err(DynamicsError::InvalidBody("geometry parameters must be > 0".into()));
        }
        Ok(())
    }
}

/// Mutable Cartesian state of one body: CoM pose and twist. The orientation
/// quaternion is Hamilton-convention with scalar-last storage and is
/// renormalized after every integration step.
#[derive(Debug, Clone)]
pub struct BodyState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
}

impl BodyState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::identity(),
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    /// Stacked twist `[v; ω]` in world coordinates.
    pub fn twist(&self) -> Vector6<f64> {
        let mut u = Vector6::zeros();
        u.fixed_rows_mut::<3>(0).copy_from(&self.linear_velocity);
        u.fixed_rows_mut::<3>(3).copy_from(&self.angular_velocity);
        u
    }
}

/// Reference to a joint/contact attachment: either a dynamic body or the
/// world (identity pose, infinite mass).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyRef {
    World,
    Body(usize),
}

/// Kinematic joint type. `constrained_dims` is the number of wrench/velocity
/// coordinates removed by the joint (`m_j`); the remainder are free DoFs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Fixed,
    Revolute,
    Spherical,
    Prismatic,
}

impl JointKind {
    pub fn constrained_dims(self) -> usize {
        match self {
            JointKind::Fixed => 6,
            JointKind::Revolute | JointKind::Prismatic => 5,
            JointKind::Spherical => 3,
        }
    }

    pub fn dof_dims(self) -> usize {
        BODY_DOF - self.constrained_dims()
    }

    /// Indices into the 6D joint-frame coordinates `[f_x f_y f_z τ_x τ_y τ_z]`
    /// that are constrained. The free axes are the complement.
    pub fn constrained_axes(self) -> &'static [usize] {
        match self {
            JointKind::Fixed => &[0, 1, 2, 3, 4, 5],
            // rotation about the joint-frame z axis is free
            JointKind::Revolute => &[0, 1, 2, 3, 4],
            JointKind::Spherical => &[0, 1, 2],
            // translation along the joint-frame z axis is free
            JointKind::Prismatic => &[0, 1, 3, 4, 5],
        }
    }

    pub fn free_axes(self) -> &'static [usize] {
        match self {
            JointKind::Fixed => &[],
            JointKind::Revolute => &[5],
            JointKind::Spherical => &[3, 4, 5],
            JointKind::Prismatic => &[2],
        }
    }
}

/// Per-DoF configuration limits `q ∈ [min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimit {
    pub min: f64,
    pub max: f64,
}

/// A bilateral joint between a base frame (a body or the world) and a
/// follower body.
///
/// The joint frame is anchored to the base at `anchor_base` with axes
/// `axes` (both in the base frame); the follower attaches at
/// `anchor_follower` in its own frame. At the rest configuration the two
/// sides coincide and the configuration residual is zero. Scenes must be
/// constructed so that body rest orientations make this hold.
#[derive(Debug, Clone)]
pub struct JointSpec {
    pub base: BodyRef,
    pub follower: usize,
    pub anchor_base: Vector3<f64>,
    pub anchor_follower: Vector3<f64>,
    /// Joint frame axes `X_j` relative to the base frame.
    pub axes: Matrix3<f64>,
    pub kind: JointKind,
    /// 6×m_j selection of the constrained joint-frame coordinates.
    pub constraint_selector: DMatrix<f64>,
    /// 6×d_j selection of the free (actuatable) joint-frame coordinates.
    pub actuation_selector: DMatrix<f64>,
    /// Optional limit per free DoF, in the order of `kind.free_axes()`.
    pub limits: Vec<Option<JointLimit>>,
    pub actuated: bool,
}

fn selector(axes: &[usize]) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(BODY_DOF, axes.len());
    for (col, &ax) in axes.iter().enumerate() {
        s[(ax, col)] = 1.0;
    }
    s
}

impl JointSpec {
    pub fn new(
        kind: JointKind,
        base: BodyRef,
        follower: usize,
        anchor_base: Vector3<f64>,
        anchor_follower: Vector3<f64>,
        axes: Matrix3<f64>,
    ) -> Self {
        Self {
            base,
            follower,
            anchor_base,
            anchor_follower,
            axes,
            kind,
            constraint_selector: selector(kind.constrained_axes()),
            actuation_selector: selector(kind.free_axes()),
            limits: vec![None; kind.dof_dims()],
            actuated: false,
        }
    }

    pub fn with_limits(mut self, limit: JointLimit) -> Self {
        for l in &mut self.limits {
            *l = Some(limit);
        }
        self
    }

    pub fn with_actuation(mut self) -> Self {
        self.actuated = true;
        self
    }

    pub fn validate(&self, n_bodies: usize) -> Result<(), DynamicsError> {
        if self.follower >= n_bodies {
            return Err(DynamicsError::BodyIndex(self.follower, n_bodies));
        }
        if let BodyRef::Body(b) = self.base {
            if b >= n_bodies {
                return Err(DynamicsError::BodyIndex(b, n_bodies));
            }
            if b == self.follower {
                return Err(DynamicsError::InvalidJoint("base equals follower".into()));
            }
        }
        let m = self.kind.constrained_dims();
        let d = self.kind.dof_dims();
        if self.constraint_selector.ncols() != m || self.actuation_selector.ncols() != d {
            return Err(DynamicsError::InvalidJoint("selector dimensions".into()));
        }
        if (self.axes * self.axes.transpose() - Matrix3::identity()).norm() > 1e-9 {
            return Err(DynamicsError::InvalidJoint("axes must be a rotation".into()));
        }
        for l in self.limits.iter().flatten() {
            if !(l.min < l.max) {
                return Err(DynamicsError::InvalidJoint("limit min must be < max".into()));
            }
        }
        Ok(())
    }
}

/// A discrete contact point between `body_a` and `body_b`.
///
/// The normal points from a to b, the gap is the signed distance along the
/// normal (negative when penetrating), and `position` lies on body a's
/// surface.
#[derive(Debug, Clone)]
pub struct ContactPoint {
    pub body_a: BodyRef,
    pub body_b: usize,
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub gap: f64,
    pub friction: f64,
    pub restitution: f64,
}

/// Which side of a joint DoF limit is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitSide {
    Lower,
    Upper,
}

/// An active joint-limit constraint: one unilateral row along a single joint
/// DoF.
#[derive(Debug, Clone)]
pub struct LimitRecord {
    pub joint: usize,
    /// Index into the joint's free DoFs.
    pub dof: usize,
    pub side: LimitSide,
    /// Gap function value (≤ 0 when the limit is active or violated).
    pub gap: f64,
    /// Joint-frame selector column `s_l` for this DoF.
    pub selector: Vector6<f64>,
}

/// Row structure of the stacked constraint system: joints first, then limits,
/// then contacts (3 rows each, normal last within the triple).
#[derive(Debug, Clone, Default)]
pub struct ConstraintLayout {
    /// (row offset, row count) per joint.
    pub joint_blocks: Vec<(usize, usize)>,
    /// Row index per active limit, plus the originating (joint, dof, side).
    pub limit_rows: Vec<usize>,
    pub limit_sources: Vec<(usize, usize, LimitSide)>,
    /// Row offset of each contact's 3-row block.
    pub contact_offsets: Vec<usize>,
    pub contact_mus: Vec<f64>,
    pub contact_restitutions: Vec<f64>,
    pub n_rows: usize,
}

impl ConstraintLayout {
    pub fn joint_rows(&self) -> usize {
        self.joint_blocks.iter().map(|&(_, m)| m).sum()
    }

    pub fn n_limits(&self) -> usize {
        self.limit_rows.len()
    }

    pub fn n_contacts(&self) -> usize {
        self.contact_offsets.len()
    }

    pub fn contact_normal_row(&self, k: usize) -> usize {
        self.contact_offsets[k] + 2
    }
}

/// One assembled time-stepping problem: mass matrix, bias force, stacked
/// Jacobian and the configuration-level residuals of all constraints.
#[derive(Debug, Clone)]
pub struct AssembledStep {
    /// Block-diagonal generalized mass matrix (6 n_b × 6 n_b).
    pub mass_matrix: DMatrix<f64>,
    /// Nonlinear force vector `h = w_gc + w_ext + J_aᵀ τ_a`.
    pub bias_force: DVector<f64>,
    /// Stacked constraint Jacobian (n_d × 6 n_b), rows ordered
    /// joints → limits → contacts.
    pub jacobian: DMatrix<f64>,
    /// Pre-step constraint velocity `v⁻ = J u⁻`.
    pub pre_velocity: DVector<f64>,
    pub layout: ConstraintLayout,
    /// Stacked joint configuration residuals `f_J(s)`.
    pub joint_residuals: DVector<f64>,
    /// Limit gap values `g_l` per active limit.
    pub limit_residuals: DVector<f64>,
    /// Signed contact gaps `d_c` per contact.
    pub contact_gaps: DVector<f64>,
    /// Stacked pre-step generalized velocity `u⁻`.
    pub u_minus: DVector<f64>,
    pub dt: f64,
}

impl AssembledStep {
    pub fn n_constraint_rows(&self) -> usize {
        self.jacobian.nrows()
    }

    pub fn n_dof(&self) -> usize {
        self.mass_matrix.nrows()
    }

    /// Solves `M x = b` using the block-diagonal structure of `M`.
    pub fn solve_mass(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(b.len());
        let n = self.n_dof() / BODY_DOF;
        for i in 0..n {
            let r = i * BODY_DOF;
            let block: Matrix6<f64> = self.mass_matrix.fixed_view::<6, 6>(r, r).into();
            let chol = block.cholesky().expect("mass block must be SPD");
            let xb = chol.solve(&b.fixed_rows::<6>(r).into_owned());
            x.rows_mut(r, BODY_DOF).copy_from(&xb);
        }
        x
    }

    /// Post-event generalized velocity `u⁺ = u⁻ + dt M⁻¹ h + M⁻¹ Jᵀ λ`.
    pub fn back_substitute(&self, lambda: &DVector<f64>) -> DVector<f64> {
        let mut rhs = &self.bias_force * self.dt;
        if lambda.len() > 0 {
            rhs += self.jacobian.transpose() * lambda;
        }
        &self.u_minus + self.solve_mass(&rhs)
    }
}

/// Static description of a scene: bodies, joints and gravity.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub bodies: Vec<BodySpec>,
    pub joints: Vec<JointSpec>,
    pub gravity: Vector3<f64>,
}

/// Mapping from body index to its 6-DoF slot in the stacked velocity vector.
/// World-fixed bodies map to `None`.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub slot: Vec<Option<usize>>,
    pub n_dynamic: usize,
}

impl DofMap {
    pub fn dof_base(&self, body: usize) -> Option<usize> {
        self.slot[body].map(|s| s * BODY_DOF)
    }
}

impl SystemModel {
    pub fn new(bodies: Vec<BodySpec>, joints: Vec<JointSpec>, gravity: Vector3<f64>) -> Self {
        Self { bodies, joints, gravity }
    }

    pub fn dof_map(&self) -> DofMap {
        let mut slot = Vec::with_capacity(self.bodies.len());
        let mut n = 0;
        for b in &self.bodies {
            if b.is_static() {
                slot.push(None);
            } else {
                slot.push(Some(n));
                n += 1;
            }
        }
        DofMap { slot, n_dynamic: n }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for b in &self.bodies {
            b.validate()?;
        }
        for j in &self.joints {
            j.validate(self.bodies.len())?;
            if self.bodies[j.follower].is_static() {
                return Err(DynamicsError::StaticBody(j.follower));
            }
        }
        Ok(())
    }

    /// Stacked twist of all dynamic bodies.
    pub fn stacked_velocity(&self, states: &[BodyState]) -> DVector<f64> {
        let map = self.dof_map();
        let mut u = DVector::zeros(map.n_dynamic * BODY_DOF);
        for (i, s) in states.iter().enumerate() {
            if let Some(base) = map.dof_base(i) {
                u.rows_mut(base, BODY_DOF).copy_from(&s.twist());
            }
        }
        u
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Deterministic right-handed contact frame with the normal on the local
/// z axis. The tangent is built from the world axis least aligned with the
/// normal (smallest index on ties), Gram-Schmidt orthogonalized.
pub fn contact_frame_basis(normal: &Vector3<f64>) -> Result<Matrix3<f64>, DynamicsError> {
    let n2 = normal.norm();
    if n2 < 1e-12 {
        return Err(DynamicsError::ZeroNormal);
    }
    let n = normal / n2;
    let mut best = 0;
    let mut best_dot = f64::INFINITY;
    for (i, axis) in [Vector3::x(), Vector3::y(), Vector3::z()].iter().enumerate() {
        let d = n.dot(axis).abs();
        if d < best_dot - 1e-15 {
            best_dot = d;
            best = i;
        }
    }
    let e = match best {
        0 => Vector3::x(),
        1 => Vector3::y(),
        _ => Vector3::z(),
    };
    let t = (e - n * n.dot(&e)).normalize();
    let o = n.cross(&t);
    Ok(Matrix3::from_columns(&[t, o, n]))
}

/// Advances positions explicitly with the post-event velocities: positions by
/// `dt·v⁺`, orientations by the exponential map of `dt·ω⁺`; velocities are
/// replaced by `u_plus`. World-fixed bodies are untouched.
pub fn integrate_semi_implicit(
    model: &SystemModel,
    states: &mut [BodyState],
    u_plus: &DVector<f64>,
    dt: f64,
) -> Result<(), DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::NonFinite("dt"));
    }
    if u_plus.iter().any(|x| !x.is_finite()) {
        return Err(DynamicsError::NonFinite("u_plus"));
    }
    let map = model.dof_map();
    for (i, s) in states.iter_mut().enumerate() {
        let Some(base) = map.dof_base(i) else { continue };
        let v = Vector3::new(u_plus[base], u_plus[base + 1], u_plus[base + 2]);
        let w = Vector3::new(u_plus[base + 3], u_plus[base + 4], u_plus[base + 5]);
        s.position += v * dt;
        s.orientation = UnitQuaternion::from_scaled_axis(w * dt) * s.orientation;
        s.orientation.renormalize();
        s.linear_velocity = v;
        s.angular_velocity = w;
    }
    Ok(())
}

/// Body-wise generalized mass matrix and gravity-Coriolis wrench:
/// `M_i = diag(m I₃, R ᵢI Rᵀ)`, `w_gc = (m g, −ω×(I ω))` with the inertia in
/// world coordinates.
pub fn body_mass_and_bias(
    spec: &BodySpec,
    state: &BodyState,
    gravity: &Vector3<f64>,
) -> (Matrix6<f64>, Vector6<f64>) {
    let r = state.rotation();
    let inertia_world = r * spec.local_inertia * r.transpose();
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(Matrix3::identity() * spec.mass));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&inertia_world);
    let mut w = Vector6::zeros();
    w.fixed_rows_mut::<3>(0).copy_from(&(spec.mass * gravity));
    let coriolis = -state.angular_velocity.cross(&(inertia_world * state.angular_velocity));
    w.fixed_rows_mut::<3>(3).copy_from(&coriolis);
    (m, w)
}

/// Resolved joint frame plus configuration-level residual and DoF
/// coordinates.
#[derive(Debug, Clone)]
pub struct JointFrame {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    /// Relative pose error along the constrained coordinates (m_j).
    pub residual: DVector<f64>,
    /// Joint coordinates along the free axes (d_j): displacement for
    /// translational DoFs, log-map angle for rotational DoFs.
    pub dof_config: DVector<f64>,
}

fn base_pose(joint: &JointSpec, states: &[BodyState]) -> (Vector3<f64>, Matrix3<f64>) {
    match joint.base {
        BodyRef::World => (Vector3::zeros(), Matrix3::identity()),
        BodyRef::Body(b) => (states[b].position, states[b].rotation()),
    }
}

/// Evaluates the joint frame from the base pose and the implicit
/// configuration constraints `f_j(s)` against the follower pose.
///
/// The 6D pose error `[e_lin; e_ang]` is expressed in the joint frame, with
/// the rotational part taken from the log map of the relative rotation.
pub fn joint_kinematics(joint: &JointSpec, states: &[BodyState]) -> JointFrame {
    let (rb, rot_b) = base_pose(joint, states);
    let frame_rot = rot_b * joint.axes;
    let frame_pos = rb + rot_b * joint.anchor_base;

    let fol = &states[joint.follower];
    let anchor_f_world = fol.position + fol.rotation() * joint.anchor_follower;
    let e_lin = frame_rot.transpose() * (anchor_f_world - frame_pos);

    // relative rotation of the follower-side joint frame w.r.t the base-side
    let rel = frame_rot.transpose() * fol.rotation() * joint.axes;
    let e_ang = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(rel))
        .scaled_axis();

    let mut err6 = Vector6::zeros();
    err6.fixed_rows_mut::<3>(0).copy_from(&e_lin);
    err6.fixed_rows_mut::<3>(3).copy_from(&e_ang);

    let m = joint.kind.constrained_dims();
    let d = joint.kind.dof_dims();
    let mut residual = DVector::zeros(m);
    for (row, &ax) in joint.kind.constrained_axes().iter().enumerate() {
        residual[row] = err6[ax];
    }
    let mut dof_config = DVector::zeros(d);
    for (row, &ax) in joint.kind.free_axes().iter().enumerate() {
        dof_config[row] = err6[ax];
    }
    JointFrame { position: frame_pos, rotation: frame_rot, residual, dof_config }
}

/// Scans all joint DoFs for limit violations (`g_min ≤ 0` or `g_max ≤ 0`) and
/// emits one record per violating DoF. Only one side can be active at a time;
/// the smaller gap wins if both somehow trigger.
pub fn detect_active_limits(joints: &[JointSpec], states: &[BodyState]) -> Vec<LimitRecord> {
    let mut records = Vec::new();
    for (j, joint) in joints.iter().enumerate() {
        if joint.limits.iter().all(|l| l.is_none()) {
            continue;
        }
        let frame = joint_kinematics(joint, states);
        for (dof, limit) in joint.limits.iter().enumerate() {
            let Some(limit) = limit else { continue };
            let q = frame.dof_config[dof];
            let g_min = q - limit.min;
            let g_max = limit.max - q;
            let side = if g_min <= 0.0 && g_min <= g_max {
                Some((LimitSide::Lower, g_min))
            } else if g_max <= 0.0 {
                Some((LimitSide::Upper, g_max))
            } else {
                None
            };
            if let Some((side, gap)) = side {
                let col = joint.actuation_selector.column(dof);
                let mut s = Vector6::zeros();
                for i in 0..BODY_DOF {
                    s[i] = col[i];
                }
                records.push(LimitRecord { joint: j, dof, side, gap, selector: s });
            }
        }
    }
    records
}

/// 6×6 map from a body twist `[v; ω]` to the frame-local relative velocity
/// `[Rᵀ(v + ω×(p − r_b)); Rᵀω]` of the material point `p` tracked in frame
/// `R`.
fn frame_velocity_rows(p: &Vector3<f64>, rot: &Matrix3<f64>, r_body: &Vector3<f64>) -> DMatrix<f64> {
    let rt = rot.transpose();
    let lever = skew(&(p - r_body));
    let mut g = DMatrix::zeros(BODY_DOF, BODY_DOF);
    g.view_mut((0, 0), (3, 3)).copy_from(&rt);
    g.view_mut((0, 3), (3, 3)).copy_from(&(-rt * lever));
    g.view_mut((3, 3), (3, 3)).copy_from(&rt);
    g
}

fn add_block(
    j: &mut DMatrix<f64>,
    row: usize,
    col_base: usize,
    block: &DMatrix<f64>,
    sign: f64,
) {
    for r in 0..block.nrows() {
        for c in 0..block.ncols() {
            j[(row + r, col_base + c)] += sign * block[(r, c)];
        }
    }
}

/// Assembles the time-stepping problem for one step: mass matrix, bias force
/// `h`, the stacked Jacobian in joint → limit → contact row order, the
/// pre-step constraint velocity, and all configuration-level residuals.
///
/// `actuation` supplies per-joint DoF torques (empty vector for passive
/// joints); `external_wrenches` are world-frame `[f; τ]` per body. Contacts
/// must already be culled.
pub fn assemble_system(
    model: &SystemModel,
    states: &[BodyState],
    dt: f64,
    actuation: &[DVector<f64>],
    external_wrenches: &[Vector6<f64>],
    contacts: &[ContactPoint],
) -> Result<AssembledStep, DynamicsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::NonFinite("dt"));
    }
    let n_bodies = model.bodies.len();
    if states.len() != n_bodies {
        return Err(DynamicsError::BodyIndex(states.len(), n_bodies));
    }
    let map = model.dof_map();
    let n_dof = map.n_dynamic * BODY_DOF;

    // mass matrix and gravity-Coriolis + external wrenches
    let mut mass = DMatrix::zeros(n_dof, n_dof);
    let mut h = DVector::zeros(n_dof);
    for (i, spec) in model.bodies.iter().enumerate() {
        let Some(base) = map.dof_base(i) else { continue };
        let (m_i, w_gc) = body_mass_and_bias(spec, &states[i], &model.gravity);
        mass.view_mut((base, base), (BODY_DOF, BODY_DOF)).copy_from(&m_i);
        let mut w = w_gc;
        if let Some(ext) = external_wrenches.get(i) {
            w += ext;
        }
        {
            let mut seg = h.rows_mut(base, BODY_DOF);
            seg += w;
        }
    }

    // row layout
    let limits = detect_active_limits(&model.joints, states);
    let mut layout = ConstraintLayout::default();
    let mut row = 0;
    for joint in &model.joints {
        let m = joint.kind.constrained_dims();
        layout.joint_blocks.push((row, m));
        row += m;
    }
    for l in &limits {
        layout.limit_rows.push(row);
        layout.limit_sources.push((l.joint, l.dof, l.side));
        row += 1;
    }
    for c in contacts {
        layout.contact_offsets.push(row);
        layout.contact_mus.push(c.friction);
        layout.contact_restitutions.push(c.restitution);
        row += CONTACT_ROWS;
    }
    layout.n_rows = row;

    let mut jac = DMatrix::zeros(row, n_dof);
    let mut joint_residuals = DVector::zeros(layout.joint_rows());
    let mut limit_residuals = DVector::zeros(limits.len());
    let mut contact_gaps = DVector::zeros(contacts.len());

    // joint rows and actuation forces
    let mut jr = 0;
    for (j, joint) in model.joints.iter().enumerate() {
        let frame = joint_kinematics(joint, states);
        let m = joint.kind.constrained_dims();
        joint_residuals.rows_mut(jr, m).copy_from(&frame.residual);
        let (row0, _) = layout.joint_blocks[j];

        let sc_t = joint.constraint_selector.transpose();
        let fol_rows =
            sc_t.clone() * frame_velocity_rows(&frame.position, &frame.rotation, &states[joint.follower].position);
        let fb = map.dof_base(joint.follower).ok_or(DynamicsError::StaticBody(joint.follower))?;
        add_block(&mut jac, row0, fb, &fol_rows, 1.0);
        if let BodyRef::Body(b) = joint.base {
            if let Some(bb) = map.dof_base(b) {
                let base_rows = sc_t
                    * frame_velocity_rows(&frame.position, &frame.rotation, &states[b].position);
                add_block(&mut jac, row0, bb, &base_rows, -1.0);
            }
        }

        // actuation enters the bias force through the free-axis Jacobian
        if let Some(tau) = actuation.get(j) {
            if tau.len() > 0 {
                if tau.len() != joint.kind.dof_dims() {
                    return Err(DynamicsError::InvalidJoint(format!(
                        "joint {j} actuation has {} entries, expected {}",
                        tau.len(),
                        joint.kind.dof_dims()
                    )));
                }
                let sa_t = joint.actuation_selector.transpose();
                let fol_a = sa_t.clone()
                    * frame_velocity_rows(&frame.position, &frame.rotation, &states[joint.follower].position);
                let wrench = fol_a.transpose() * tau;
                {
                    let mut seg = h.rows_mut(fb, BODY_DOF);
                    seg += wrench;
                }
                if let BodyRef::Body(b) = joint.base {
                    if let Some(bb) = map.dof_base(b) {
                        let base_a = sa_t
                            * frame_velocity_rows(&frame.position, &frame.rotation, &states[b].position);
                        let wrench_b = base_a.transpose() * tau;
                        {
                        let mut seg = h.rows_mut(bb, BODY_DOF);
                        seg -= wrench_b;
                    }
                    }
                }
            }
        }
        jr += m;
    }

    // limit rows: sign makes the row velocity the gap rate (positive opening)
    for (li, l) in limits.iter().enumerate() {
        let joint = &model.joints[l.joint];
        let frame = joint_kinematics(joint, states);
        let row0 = layout.limit_rows[li];
        limit_residuals[li] = l.gap;
        let sign = match l.side {
            LimitSide::Lower => 1.0,
            LimitSide::Upper => -1.0,
        };
        let sel = DMatrix::from_fn(1, BODY_DOF, |_, c| l.selector[c]);
        let fol_rows = sel.clone()
            * frame_velocity_rows(&frame.position, &frame.rotation, &states[joint.follower].position);
        let fb = map.dof_base(joint.follower).ok_or(DynamicsError::StaticBody(joint.follower))?;
        add_block(&mut jac, row0, fb, &fol_rows, sign);
        if let BodyRef::Body(b) = joint.base {
            if let Some(bb) = map.dof_base(b) {
                let base_rows = sel
                    * frame_velocity_rows(&frame.position, &frame.rotation, &states[b].position);
                add_block(&mut jac, row0, bb, &base_rows, -sign);
            }
        }
    }

    // contact rows in the (t, o, n) frame; relative velocity of b w.r.t a
    for (k, c) in contacts.iter().enumerate() {
        if c.body_b >= n_bodies {
            return Err(DynamicsError::BodyIndex(c.body_b, n_bodies));
        }
        let basis = contact_frame_basis(&c.normal)?;
        let rt = basis.transpose();
        let row0 = layout.contact_offsets[k];
        contact_gaps[k] = c.gap;

        let bb = map.dof_base(c.body_b).ok_or(DynamicsError::StaticBody(c.body_b))?;
        let lever_b = skew(&(c.position - states[c.body_b].position));
        let mut block_b = DMatrix::zeros(CONTACT_ROWS, BODY_DOF);
        block_b.view_mut((0, 0), (3, 3)).copy_from(&rt);
        block_b.view_mut((0, 3), (3, 3)).copy_from(&(-rt * lever_b));
        add_block(&mut jac, row0, bb, &block_b, 1.0);

        if let BodyRef::Body(a) = c.body_a {
            if a >= n_bodies {
                return Err(DynamicsError::BodyIndex(a, n_bodies));
            }
            if let Some(ab) = map.dof_base(a) {
                let lever_a = skew(&(c.position - states[a].position));
                let mut block_a = DMatrix::zeros(CONTACT_ROWS, BODY_DOF);
                block_a.view_mut((0, 0), (3, 3)).copy_from(&rt);
                block_a.view_mut((0, 3), (3, 3)).copy_from(&(-rt * lever_a));
                add_block(&mut jac, row0, ab, &block_a, -1.0);
            }
        }
    }

    let u_minus = model.stacked_velocity(states);
    let pre_velocity = &jac * &u_minus;

    Ok(AssembledStep {
        mass_matrix: mass,
        bias_force: h,
        jacobian: jac,
        pre_velocity,
        layout,
        joint_residuals,
        limit_residuals,
        contact_gaps,
        u_minus,
        dt,
    })
}
