//! Construction of the dual forward-dynamics problem: Delassus matrix, free
//! velocity with restitutive impacts, Baumgarte-like constraint stabilization
//! and MuJoCo-like constraint softening, plus the De Saxcé correction
//! operator over the composite cone.

use crate::dynamics::{AssembledStep, ConstraintLayout, BODY_DOF, CONTACT_ROWS};
use nalgebra::{DMatrix, DVector, Matrix6};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DualError {
    #[error("mass matrix block {0} is not SPD")]
    SingularMass(usize),
    #[error("invalid softening parameters: {0}")]
    InvalidSoftening(String),
    #[error("invalid stabilization parameters: {0}")]
    InvalidStabilization(String),
}

/// Shape of the composite cone `K = R^{n_jd} × R₊^{n_l} × Π K_μ`: joint rows
/// are unconstrained, limit rows are nonnegative scalars, and each contact
/// owns a 3-row Coulomb cone ordered (tangent-x, tangent-y, normal).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConeSpec {
    pub joint_rows: usize,
    pub limit_rows: usize,
    pub contact_mus: Vec<f64>,
}

impl ConeSpec {
    pub fn from_layout(layout: &ConstraintLayout) -> Self {
        Self {
            joint_rows: layout.joint_rows(),
            limit_rows: layout.n_limits(),
            contact_mus: layout.contact_mus.clone(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.joint_rows + self.limit_rows + CONTACT_ROWS * self.contact_mus.len()
    }

    pub fn n_contacts(&self) -> usize {
        self.contact_mus.len()
    }

    /// Row offset of contact `k`'s 3-row block.
    pub fn contact_offset(&self, k: usize) -> usize {
        self.joint_rows + self.limit_rows + CONTACT_ROWS * k
    }

    pub fn limit_offset(&self, l: usize) -> usize {
        self.joint_rows + l
    }
}

/// The dual problem `NCP(D, v_f, K)`, optionally softened by a diagonal
/// regularizer `R` and regulation bias `v_r`.
///
/// `free_velocity` already folds in the restitution and stabilization biases;
/// the softening terms are kept separate so solvers can form the effective
/// problem `(D + R) λ + v_f + v_r`.
#[derive(Debug, Clone)]
pub struct DualProblem {
    pub delassus: DMatrix<f64>,
    pub free_velocity: DVector<f64>,
    pub cone: ConeSpec,
    pub regularizer: Option<DVector<f64>>,
    pub regulation_bias: Option<DVector<f64>>,
    pub dt: f64,
    /// Sum of the diagonal of the generalized mass matrix; scales the
    /// objective-improvement early-stop metric.
    pub total_diag_inertia: f64,
    pub layout: ConstraintLayout,
}

impl DualProblem {
    pub fn n(&self) -> usize {
        self.free_velocity.len()
    }

    /// `D + R` with the diagonal regularizer applied (copy).
    pub fn effective_delassus(&self) -> DMatrix<f64> {
        let mut d = self.delassus.clone();
        if let Some(r) = &self.regularizer {
            for i in 0..d.nrows() {
                d[(i, i)] += r[i];
            }
        }
        d
    }

    /// `v_f + v_r` with the regulation bias applied (copy).
    pub fn effective_free_velocity(&self) -> DVector<f64> {
        match &self.regulation_bias {
            Some(vr) => &self.free_velocity + vr,
            None => self.free_velocity.clone(),
        }
    }

    pub fn is_softened(&self) -> bool {
        self.regularizer.is_some()
    }
}

/// Error-reduction (Baumgarte-like) stabilization factors per constraint
/// group, plus the contact penetration margin `δ_c`.
#[derive(Debug, Clone, Copy)]
pub struct StabilizationParams {
    pub alpha_joint: f64,
    pub beta_limit: f64,
    pub gamma_contact: f64,
    pub penetration_margin: f64,
}

impl Default for StabilizationParams {
    fn default() -> Self {
        Self { alpha_joint: 0.1, beta_limit: 0.1, gamma_contact: 0.1, penetration_margin: 0.0 }
    }
}

impl StabilizationParams {
    pub fn validate(&self) -> Result<(), DualError> {
        if self.alpha_joint < 0.0 || self.beta_limit < 0.0 || self.gamma_contact < 0.0 {
            return Err(DualError::InvalidStabilization("factors must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Residual-shaped impedance parameters of the constraint-softening scheme.
#[derive(Debug, Clone, Copy)]
pub struct SofteningParams {
    /// Impedance at zero residual (must be > 0).
    pub d0: f64,
    /// Impedance at the width edge, `d0 ≤ dw ≤ 1`.
    pub dw: f64,
    /// Residual half-width of the shaped region.
    pub width: f64,
    /// Sigmoid midpoint in (0, 1).
    pub midpoint: f64,
    /// Sigmoid power; 1 selects the linear shaping.
    pub power: f64,
    /// Time constant of the equivalent spring-damper.
    pub time_constant: f64,
    pub damping_ratio: f64,
}

impl Default for SofteningParams {
    fn default() -> Self {
        Self {
            d0: 0.9,
            dw: 0.95,
            width: 0.001,
            midpoint: 0.5,
            power: 2.0,
            time_constant: 0.02,
            damping_ratio: 1.0,
        }
    }
}

impl SofteningParams {
    pub fn validate(&self) -> Result<(), DualError> {
        if !(self.d0 > 0.0) {
            return Err(DualError::InvalidSoftening("d0 must be > 0".into()));
        }
        if !(self.d0 <= self.dw && self.dw <= 1.0) {
            return Err(DualError::InvalidSoftening("need 0 < d0 ≤ dw ≤ 1".into()));
        }
        if !(self.width > 0.0) {
            return Err(DualError::InvalidSoftening("width must be > 0".into()));
        }
        if !(self.midpoint > 0.0 && self.midpoint < 1.0) {
            return Err(DualError::InvalidSoftening("midpoint must be in (0,1)".into()));
        }
        if !(self.power >= 1.0) {
            return Err(DualError::InvalidSoftening("power must be ≥ 1".into()));
        }
        if !(self.time_constant > 0.0) || !(self.damping_ratio > 0.0) {
            return Err(DualError::InvalidSoftening("T and β must be > 0".into()));
        }
        Ok(())
    }

    /// Reflected-sigmoid impedance for a scaled residual distance
    /// `x = |r − m| / w`.
    fn impedance(&self, x: f64) -> f64 {
        if self.d0 == self.dw || self.width <= 1e-300 {
            return 0.5 * (self.d0 + self.dw);
        }
        if x >= 1.0 {
            return self.dw;
        }
        if x <= 0.0 {
            return self.d0;
        }
        let m = self.midpoint;
        let p = self.power;
        let fs = if p == 1.0 {
            x
        } else if x <= m {
            x.powf(p) / m.powf(p - 1.0)
        } else {
            1.0 - (1.0 - x).powf(p) / (1.0 - m).powf(p - 1.0)
        };
        self.d0 + fs * (self.dw - self.d0)
    }

    /// Impedance, compliance, damping and stiffness for one residual value.
    pub fn coefficients(&self, residual: f64) -> (f64, f64, f64, f64) {
        let x = (residual - self.midpoint).abs() / self.width;
        let d = self.impedance(x);
        let c = (1.0 - d) / d;
        let b = 2.0 / (self.dw * self.time_constant);
        let k = d / (self.dw * self.dw * self.time_constant * self.time_constant
            * self.damping_ratio * self.damping_ratio);
        (d, c, b, k)
    }
}

/// Options for [`build_dual_problem`].
#[derive(Debug, Clone, Default)]
pub struct DualOptions {
    pub stabilization: Option<StabilizationParams>,
    pub softening: Option<SofteningParams>,
    /// Fold Newton restitution into the free velocity (on by default).
    pub restitution: bool,
}

impl DualOptions {
    pub fn hard() -> Self {
        Self { stabilization: None, softening: None, restitution: true }
    }
}

/// Delassus matrix `D = J M⁻¹ Jᵀ`, computed with per-body 6×6 solves and
/// symmetrized as `(D + Dᵀ)/2`.
pub fn delassus_matrix(assembled: &AssembledStep) -> Result<DMatrix<f64>, DualError> {
    let n_d = assembled.jacobian.nrows();
    let n_dof = assembled.n_dof();
    if n_d == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    // M⁻¹ Jᵀ block-by-block
    let jt = assembled.jacobian.transpose();
    let mut minv_jt = DMatrix::zeros(n_dof, n_d);
    for b in 0..n_dof / BODY_DOF {
        let r = b * BODY_DOF;
        let block: Matrix6<f64> = assembled.mass_matrix.fixed_view::<6, 6>(r, r).into();
        let chol = block.cholesky().ok_or(DualError::SingularMass(b))?;
        for c in 0..n_d {
            let col = jt.view((r, c), (BODY_DOF, 1)).into_owned();
            let solved = chol.solve(&nalgebra::Vector6::from_column_slice(col.as_slice()));
            for i in 0..BODY_DOF {
                minv_jt[(r + i, c)] = solved[i];
            }
        }
    }
    let d = &assembled.jacobian * minv_jt;
    Ok((&d + d.transpose()) * 0.5)
}

/// System-level De Saxcé correction: zero on joint and limit rows, and
/// `(0, 0, μ‖v_T‖)` on each contact's rows.
pub fn de_saxce_correction(v: &DVector<f64>, cone: &ConeSpec) -> DVector<f64> {
    let mut g = DVector::zeros(v.len());
    for (k, &mu) in cone.contact_mus.iter().enumerate() {
        let off = cone.contact_offset(k);
        let vt = (v[off] * v[off] + v[off + 1] * v[off + 1]).sqrt();
        g[off + 2] = mu * vt;
    }
    g
}

/// Constraint stabilization bias `v_B`: joints get `(α/dt)·r_J`, limits
/// `(β/dt)·min(0, g_l)`, and contact normal rows the double-sided term
/// `γ·min(0, r_k/dt) + max(0, r_k/dt)` with `r_k = d_c + δ_c`.
pub fn stabilization_bias(
    assembled: &AssembledStep,
    params: &StabilizationParams,
    dt: f64,
) -> Result<DVector<f64>, DualError> {
    params.validate()?;
    let layout = &assembled.layout;
    let mut v_b = DVector::zeros(layout.n_rows);
    let mut row = 0;
    for &(_, m) in &layout.joint_blocks {
        for i in 0..m {
            v_b[row + i] = params.alpha_joint / dt * assembled.joint_residuals[row + i];
        }
        row += m;
    }
    for (l, &r) in layout.limit_rows.iter().enumerate() {
        v_b[r] = params.beta_limit / dt * assembled.limit_residuals[l].min(0.0);
    }
    for (k, &off) in layout.contact_offsets.iter().enumerate() {
        let rk = assembled.contact_gaps[k] + params.penetration_margin;
        let scaled = rk / dt;
        v_b[off + 2] = params.gamma_contact * scaled.min(0.0) + scaled.max(0.0);
    }
    Ok(v_b)
}

/// Per-row softening residuals: joint rows use the configuration residual
/// components, limit rows the gap, contact normal rows `d_c + δ_c`, and
/// contact tangent rows zero (impedance at `d0`).
pub fn softening_residuals(assembled: &AssembledStep, contact_margin: f64) -> DVector<f64> {
    let layout = &assembled.layout;
    let mut r = DVector::zeros(layout.n_rows);
    let mut row = 0;
    for &(_, m) in &layout.joint_blocks {
        for i in 0..m {
            r[row + i] = assembled.joint_residuals[row + i];
        }
        row += m;
    }
    for (l, &idx) in layout.limit_rows.iter().enumerate() {
        r[idx] = assembled.limit_residuals[l];
    }
    for (k, &off) in layout.contact_offsets.iter().enumerate() {
        r[off + 2] = assembled.contact_gaps[k] + contact_margin;
    }
    r
}

/// Row-wise softening terms from explicit residuals: the diagonal regularizer
/// `R_jj = c_j D_jj` and the regulation bias `v_r,j = dt (b_j v⁻_j + k_j r_j)`.
pub fn softening_rows(
    residuals: &DVector<f64>,
    d_diag: &DVector<f64>,
    v_minus: &DVector<f64>,
    params: &SofteningParams,
    dt: f64,
) -> Result<(DVector<f64>, DVector<f64>), DualError> {
    params.validate()?;
    let n = residuals.len();
    let mut reg = DVector::zeros(n);
    let mut v_r = DVector::zeros(n);
    for j in 0..n {
        let (_, c, b, k) = params.coefficients(residuals[j]);
        reg[j] = c * d_diag[j];
        v_r[j] = dt * (b * v_minus[j] + k * residuals[j]);
    }
    Ok((reg, v_r))
}

/// Softening terms for an assembled step; see [`softening_rows`].
pub fn softening_terms(
    assembled: &AssembledStep,
    d_diag: &DVector<f64>,
    v_minus: &DVector<f64>,
    params: &SofteningParams,
    dt: f64,
    contact_margin: f64,
) -> Result<(DVector<f64>, DVector<f64>), DualError> {
    let residuals = softening_residuals(assembled, contact_margin);
    softening_rows(&residuals, d_diag, v_minus, params, dt)
}

/// Builds the dual problem from an assembled step: `v_f = J(u⁻ + dt M⁻¹ h)`
/// plus the restitution term `ε_k v⁻` on contact normal rows and the
/// stabilization bias when enabled; softening attaches `R` and `v_r`.
pub fn build_dual_problem(
    assembled: &AssembledStep,
    options: &DualOptions,
) -> Result<DualProblem, DualError> {
    let layout = assembled.layout.clone();
    let cone = ConeSpec::from_layout(&layout);
    let n_d = layout.n_rows;
    let dt = assembled.dt;
    let total_diag_inertia = assembled.mass_matrix.diagonal().sum();

    let delassus = delassus_matrix(assembled)?;

    let mut free_velocity = if n_d == 0 {
        DVector::zeros(0)
    } else {
        let u_free = &assembled.u_minus + assembled.solve_mass(&(&assembled.bias_force * dt));
        &assembled.jacobian * u_free
    };

    if options.restitution {
        for (k, &eps) in layout.contact_restitutions.iter().enumerate() {
            if eps != 0.0 {
                let row = layout.contact_normal_row(k);
                free_velocity[row] += eps * assembled.pre_velocity[row];
            }
        }
    }

    let margin = options.stabilization.map(|s| s.penetration_margin).unwrap_or(0.0);
    if let Some(stab) = &options.stabilization {
        free_velocity += stabilization_bias(assembled, stab, dt)?;
    }

    let (regularizer, regulation_bias) = match &options.softening {
        Some(soft) => {
            let d_diag = delassus.diagonal();
            let (r, v_r) =
                softening_terms(assembled, &d_diag, &assembled.pre_velocity, soft, dt, margin)?;
            (Some(r), Some(v_r))
        }
        None => (None, None),
    };

    Ok(DualProblem {
        delassus,
        free_velocity,
        cone,
        regularizer,
        regulation_bias,
        dt,
        total_diag_inertia,
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        assemble_system, BodyRef, BodySpec, BodyState, ContactPoint, JointKind, JointSpec,
        SystemModel,
    };
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Vector3};

    fn unary_fixed_unit_body() -> AssembledStep {
        let joint = JointSpec::new(
            JointKind::Fixed,
            BodyRef::World,
            0,
            Vector3::zeros(),
            Vector3::zeros(),
            Matrix3::identity(),
        );
        let model = SystemModel::new(
            vec![BodySpec::new(
                1.0,
                Matrix3::identity(),
                crate::dynamics::Geometry::Sphere { radius: 1.0 },
            )],
            vec![joint],
            Vector3::new(0.0, 0.0, -9.81),
        );
        let states = vec![BodyState::at_rest(Vector3::zeros())];
        assemble_system(&model, &states, 1e-3, &[], &[], &[]).unwrap()
    }

    fn contact_on_sphere(mass: f64) -> AssembledStep {
        let model = SystemModel::new(
            vec![BodySpec::sphere(mass, 0.5)],
            vec![],
            Vector3::new(0.0, 0.0, -9.81),
        );
        let states = vec![BodyState::at_rest(Vector3::zeros())];
        let contact = ContactPoint {
            body_a: BodyRef::World,
            body_b: 0,
            position: Vector3::zeros(), // at the CoM: no lever arm
            normal: Vector3::z(),
            gap: 0.0,
            friction: 0.7,
            restitution: 0.0,
        };
        assemble_system(&model, &states, 1e-3, &[], &[], &[contact]).unwrap()
    }

    #[test]
    fn delassus_identity_for_unit_fixed_joint() {
        let step = unary_fixed_unit_body();
        let d = delassus_matrix(&step).unwrap();
        assert_relative_eq!(d, DMatrix::identity(6, 6), epsilon = 1e-12);
    }

    #[test]
    fn delassus_contact_at_com_is_inverse_mass() {
        let step = contact_on_sphere(2.0);
        let d = delassus_matrix(&step).unwrap();
        assert_relative_eq!(d, DMatrix::identity(3, 3) * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn delassus_symmetric_psd() {
        let step = contact_on_sphere(1.3);
        let d = delassus_matrix(&step).unwrap();
        assert_relative_eq!(d.clone(), d.transpose(), epsilon = 1e-12);
        assert!(d.symmetric_eigenvalues().min() >= -1e-12);
    }

    #[test]
    fn de_saxce_direct_formula() {
        let cone = ConeSpec { joint_rows: 0, limit_rows: 0, contact_mus: vec![0.5] };
        let v = DVector::from_vec(vec![3.0, 4.0, -1.0]);
        let g = de_saxce_correction(&v, &cone);
        assert_relative_eq!(g[2], 2.5, epsilon = 1e-15);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn de_saxce_zero_friction() {
        let cone = ConeSpec { joint_rows: 0, limit_rows: 0, contact_mus: vec![0.0] };
        let v = DVector::from_vec(vec![3.0, 4.0, -1.0]);
        assert_eq!(de_saxce_correction(&v, &cone).norm(), 0.0);
    }

    #[test]
    fn de_saxce_invariant_to_normal_offset() {
        let cone = ConeSpec { joint_rows: 2, limit_rows: 1, contact_mus: vec![0.7, 0.2] };
        let mut v = DVector::from_vec(vec![0.1, -0.2, 0.3, 1.0, 2.0, -0.5, -1.0, 0.4, 3.0]);
        let g1 = de_saxce_correction(&v, &cone);
        v[5] += 17.25; // first contact's normal row
        v[8] -= 3.5; // second contact's normal row
        let g2 = de_saxce_correction(&v, &cone);
        assert_eq!(g1, g2); // exact, not approximate
    }

    #[test]
    fn stabilization_bias_branches() {
        // contact penetrating: first branch, γ-scaled
        let mut step = contact_on_sphere(1.0);
        step.contact_gaps[0] = -0.01;
        let params = StabilizationParams {
            gamma_contact: 0.1,
            penetration_margin: 0.0,
            ..Default::default()
        };
        let v_b = stabilization_bias(&step, &params, 0.01).unwrap();
        assert_relative_eq!(v_b[2], -0.1, epsilon = 1e-12);
        // preemptive contact: second branch passes the full separation rate
        step.contact_gaps[0] = 0.02;
        let v_b = stabilization_bias(&step, &params, 0.01).unwrap();
        assert_relative_eq!(v_b[2], 2.0, epsilon = 1e-12);
        // zero residual: zero bias
        step.contact_gaps[0] = 0.0;
        let v_b = stabilization_bias(&step, &params, 0.01).unwrap();
        assert_relative_eq!(v_b.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn softening_constant_impedance_when_d0_equals_dw() {
        let params = SofteningParams { d0: 0.9, dw: 0.9, ..Default::default() };
        for r in [-0.5, 0.0, 0.3, 2.0] {
            let (d, _, _, _) = params.coefficients(r);
            assert_relative_eq!(d, 0.9, epsilon = 1e-15);
        }
    }

    #[test]
    fn softening_saturates_at_dw() {
        let params = SofteningParams::default();
        // |r - m|/w ≥ 1 far from the midpoint
        let (d, _, _, _) = params.coefficients(1.0);
        assert_relative_eq!(d, params.dw, epsilon = 1e-15);
    }

    #[test]
    fn softening_coefficients_match_arithmetic_oracle() {
        // d = 0.9, dw = 0.95, T = 0.02, β = 1:
        //   c = (1-0.9)/0.9      = 0.111111...
        //   b = 2/(0.95·0.02)    = 105.26315...
        //   k = 0.9/(0.95²·0.02²) = 2493.0747...
        let params = SofteningParams { d0: 0.9, dw: 0.95, ..Default::default() };
        let (d, c, b, k) = params.coefficients(0.5); // x = 0 ⇒ d = d0 = 0.9
        assert_relative_eq!(d, 0.9, epsilon = 1e-15);
        assert_relative_eq!(c, 0.1 / 0.9, epsilon = 1e-12);
        assert_relative_eq!(b, 2.0 / (0.95 * 0.02), epsilon = 1e-9);
        assert_relative_eq!(k, 0.9 / (0.95 * 0.95 * 0.02 * 0.02), epsilon = 1e-9);
    }

    #[test]
    fn softening_rejects_zero_d0() {
        let params = SofteningParams { d0: 0.0, ..Default::default() };
        assert!(params.validate().is_err());
    }

    #[test]
    fn softening_sigmoid_continuous_at_midpoint() {
        let params = SofteningParams { power: 2.0, midpoint: 0.5, ..Default::default() };
        let below = params.impedance(0.5 - 1e-12);
        let above = params.impedance(0.5 + 1e-12);
        assert_relative_eq!(below, above, epsilon = 1e-9);
    }

    #[test]
    fn free_velocity_static_contact_under_gravity() {
        // v_f normal row = J(dt·M⁻¹h) = −g·dt for a resting unit mass
        let step = contact_on_sphere(1.0);
        let problem = build_dual_problem(&step, &DualOptions::hard()).unwrap();
        assert_relative_eq!(problem.free_velocity[2], -9.81e-3, epsilon = 1e-12);
        assert_relative_eq!(problem.free_velocity[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn restitution_appends_scaled_normal_velocity() {
        let model = SystemModel::new(
            vec![BodySpec::sphere(1.0, 0.5)],
            vec![],
            Vector3::zeros(), // no gravity to isolate the restitution term
        );
        let mut state = BodyState::at_rest(Vector3::zeros());
        state.linear_velocity = Vector3::new(0.0, 0.0, -2.0);
        let contact = ContactPoint {
            body_a: BodyRef::World,
            body_b: 0,
            position: Vector3::zeros(),
            normal: Vector3::z(),
            gap: 0.0,
            friction: 0.7,
            restitution: 0.5,
        };
        let step = assemble_system(&model, &[state], 1e-3, &[], &[], &[contact]).unwrap();
        let problem = build_dual_problem(&step, &DualOptions::hard()).unwrap();
        // J(u⁻) normal = −2; restitution adds 0.5·(−2) = −1
        assert_relative_eq!(problem.free_velocity[2], -3.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_problem_is_degenerate() {
        let model = SystemModel::new(
            vec![BodySpec::sphere(1.0, 0.5)],
            vec![],
            Vector3::new(0.0, 0.0, -9.81),
        );
        let states = vec![BodyState::at_rest(Vector3::zeros())];
        let step = assemble_system(&model, &states, 1e-3, &[], &[], &[]).unwrap();
        let problem = build_dual_problem(&step, &DualOptions::hard()).unwrap();
        assert_eq!(problem.n(), 0);
        assert_eq!(problem.cone.n_rows(), 0);
    }
}
