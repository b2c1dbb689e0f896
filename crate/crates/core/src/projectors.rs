//! Euclidean cone projection primitives and the single-contact local solvers
//! used inside splitting iterations.
//!
//! The local solvers share one decision tree over the contact mode (open,
//! frictionless, sticking, degenerate conic, slipping). Slipping reactions
//! live on the conic section cut from the friction cone boundary by the plane
//! of maximum compression; the two exact solvers differ only in how they find
//! the optimal polar angle on that curve (complex quartic roots vs bisection
//! search), with a dense feasible-region scan as the shared fallback.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use num_complex::Complex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProjectorError {
    #[error("disk radius must be ≥ 0, got {0}")]
    NegativeRadius(f64),
    #[error("cone kind expects dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("conic decomposition requires μ > 0")]
    ZeroFriction,
}

/// Friction coefficients below this are treated as frictionless.
const MU_EPS: f64 = 1e-12;
/// |v_f,n| below this routes into the degenerate conic branches.
const DEGENERATE_EPS: f64 = 1e-12;
/// A quartic root counts as on the unit circle when ||x| − 1| is below this.
const UNIT_CIRCLE_TOL: f64 = 1e-7;

/// Cone kinds accepted by [`euclidean_project`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConeKind {
    /// Nonnegative orthant (scalar).
    Orthant,
    /// 2D disk of the given radius.
    Disk(f64),
    /// Self-dual 3D Lorentz cone `‖x_xy‖ ≤ x_z`.
    Lorentz,
    /// Coulomb friction cone `‖x_t‖ ≤ μ x_n`.
    Coulomb(f64),
    /// Dual Coulomb cone `‖x_t‖ ≤ x_n/μ`.
    DualCoulomb(f64),
}

impl ConeKind {
    pub fn dimension(&self) -> usize {
        match self {
            ConeKind::Orthant => 1,
            ConeKind::Disk(_) => 2,
            _ => 3,
        }
    }
}

pub fn project_orthant(x: f64) -> f64 {
    x.max(0.0)
}

pub fn project_disk(x: &Vector2<f64>, radius: f64) -> Result<Vector2<f64>, ProjectorError> {
    if radius < 0.0 {
        return Err(ProjectorError::NegativeRadius(radius));
    }
    let n = x.norm();
    if n <= radius {
        return Ok(*x);
    }
    let mut y = x * (radius / n);
    // snap onto the boundary until re-projection is the identity
    loop {
        let yn = y.norm();
        if yn <= radius {
            break;
        }
        let prev = y;
        y *= radius / yn;
        if y == prev {
            y *= 1.0 - f64::EPSILON;
        }
    }
    Ok(y)
}

/// Three-case closed-form projection onto the Coulomb cone `‖x_t‖ ≤ μ x_n`.
pub fn project_coulomb(x: &Vector3<f64>, mu: f64) -> Vector3<f64> {
    if mu <= MU_EPS {
        // cone degenerates to the nonnegative normal ray
        return Vector3::new(0.0, 0.0, x.z.max(0.0));
    }
    let t = (x.x * x.x + x.y * x.y).sqrt();
    if mu * t <= -x.z {
        return Vector3::zeros(); // inside the polar cone
    }
    if t <= mu * x.z {
        return *x; // already feasible
    }
    let scale = (mu * t + x.z) / (mu * mu + 1.0);
    let mut y = Vector3::new(scale * mu * x.x / t, scale * mu * x.y / t, scale);
    // snap onto the cone surface until membership (and idempotence) is exact
    loop {
        let ty = (y.x * y.x + y.y * y.y).sqrt();
        if ty <= mu * y.z {
            break;
        }
        let f = mu * y.z / ty;
        let prev = y;
        y.x *= f;
        y.y *= f;
        if y == prev {
            y.x *= 1.0 - f64::EPSILON;
            y.y *= 1.0 - f64::EPSILON;
        }
    }
    y
}

/// Projection onto the dual Coulomb cone `K_μ* = K_{1/μ}`.
pub fn project_dual_coulomb(x: &Vector3<f64>, mu: f64) -> Vector3<f64> {
    if mu <= MU_EPS {
        // dual of the normal ray is the half-space x_n ≥ 0
        return Vector3::new(x.x, x.y, x.z.max(0.0));
    }
    project_coulomb(x, 1.0 / mu)
}

/// Projection onto the self-dual Lorentz cone (`μ = 1` Coulomb cone).
pub fn project_lorentz(x: &Vector3<f64>) -> Vector3<f64> {
    project_coulomb(x, 1.0)
}

/// Dispatching wrapper with dimension checks; the typed functions above are
/// what the solvers call directly.
pub fn euclidean_project(x: &DVector<f64>, kind: ConeKind) -> Result<DVector<f64>, ProjectorError> {
    if x.len() != kind.dimension() {
        return Err(ProjectorError::Dimension { expected: kind.dimension(), got: x.len() });
    }
    Ok(match kind {
        ConeKind::Orthant => DVector::from_vec(vec![project_orthant(x[0])]),
        ConeKind::Disk(r) => {
            let y = project_disk(&Vector2::new(x[0], x[1]), r)?;
            DVector::from_vec(vec![y.x, y.y])
        }
        ConeKind::Lorentz => {
            let y = project_lorentz(&Vector3::new(x[0], x[1], x[2]));
            DVector::from_vec(vec![y.x, y.y, y.z])
        }
        ConeKind::Coulomb(mu) => {
            let y = project_coulomb(&Vector3::new(x[0], x[1], x[2]), mu);
            DVector::from_vec(vec![y.x, y.y, y.z])
        }
        ConeKind::DualCoulomb(mu) => {
            let y = project_dual_coulomb(&Vector3::new(x[0], x[1], x[2]), mu);
            DVector::from_vec(vec![y.x, y.y, y.z])
        }
    })
}

/// One contact's local problem: its 3×3 Delassus block, the local velocity
/// (free velocity plus coupling from all other constraints), friction, and an
/// optional De Saxcé estimate held fixed during the local solve.
#[derive(Debug, Clone)]
pub struct LocalContactProblem {
    pub d_block: Matrix3<f64>,
    pub v_local: Vector3<f64>,
    pub mu: f64,
    pub de_saxce: Option<Vector3<f64>>,
}

impl LocalContactProblem {
    pub fn new(d_block: Matrix3<f64>, v_local: Vector3<f64>, mu: f64) -> Self {
        Self { d_block, v_local, mu, de_saxce: None }
    }

    pub fn with_de_saxce(mut self, s: Vector3<f64>) -> Self {
        self.de_saxce = Some(s);
        self
    }

    /// Velocity with the De Saxcé estimate folded in; the local solvers treat
    /// the pair `(D, v_eff)` as a fixed convex single-contact problem.
    pub fn effective_velocity(&self) -> Vector3<f64> {
        match self.de_saxce {
            Some(s) => self.v_local + s,
            None => self.v_local,
        }
    }
}

/// CCP-type local step: one gradient step with step size `3/tr(D)` on
/// `z = D λ + v + s`, then Coulomb projection.
pub fn local_ccp(p: &LocalContactProblem, lambda: &Vector3<f64>) -> Vector3<f64> {
    let z = p.d_block * lambda + p.effective_velocity();
    let step = 3.0 / p.d_block.trace();
    project_coulomb(&(lambda - step * z), p.mu)
}

/// NCP-type local step: decoupled normal step (`1/D_nn`, orthant projection)
/// followed by a tangential step (`1/min(D_tt)`, disk projection with radius
/// `μ λ_N` using the updated normal reaction).
pub fn local_ncp(p: &LocalContactProblem, lambda: &Vector3<f64>) -> Vector3<f64> {
    let z = p.d_block * lambda + p.effective_velocity();
    let ln = project_orthant(lambda.z - z.z / p.d_block[(2, 2)]);
    let step_t = 1.0 / p.d_block[(0, 0)].min(p.d_block[(1, 1)]);
    let lt = Vector2::new(lambda.x - step_t * z.x, lambda.y - step_t * z.y);
    let lt = project_disk(&lt, p.mu * ln).expect("radius is nonnegative");
    Vector3::new(lt.x, lt.y, ln)
}

/// Geometry of the conic section cut from the friction cone boundary by the
/// plane of maximum compression.
#[derive(Debug, Clone)]
pub struct ConicDecomposition {
    /// Normal row of the Delassus block (plane-of-maximum-compression normal
    /// direction).
    pub d_n: Vector3<f64>,
    /// Normal component of the physical free velocity.
    pub v_fn: f64,
    /// Center of the feasible polar-angle interval.
    pub phi0: f64,
    /// Half-width of the feasible interval (π for a full circle).
    pub delta_phi: f64,
    /// Whole circle feasible (`D_nn > μ·√(D_nt² + D_no²)`).
    pub full_circle: bool,
    /// Conic-section inclination ratio `D_nn²/(μ²(D_nt² + D_no²))`; infinite
    /// for a circular section.
    pub inclination_ratio: f64,
}

impl ConicDecomposition {
    /// Radial scaling `f_r(φ) = D_nn + μ(D_nt cos φ + D_no sin φ)`.
    pub fn radial_scaling(&self, mu: f64, phi: f64) -> f64 {
        self.d_n.z + mu * (self.d_n.x * phi.cos() + self.d_n.y * phi.sin())
    }

    /// Conic-section radius `r̄(φ) = −μ v_fn / f_r(φ)` (negative values mark
    /// infeasible directions).
    pub fn radius(&self, mu: f64, phi: f64) -> f64 {
        -mu * self.v_fn / self.radial_scaling(mu, phi)
    }
}

/// Decomposes a single-contact problem into its conic-section quantities.
pub fn conic_decompose(p: &LocalContactProblem) -> Result<ConicDecomposition, ProjectorError> {
    if p.mu <= MU_EPS {
        return Err(ProjectorError::ZeroFriction);
    }
    let d = &p.d_block;
    let d_n = Vector3::new(d[(2, 0)], d[(2, 1)], d[(2, 2)]);
    // the Signorini plane is defined by the physical velocity; the De Saxcé
    // estimate only augments the objective
    let v_fn = p.v_local.z;
    let t_norm = (d_n.x * d_n.x + d_n.y * d_n.y).sqrt();
    let inclination_ratio = if t_norm < 1e-300 {
        f64::INFINITY
    } else {
        (d_n.z * d_n.z) / (p.mu * p.mu * t_norm * t_norm)
    };
    let (phi0, delta_phi, full_circle) = if d_n.z > p.mu * t_norm {
        (0.0, std::f64::consts::PI, true)
    } else {
        let phi0 = d_n.y.atan2(d_n.x);
        let delta_phi = (-d_n.z / (p.mu * t_norm)).clamp(-1.0, 1.0).acos();
        (phi0, delta_phi, false)
    };
    Ok(ConicDecomposition { d_n, v_fn, phi0, delta_phi, full_circle, inclination_ratio })
}

/// Branch taken by the nonlinear-block decision tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NbBranch {
    Open,
    Frictionless,
    Sticking,
    DegenerateElliptic,
    DegenerateRay,
    Slipping,
}

/// Result of an exact local solve, with a flag set when the primary slipping
/// method failed its filters and the feasible-region scan produced the
/// answer.
#[derive(Debug, Clone)]
pub struct NbSolution {
    pub lambda: Vector3<f64>,
    pub branch: NbBranch,
    pub used_fallback: bool,
}

fn in_coulomb_cone(lambda: &Vector3<f64>, mu: f64, tol: f64) -> bool {
    let t = (lambda.x * lambda.x + lambda.y * lambda.y).sqrt();
    lambda.z >= -tol && t <= mu * lambda.z + tol
}

/// Full 3D reaction on the plane of maximum compression for polar angle φ.
fn lambda_polar(d_n: &Vector3<f64>, v_fn: f64, r: f64, phi: f64) -> Vector3<f64> {
    let lt = r * phi.cos();
    let lo = r * phi.sin();
    let ln = -(v_fn + d_n.x * lt + d_n.y * lo) / d_n.z;
    Vector3::new(lt, lo, ln)
}

/// Quadratic objective `½ λᵀDλ + λᵀv` of the effective local problem.
fn local_objective(d: &Matrix3<f64>, v: &Vector3<f64>, lambda: &Vector3<f64>) -> f64 {
    0.5 * lambda.dot(&(d * lambda)) + lambda.dot(v)
}

/// Stationarity function along the conic section, shared by every polar
/// search path: dg/dφ of the polar-angle objective multiplied by f(φ)³/K to
/// clear denominators (equivalently, the objective gradient against the
/// curve tangent `∇h₁ × ∇h₂` up to a positive factor). A trigonometric
/// polynomial of degree 2.
fn stationarity_fn(
    d: &Matrix3<f64>,
    v: &Vector3<f64>,
    conic: &ConicDecomposition,
    mu: f64,
) -> impl Fn(f64) -> f64 {
    let d_n = conic.d_n;
    let k_r = -mu * conic.v_fn; // numerator of r̄(φ), positive when closing
    let inv_dnn = 1.0 / d_n.z;
    let dh = Matrix2::new(
        d[(0, 0)] - inv_dnn * d_n.x * d_n.x,
        d[(0, 1)] - inv_dnn * d_n.x * d_n.y,
        d[(1, 0)] - inv_dnn * d_n.y * d_n.x,
        d[(1, 1)] - inv_dnn * d_n.y * d_n.y,
    );
    let vh = Vector2::new(v.x - inv_dnn * d_n.x * v.z, v.y - inv_dnn * d_n.y * v.z);
    move |phi: f64| -> f64 {
        let (sn, cs) = phi.sin_cos();
        let e_r = Vector2::new(cs, sn);
        let e_t = Vector2::new(-sn, cs);
        let f = d_n.z + mu * (d_n.x * cs + d_n.y * sn);
        let fp = mu * (-d_n.x * sn + d_n.y * cs);
        let q_r = e_r.dot(&(dh * e_r));
        let q_t = e_t.dot(&(dh * e_r));
        -k_r * fp * q_r - f * fp * e_r.dot(&vh) + k_r * f * q_t + f * f * e_t.dot(&vh)
    }
}

/// Complex polynomial roots via the eigenvalues of the realified companion
/// matrix. Degrees 1..4; tiny leading coefficients are trimmed.
fn complex_poly_roots(coeffs: &[Complex<f64>]) -> Vec<Complex<f64>> {
    // coeffs[k] multiplies z^k, highest degree last
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if scale <= 0.0 {
        return vec![];
    }
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].norm() <= 1e-14 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return vec![];
    }
    let lead = coeffs[deg];
    // companion matrix C (deg×deg) of the monic polynomial, realified to the
    // 2deg×2deg matrix [[Re C, −Im C], [Im C, Re C]]; its spectrum is that of
    // C plus conjugates, which the caller's filters discard.
    let n = deg;
    let mut re = DMatrix::<f64>::zeros(n, n);
    let mut im = DMatrix::<f64>::zeros(n, n);
    for r in 1..n {
        re[(r, r - 1)] = 1.0;
    }
    for r in 0..n {
        let c = -(coeffs[r] / lead);
        re[(r, n - 1)] = c.re;
        im[(r, n - 1)] = c.im;
    }
    let mut real = DMatrix::<f64>::zeros(2 * n, 2 * n);
    real.view_mut((0, 0), (n, n)).copy_from(&re);
    real.view_mut((n, n), (n, n)).copy_from(&re);
    real.view_mut((0, n), (n, n)).copy_from(&(-&im));
    real.view_mut((n, 0), (n, n)).copy_from(&im);
    real.complex_eigenvalues().iter().copied().collect()
}

/// Newton refinement with a numerical derivative, iterated to convergence;
/// keeps quartic and bisection outputs aligned to tight tolerances.
fn polish_root(g: &dyn Fn(f64) -> f64, mut phi: f64) -> f64 {
    let h = 1e-7;
    for _ in 0..12 {
        let g0 = g(phi);
        let dg = (g(phi + h) - g(phi - h)) / (2.0 * h);
        if dg.abs() < 1e-300 {
            break;
        }
        let step = g0 / dg;
        if !step.is_finite() || step.abs() > 0.1 {
            break;
        }
        phi -= step;
        if step.abs() < 1e-14 {
            break;
        }
    }
    phi
}

/// Candidate polar angles for the slipping case, via the roots of the complex
/// quartic obtained from the trigonometric stationarity equation.
///
/// The degree-2 trigonometric polynomial coefficients are recovered exactly
/// from 8 equally spaced samples of the (denominator-cleared) stationarity
/// function, then mapped to the phasor polynomial with `z = e^{iφ}`.
fn slipping_quartic_angles(
    d: &Matrix3<f64>,
    v: &Vector3<f64>,
    conic: &ConicDecomposition,
    mu: f64,
) -> Vec<f64> {
    let g_fn = stationarity_fn(d, v, conic, mu);

    // exact trig-coefficient recovery by discrete Fourier sums over 8 samples
    let n_s = 8;
    let mut g0 = 0.0;
    let (mut g1c, mut g1s, mut g2c, mut g2s) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..n_s {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / n_s as f64;
        let g = g_fn(phi);
        g0 += g;
        g1c += g * phi.cos();
        g1s += g * phi.sin();
        g2c += g * (2.0 * phi).cos();
        g2s += g * (2.0 * phi).sin();
    }
    g0 /= n_s as f64;
    let half = n_s as f64 / 2.0;
    g1c /= half;
    g1s /= half;
    g2c /= half;
    g2s /= half;

    // phasor quartic: C4 z⁴ + C3 z³ + g0 z² + C̄3 z + C̄4 = 0 (self-inversive)
    let c4 = Complex::new(g2c / 2.0, -g2s / 2.0);
    let c3 = Complex::new(g1c / 2.0, -g1s / 2.0);
    let coeffs = [c4.conj(), c3.conj(), Complex::new(g0, 0.0), c3, c4];
    let roots = complex_poly_roots(&coeffs);

    let g_scale = (0..n_s)
        .map(|k| g_fn(2.0 * std::f64::consts::PI * k as f64 / n_s as f64).abs())
        .fold(1e-300, f64::max);

    let mut angles = Vec::new();
    for z in roots {
        if (z.norm() - 1.0).abs() > UNIT_CIRCLE_TOL {
            continue;
        }
        let phi = z.im.atan2(z.re);
        // refine against the exact stationarity function, then re-filter
        let phi = polish_root(&g_fn, phi);
        if g_fn(phi).abs() > 1e-6 * g_scale {
            continue;
        }
        // tighten in reaction space: near the feasible-interval edges the
        // reaction is very sensitive to the angle, so a λ-metric bisection
        // around the polished root keeps both exact solvers aligned
        let phi = refine_root_lambda(&g_fn, conic, mu, phi);
        angles.push(phi);
    }
    angles
}

/// Micro-bisection around a root of `g`, converging in the reaction metric
/// rather than the angle metric.
fn refine_root_lambda(
    g: &dyn Fn(f64) -> f64,
    conic: &ConicDecomposition,
    mu: f64,
    phi: f64,
) -> f64 {
    let lambda_at = |phi: f64| -> Option<Vector3<f64>> {
        let r = conic.radius(mu, phi);
        if !(r > 0.0) || !r.is_finite() {
            return None;
        }
        Some(lambda_polar(&conic.d_n, conic.v_fn, r, phi))
    };
    // bracket the sign change in a shrinking neighborhood
    let mut delta = 1e-6;
    let (mut a, mut b) = loop {
        let (a, b) = (phi - delta, phi + delta);
        match (g(a), g(b)) {
            (ga, gb) if ga * gb <= 0.0 && ga != 0.0 => break (a, b),
            _ => {
                delta *= 4.0;
                if delta > 1e-2 {
                    return phi; // no nearby crossing; keep the polished root
                }
            }
        }
    };
    let mut ga = g(a);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let gm = g(mid);
        if ga * gm <= 0.0 {
            b = mid;
        } else {
            a = mid;
            ga = gm;
        }
        if let (Some(la), Some(lb)) = (lambda_at(a), lambda_at(b)) {
            if (la - lb).norm() < 1e-12 {
                break;
            }
        }
        if (b - a).abs() < 1e-16 {
            break;
        }
    }
    0.5 * (a + b)
}

/// Feasible-region scan (shared fallback): samples the polar-angle interval,
/// bisects every sign change of the stationarity function, and also refines
/// the best sampled point so a minimum at the interval edge or a vanishing
/// stationarity function still yields a candidate.
fn feasible_region_scan(
    d: &Matrix3<f64>,
    v: &Vector3<f64>,
    conic: &ConicDecomposition,
    mu: f64,
    resolution: usize,
) -> Vec<f64> {
    let (lo, hi) = if conic.full_circle {
        (0.0, 2.0 * std::f64::consts::PI)
    } else {
        // inset slightly: the radius blows up at the open endpoints
        let inset = 1e-9 * conic.delta_phi.max(1e-9);
        (conic.phi0 - conic.delta_phi + inset, conic.phi0 + conic.delta_phi - inset)
    };
    let n = resolution.max(8);
    let g_fn = stationarity_fn(d, v, conic, mu);
    let g_at = |phi: f64| -> Option<f64> {
        let r = conic.radius(mu, phi);
        if r <= 0.0 || !r.is_finite() {
            return None;
        }
        Some(g_fn(phi))
    };

    let mut candidates = Vec::new();
    let mut best_phi = None;
    let mut best_obj = f64::INFINITY;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let phi = lo + (hi - lo) * i as f64 / n as f64;
        let Some(g) = g_at(phi) else {
            prev = None;
            continue;
        };
        let r = conic.radius(mu, phi);
        let obj = local_objective(d, v, &lambda_polar(&conic.d_n, conic.v_fn, r, phi));
        if obj < best_obj {
            best_obj = obj;
            best_phi = Some(phi);
        }
        if let Some((phi_prev, g_prev)) = prev {
            if g_prev * g <= 0.0 && g_prev != 0.0 {
                // bracketed crossing: plain bisection
                let (mut a, mut b, mut ga) = (phi_prev, phi, g_prev);
                for _ in 0..90 {
                    let mid = 0.5 * (a + b);
                    match g_at(mid) {
                        Some(gm) if ga * gm <= 0.0 => b = mid,
                        Some(gm) => {
                            a = mid;
                            ga = gm;
                        }
                        None => break,
                    }
                    if (b - a).abs() < 1e-14 {
                        break;
                    }
                }
                candidates.push(refine_root_lambda(&g_fn, conic, mu, 0.5 * (a + b)));
            }
        }
        prev = Some((phi, g));
    }
    // refined stationarity crossings pin the reaction far more precisely
    // than an objective minimization over the (often flat) basin, so the
    // golden-section candidate only backs up an empty crossing set (edge
    // minima, vanishing stationarity function)
    if candidates.is_empty() {
        if let Some(phi_c) = best_phi {
            let span = (hi - lo) / n as f64;
            let (mut a, mut b) = ((phi_c - span).max(lo), (phi_c + span).min(hi));
            let obj_at = |phi: f64| -> f64 {
                let r = conic.radius(mu, phi);
                if r <= 0.0 || !r.is_finite() {
                    return f64::INFINITY;
                }
                local_objective(d, v, &lambda_polar(&conic.d_n, conic.v_fn, r, phi))
            };
            let ratio = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..120 {
                let x1 = b - ratio * (b - a);
                let x2 = a + ratio * (b - a);
                if obj_at(x1) < obj_at(x2) {
                    b = x2;
                } else {
                    a = x1;
                }
            }
            candidates.push(refine_root_lambda(&g_fn, conic, mu, 0.5 * (a + b)));
        }
    }
    candidates
}

/// Picks the feasible candidate with the lowest objective.
fn best_candidate(
    d: &Matrix3<f64>,
    v: &Vector3<f64>,
    conic: &ConicDecomposition,
    mu: f64,
    angles: &[f64],
) -> Option<Vector3<f64>> {
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for &phi in angles {
        let r = conic.radius(mu, phi);
        if !(r > 0.0) || !r.is_finite() {
            continue;
        }
        if !conic.full_circle {
            // wrap into the feasible arc
            let mut delta = phi - conic.phi0;
            while delta > std::f64::consts::PI {
                delta -= 2.0 * std::f64::consts::PI;
            }
            while delta < -std::f64::consts::PI {
                delta += 2.0 * std::f64::consts::PI;
            }
            if delta.abs() > conic.delta_phi + 1e-9 {
                continue;
            }
        }
        let lambda = lambda_polar(&conic.d_n, conic.v_fn, r, phi);
        let obj = local_objective(d, v, &lambda);
        match best {
            Some((o, _)) if o <= obj => {}
            _ => best = Some((obj, lambda)),
        }
    }
    best.map(|(_, l)| l)
}

/// Degenerate para/hyperbolic case (`v_fn ≈ 0`, inclination ratio ≤ 1): the
/// conic collapses to rays along the cone boundary inside the plane; the
/// strictly convex objective is minimized on each ray in closed form.
fn degenerate_ray_solution(
    d: &Matrix3<f64>,
    v: &Vector3<f64>,
    conic: &ConicDecomposition,
    mu: f64,
) -> Vector3<f64> {
    let mut best = Vector3::zeros();
    let mut best_obj = 0.0; // λ = 0 is always admissible here
    for phi in [conic.phi0 - conic.delta_phi, conic.phi0 + conic.delta_phi] {
        let dir = Vector3::new(phi.cos(), phi.sin(), 1.0 / mu);
        let denom = dir.dot(&(d * dir));
        if denom <= 0.0 {
            continue;
        }
        let r = (-dir.dot(v) / denom).max(0.0);
        let lambda = dir * r;
        let obj = local_objective(d, v, &lambda);
        if obj < best_obj {
            best_obj = obj;
            best = lambda;
        }
    }
    best
}

fn nb_solve(
    p: &LocalContactProblem,
    slip: impl FnOnce(&Matrix3<f64>, &Vector3<f64>, &ConicDecomposition, f64) -> (Vector3<f64>, bool),
) -> NbSolution {
    // the contact mode is decided by the physical velocity; the De Saxcé
    // estimate augments only the objective
    let w = p.effective_velocity();
    let d = &p.d_block;
    let v_fn = p.v_local.z;

    if v_fn > DEGENERATE_EPS {
        return NbSolution { lambda: Vector3::zeros(), branch: NbBranch::Open, used_fallback: false };
    }
    if p.mu <= MU_EPS {
        return NbSolution {
            lambda: Vector3::new(0.0, 0.0, -v_fn / d[(2, 2)]),
            branch: NbBranch::Frictionless,
            used_fallback: false,
        };
    }
    let lambda0 = d
        .cholesky()
        .map(|ch| ch.solve(&(-w)))
        .unwrap_or_else(|| d.lu().solve(&(-w)).unwrap_or_else(Vector3::zeros));
    let scale = 1.0 + lambda0.norm();
    let s_n = w.z - v_fn;
    // sticking needs λ0 feasible and the zero-velocity point on the
    // Signorini plane (the augmentation vanishes at a true stick)
    if in_coulomb_cone(&lambda0, p.mu, 1e-12 * scale) && s_n <= 1e-12 * (1.0 + w.norm()) {
        return NbSolution { lambda: lambda0, branch: NbBranch::Sticking, used_fallback: false };
    }
    let conic = conic_decompose(p).expect("μ > 0 checked above");
    if v_fn.abs() <= DEGENERATE_EPS {
        if conic.inclination_ratio > 1.0 {
            return NbSolution {
                lambda: Vector3::zeros(),
                branch: NbBranch::DegenerateElliptic,
                used_fallback: false,
            };
        }
        return NbSolution {
            lambda: degenerate_ray_solution(d, &w, &conic, p.mu),
            branch: NbBranch::DegenerateRay,
            used_fallback: false,
        };
    }
    let (lambda, used_fallback) = slip(d, &w, &conic, p.mu);
    NbSolution { lambda, branch: NbBranch::Slipping, used_fallback }
}

/// Exact nonlinear-block local solver; the slipping case is solved through
/// the roots of the complex quartic, with the feasible-region scan as the
/// fallback when no root survives the filters.
pub fn local_nb_quartic(p: &LocalContactProblem) -> NbSolution {
    nb_solve(p, |d, v, conic, mu| {
        let angles = slipping_quartic_angles(d, v, conic, mu);
        if let Some(lambda) = best_candidate(d, v, conic, mu, &angles) {
            return (lambda, false);
        }
        let scanned = feasible_region_scan(d, v, conic, mu, 128);
        let lambda = best_candidate(d, v, conic, mu, &scanned).unwrap_or_else(Vector3::zeros);
        (lambda, true)
    })
}

/// Knobs of the bisection-based slipping search.
#[derive(Debug, Clone, Copy)]
pub struct BisectionConfig {
    /// Maximum interval-expansion steps.
    pub n_expansions: usize,
    /// Initial step bound β₁ (rad).
    pub beta1: f64,
    /// Expansion factor β₂.
    pub beta2: f64,
    /// Conservative step β₃ past the line-of-sight edge (rad).
    pub beta3: f64,
    /// Bisection convergence threshold on ‖λ_min − λ_max‖.
    pub eps: f64,
    /// Feasible-region scan resolution of the fallback.
    pub scan_resolution: usize,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        Self {
            n_expansions: 64,
            beta1: 0.1,
            beta2: 1.5,
            beta3: 0.01,
            eps: 1e-10,
            scan_resolution: 128,
        }
    }
}

/// Bisection on a gradient-product sign change bracketed by `[a, b]`.
fn bisect_crossing(
    g_at: &dyn Fn(f64) -> Option<f64>,
    mut a: f64,
    mut b: f64,
    g_a: f64,
    eps: f64,
    lambda_at: &dyn Fn(f64) -> Option<Vector3<f64>>,
) -> Option<f64> {
    let mut ga = g_a;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let gm = g_at(mid)?;
        if ga * gm <= 0.0 {
            b = mid;
        } else {
            a = mid;
            ga = gm;
        }
        let (la, lb) = (lambda_at(a)?, lambda_at(b)?);
        if (la - lb).norm() < eps {
            break;
        }
    }
    Some(0.5 * (a + b))
}

/// Exact nonlinear-block local solver with the bisection-based polar-angle
/// search in the slipping branch: a Euclidean polar seed, exponential
/// interval expansion opposite the gradient-product sign (steps landing in
/// the infeasible region are retried with a shorter stride rather than
/// terminating the expansion there), then bisection on the bracketed
/// crossing. The feasible-region scan covers everything the search misses.
pub fn local_nb_bisection(p: &LocalContactProblem, config: &BisectionConfig) -> NbSolution {
    let cfg = *config;
    nb_solve(p, move |d, v, conic, mu| {
        let fallback = || -> (Vector3<f64>, bool) {
            let scanned = feasible_region_scan(d, v, conic, mu, cfg.scan_resolution);
            (best_candidate(d, v, conic, mu, &scanned).unwrap_or_else(Vector3::zeros), true)
        };

        let g_fn = stationarity_fn(d, v, conic, mu);
        let lambda_at = |phi: f64| -> Option<Vector3<f64>> {
            let r = conic.radius(mu, phi);
            if !(r > 0.0) || !r.is_finite() {
                return None;
            }
            Some(lambda_polar(&conic.d_n, conic.v_fn, r, phi))
        };
        let g_at = |phi: f64| -> Option<f64> { lambda_at(phi).map(|_| g_fn(phi)) };

        // unconstrained solution provides the polar seed
        let lambda0 = d
            .cholesky()
            .map(|ch| ch.solve(&(-v)))
            .unwrap_or_else(|| d.lu().solve(&(-v)).unwrap_or_else(Vector3::zeros));
        let lt_norm = (lambda0.x * lambda0.x + lambda0.y * lambda0.y).sqrt();
        let phi_e = lambda0.y.atan2(lambda0.x);
        let r_e = conic.radius(mu, phi_e);
        if !(r_e > 0.0) || !r_e.is_finite() {
            return fallback();
        }
        let Some(g_seed) = g_at(phi_e) else { return fallback() };
        if g_seed == 0.0 {
            return (lambda_at(phi_e).unwrap(), false);
        }
        let los = (lt_norm / r_e).clamp(-1.0, 1.0).acos();

        let mut anchor = phi_e;
        let mut g0 = g_seed;
        let s0 = g_seed.signum();
        let mut alpha = -los.abs().min(cfg.beta1).max(1e-6) * s0;
        let max_span =
            if conic.full_circle { 2.0 * std::f64::consts::PI } else { 2.0 * conic.delta_phi };

        let mut bracket = None;
        for _ in 0..cfg.n_expansions {
            let phi_i = anchor + alpha;
            if (phi_i - phi_e).abs() > max_span {
                break;
            }
            match g_at(phi_i) {
                Some(g_i) if g0 * g_i < 0.0 => {
                    bracket = Some((anchor.min(phi_i), anchor.max(phi_i)));
                    break;
                }
                Some(g_i) => {
                    if (phi_e - phi_i).abs() >= los {
                        // creep past the line-of-sight edge with small steps
                        anchor = phi_i;
                        g0 = g_i;
                        alpha = -cfg.beta3 * s0;
                    } else {
                        alpha *= cfg.beta2;
                    }
                }
                None => {
                    // stepped into the infeasible region: shrink back toward
                    // the anchor instead of stopping there
                    alpha *= 0.5;
                    if alpha.abs() < 1e-12 {
                        break;
                    }
                }
            }
        }

        let Some((a, b)) = bracket else { return fallback() };
        let Some(ga) = g_at(a) else { return fallback() };
        match bisect_crossing(&g_at, a, b, ga, cfg.eps, &lambda_at) {
            Some(phi) => {
                // the shared refinement keeps both exact solvers aligned
                let phi = refine_root_lambda(&g_fn, conic, mu, phi);
                match lambda_at(phi) {
                    Some(lambda) => (lambda, false),
                    None => fallback(),
                }
            }
            None => fallback(),
        }
    })
}
