//! First-order dual solvers: the projective-splitting (SOR/Gauss-Seidel)
//! scheme with pluggable local contact solvers, and the proximal ADMM scheme
//! with fixed, linear or spectral penalty adaptation.
//!
//! Both solvers operate on the effective problem `(D + R) λ + v_f + v_r`
//! when softening terms are attached, sweep or iterate until the primal,
//! dual and complementarity residuals (all L∞) pass their tolerances, and
//! report the reactions together with the post-event constraint velocity.

use crate::dual::{de_saxce_correction, ConeSpec, DualProblem};
use crate::projectors::{
    local_ccp, local_nb_bisection, local_nb_quartic, local_ncp, project_coulomb,
    project_dual_coulomb, project_orthant, BisectionConfig, LocalContactProblem,
};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use std::time::Instant;

/// Iteration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Splitting,
    Admm,
}

/// Local contact solver used inside splitting sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalSolverKind {
    Ccp,
    Ncp,
    NbQuartic,
    NbBisection,
}

/// Termination rule of the splitting solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Primal/dual/complementarity residuals against their tolerances.
    Residuals,
    /// Stop on a relative objective-improvement plateau (paired with a
    /// primal feasibility check) or on the residual triple, whichever comes
    /// first. Plateau exits carry no residual certificate and are reported
    /// as `MaxIter`.
    EarlyStop,
}

/// Which complementarity formulation residuals are evaluated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualMode {
    /// Augment the constraint velocity with the De Saxcé correction.
    Ncp,
    /// Use the plain post-event constraint velocity.
    Ccp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmmVariant {
    Ncp,
    Ccp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyMode {
    Fixed,
    Linear,
    Spectral,
}

/// ADMM parameters; defaults follow the fixed-penalty configuration.
#[derive(Debug, Clone, Copy)]
pub struct AdmmParams {
    pub variant: AdmmVariant,
    pub penalty_mode: PenaltyMode,
    /// Initial penalty for the fixed/linear modes.
    pub rho0: f64,
    /// Proximal regularization weight (0 for the CCP variant).
    pub eta: f64,
    /// Dead-zone threshold on the primal/dual residual ratio.
    pub alpha: f64,
    /// Linear adaptation factors: multiply by `tau_inc`, divide by `tau_dec`.
    pub tau_inc: f64,
    pub tau_dec: f64,
    /// Spectral adaptation exponents.
    pub tau0: f64,
    pub tau: f64,
    /// Over-relaxation blend of the primal update (1 = none).
    pub over_relaxation: f64,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            variant: AdmmVariant::Ncp,
            penalty_mode: PenaltyMode::Fixed,
            rho0: 1.0,
            eta: 1e-6,
            alpha: 10.0,
            tau_inc: 1.5,
            tau_dec: 1.5,
            tau0: 0.2,
            tau: 0.05,
            over_relaxation: 1.0,
        }
    }
}

/// SOR relaxation schedule: `ω ← max(ω_min, γ ω)` after every sweep.
#[derive(Debug, Clone, Copy)]
pub struct SorSchedule {
    pub omega0: f64,
    pub omega_min: f64,
    pub gamma: f64,
}

impl Default for SorSchedule {
    fn default() -> Self {
        Self { omega0: 1.0, omega_min: 0.1, gamma: 1.0 }
    }
}

/// L∞ residual tolerances.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl Tolerances {
    pub fn uniform(eps_abs: f64) -> Self {
        Self { primal: eps_abs, dual: eps_abs, complementarity: eps_abs }
    }
}

/// The named solver configurations evaluated by the benchmark harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverId {
    PgsCcp,
    PgsNcp,
    Nbgs,
    Raisim,
    RaisimDs,
    RaisimDsEs,
    AdmmCcp,
    AdmmNcpFp,
    AdmmNcpLa,
    AdmmNcpSa,
}

impl SolverId {
    pub const ALL: [SolverId; 10] = [
        SolverId::PgsCcp,
        SolverId::PgsNcp,
        SolverId::Nbgs,
        SolverId::Raisim,
        SolverId::RaisimDs,
        SolverId::RaisimDsEs,
        SolverId::AdmmCcp,
        SolverId::AdmmNcpFp,
        SolverId::AdmmNcpLa,
        SolverId::AdmmNcpSa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SolverId::PgsCcp => "PGS-CCP",
            SolverId::PgsNcp => "PGS-NCP",
            SolverId::Nbgs => "NBGS",
            SolverId::Raisim => "RAISIM",
            SolverId::RaisimDs => "RAISIM-DS",
            SolverId::RaisimDsEs => "RAISIM-DS-ES",
            SolverId::AdmmCcp => "ADMM-CCP",
            SolverId::AdmmNcpFp => "ADMM-NCP-FP",
            SolverId::AdmmNcpLa => "ADMM-NCP-LA",
            SolverId::AdmmNcpSa => "ADMM-NCP-SA",
        }
    }
}

impl std::str::FromStr for SolverId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SolverId::ALL
            .iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| format!("unknown solver id '{s}'"))
    }
}

impl std::fmt::Display for SolverId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Full solver configuration; construct with [`SolverConfig::for_id`] and
/// adjust the precision knobs afterwards.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub local_solver: LocalSolverKind,
    pub de_saxce: bool,
    pub termination: Termination,
    pub n_max: usize,
    pub tol: Tolerances,
    pub sor: SorSchedule,
    pub admm: AdmmParams,
    /// Threshold on the relative objective improvement for early stopping.
    /// The default is tight enough that plateaued iterates carry
    /// equilibrium-accurate reactions on the primitive scenes.
    pub early_stop_tol: f64,
    pub bisection: BisectionConfig,
    /// Record per-iteration residuals in the report.
    pub keep_history: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Splitting,
            local_solver: LocalSolverKind::NbQuartic,
            de_saxce: false,
            termination: Termination::Residuals,
            n_max: 10_000,
            tol: Tolerances::uniform(1e-12),
            sor: SorSchedule::default(),
            admm: AdmmParams::default(),
            early_stop_tol: 1e-18,
            bisection: BisectionConfig::default(),
            keep_history: false,
        }
    }
}

impl SolverConfig {
    /// Configuration matching the named solver; high-precision settings
    /// (`N_max = 10⁴`, `ε_abs = 10⁻¹²`).
    pub fn for_id(id: SolverId) -> Self {
        let base = SolverConfig::default();
        match id {
            SolverId::PgsCcp => Self { local_solver: LocalSolverKind::Ccp, de_saxce: true, ..base },
            SolverId::PgsNcp => {
                Self { local_solver: LocalSolverKind::Ncp, de_saxce: false, ..base }
            }
            SolverId::Nbgs => {
                Self { local_solver: LocalSolverKind::NbQuartic, de_saxce: false, ..base }
            }
            SolverId::Raisim => {
                Self { local_solver: LocalSolverKind::NbBisection, de_saxce: false, ..base }
            }
            SolverId::RaisimDs => {
                Self { local_solver: LocalSolverKind::NbBisection, de_saxce: true, ..base }
            }
            SolverId::RaisimDsEs => Self {
                local_solver: LocalSolverKind::NbBisection,
                de_saxce: true,
                termination: Termination::EarlyStop,
                ..base
            },
            SolverId::AdmmCcp => Self {
                algorithm: Algorithm::Admm,
                admm: AdmmParams {
                    variant: AdmmVariant::Ccp,
                    eta: 0.0,
                    penalty_mode: PenaltyMode::Fixed,
                    ..AdmmParams::default()
                },
                ..base
            },
            SolverId::AdmmNcpFp => Self {
                algorithm: Algorithm::Admm,
                admm: AdmmParams { penalty_mode: PenaltyMode::Fixed, ..AdmmParams::default() },
                ..base
            },
            SolverId::AdmmNcpLa => Self {
                algorithm: Algorithm::Admm,
                admm: AdmmParams { penalty_mode: PenaltyMode::Linear, ..AdmmParams::default() },
                ..base
            },
            SolverId::AdmmNcpSa => Self {
                algorithm: Algorithm::Admm,
                admm: AdmmParams { penalty_mode: PenaltyMode::Spectral, ..AdmmParams::default() },
                ..base
            },
        }
    }

    /// Sets all three residual tolerances to `eps_abs`.
    pub fn with_eps_abs(mut self, eps_abs: f64) -> Self {
        self.tol = Tolerances::uniform(eps_abs);
        self
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    /// High-throughput settings: `N_max = 10³`, `ε_abs = 10⁻⁶`.
    pub fn high_throughput(self) -> Self {
        self.with_n_max(1_000).with_eps_abs(1e-6)
    }

    /// Residual evaluation mode implied by the De Saxcé flag (splitting) or
    /// the ADMM variant.
    pub fn residual_mode(&self) -> ResidualMode {
        let ncp = match self.algorithm {
            Algorithm::Splitting => self.de_saxce,
            Algorithm::Admm => self.admm.variant == AdmmVariant::Ncp,
        };
        if ncp {
            ResidualMode::Ncp
        } else {
            ResidualMode::Ccp
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Diverged,
    Empty,
}

/// Per-iteration residual triple.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub r_primal: f64,
    pub r_dual: f64,
    pub r_compl: f64,
}

/// Solver output: reactions, post-event constraint velocity, status and
/// timing. `v_plus` always satisfies `v⁺ = (D + R) λ + v_f + v_r` for the
/// problem as solved.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub lambda: DVector<f64>,
    pub v_plus: DVector<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residual_history: Vec<IterationRecord>,
    pub final_residuals: IterationRecord,
    pub solve_time: f64,
    pub mean_iter_time: f64,
}

impl SolverReport {
    fn empty() -> Self {
        Self {
            lambda: DVector::zeros(0),
            v_plus: DVector::zeros(0),
            status: SolveStatus::Empty,
            iterations: 0,
            residual_history: vec![],
            final_residuals: IterationRecord { r_primal: 0.0, r_dual: 0.0, r_compl: 0.0 },
            solve_time: 0.0,
            mean_iter_time: 0.0,
        }
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Warmstart pair from a previous solve with the same constraint layout.
#[derive(Debug, Clone)]
pub struct Warmstart {
    pub lambda: DVector<f64>,
    pub v_plus: DVector<f64>,
}

/// Composite projection onto the cone `K`.
pub fn project_cone(x: &DVector<f64>, cone: &ConeSpec) -> DVector<f64> {
    let mut y = x.clone();
    for l in 0..cone.limit_rows {
        let i = cone.limit_offset(l);
        y[i] = project_orthant(x[i]);
    }
    for (k, &mu) in cone.contact_mus.iter().enumerate() {
        let off = cone.contact_offset(k);
        let p = project_coulomb(&Vector3::new(x[off], x[off + 1], x[off + 2]), mu);
        y[off] = p.x;
        y[off + 1] = p.y;
        y[off + 2] = p.z;
    }
    y
}

/// Composite projection onto the dual cone `K*` (zero on joint rows).
pub fn project_dual_cone(x: &DVector<f64>, cone: &ConeSpec) -> DVector<f64> {
    let mut y = DVector::zeros(x.len());
    for l in 0..cone.limit_rows {
        let i = cone.limit_offset(l);
        y[i] = project_orthant(x[i]);
    }
    for (k, &mu) in cone.contact_mus.iter().enumerate() {
        let off = cone.contact_offset(k);
        let p = project_dual_coulomb(&Vector3::new(x[off], x[off + 1], x[off + 2]), mu);
        y[off] = p.x;
        y[off + 1] = p.y;
        y[off + 2] = p.z;
    }
    y
}

/// Residual triple of the complementarity system: `r_p = ‖λ − P_K(λ)‖∞`,
/// `r_d = ‖w − P_K*(w)‖∞` with `w` the (mode-dependent) constraint velocity,
/// and `r_cp` the largest per-block `|λᵢᵀwᵢ|` over limit and contact blocks.
pub fn compute_residuals(
    lambda: &DVector<f64>,
    v_plus: &DVector<f64>,
    cone: &ConeSpec,
    mode: ResidualMode,
) -> IterationRecord {
    let r_primal = (lambda - project_cone(lambda, cone)).amax();
    let w = match mode {
        ResidualMode::Ncp => v_plus + de_saxce_correction(v_plus, cone),
        ResidualMode::Ccp => v_plus.clone(),
    };
    let r_dual = (&w - project_dual_cone(&w, cone)).amax();
    let mut r_compl = 0.0f64;
    for l in 0..cone.limit_rows {
        let i = cone.limit_offset(l);
        r_compl = r_compl.max((lambda[i] * w[i]).abs());
    }
    for k in 0..cone.n_contacts() {
        let off = cone.contact_offset(k);
        let dot = lambda[off] * w[off] + lambda[off + 1] * w[off + 1] + lambda[off + 2] * w[off + 2];
        r_compl = r_compl.max(dot.abs());
    }
    IterationRecord { r_primal, r_dual, r_compl }
}

/// Natural-map residual vector `λ − P_K(λ − F(λ))` with
/// `F = (D + R) λ + v_f + v_r (+ Γ(v⁺) in NCP mode)`.
pub fn natural_map(
    lambda: &DVector<f64>,
    problem: &DualProblem,
    mode: ResidualMode,
) -> DVector<f64> {
    if problem.n() == 0 {
        return DVector::zeros(0);
    }
    let d = problem.effective_delassus();
    let v = problem.effective_free_velocity();
    let v_plus = &d * lambda + &v;
    let f = match mode {
        ResidualMode::Ncp => &v_plus + de_saxce_correction(&v_plus, &problem.cone),
        ResidualMode::Ccp => v_plus,
    };
    lambda - project_cone(&(lambda - f), &problem.cone)
}

/// Relative objective improvement `|f − f_prev| / I_total` used for early
/// stopping.
pub fn early_stop_metric(f_curr: f64, f_prev: f64, total_inertia: f64) -> f64 {
    (f_curr - f_prev).abs() / total_inertia
}

/// Largest-eigenvalue estimate by power iteration from a fixed deterministic
/// seed; returns the Rayleigh quotient after `iters` steps.
pub fn spectral_radius_estimate(d: &DMatrix<f64>, iters: usize) -> f64 {
    let n = d.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + i as f64 / n as f64);
    v /= v.norm();
    for _ in 0..iters {
        let w = d * &v;
        let norm = w.norm();
        if norm <= 0.0 {
            return 0.0;
        }
        v = w / norm;
    }
    v.dot(&(d * &v)) / v.dot(&v)
}

/// One penalty-adaptation step. `r_d = 0` counts as an infinite ratio
/// (increase branch). `kappa0` is the condition estimate frozen at
/// initialization for the spectral mode.
pub fn penalty_update(
    rho: f64,
    r_primal: f64,
    r_dual: f64,
    mode: PenaltyMode,
    params: &AdmmParams,
    kappa0: f64,
) -> f64 {
    let ratio = if r_dual > 0.0 { r_primal / r_dual } else { f64::INFINITY };
    match mode {
        PenaltyMode::Fixed => rho,
        PenaltyMode::Linear => {
            if ratio >= params.alpha {
                rho * params.tau_inc
            } else if ratio <= 1.0 / params.alpha {
                rho / params.tau_dec
            } else {
                rho
            }
        }
        PenaltyMode::Spectral => {
            if ratio >= params.alpha {
                rho * kappa0.powf(params.tau)
            } else if ratio <= 1.0 / params.alpha {
                rho * kappa0.powf(-params.tau)
            } else {
                rho
            }
        }
    }
}

/// Quadratic objective `½ λᵀ D λ + λᵀ v` of the (effective) problem.
fn quadratic_objective(d: &DMatrix<f64>, v: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
    0.5 * lambda.dot(&(d * lambda)) + lambda.dot(v)
}

/// Convergence certificate: the mode-matched natural-map residual at λ. The
/// per-block complementarity products leave O(ε/‖λ‖) slack when reactions
/// are small (impulse scales), so residual-feasible iterates are only
/// declared converged once this is within 10× the tolerance.
fn natural_map_ok(
    lambda: &DVector<f64>,
    v_plus: &DVector<f64>,
    cone: &ConeSpec,
    mode: ResidualMode,
    tol_max: f64,
) -> bool {
    let f = match mode {
        ResidualMode::Ncp => v_plus + de_saxce_correction(v_plus, cone),
        ResidualMode::Ccp => v_plus.clone(),
    };
    let nat = lambda - project_cone(&(lambda - f), cone);
    nat.amax() <= 10.0 * tol_max
}

fn max_tol(tol: &Tolerances) -> f64 {
    tol.primal.max(tol.dual).max(tol.complementarity)
}

fn is_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn diverged_report(n: usize, start: Instant) -> SolverReport {
    let solve_time = start.elapsed().as_secs_f64();
    SolverReport {
        lambda: DVector::zeros(n),
        v_plus: DVector::zeros(n),
        status: SolveStatus::Diverged,
        iterations: 0,
        residual_history: vec![],
        final_residuals: IterationRecord { r_primal: 0.0, r_dual: 0.0, r_compl: 0.0 },
        solve_time,
        mean_iter_time: 0.0,
    }
}

/// Solves the dual problem with the configured algorithm.
pub fn solve(
    problem: &DualProblem,
    config: &SolverConfig,
    warmstart: Option<&Warmstart>,
) -> SolverReport {
    if problem.n() == 0 {
        return SolverReport::empty();
    }
    match config.algorithm {
        Algorithm::Splitting => solve_splitting(problem, config, warmstart),
        Algorithm::Admm => solve_admm(problem, config, warmstart),
    }
}

enum BlockSolver {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    /// Pseudo-inverse fallback for singular joint blocks.
    Pinv(DMatrix<f64>),
}

impl BlockSolver {
    fn new(block: DMatrix<f64>) -> Self {
        match block.clone().cholesky() {
            Some(c) => BlockSolver::Chol(c),
            None => {
                let svd = block.svd(true, true);
                BlockSolver::Pinv(svd.pseudo_inverse(1e-12).expect("svd computed"))
            }
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            BlockSolver::Chol(c) => c.solve(rhs),
            BlockSolver::Pinv(p) => p * rhs,
        }
    }
}

/// Projective splitting: Gauss-Seidel sweeps over joint blocks, limit rows
/// and contact blocks (in that order), each blended by the SOR factor, with
/// the local contact solver chosen by the config.
pub fn solve_splitting(
    problem: &DualProblem,
    config: &SolverConfig,
    warmstart: Option<&Warmstart>,
) -> SolverReport {
    let start = Instant::now();
    let n = problem.n();
    let d = problem.effective_delassus();
    let v_f = problem.effective_free_velocity();
    if d.iter().any(|x| !x.is_finite()) || !is_finite(&v_f) {
        return diverged_report(n, start);
    }
    let cone = &problem.cone;
    let mode = config.residual_mode();

    let joint_blocks: Vec<(usize, usize)> = problem.layout.joint_blocks.clone();
    let joint_solvers: Vec<BlockSolver> = joint_blocks
        .iter()
        .map(|&(off, m)| BlockSolver::new(d.view((off, off), (m, m)).into_owned()))
        .collect();

    let mut lambda = match warmstart {
        Some(w) if w.lambda.len() == n => w.lambda.clone(),
        _ => DVector::zeros(n),
    };
    let mut prev_lambda = lambda.clone();
    let mut omega = config.sor.omega0;
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut iterations = config.n_max;
    let mut f_prev = f64::INFINITY;
    let mut final_res = IterationRecord { r_primal: 0.0, r_dual: 0.0, r_compl: 0.0 };

    // coupling velocity for a block: v̄ = v_f + D λ − D_bb λ_b
    let coupled = |lambda: &DVector<f64>, off: usize, m: usize| -> DVector<f64> {
        let mut v = DVector::zeros(m);
        for r in 0..m {
            let mut acc = v_f[off + r];
            for c in 0..n {
                acc += d[(off + r, c)] * lambda[c];
            }
            for c in 0..m {
                acc -= d[(off + r, off + c)] * lambda[off + c];
            }
            v[r] = acc;
        }
        v
    };

    for iter in 1..=config.n_max {
        for (j, &(off, m)) in joint_blocks.iter().enumerate() {
            let v_bar = coupled(&lambda, off, m);
            let sol = joint_solvers[j].solve(&(-&v_bar));
            for r in 0..m {
                lambda[off + r] = (1.0 - omega) * lambda[off + r] + omega * sol[r];
            }
        }
        for l in 0..cone.limit_rows {
            let i = cone.limit_offset(l);
            let v_bar = coupled(&lambda, i, 1)[0];
            let unconstrained = -v_bar / d[(i, i)];
            let projected = project_orthant(unconstrained);
            lambda[i] = (1.0 - omega) * lambda[i] + omega * projected;
        }
        for (k, &mu) in cone.contact_mus.iter().enumerate() {
            let off = cone.contact_offset(k);
            let v_bar = coupled(&lambda, off, 3);
            let d_block: Matrix3<f64> = d.fixed_view::<3, 3>(off, off).into();
            let v_local = Vector3::new(v_bar[0], v_bar[1], v_bar[2]);
            let lambda_k = Vector3::new(lambda[off], lambda[off + 1], lambda[off + 2]);
            let mut local = LocalContactProblem::new(d_block, v_local, mu);
            if config.de_saxce {
                // estimate from the current block only
                let v_plus_k = d_block * lambda_k + v_local;
                let vt = (v_plus_k.x * v_plus_k.x + v_plus_k.y * v_plus_k.y).sqrt();
                local = local.with_de_saxce(Vector3::new(0.0, 0.0, mu * vt));
            }
            let updated = match config.local_solver {
                LocalSolverKind::Ccp => local_ccp(&local, &lambda_k),
                LocalSolverKind::Ncp => local_ncp(&local, &lambda_k),
                LocalSolverKind::NbQuartic => local_nb_quartic(&local).lambda,
                LocalSolverKind::NbBisection => {
                    local_nb_bisection(&local, &config.bisection).lambda
                }
            };
            for r in 0..3 {
                lambda[off + r] = (1.0 - omega) * lambda[off + r] + omega * updated[r];
            }
        }

        if !is_finite(&lambda) {
            lambda = prev_lambda;
            status = SolveStatus::Diverged;
            iterations = iter;
            break;
        }

        let v_plus = &d * &lambda + &v_f;
        let res = compute_residuals(&lambda, &v_plus, cone, mode);
        final_res = res;
        if config.keep_history {
            history.push(res);
        }

        let residuals_pass = res.r_primal <= config.tol.primal
            && res.r_dual <= config.tol.dual
            && res.r_compl <= config.tol.complementarity
            && natural_map_ok(&lambda, &v_plus, cone, mode, max_tol(&config.tol));
        if residuals_pass {
            status = SolveStatus::Converged;
            iterations = iter;
            break;
        }
        if config.termination == Termination::EarlyStop {
            let f = quadratic_objective(&d, &v_f, &lambda);
            let plateaued = f_prev.is_finite()
                && early_stop_metric(f, f_prev, problem.total_diag_inertia)
                    <= config.early_stop_tol;
            f_prev = f;
            // a plateaued, cone-feasible iterate stops the solver but is not
            // certified; the report says MaxIter
            if plateaued && res.r_primal <= config.tol.primal {
                status = SolveStatus::MaxIter;
                iterations = iter;
                break;
            }
        }
        prev_lambda.copy_from(&lambda);
        omega = config.sor.omega_min.max(config.sor.gamma * omega);
    }

    let v_plus = &d * &lambda + &v_f;
    let solve_time = start.elapsed().as_secs_f64();
    SolverReport {
        lambda,
        v_plus,
        status,
        iterations,
        residual_history: history,
        final_residuals: final_res,
        solve_time,
        mean_iter_time: solve_time / iterations.max(1) as f64,
    }
}

/// Proximal ADMM: the x-step solves the `(D + (η+ρ)I)`-regularized system
/// through a Cholesky factorization refreshed whenever ρ changes, the y-step
/// projects onto the cone, and the z-step accumulates the scaled consensus
/// error. The NCP variant re-estimates the De Saxcé correction from the dual
/// iterate each iteration.
pub fn solve_admm(
    problem: &DualProblem,
    config: &SolverConfig,
    warmstart: Option<&Warmstart>,
) -> SolverReport {
    let start = Instant::now();
    let n = problem.n();
    let d = problem.effective_delassus();
    let v_f = problem.effective_free_velocity();
    if d.iter().any(|x| !x.is_finite()) || !is_finite(&v_f) {
        return diverged_report(n, start);
    }
    let cone = &problem.cone;
    let mode = config.residual_mode();
    let params = &config.admm;
    let eta = match params.variant {
        AdmmVariant::Ncp => params.eta,
        AdmmVariant::Ccp => 0.0,
    };

    // penalty initialization; the spectral mode uses the power-iteration
    // estimate of the Lipschitz constant and m = η
    let (mut rho, kappa0) = match params.penalty_mode {
        PenaltyMode::Spectral => {
            let l = spectral_radius_estimate(&d, 50).max(1e-12);
            let m = eta.max(1e-12);
            let kappa0 = l / m;
            ((l * m).sqrt() * kappa0.powf(params.tau0), kappa0)
        }
        _ => (params.rho0, 1.0),
    };

    let factorize = |rho: f64| -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        if !rho.is_finite() {
            return None;
        }
        let mut m = d.clone();
        for i in 0..n {
            m[(i, i)] += eta + rho;
        }
        m.cholesky()
    };
    let Some(mut chol) = factorize(rho) else {
        return diverged_report(n, start);
    };

    let (mut x, mut y, mut z) = match warmstart {
        Some(w) if w.lambda.len() == n => {
            let z0 = match params.variant {
                // a solution warmstart carries v⁺; the fixed point of the
                // dual variable is the augmented velocity
                AdmmVariant::Ncp => &w.v_plus + de_saxce_correction(&w.v_plus, cone),
                AdmmVariant::Ccp => w.v_plus.clone(),
            };
            (w.lambda.clone(), w.lambda.clone(), z0)
        }
        _ => (DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)),
    };

    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut iterations = config.n_max;
    let mut final_res = IterationRecord { r_primal: 0.0, r_dual: 0.0, r_compl: 0.0 };
    let mut lambda = y.clone();

    for iter in 1..=config.n_max {
        let x_prev = x.clone();
        let y_prev = y.clone();

        let s = match params.variant {
            AdmmVariant::Ncp => de_saxce_correction(&z, cone),
            AdmmVariant::Ccp => DVector::zeros(n),
        };
        let offset = &v_f + &s - &x * eta - &y * rho - &z;
        x = chol.solve(&(-&offset));
        if params.over_relaxation != 1.0 {
            x = &y_prev * (1.0 - params.over_relaxation) + &x * params.over_relaxation;
        }
        y = project_cone(&(&x - &z / rho), cone);
        z -= (&x - &y) * rho;

        if !(is_finite(&x) && is_finite(&y) && is_finite(&z)) {
            status = SolveStatus::Diverged;
            iterations = iter;
            break;
        }
        lambda = y.clone();

        let r_primal = (&x - &y).amax();
        let r_dual = ((&x - &x_prev) * eta + (&y - &y_prev) * rho).amax();
        let mut r_compl = 0.0f64;
        for l in 0..cone.limit_rows {
            let i = cone.limit_offset(l);
            r_compl = r_compl.max((x[i] * z[i]).abs());
        }
        for k in 0..cone.n_contacts() {
            let off = cone.contact_offset(k);
            let dot = x[off] * z[off] + x[off + 1] * z[off + 1] + x[off + 2] * z[off + 2];
            r_compl = r_compl.max(dot.abs());
        }
        let res = IterationRecord { r_primal, r_dual, r_compl };
        final_res = res;
        if config.keep_history {
            history.push(res);
        }

        if r_primal <= config.tol.primal
            && r_dual <= config.tol.dual
            && r_compl <= config.tol.complementarity
        {
            let v_plus = &d * &lambda + &v_f;
            if natural_map_ok(&lambda, &v_plus, cone, mode, max_tol(&config.tol)) {
                status = SolveStatus::Converged;
                iterations = iter;
                break;
            }
        }

        let new_rho = penalty_update(rho, r_primal, r_dual, params.penalty_mode, params, kappa0);
        if new_rho != rho {
            rho = new_rho;
            match factorize(rho) {
                Some(c) => chol = c,
                None => {
                    status = SolveStatus::Diverged;
                    iterations = iter;
                    break;
                }
            }
        }
    }

    // report the velocity consistent with the problem as solved
    let v_plus = &d * &lambda + &v_f;
    let solve_time = start.elapsed().as_secs_f64();
    SolverReport {
        lambda,
        v_plus,
        status,
        iterations,
        residual_history: history,
        final_residuals: final_res,
        solve_time,
        mean_iter_time: solve_time / iterations.max(1) as f64,
    }
}
