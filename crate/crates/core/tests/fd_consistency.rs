//! Cross-module consistency checks: the analytic constraint Jacobian against
//! finite differences of the configuration residuals, the equations of
//! motion after back-substitution, and the compliant (softened) system.

use approx::assert_relative_eq;
use dualfd::dual::{
    build_dual_problem, softening_rows, ConeSpec, DualOptions, DualProblem, SofteningParams,
};
use dualfd::dynamics::{
    assemble_system, integrate_semi_implicit, BodyRef, BodySpec, BodyState, ContactPoint,
    ConstraintLayout, JointKind, JointSpec, SystemModel,
};
use dualfd::solvers::{solve, SolveStatus, SolverConfig, SolverId};
use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three-body free-floating chain: spherical + revolute joints, consistent at
/// the rest configuration.
fn chain_model() -> (SystemModel, Vec<BodyState>) {
    let bodies = vec![
        BodySpec::cuboid(1.0, Vector3::new(0.05, 0.05, 0.25)),
        BodySpec::sphere(0.5, 0.05),
        BodySpec::cuboid(2.0, Vector3::new(0.05, 0.05, 0.25)),
    ];
    let joints = vec![
        JointSpec::new(
            JointKind::Spherical,
            BodyRef::Body(0),
            1,
            Vector3::new(0.0, 0.0, 0.30),
            Vector3::zeros(),
            Matrix3::identity(),
        ),
        JointSpec::new(
            JointKind::Revolute,
            BodyRef::Body(1),
            2,
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, -0.30),
            Matrix3::identity(),
        ),
    ];
    let states = vec![
        BodyState::at_rest(Vector3::new(0.0, 0.0, 0.25)),
        BodyState::at_rest(Vector3::new(0.0, 0.0, 0.55)),
        BodyState::at_rest(Vector3::new(0.0, 0.0, 0.85)),
    ];
    (SystemModel::new(bodies, joints, Vector3::new(0.0, 0.0, -9.81)), states)
}

/// Rigidly rotates and translates every body; joints stay consistent.
fn rigidly_moved(states: &[BodyState], rot: UnitQuaternion<f64>, shift: Vector3<f64>) -> Vec<BodyState> {
    states
        .iter()
        .map(|s| BodyState {
            position: rot * s.position + shift,
            orientation: rot * s.orientation,
            linear_velocity: s.linear_velocity,
            angular_velocity: s.angular_velocity,
        })
        .collect()
}

fn stacked_joint_residuals(model: &SystemModel, states: &[BodyState]) -> DVector<f64> {
    let step = assemble_system(model, states, 1e-3, &[], &[], &[]).unwrap();
    step.joint_residuals
}

#[test]
fn jacobian_matches_finite_differences() {
    let (model, rest) = chain_model();
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for trial in 0..20 {
        let rot = UnitQuaternion::from_scaled_axis(Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        let shift = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..1.0),
        );
        let mut states = rigidly_moved(&rest, rot, shift);
        let u = DVector::from_fn(18, |_, _| rng.random_range(-1.0..1.0));
        for (i, s) in states.iter_mut().enumerate() {
            s.linear_velocity = Vector3::new(u[6 * i], u[6 * i + 1], u[6 * i + 2]);
            s.angular_velocity = Vector3::new(u[6 * i + 3], u[6 * i + 4], u[6 * i + 5]);
        }

        let step = assemble_system(&model, &states, 1e-3, &[], &[], &[]).unwrap();
        let analytic = &step.jacobian * &u;

        // central differences of the residuals along the state flow of u
        let h = 1e-6;
        let mut forward = states.clone();
        integrate_semi_implicit(&model, &mut forward, &u, h).unwrap();
        let mut backward = states.clone();
        integrate_semi_implicit(&model, &mut backward, &(-&u), h).unwrap();
        let fd = (stacked_joint_residuals(&model, &forward)
            - stacked_joint_residuals(&model, &backward))
            / (2.0 * h);

        let scale = 1.0 + analytic.amax();
        for r in 0..fd.len() {
            assert!(
                (analytic[r] - fd[r]).abs() <= 1e-6 * scale,
                "trial {trial} row {r}: analytic {} vs fd {}",
                analytic[r],
                fd[r]
            );
        }
    }
}

#[test]
fn back_substitution_satisfies_equations_of_motion() {
    // M(u⁺ − u⁻) = dt·h + Jᵀλ for a contact-rich step
    let model = SystemModel::new(
        vec![BodySpec::cuboid(1.0, Vector3::new(0.1, 0.1, 0.1))],
        vec![],
        Vector3::new(0.0, 0.0, -9.81),
    );
    let states = vec![BodyState::at_rest(Vector3::new(0.0, 0.0, 0.1))];
    let contacts: Vec<ContactPoint> = [(0.1, 0.1), (0.1, -0.1), (-0.1, 0.1), (-0.1, -0.1)]
        .iter()
        .map(|&(x, y)| ContactPoint {
            body_a: BodyRef::World,
            body_b: 0,
            position: Vector3::new(x, y, 0.0),
            normal: Vector3::z(),
            gap: 0.0,
            friction: 0.7,
            restitution: 0.0,
        })
        .collect();
    let step = assemble_system(&model, &states, 1e-3, &[], &[], &contacts).unwrap();
    let problem = build_dual_problem(&step, &DualOptions::hard()).unwrap();
    let report = solve(&problem, &SolverConfig::for_id(SolverId::AdmmNcpFp), None);
    assert_eq!(report.status, SolveStatus::Converged);

    let u_plus = step.back_substitute(&report.lambda);
    let residual = &step.mass_matrix * (&u_plus - &step.u_minus)
        - &step.bias_force * step.dt
        - step.jacobian.transpose() * &report.lambda;
    assert!(residual.amax() <= 1e-8 * (1.0 + step.bias_force.amax()));
}

#[test]
fn unconstrained_body_conserves_kinetic_energy() {
    let model = SystemModel::new(
        vec![BodySpec::cuboid(2.0, Vector3::new(0.1, 0.2, 0.3))],
        vec![],
        Vector3::zeros(),
    );
    let mut states = vec![BodyState::at_rest(Vector3::zeros())];
    states[0].linear_velocity = Vector3::new(1.0, -2.0, 0.5);
    states[0].angular_velocity = Vector3::new(0.3, 0.1, -0.2);
    let u = model.stacked_velocity(&states);

    let energy = |states: &[BodyState]| -> f64 {
        let step = assemble_system(&model, states, 1e-3, &[], &[], &[]).unwrap();
        let u = model.stacked_velocity(states);
        0.5 * u.dot(&(&step.mass_matrix * &u))
    };
    let e0 = energy(&states);
    for _ in 0..100 {
        // the integrator itself leaves velocities untouched
        integrate_semi_implicit(&model, &mut states, &u, 1e-3).unwrap();
    }
    let e1 = energy(&states);
    assert!((e1 - e0).abs() <= 1e-10 * e0.max(1.0), "energy drift {}", (e1 - e0).abs());
}

fn boxes_fixed_flight() -> (SystemModel, Vec<BodyState>) {
    // two boxes rigidly joined, airborne: a 6-row bilateral problem
    let bodies = vec![
        BodySpec::cuboid(0.1, Vector3::new(0.1, 0.1, 0.1)),
        BodySpec::cuboid(1000.0, Vector3::new(0.1, 0.1, 0.1)),
    ];
    let joints = vec![JointSpec::new(
        JointKind::Fixed,
        BodyRef::Body(0),
        1,
        Vector3::new(0.0, 0.0, 0.1),
        Vector3::new(0.0, 0.0, -0.1),
        Matrix3::identity(),
    )];
    let states = vec![
        BodyState::at_rest(Vector3::new(0.0, 0.0, 1.0)),
        BodyState::at_rest(Vector3::new(0.0, 0.0, 1.2)),
    ];
    (SystemModel::new(bodies, joints, Vector3::new(0.0, 0.0, -9.81)), states)
}

#[test]
fn softened_bilateral_solution_satisfies_block_system() {
    let (model, states) = boxes_fixed_flight();
    let step = assemble_system(&model, &states, 1e-3, &[], &[], &[]).unwrap();
    let options = DualOptions {
        stabilization: None,
        softening: Some(SofteningParams::default()),
        restitution: true,
    };
    let problem = build_dual_problem(&step, &options).unwrap();
    assert!(problem.is_softened());
    let report = solve(&problem, &SolverConfig::for_id(SolverId::AdmmNcpFp), None);
    assert_eq!(report.status, SolveStatus::Converged);

    // [[M, Jᵀ], [J, −R]] [u⁺; −λ] = [dt·h + M u⁻; −v_r]
    let u_plus = step.back_substitute(&report.lambda);
    let top = &step.mass_matrix * &u_plus - step.jacobian.transpose() * &report.lambda
        - (&step.bias_force * step.dt + &step.mass_matrix * &step.u_minus);
    let r = problem.regularizer.as_ref().unwrap();
    let v_r = problem.regulation_bias.as_ref().unwrap();
    let bottom = &step.jacobian * &u_plus
        + DVector::from_fn(r.len(), |i, _| r[i] * report.lambda[i])
        + v_r;
    assert!(top.amax() <= 1e-8 * (1.0 + step.bias_force.amax()), "top {}", top.amax());
    assert!(bottom.amax() <= 1e-8, "bottom {}", bottom.amax());
}

#[test]
fn softened_diagonal_dynamics_match_elementwise_formula() {
    // decoupled synthetic problem: the solved constraint velocity follows
    // v⁺ = (1−d)·v_f − d·v_r element-wise (dt = 1 makes v_r = b v⁻ + k r)
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 6;
    let d_diag = DVector::from_fn(n, |_, _| rng.random_range(0.5..3.0));
    let v_f = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let v_minus = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let residuals = DVector::from_fn(n, |_, _| rng.random_range(-0.02..0.02));
    let params = SofteningParams::default();
    let dt = 1.0;
    let (reg, v_r) = softening_rows(&residuals, &d_diag, &v_minus, &params, dt).unwrap();

    let mut layout = ConstraintLayout::default();
    layout.joint_blocks.push((0, n));
    layout.n_rows = n;
    let problem = DualProblem {
        delassus: DMatrix::from_diagonal(&d_diag),
        free_velocity: v_f.clone(),
        cone: ConeSpec { joint_rows: n, limit_rows: 0, contact_mus: vec![] },
        regularizer: Some(reg),
        regulation_bias: Some(v_r.clone()),
        dt,
        total_diag_inertia: 1.0,
        layout,
    };

    for id in [SolverId::RaisimDs, SolverId::AdmmNcpFp] {
        let report = solve(&problem, &SolverConfig::for_id(id).with_n_max(200_000), None);
        assert_eq!(report.status, SolveStatus::Converged, "{id}");
        // physical constraint velocity D λ + v_f
        let v_plus_physical = DVector::from_fn(n, |i, _| d_diag[i] * report.lambda[i] + v_f[i]);
        for j in 0..n {
            let (d_j, _, b_j, k_j) = params.coefficients(residuals[j]);
            let expected =
                (1.0 - d_j) * v_f[j] - d_j * dt * (b_j * v_minus[j] + k_j * residuals[j]);
            assert_relative_eq!(v_plus_physical[j], expected, epsilon = 1e-10);
        }
    }
}

#[test]
fn restitution_fold_in_equals_explicit_impact_augmentation() {
    // solving with ε·v⁻ folded into v_f equals solving the explicitly
    // impact-augmented complementarity on single-contact problems
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    for _ in 0..50 {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let d3 = a * a.transpose() + Matrix3::identity() * 0.2;
        let d = DMatrix::from_fn(3, 3, |i, j| d3[(i, j)]);
        let mu = rng.random_range(0.1..1.2);
        let eps = rng.random_range(0.0..1.0);
        let v_pre_n = -rng.random_range(0.1..2.0);
        let v_raw = DVector::from_vec(vec![
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            v_pre_n,
        ]);

        let cone = ConeSpec { joint_rows: 0, limit_rows: 0, contact_mus: vec![mu] };
        let mut layout = ConstraintLayout::default();
        layout.contact_offsets.push(0);
        layout.contact_mus.push(mu);
        layout.contact_restitutions.push(eps);
        layout.n_rows = 3;
        let mut folded = v_raw.clone();
        folded[2] += eps * v_pre_n;
        let problem = DualProblem {
            delassus: d.clone(),
            free_velocity: folded,
            cone: cone.clone(),
            regularizer: None,
            regulation_bias: None,
            dt: 1e-3,
            total_diag_inertia: 1.0,
            layout: layout.clone(),
        };
        let config = SolverConfig::for_id(SolverId::AdmmNcpFp).with_eps_abs(1e-12);
        let report = solve(&problem, &config, None);
        assert!(report.converged());

        // the solver enforces complementarity on the folded velocity, so the
        // physical post-event normal velocity is the folded one minus the
        // restitution term: it must not fall below the bounce target −ε v⁻
        let v_plus_physical = report.v_plus[2] - eps * v_pre_n;
        assert!(
            v_plus_physical >= -eps * v_pre_n - 1e-8,
            "v⁺_n {} vs restitution target {}",
            v_plus_physical,
            -eps * v_pre_n
        );
        // and when the contact pushes, the bound is tight
        if report.lambda[2] > 1e-8 {
            assert_relative_eq!(v_plus_physical, -eps * v_pre_n, epsilon = 1e-6);
        }
    }
}
