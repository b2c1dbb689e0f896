//! Property suites over the geometric and algebraic invariants.

use dualfd::collision::{cull_contacts, CollisionConfig};
use dualfd::dual::{de_saxce_correction, delassus_matrix, ConeSpec};
use dualfd::dynamics::{
    assemble_system, contact_frame_basis, integrate_semi_implicit, BodyRef, BodySpec, BodyState,
    ContactPoint, SystemModel,
};
use dualfd::projectors::{project_coulomb, project_dual_coulomb, project_lorentz};
use nalgebra::{DVector, Matrix3, Vector3};
use proptest::prelude::*;

fn finite_vec3() -> impl Strategy<Value = Vector3<f64>> {
    (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn unit_vec3() -> impl Strategy<Value = Vector3<f64>> {
    finite_vec3()
        .prop_filter("nonzero", |v| v.norm() > 1e-3)
        .prop_map(|v| v.normalize())
}

proptest! {
    #[test]
    fn quaternion_norm_preserved_by_integration(
        v in finite_vec3(),
        w in finite_vec3(),
        dt in 1e-5..0.1f64,
        steps in 1usize..50,
    ) {
        let model = SystemModel::new(
            vec![BodySpec::sphere(1.0, 0.1)],
            vec![],
            Vector3::zeros(),
        );
        let mut states = vec![BodyState::at_rest(Vector3::zeros())];
        let mut u = DVector::zeros(6);
        for i in 0..3 {
            u[i] = v[i];
            u[3 + i] = w[i];
        }
        for _ in 0..steps {
            integrate_semi_implicit(&model, &mut states, &u, dt).unwrap();
            let norm = states[0].orientation.as_vector().norm();
            prop_assert!((norm - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn contact_basis_is_right_handed_orthonormal(n in unit_vec3()) {
        let r = contact_frame_basis(&n).unwrap();
        let gram = r.transpose() * r;
        prop_assert!((gram - Matrix3::identity()).norm() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        prop_assert!((r.column(2) - n).norm() < 1e-12);
        // determinism
        let r2 = contact_frame_basis(&n).unwrap();
        prop_assert_eq!(r, r2);
    }

    #[test]
    fn coulomb_projection_membership_and_idempotence(
        x in finite_vec3(),
        mu in 0.0..2.0f64,
    ) {
        let y = project_coulomb(&x, mu);
        let t = (y.x * y.x + y.y * y.y).sqrt();
        prop_assert!(y.z >= 0.0);
        prop_assert!(t <= mu * y.z + 1e-12);
        prop_assert_eq!(y, project_coulomb(&y, mu));
        // dual cone and Lorentz variants share the invariants
        let yd = project_dual_coulomb(&x, mu);
        prop_assert!(yd.z >= -1e-15);
        prop_assert_eq!(yd, project_dual_coulomb(&yd, mu));
        let yl = project_lorentz(&x);
        prop_assert_eq!(yl, project_lorentz(&yl));
    }

    #[test]
    fn de_saxce_invariance_exact(
        v in finite_vec3(),
        offset in -100.0..100.0f64,
        mu in 0.0..2.0f64,
    ) {
        let cone = ConeSpec { joint_rows: 0, limit_rows: 0, contact_mus: vec![mu] };
        let a = DVector::from_vec(vec![v.x, v.y, v.z]);
        let mut b = a.clone();
        b[2] += offset;
        let ga = de_saxce_correction(&a, &cone);
        let gb = de_saxce_correction(&b, &cone);
        prop_assert_eq!(ga, gb); // exact, zero tolerance
    }

    #[test]
    fn delassus_symmetric_psd_for_random_contact_sets(
        mass in 0.1..50.0f64,
        seed_points in proptest::collection::vec((-0.2..0.2f64, -0.2..0.2f64), 1..5),
    ) {
        let model = SystemModel::new(
            vec![BodySpec::cuboid(mass, Vector3::new(0.2, 0.2, 0.2))],
            vec![],
            Vector3::new(0.0, 0.0, -9.81),
        );
        let states = vec![BodyState::at_rest(Vector3::new(0.0, 0.0, 0.2))];
        let contacts: Vec<ContactPoint> = seed_points
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
        let d = delassus_matrix(&step).unwrap();
        prop_assert!((&d - d.transpose()).amax() <= 1e-10);
        let min_eig = d.symmetric_eigenvalues().min();
        prop_assert!(min_eig >= -1e-8 * d.amax().max(1.0));
    }

    #[test]
    fn culling_is_deterministic_and_respects_distance(
        points in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 0..20),
        min_sep in 0.0..0.5f64,
    ) {
        let cfg = CollisionConfig { min_separation: min_sep, ..Default::default() };
        let contacts: Vec<ContactPoint> = points
            .iter()
            .map(|&(x, y)| ContactPoint {
                body_a: BodyRef::Body(0),
                body_b: 1,
                position: Vector3::new(x, y, 0.0),
                normal: Vector3::z(),
                gap: 0.0,
                friction: 0.7,
                restitution: 0.0,
            })
            .collect();
        let kept = cull_contacts(contacts.clone(), &cfg);
        let again = cull_contacts(contacts, &cfg);
        prop_assert_eq!(kept.len(), again.len());
        for (a, b) in kept.iter().zip(&again) {
            prop_assert_eq!(a.position, b.position);
        }
        // pairwise separation of survivors
        for i in 0..kept.len() {
            for j in 0..i {
                prop_assert!((kept[i].position - kept[j].position).norm() >= min_sep);
            }
        }
    }
}
