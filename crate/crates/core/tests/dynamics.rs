use humanoid_core::model::RobotModel;
use nalgebra::{DMatrix, UnitQuaternion, Vector3};
use proptest::prelude::*;
use std::sync::OnceLock;

fn model() -> &'static RobotModel {
    static MODEL: OnceLock<RobotModel> = OnceLock::new();
    MODEL.get_or_init(RobotModel::default_model)
}

fn g() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.81)
}

/// Joint positions inside the limits of the default model.
fn joint_positions() -> impl Strategy<Value = Vec<f64>> {
    let ranges: Vec<_> = model().joints.iter().map(|j| j.limits.lower..=j.limits.upper).collect();
    ranges
}

fn vec_of(n: usize, lim: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-lim..lim, n)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

/// Columns are τ(e_i) − τ(0) at fixed (q, q̇).
fn mass_matrix(q: &[f64], qd: &[f64], gravity: Vector3<f64>) -> DMatrix<f64> {
    let m = model();
    let n = m.dof();
    let zero = vec![0.0; n];
    let bias = m.inverse_dynamics(q, qd, &zero, gravity).unwrap();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut e = zero.clone();
        e[i] = 1.0;
        let tau = m.inverse_dynamics(q, qd, &e, gravity).unwrap();
        for r in 0..n {
            out[(r, i)] = tau[r] - bias[r];
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qddot_enters_linearly(q in joint_positions(), qd in vec_of(20, 3.0), a in vec_of(20, 10.0), b in vec_of(20, 10.0), s in -3.0f64..3.0) {
        let m = model();
        let tau = |acc: &[f64]| m.inverse_dynamics(&q, &qd, acc, g()).unwrap();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let scaled: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
        let t_a = tau(&a);
        let t_sum = tau(&sum);
        let t_scaled = tau(&scaled);
        let t_zero = tau(&vec![0.0; 20]);
        let t_b = tau(&b);
        // tau(a + b) - tau(a) = tau(b) - tau(0) = M b
        let lhs: Vec<f64> = t_sum.iter().zip(&t_a).map(|(x, y)| x - y).collect();
        let rhs: Vec<f64> = t_b.iter().zip(&t_zero).map(|(x, y)| x - y).collect();
        prop_assert!(close(&lhs, &rhs, 1e-9));
        let lhs: Vec<f64> = t_scaled.iter().zip(&t_a).map(|(x, y)| x - y).collect();
        let rhs: Vec<f64> = rhs.iter().map(|x| s * x).collect();
        prop_assert!(close(&lhs, &rhs, 1e-9));
    }

    #[test]
    fn implied_mass_matrix_is_symmetric_positive_definite(q in joint_positions(), qd in vec_of(20, 3.0)) {
        let mm = mass_matrix(&q, &qd, g());
        let asym = (&mm - mm.transpose()).abs().max();
        prop_assert!(asym < 1e-10, "asymmetry {asym}");
        let eig = mm.symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() > 0.0, "min eigenvalue {}", eig.min());
    }

    #[test]
    fn gravity_torque_scales_with_g(q in joint_positions(), k in 0.0f64..5.0) {
        let m = model();
        let base = m.gravity_torques(&q, g()).unwrap();
        let scaled = m.gravity_torques(&q, g() * k).unwrap();
        let expect: Vec<f64> = base.iter().map(|t| k * t).collect();
        prop_assert!(close(&scaled, &expect, 1e-10));
    }

    #[test]
    fn fk_composes_parent_origin_and_joint_rotation(q in joint_positions()) {
        let m = model();
        let poses = m.forward_kinematics(&q).unwrap();
        for (j, joint) in m.joints.iter().enumerate() {
            let expect = poses[joint.parent] * joint.origin * UnitQuaternion::from_axis_angle(&joint.axis, q[j]);
            let got = poses[joint.child];
            prop_assert!((got.translation.vector - expect.translation.vector).norm() < 1e-12);
            prop_assert!(got.rotation.angle_to(&expect.rotation) < 1e-9);
        }
    }

    #[test]
    fn no_motion_and_no_gravity_needs_no_torque(q in joint_positions()) {
        let m = model();
        let z = vec![0.0; m.dof()];
        let tau = m.inverse_dynamics(&q, &z, &z, Vector3::zeros()).unwrap();
        prop_assert!(tau.iter().all(|t| t.abs() < 1e-12));
    }
}

/// Kinetic energy ½ q̇ᵀ M q̇ must change at the rate q̇ᵀ τ when gravity is off.
#[test]
fn power_balance_along_a_trajectory() {
    let m = model();
    let n = m.dof();
    let q0: Vec<f64> = m
        .joints
        .iter()
        .map(|j| 0.5 * (j.limits.lower + j.limits.upper))
        .collect();
    let v: Vec<f64> = (0..n).map(|i| 0.3 * ((i as f64) * 0.7).sin()).collect();
    let zero_g = Vector3::zeros();
    let energy = |t: f64| {
        let q: Vec<f64> = q0.iter().zip(&v).map(|(a, b)| a + b * t).collect();
        let mm = mass_matrix(&q, &vec![0.0; n], zero_g);
        let qd = nalgebra::DVector::from_vec(v.clone());
        0.5 * (qd.transpose() * mm * &qd)[(0, 0)]
    };
    let h = 1e-5;
    let de = (energy(h) - energy(-h)) / (2.0 * h);
    // constant q̇, so τ holds only the velocity-product terms
    let tau = m.inverse_dynamics(&q0, &v, &vec![0.0; n], zero_g).unwrap();
    let power: f64 = tau.iter().zip(&v).map(|(t, w)| t * w).sum();
    assert!((de - power).abs() < 1e-6, "dE/dt {de} vs q̇·τ {power}");
}

#[test]
fn wrong_lengths_are_rejected() {
    let m = model();
    assert!(m.forward_kinematics(&[0.0; 3]).is_err());
    assert!(m.inverse_dynamics(&[0.0; 20], &[0.0; 19], &[0.0; 20], g()).is_err());
}
