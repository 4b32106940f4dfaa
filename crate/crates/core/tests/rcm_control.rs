mod common;

use common::*;
use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;
use rand::Rng;
use rcmservo_core::kinematics::{translational_jacobian, ChainEvaluation};
use rcmservo_core::rcm_control::{
    composite_jacobian, damped_pseudoinverse, lambda_projection, pid_step, rcm_jacobian, rcm_point, PidGains, PidState,
    RcmError, RcmState,
};

fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z)
}

#[test]
fn lambda_identities() {
    let a = v(0.1, -0.2, 0.3);
    let b = v(0.4, 0.5, -0.1);
    assert!(lambda_projection(&a, &b, &a).unwrap().abs() <= 1e-12);
    assert!((lambda_projection(&a, &b, &b).unwrap() - 1.0).abs() <= 1e-12);
    assert!((rcm_point(&a, &b, 0.0) - a).norm() <= 1e-12);
    assert!((rcm_point(&a, &b, 1.0) - b).norm() <= 1e-12);
    // offset perpendicular to the shaft projects onto the foot point
    let x_i = v(0.0, 0.0, 0.0);
    let x_ip1 = v(0.0, 0.0, 2.0);
    let lambda = lambda_projection(&x_i, &x_ip1, &v(0.3, -0.4, 0.5)).unwrap();
    assert!((lambda - 0.25).abs() <= 1e-12);
    let s = RcmState::from_geometry(&x_i, &x_ip1, &v(0.3, -0.4, 0.5)).unwrap();
    assert!((s.e_rcm - v(0.3, -0.4, 0.0)).norm() <= 1e-12);
    assert!(matches!(lambda_projection(&a, &a, &b), Err(RcmError::DegenerateGeometry)));
}

#[test]
fn rcm_jacobian_matches_trajectory_differences() {
    let mut r = rng(77);
    for _ in 0..50 {
        let chain = random_chain(&mut r, 7);
        let q0 = random_q(&mut r, 7);
        let q_dot: Vec<f64> = (0..7).map(|_| r.random_range(-1.0..1.0)).collect();
        let lambda0 = r.random_range(0.0..1.0);
        let lambda_dot = r.random_range(-1.0..1.0);
        let x_rcm_at = |t: f64| {
            let q: Vec<f64> = q0.iter().zip(&q_dot).map(|(a, b)| a + t * b).collect();
            let e = ChainEvaluation::new(&chain, &jc(&q)).unwrap();
            rcm_point(&e.x_i(), &e.x_ip1(), lambda0 + t * lambda_dot)
        };
        let h = 1e-6;
        let fd = (x_rcm_at(h) - x_rcm_at(-h)) / (2.0 * h);
        let e = ChainEvaluation::new(&chain, &jc(&q0)).unwrap();
        let j = rcm_jacobian(
            &translational_jacobian(&e.jacobian(&e.x_i())),
            &translational_jacobian(&e.jacobian(&e.x_ip1())),
            lambda0,
            &e.x_i(),
            &e.x_ip1(),
        )
        .unwrap();
        let analytic = &j * DVector::from_column_slice(&q_dot).push(lambda_dot);
        assert!((analytic - fd).norm() <= 1e-5, "{:e}", (analytic - fd).norm());
    }
}

/// `Jᵀ (J Jᵀ + μ² I)⁻¹` through a linear solve.
fn reference_pinv(j: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
    let m = j.nrows();
    let a = j * j.transpose() + DMatrix::identity(m, m) * mu * mu;
    j.transpose() * a.lu().try_inverse().unwrap()
}

#[test]
fn pid_step_matches_reference_law() {
    let mut r = rng(3);
    let gains = PidGains::servo_defaults();
    let mut state = PidState::new(7, 1.0 / 30.0, 10.0).unwrap();
    let mut integral = DVector::<f64>::zeros(7);
    let mut prev: Option<DVector<f64>> = None;
    for _ in 0..20 {
        let j = DMatrix::from_fn(7, 8, |_, _| r.random_range(-1.0..1.0));
        let e_t = DVector::from_fn(4, |_, _| r.random_range(-0.5..0.5));
        let e_r = Vector3::new(r.random_range(-1e-3..1e-3), r.random_range(-1e-3..1e-3), r.random_range(-1e-3..1e-3));
        let out = pid_step(&mut state, &gains, 5e-4, &j, &e_t, &e_r).unwrap();
        let e = DVector::from_iterator(7, e_t.iter().copied().chain(e_r.iter().copied()));
        integral = (&integral + &e / 30.0).map(|x| x.clamp(-10.0, 10.0));
        let d = prev.as_ref().map(|p| (&e - p) * 30.0).unwrap_or_else(|| DVector::zeros(7));
        prev = Some(e.clone());
        let cmd = gains.kp.component_mul(&e) + gains.ki.component_mul(&integral) + gains.kd.component_mul(&d);
        let expected = reference_pinv(&j, 5e-4) * cmd;
        let got = out.q_dot.push(out.lambda_dot);
        assert!((got - &expected).norm() <= 1e-9 * (1.0 + expected.norm()));
    }
}

#[test]
fn composite_jacobian_layout() {
    let jt = DMatrix::from_fn(4, 7, |i, j| (i * 7 + j) as f64);
    let jr = nalgebra::Matrix3xX::from_fn(8, |i, j| 100.0 + (i * 8 + j) as f64);
    let c = composite_jacobian(&jt, &jr).unwrap();
    assert_eq!(c.shape(), (7, 8));
    for i in 0..4 {
        assert_eq!(c[(i, 7)], 0.0);
        for j in 0..7 {
            assert_eq!(c[(i, j)], jt[(i, j)]);
        }
    }
    for i in 0..3 {
        for j in 0..8 {
            assert_eq!(c[(4 + i, j)], jr[(i, j)]);
        }
    }
    assert!(composite_jacobian(&jt, &nalgebra::Matrix3xX::zeros(7)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn damped_pinv_equals_regularized_solve(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..9, mu in 1e-4f64..1e-1) {
        let mut r = rng(seed);
        let j = DMatrix::from_fn(rows, cols, |_, _| r.random_range(-2.0..2.0));
        let a = damped_pseudoinverse(&j, mu);
        let b = reference_pinv(&j, mu);
        prop_assert!((a - b).abs().max() < 1e-8);
    }

    #[test]
    fn integral_stays_clamped(seed in any::<u64>(), clamp in 0.0f64..5.0) {
        let mut r = rng(seed);
        let gains = PidGains::proportional(4, 1.0, 1.0);
        let mut s = PidState::new(7, 0.5, clamp).unwrap();
        for _ in 0..40 {
            let j = DMatrix::from_fn(7, 8, |_, _| r.random_range(-1.0..1.0));
            let e = DVector::from_fn(4, |_, _| r.random_range(-20.0..20.0));
            let er = Vector3::new(r.random_range(-20.0..20.0), 0.0, 1.0);
            pid_step(&mut s, &gains, 5e-4, &j, &e, &er).unwrap();
            prop_assert!(s.integral().iter().all(|x| x.abs() <= clamp));
        }
    }

    #[test]
    fn zero_error_gives_zero_rates(seed in any::<u64>()) {
        let mut r = rng(seed);
        let j = DMatrix::from_fn(7, 8, |_, _| r.random_range(-1.0..1.0));
        let mut s = PidState::new(7, 1.0 / 30.0, 10.0).unwrap();
        let out = pid_step(&mut s, &PidGains::servo_defaults(), 5e-4, &j, &DVector::zeros(4), &Vector3::zeros()).unwrap();
        prop_assert!(out.q_dot.iter().all(|x| *x == 0.0));
        prop_assert_eq!(out.lambda_dot, 0.0);
    }

    #[test]
    fn projection_residual_is_perpendicular(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = |r: &mut rand_chacha::ChaCha8Rng| Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let (a, b, t) = (p(&mut r), p(&mut r), p(&mut r));
        prop_assume!((b - a).norm() > 1e-3);
        let s = RcmState::from_geometry(&a, &b, &t).unwrap();
        prop_assert!(s.e_rcm.dot(&(b - a)).abs() < 1e-12);
    }
}
