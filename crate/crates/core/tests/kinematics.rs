mod common;

use approx::assert_relative_eq;
use common::*;
use nalgebra::{DMatrix, Vector3};
use proptest::prelude::*;
use rcmservo_core::kinematics::{
    forward_kinematics, geometric_jacobian, orthonormality_error, parse_chain, ChainEvaluation, ChainFile, ChainModel,
    KinematicsError,
};

#[test]
fn forward_kinematics_matches_matrix_product() {
    let mut r = rng(11);
    for _ in 0..50 {
        let dof = r.random_range(1..9);
        let chain = random_chain(&mut r, dof);
        let q = random_q(&mut r, dof);
        let (pose_i, pose_ip1) = forward_kinematics(&chain, &jc(&q)).unwrap();
        let oracle = fk_oracle(&chain, &q);
        assert!((pose_ip1.to_homogeneous() - oracle).abs().max() < 1e-12);
        // proximal point sits one endoscope length behind the camera
        let back = pose_ip1.translation.vector - pose_i.translation.vector;
        assert_relative_eq!(back.norm(), chain.endoscope_length(), epsilon = 1e-12);
        assert!((back.normalize() - pose_ip1.rotation * Vector3::z()).norm() < 1e-12);
    }
}

use rand::Rng;

#[test]
fn jacobian_matches_finite_differences() {
    let mut r = rng(2024);
    for _ in 0..150 {
        let dof = r.random_range(6..9);
        let chain = random_chain(&mut r, dof);
        let q = random_q(&mut r, dof);
        let eval = ChainEvaluation::new(&chain, &jc(&q)).unwrap();
        let j = eval.jacobian(&eval.x_ip1());
        let j = DMatrix::from_column_slice(6, dof, j.as_slice());
        let fd = fd_camera_jacobian(&chain, &q, 1e-6);
        let rel = (&j - &fd).norm() / j.norm().max(1e-12);
        assert!(rel < 1e-6, "relative error {rel}");
    }
}

#[test]
fn proximal_point_jacobian_matches_finite_differences() {
    let mut r = rng(5);
    for _ in 0..30 {
        let chain = random_chain(&mut r, 7);
        let q = random_q(&mut r, 7);
        let eval = ChainEvaluation::new(&chain, &jc(&q)).unwrap();
        let j = eval.jacobian(&eval.x_i());
        let h = 1e-6;
        for k in 0..7 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            let xp = ChainEvaluation::new(&chain, &jc(&qp)).unwrap().x_i();
            let xm = ChainEvaluation::new(&chain, &jc(&qm)).unwrap().x_i();
            let fd = (xp - xm) / (2.0 * h);
            assert!((fd - j.fixed_view::<3, 1>(0, k)).norm() < 1e-7 * (1.0 + fd.norm()));
        }
    }
}

#[test]
fn jacobian_frame_change_oracle() {
    // Re-expressing the chain under a new base rotates both Jacobian halves.
    let mut r = rng(9);
    for _ in 0..20 {
        let chain = random_chain(&mut r, 7);
        let q = random_q(&mut r, 7);
        let base = random_pose(&mut r, 1.0);
        let moved = chain.with_base(&base);
        let a = ChainEvaluation::new(&chain, &jc(&q)).unwrap();
        let b = ChainEvaluation::new(&moved, &jc(&q)).unwrap();
        assert!((b.pose_ip1.to_homogeneous() - (base * a.pose_ip1).to_homogeneous()).abs().max() < 1e-12);
        let ja = a.jacobian(&a.x_ip1());
        let jb = b.jacobian(&b.x_ip1());
        let rot = base.rotation.matrix();
        for k in 0..7 {
            let lin = rot * ja.fixed_view::<3, 1>(0, k);
            let ang = rot * ja.fixed_view::<3, 1>(3, k);
            assert!((lin - jb.fixed_view::<3, 1>(0, k)).norm() < 1e-12);
            assert!((ang - jb.fixed_view::<3, 1>(3, k)).norm() < 1e-12);
        }
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    let chain = ChainModel::default_seven_dof();
    assert!(matches!(
        forward_kinematics(&chain, &jc(&[0.0; 6])),
        Err(KinematicsError::DimensionMismatch { expected: 7, got: 6 })
    ));
    assert!(geometric_jacobian(&chain, &jc(&[0.0; 8]), &Vector3::zeros()).is_err());
}

#[test]
fn default_chain_round_trips_through_toml() {
    let chain = ChainModel::default_seven_dof();
    let text = ChainFile::from_chain(&chain).to_toml();
    let back = parse_chain(&text).unwrap();
    let q = jc(&[0.3, -0.4, 0.5, 1.1, -0.2, 0.7, 0.1]);
    let (_, a) = forward_kinematics(&chain, &q).unwrap();
    let (_, b) = forward_kinematics(&back, &q).unwrap();
    assert!((a.to_homogeneous() - b.to_homogeneous()).abs().max() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotations_stay_orthonormal(seed in any::<u64>(), dof in 1usize..9) {
        let mut r = rng(seed);
        let chain = random_chain(&mut r, dof);
        let q = random_q(&mut r, dof);
        let (pi, pc) = forward_kinematics(&chain, &jc(&q)).unwrap();
        prop_assert!(orthonormality_error(&pi.rotation) < 1e-12);
        prop_assert!(orthonormality_error(&pc.rotation) < 1e-12);
        prop_assert!((pc.rotation.matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distal_columns_vanish(seed in any::<u64>(), link in 0usize..7) {
        let mut r = rng(seed);
        let chain = random_chain(&mut r, 7);
        let q = random_q(&mut r, 7);
        let eval = ChainEvaluation::new(&chain, &jc(&q)).unwrap();
        let j = eval.jacobian_on_link(&eval.x_ip1(), link);
        for k in link + 1..7 {
            prop_assert!(j.column(k).iter().all(|v| *v == 0.0));
        }
        prop_assert!(j.column(link).norm() > 0.0);
    }

    #[test]
    fn angular_columns_are_unit_axes(seed in any::<u64>()) {
        let mut r = rng(seed);
        let chain = random_chain(&mut r, 7);
        let q = random_q(&mut r, 7);
        let eval = ChainEvaluation::new(&chain, &jc(&q)).unwrap();
        let j = eval.jacobian(&Vector3::new(0.1, 0.2, 0.3));
        for k in 0..7 {
            prop_assert!((j.fixed_view::<3, 1>(3, k).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_files_round_trip(seed in any::<u64>(), dof in 1usize..9) {
        let mut r = rng(seed);
        let chain = random_chain(&mut r, dof);
        let back = parse_chain(&ChainFile::from_chain(&chain).to_toml()).unwrap();
        let q = random_q(&mut r, dof);
        let (_, a) = forward_kinematics(&chain, &jc(&q)).unwrap();
        let (_, b) = forward_kinematics(&back, &jc(&q)).unwrap();
        prop_assert!((a.to_homogeneous() - b.to_homogeneous()).abs().max() < 1e-9);
    }
}
