//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix3, Matrix4, Rotation3, Translation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcmservo_core::kinematics::{ChainModel, JointConfig, Pose, RevoluteJoint};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rodrigues' formula written out by hand.
pub fn rodrigues(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = axis.normalize();
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

pub fn homogeneous(pose: &Pose) -> Matrix4<f64> {
    pose.to_homogeneous()
}

pub fn rot_h(axis: &Vector3<f64>, angle: f64) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rodrigues(axis, angle));
    m
}

/// Camera frame as an explicit product of 4×4 matrices.
pub fn fk_oracle(chain: &ChainModel, q: &[f64]) -> Matrix4<f64> {
    let mut t = Matrix4::<f64>::identity();
    for (j, a) in chain.joints().iter().zip(q) {
        t = t * homogeneous(&j.origin) * rot_h(&j.axis, *a);
    }
    t * homogeneous(chain.endoscope_mount())
}

pub fn random_pose(r: &mut impl Rng, scale: f64) -> Pose {
    let axis = Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    let axis = if axis.norm() < 1e-3 { Vector3::z() } else { axis };
    Pose::from_parts(
        Translation3::new(r.random_range(-scale..scale), r.random_range(-scale..scale), r.random_range(-scale..scale)),
        Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), r.random_range(-3.0..3.0)),
    )
}

/// A chain with `dof` joints, random link transforms and random axes.
pub fn random_chain(r: &mut impl Rng, dof: usize) -> ChainModel {
    let joints = (0..dof)
        .map(|_| {
            let axis = loop {
                let a = Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
                if a.norm() > 0.1 {
                    break a.normalize();
                }
            };
            RevoluteJoint::new(random_pose(r, 0.3), axis)
        })
        .collect();
    let length = r.random_range(0.1..0.5);
    ChainModel::new(joints, random_pose(r, 0.2), length).unwrap()
}

pub fn random_q(r: &mut impl Rng, dof: usize) -> Vec<f64> {
    (0..dof).map(|_| r.random_range(-3.0..3.0)).collect()
}

/// Central-difference geometric Jacobian of the oracle camera frame.
pub fn fd_camera_jacobian(chain: &ChainModel, q: &[f64], h: f64) -> DMatrix<f64> {
    let n = q.len();
    let mut j = DMatrix::zeros(6, n);
    for k in 0..n {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[k] += h;
        qm[k] -= h;
        let tp = fk_oracle(chain, &qp);
        let tm = fk_oracle(chain, &qm);
        let dp = (tp.fixed_view::<3, 1>(0, 3) - tm.fixed_view::<3, 1>(0, 3)) / (2.0 * h);
        let rp: Matrix3<f64> = tp.fixed_view::<3, 3>(0, 0).into();
        let rm: Matrix3<f64> = tm.fixed_view::<3, 3>(0, 0).into();
        let d = rp * rm.transpose();
        let skew = (d - d.transpose()) / 2.0;
        let w = Vector3::new(skew[(2, 1)], skew[(0, 2)], skew[(1, 0)]) / (2.0 * h);
        for r in 0..3 {
            j[(r, k)] = dp[r];
            j[(r + 3, k)] = w[r];
        }
    }
    j
}

pub fn jc(q: &[f64]) -> JointConfig {
    JointConfig::from_slice(q)
}
