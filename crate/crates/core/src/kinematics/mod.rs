//! Serial revolute chains carrying an endoscope.
//!
//! A chain is a list of joints, each a fixed parent-to-joint transform
//! followed by a rotation about a unit axis expressed in the joint frame.
//! The endoscope is rigidly mounted on the last joint frame: its camera frame
//! `C` sits at the distal tip (`x_{i+1}`) and the proximal point `x_i` lies
//! `endoscope_length` behind it along the negative optical axis.

mod chain_file;

pub use chain_file::{parse_chain, ChainFile, ChainFileError, JointEntry, TransformEntry};

use nalgebra::{DVector, IsometryMatrix3, Matrix3xX, Matrix6xX, Rotation3, Translation3, Unit, Vector3};
use thiserror::Error;

/// Rigid transform whose rotation is stored as a 3×3 orthonormal matrix.
pub type Pose = IsometryMatrix3<f64>;

/// Minimum number of joints needed to servo 4 task DOF under an RCM
/// (4 task rows + 3 RCM rows against n joints + λ).
pub const MIN_RCM_DOF: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("dimension mismatch: expected {expected} joint values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint {joint} axis is not unit-norm (|axis| = {norm})")]
    NonUnitAxis { joint: usize, norm: f64 },
    #[error("endoscope length must be positive, got {0}")]
    InvalidEndoscopeLength(f64),
    #[error("chain has no joints")]
    EmptyChain,
    #[error("joint {joint} limits are inverted ({min} > {max})")]
    InvalidLimits { joint: usize, min: f64, max: f64 },
    #[error("link index {link} out of range for a {dof}-joint chain")]
    LinkOutOfRange { link: usize, dof: usize },
    #[error("chain has {dof} joints; RCM servoing needs at least {MIN_RCM_DOF}")]
    TooFewJoints { dof: usize },
}

/// One revolute joint.
#[derive(Debug, Clone, PartialEq)]
pub struct RevoluteJoint {
    /// Fixed transform from the previous joint frame (or the world) to this joint frame.
    pub origin: Pose,
    /// Rotation axis in this joint's frame.
    pub axis: Unit<Vector3<f64>>,
    /// Optional `(min, max)` position limits in radians.
    pub limits: Option<(f64, f64)>,
}

impl RevoluteJoint {
    pub fn new(origin: Pose, axis: Vector3<f64>) -> Self {
        Self { origin, axis: Unit::new_normalize(axis), limits: None }
    }

    pub fn with_limits(mut self, min: f64, max: f64) -> Self {
        self.limits = Some((min, max));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    joints: Vec<RevoluteJoint>,
    endoscope_mount: Pose,
    endoscope_length: f64,
}

impl ChainModel {
    pub fn new(
        joints: Vec<RevoluteJoint>,
        endoscope_mount: Pose,
        endoscope_length: f64,
    ) -> Result<Self, KinematicsError> {
        if joints.is_empty() {
            return Err(KinematicsError::EmptyChain);
        }
        for (i, j) in joints.iter().enumerate() {
            let norm = j.axis.as_ref().norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(KinematicsError::NonUnitAxis { joint: i, norm });
            }
            if let Some((min, max)) = j.limits {
                if min > max {
                    return Err(KinematicsError::InvalidLimits { joint: i, min, max });
                }
            }
        }
        if !(endoscope_length > 0.0) || !endoscope_length.is_finite() {
            return Err(KinematicsError::InvalidEndoscopeLength(endoscope_length));
        }
        Ok(Self { joints, endoscope_mount, endoscope_length })
    }

    /// Seven-joint arm with the proportions of a medical lightweight arm
    /// (0.34 / 0.40 / 0.40 / 0.126 m link offsets, z-y-z-y-z-y-z axes) and a
    /// 0.30 m endoscope mounted 5 cm past the flange.
    pub fn default_seven_dof() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        let z = Vector3::z();
        let y = Vector3::y();
        let at = |x: f64, y: f64, z: f64| Pose::from_parts(Translation3::new(x, y, z), Rotation3::identity());
        let joints = vec![
            RevoluteJoint::new(at(0.0, 0.0, 0.34), z).with_limits(-170.0 * deg, 170.0 * deg),
            RevoluteJoint::new(at(0.0, 0.0, 0.0), y).with_limits(-120.0 * deg, 120.0 * deg),
            RevoluteJoint::new(at(0.0, 0.0, 0.40), z).with_limits(-170.0 * deg, 170.0 * deg),
            RevoluteJoint::new(at(0.0, 0.0, 0.0), y).with_limits(-120.0 * deg, 120.0 * deg),
            RevoluteJoint::new(at(0.0, 0.0, 0.40), z).with_limits(-170.0 * deg, 170.0 * deg),
            RevoluteJoint::new(at(0.0, 0.0, 0.0), y).with_limits(-120.0 * deg, 120.0 * deg),
            RevoluteJoint::new(at(0.0, 0.0, 0.126), z).with_limits(-175.0 * deg, 175.0 * deg),
        ];
        let length = 0.30;
        Self::new(joints, at(0.0, 0.0, 0.05 + length), length).expect("default chain is valid")
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[RevoluteJoint] {
        &self.joints
    }

    pub fn endoscope_mount(&self) -> &Pose {
        &self.endoscope_mount
    }

    pub fn endoscope_length(&self) -> f64 {
        self.endoscope_length
    }

    /// Errors unless the chain has enough joints for RCM-constrained servoing.
    pub fn require_rcm_capable(&self) -> Result<(), KinematicsError> {
        if self.dof() < MIN_RCM_DOF {
            Err(KinematicsError::TooFewJoints { dof: self.dof() })
        } else {
            Ok(())
        }
    }

    /// Returns the same chain with its base rigidly moved by `base`.
    pub fn with_base(&self, base: &Pose) -> Self {
        let mut out = self.clone();
        out.joints[0].origin = base * out.joints[0].origin;
        out
    }

    fn check_dim(&self, q: &JointConfig) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch { expected: self.dof(), got: q.len() });
        }
        Ok(())
    }
}

/// Joint positions in radians, one per chain joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointConfig(pub DVector<f64>);

impl JointConfig {
    pub fn new(q: DVector<f64>) -> Self {
        Self(q)
    }

    pub fn from_slice(q: &[f64]) -> Self {
        Self(DVector::from_column_slice(q))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    /// Indices of joints outside their limits.
    pub fn limit_violations(&self, chain: &ChainModel) -> Vec<usize> {
        chain
            .joints()
            .iter()
            .zip(self.0.iter())
            .enumerate()
            .filter_map(|(i, (j, &v))| match j.limits {
                Some((min, max)) if v < min || v > max => Some(i),
                _ => None,
            })
            .collect()
    }

    pub fn within_limits(&self, chain: &ChainModel) -> bool {
        self.limit_violations(chain).is_empty()
    }
}

/// Joint frames and endoscope poses for one configuration.
#[derive(Debug, Clone)]
pub struct ChainEvaluation {
    joint_origins: Vec<Vector3<f64>>,
    joint_axes: Vec<Vector3<f64>>,
    /// Proximal endoscope frame (`x_i`); same rotation as the camera frame.
    pub pose_i: Pose,
    /// Camera frame `C` at the distal tip (`x_{i+1}`).
    pub pose_ip1: Pose,
}

impl ChainEvaluation {
    pub fn new(chain: &ChainModel, q: &JointConfig) -> Result<Self, KinematicsError> {
        chain.check_dim(q)?;
        let n = chain.dof();
        let mut joint_origins = Vec::with_capacity(n);
        let mut joint_axes = Vec::with_capacity(n);
        let mut frame = Pose::identity();
        for (joint, &angle) in chain.joints.iter().zip(q.0.iter()) {
            frame *= joint.origin;
            joint_origins.push(frame.translation.vector);
            joint_axes.push(frame.rotation * joint.axis.into_inner());
            frame *= Rotation3::from_axis_angle(&joint.axis, angle);
        }
        let pose_ip1 = frame * chain.endoscope_mount;
        let back = pose_ip1.rotation * Vector3::new(0.0, 0.0, -chain.endoscope_length);
        let pose_i = Pose::from_parts(Translation3::from(pose_ip1.translation.vector + back), pose_ip1.rotation);
        Ok(Self { joint_origins, joint_axes, pose_i, pose_ip1 })
    }

    pub fn x_i(&self) -> Vector3<f64> {
        self.pose_i.translation.vector
    }

    pub fn x_ip1(&self) -> Vector3<f64> {
        self.pose_ip1.translation.vector
    }

    /// Geometric Jacobian of a point rigidly attached to the last link.
    pub fn jacobian(&self, point: &Vector3<f64>) -> Matrix6xX<f64> {
        self.jacobian_on_link(point, self.joint_axes.len() - 1)
    }

    /// Geometric Jacobian of a point attached to `link` (the frame after
    /// joint `link`); columns of joints distal to it are zero.
    pub fn jacobian_on_link(&self, point: &Vector3<f64>, link: usize) -> Matrix6xX<f64> {
        let n = self.joint_axes.len();
        let mut j = Matrix6xX::zeros(n);
        for k in 0..=link.min(n - 1) {
            let axis = &self.joint_axes[k];
            let lin = axis.cross(&(point - self.joint_origins[k]));
            j.fixed_view_mut::<3, 1>(0, k).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, k).copy_from(axis);
        }
        j
    }
}

/// Proximal (`x_i`) and camera (`x_{i+1}`) poses in the world frame.
pub fn forward_kinematics(chain: &ChainModel, q: &JointConfig) -> Result<(Pose, Pose), KinematicsError> {
    let eval = ChainEvaluation::new(chain, q)?;
    Ok((eval.pose_i, eval.pose_ip1))
}

/// 6×n geometric Jacobian (linear rows first) of a world-frame point carried
/// by the last link.
pub fn geometric_jacobian(
    chain: &ChainModel,
    q: &JointConfig,
    point: &Vector3<f64>,
) -> Result<Matrix6xX<f64>, KinematicsError> {
    Ok(ChainEvaluation::new(chain, q)?.jacobian(point))
}

/// Like [`geometric_jacobian`] for a point carried by an intermediate link.
pub fn geometric_jacobian_on_link(
    chain: &ChainModel,
    q: &JointConfig,
    point: &Vector3<f64>,
    link: usize,
) -> Result<Matrix6xX<f64>, KinematicsError> {
    if link >= chain.dof() {
        return Err(KinematicsError::LinkOutOfRange { link, dof: chain.dof() });
    }
    Ok(ChainEvaluation::new(chain, q)?.jacobian_on_link(point, link))
}

/// Top three (translational) rows of a geometric Jacobian.
pub fn translational_jacobian(j: &Matrix6xX<f64>) -> Matrix3xX<f64> {
    j.fixed_rows::<3>(0).into_owned()
}

/// Largest deviation of `RᵀR` from identity.
pub fn orthonormality_error(r: &Rotation3<f64>) -> f64 {
    let m = r.matrix();
    (m.transpose() * m - nalgebra::Matrix3::identity()).abs().max()
}
