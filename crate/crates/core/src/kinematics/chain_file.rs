//! TOML description of a chain.
//!
//! ```toml
//! endoscope_length = 0.30
//!
//! [endoscope_mount]
//! xyz = [0.0, 0.0, 0.35]
//! rpy = [0.0, 0.0, 0.0]
//!
//! [[joints]]
//! origin = { xyz = [0.0, 0.0, 0.34] }
//! axis = [0.0, 0.0, 1.0]
//! limits = [-2.96, 2.96]
//! ```
//!
//! `rpy` is roll-pitch-yaw in radians applied as `Rz(yaw)·Ry(pitch)·Rx(roll)`
//! and defaults to zero. Axes must be unit-norm to within 1e-6.

use nalgebra::{Rotation3, Translation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::{ChainModel, KinematicsError, Pose, RevoluteJoint};

#[derive(Debug, thiserror::Error)]
pub enum ChainFileError {
    #[error("chain file syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("joint {joint}: {reason}")]
    Joint { joint: usize, reason: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Chain(#[from] KinematicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct TransformEntry {
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl TransformEntry {
    pub fn to_pose(&self) -> Pose {
        let [x, y, z] = self.xyz;
        let [r, p, yaw] = self.rpy;
        Pose::from_parts(Translation3::new(x, y, z), Rotation3::from_euler_angles(r, p, yaw))
    }

    pub fn from_pose(pose: &Pose) -> Self {
        let (r, p, y) = pose.rotation.euler_angles();
        let t = pose.translation.vector;
        Self { xyz: [t.x, t.y, t.z], rpy: [r, p, y] }
    }

    fn is_finite(&self) -> bool {
        self.xyz.iter().chain(self.rpy.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEntry {
    #[serde(default)]
    pub origin: TransformEntry,
    pub axis: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    pub endoscope_length: f64,
    pub endoscope_mount: TransformEntry,
    pub joints: Vec<JointEntry>,
}

impl ChainFile {
    pub fn parse(text: &str) -> Result<Self, ChainFileError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("chain file serializes")
    }

    pub fn from_chain(chain: &ChainModel) -> Self {
        Self {
            endoscope_length: chain.endoscope_length(),
            endoscope_mount: TransformEntry::from_pose(chain.endoscope_mount()),
            joints: chain
                .joints()
                .iter()
                .map(|j| JointEntry {
                    origin: TransformEntry::from_pose(&j.origin),
                    axis: [j.axis.x, j.axis.y, j.axis.z],
                    limits: j.limits.map(|(a, b)| [a, b]),
                })
                .collect(),
        }
    }

    pub fn build(&self) -> Result<ChainModel, ChainFileError> {
        if !self.endoscope_mount.is_finite() || !self.endoscope_length.is_finite() {
            return Err(ChainFileError::NonFinite("endoscope"));
        }
        let mut joints = Vec::with_capacity(self.joints.len());
        for (i, entry) in self.joints.iter().enumerate() {
            if !entry.origin.is_finite() || !entry.axis.iter().all(|v| v.is_finite()) {
                return Err(ChainFileError::NonFinite("joint"));
            }
            let axis = Vector3::from(entry.axis);
            let norm = axis.norm();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(ChainFileError::Joint { joint: i, reason: format!("axis norm {norm} is not 1") });
            }
            let limits = match entry.limits {
                Some([a, b]) if a.is_nan() || b.is_nan() => return Err(ChainFileError::NonFinite("joint limits")),
                Some([a, b]) => Some((a, b)),
                None => None,
            };
            joints.push(RevoluteJoint { origin: entry.origin.to_pose(), axis: Unit::new_normalize(axis), limits });
        }
        Ok(ChainModel::new(joints, self.endoscope_mount.to_pose(), self.endoscope_length)?)
    }
}

/// Parses and validates a chain description in one go.
pub fn parse_chain(text: &str) -> Result<ChainModel, ChainFileError> {
    ChainFile::parse(text)?.build()
}
