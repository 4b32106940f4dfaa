//! Homography-based visual servoing of an endoscope held by a serial
//! manipulator, with the insertion point enforced as a programmable remote
//! center of motion (RCM).
//!
//! The crate is organized bottom-up:
//!
//! - [`kinematics`]: revolute chains, forward kinematics and geometric Jacobians.
//! - [`rcm_control`]: the RCM constraint, composite Jacobian and PID law.
//! - [`homography_task`]: homography to 4-DOF task error and task Jacobian.
//! - [`vision`]: synthetic endoscope camera, matching and homography estimation.
//! - [`view_graph`]: graph of captured views with shortest-path navigation.
//! - [`simulator`]: closed-loop world, servo execution and scenario runner.

pub mod homography_task;
pub mod kinematics;
pub mod rcm_control;
pub mod simulator;
pub mod view_graph;
pub mod vision;

pub use homography_task::{CameraIntrinsics, Homography, HomographySpace, ProjectionMode, TaskError};
pub use kinematics::{ChainModel, JointConfig, Pose, RevoluteJoint};
pub use rcm_control::{PidGains, PidState, RcmState};
pub use view_graph::{ViewGraph, ViewVertex};
