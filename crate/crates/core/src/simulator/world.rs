//! Kinematic world: arm, endoscope camera, trocar and scene.

use log::warn;
use nalgebra::{DMatrix, DVector, Vector3, Vector4, Vector6};

use super::SimError;
use crate::homography_task::{task_jacobian, CameraIntrinsics, ProjectionMode};
use crate::kinematics::{translational_jacobian, ChainEvaluation, ChainModel, JointConfig, Pose};
use crate::rcm_control::{composite_jacobian, pid_step, rcm_jacobian, ControlOutput, PidGains, PidState, RcmState};
use crate::vision::{EndoscopeCamera, FeatureObservation, PlanarScene, VisionError};

#[derive(Debug, Clone)]
pub struct World {
    chain: ChainModel,
    q: JointConfig,
    scene: PlanarScene,
    camera: EndoscopeCamera,
    time_s: f64,
    eval: ChainEvaluation,
    rcm: RcmState,
}

impl World {
    pub fn new(
        chain: ChainModel,
        q: JointConfig,
        scene: PlanarScene,
        camera: EndoscopeCamera,
        x_trocar: Vector3<f64>,
    ) -> Result<Self, SimError> {
        chain.require_rcm_capable()?;
        if !q.0.iter().chain(x_trocar.iter()).all(|v| v.is_finite()) {
            return Err(SimError::NonFinite("initial state"));
        }
        let eval = ChainEvaluation::new(&chain, &q)?;
        let rcm = RcmState::from_geometry(&eval.x_i(), &eval.x_ip1(), &x_trocar)?;
        Ok(Self { chain, q, scene, camera, time_s: 0.0, eval, rcm })
    }

    pub fn chain(&self) -> &ChainModel {
        &self.chain
    }

    pub fn q(&self) -> &JointConfig {
        &self.q
    }

    pub fn scene(&self) -> &PlanarScene {
        &self.scene
    }

    /// Replaces the scene, e.g. after the patient is repositioned.
    pub fn set_scene(&mut self, scene: PlanarScene) {
        self.scene = scene;
    }

    pub fn camera(&self) -> &EndoscopeCamera {
        &self.camera
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        self.camera.intrinsics()
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn rcm(&self) -> &RcmState {
        &self.rcm
    }

    pub fn x_trocar(&self) -> Vector3<f64> {
        self.rcm.x_trocar
    }

    pub fn evaluation(&self) -> &ChainEvaluation {
        &self.eval
    }

    /// Ground-truth camera pose `ᵂT_C`.
    pub fn camera_pose(&self) -> Pose {
        self.eval.pose_ip1
    }

    pub fn tip_position(&self) -> Vector3<f64> {
        self.eval.x_ip1()
    }

    /// Feature observations on the working image.
    pub fn observe(&self) -> Result<Vec<FeatureObservation>, VisionError> {
        self.camera.observe(&self.scene, &self.eval.pose_ip1)
    }

    /// Euler step `q ← q + Δt·q̇`, clamped to joint limits. Returns the
    /// indices of clamped joints.
    pub fn integrate_step(&mut self, q_dot: &DVector<f64>, dt: f64) -> Result<Vec<usize>, SimError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        if q_dot.len() != self.chain.dof() {
            return Err(SimError::InvalidConfig(format!("q_dot has {} entries, chain has {} joints", q_dot.len(), self.chain.dof())));
        }
        if !q_dot.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite("q_dot"));
        }
        let mut q = &self.q.0 + q_dot * dt;
        let mut clamped = Vec::new();
        for (k, joint) in self.chain.joints().iter().enumerate() {
            if let Some((lo, hi)) = joint.limits {
                if q[k] < lo || q[k] > hi {
                    warn!("joint {k} clamped at {:.4} rad (commanded {:.4})", q[k].clamp(lo, hi), q[k]);
                    q[k] = q[k].clamp(lo, hi);
                    clamped.push(k);
                }
            }
        }
        let q = JointConfig::new(q);
        let eval = ChainEvaluation::new(&self.chain, &q)?;
        self.rcm = RcmState::from_geometry(&eval.x_i(), &eval.x_ip1(), &self.rcm.x_trocar)?;
        self.q = q;
        self.eval = eval;
        self.time_s += dt;
        Ok(clamped)
    }

    /// `[[J_t, 0]; J_RCM]` at the current configuration.
    pub fn composite_jacobian(&self, mode: ProjectionMode) -> Result<DMatrix<f64>, SimError> {
        let x_i = self.eval.x_i();
        let x_ip1 = self.eval.x_ip1();
        let j_i = self.eval.jacobian(&x_i);
        let j_ip1 = self.eval.jacobian(&x_ip1);
        let j_rcm = rcm_jacobian(&translational_jacobian(&j_i), &translational_jacobian(&j_ip1), self.rcm.lambda, &x_i, &x_ip1)?;
        let r_wc = *self.eval.pose_ip1.rotation.matrix();
        Ok(composite_jacobian(&task_jacobian(&j_ip1, &r_wc, mode), &j_rcm)?)
    }

    /// One controller update followed by an Euler step of `pid.dt()`.
    pub fn control_step(
        &mut self,
        pid: &mut PidState,
        gains: &PidGains,
        damping: f64,
        mode: ProjectionMode,
        e_task: &Vector4<f64>,
    ) -> Result<ControlOutput, SimError> {
        let j_cp = self.composite_jacobian(mode)?;
        let e = DVector::from_column_slice(e_task.as_slice());
        let out = pid_step(pid, gains, damping, &j_cp, &e, &self.rcm.e_rcm)?;
        self.integrate_step(&out.q_dot, pid.dt())?;
        Ok(out)
    }
}

/// Camera-frame velocity control for manual positioning. The twist is
/// treated as a task error under a proportional law, so jogging also
/// holds the RCM.
#[derive(Debug, Clone)]
pub struct JogController {
    pub mode: ProjectionMode,
    pub gains: PidGains,
    pub damping: f64,
    pub substeps: usize,
    pid: PidState,
}

impl JogController {
    pub fn new(mode: ProjectionMode, gains: PidGains, damping: f64, frame_dt: f64, substeps: usize) -> Result<Self, SimError> {
        if substeps == 0 {
            return Err(SimError::InvalidConfig("substeps must be at least 1".into()));
        }
        let pid = PidState::new(gains.channels(), frame_dt / substeps as f64, crate::rcm_control::DEFAULT_INTEGRAL_CLAMP)?;
        Ok(Self { mode, gains, damping, substeps, pid })
    }

    /// Applies `twist = (v, ω)` in the camera frame for one frame period.
    pub fn jog(&mut self, world: &mut World, twist: &Vector6<f64>) -> Result<(), SimError> {
        if !twist.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite("twist"));
        }
        let rows = self.mode.rows();
        let e = Vector4::new(twist[rows[0]], twist[rows[1]], twist[rows[2]], twist[rows[3]]);
        for _ in 0..self.substeps {
            world.control_step(&mut self.pid, &self.gains, self.damping, self.mode, &e)?;
        }
        self.pid.reset();
        Ok(())
    }
}

/// One frame of manual motion; see [`JogController::jog`].
pub fn manual_jog(world: &mut World, controller: &mut JogController, twist: &Vector6<f64>) -> Result<(), SimError> {
    controller.jog(world, twist)
}
