//! Scenario configuration files (TOML).
//!
//! Every section is optional; omitted values fall back to the defaults
//! listed on each field. A minimal file is a single line:
//!
//! ```toml
//! kind = "any_to_any"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector6};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::homography_task::ProjectionMode;
use crate::kinematics::{parse_chain, ChainModel};
use crate::rcm_control::{PidGains, DEFAULT_DAMPING, DEFAULT_INTEGRAL_CLAMP};
use crate::vision::{Corruption, RansacParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Servo along a multi-vertex path back to the overview view.
    AnyToAny,
    /// As `AnyToAny`, with periodic bursts of match corruption.
    ToolMotion,
    /// Capture the overview, move the scene plane, servo back.
    Reposition,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AnyToAny => "any_to_any",
            Self::ToolMotion => "tool_motion",
            Self::Reposition => "reposition",
        })
    }
}

/// Reference point policy for the translational task error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MStarPolicy {
    /// `m* = (0, 0, 1)`.
    #[default]
    PrincipalRay,
    /// Centroid of the matched target features in normalized coordinates.
    TargetCentroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Distance of the plane from the initial camera along its optical axis (m).
    pub distance: f64,
    /// Size of the textured rectangle (m).
    pub extent: [f64; 2],
    pub feature_count: usize,
    /// Texture seed; the scenario seed when omitted.
    pub texture_seed: Option<u64>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self { distance: 0.15, extent: [0.3, 0.3], feature_count: 1200, texture_seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrocarConfig {
    /// Explicit world position (m). Overrides `lambda`.
    pub position: Option<[f64; 3]>,
    /// Trocar placed on the initial shaft at this fraction from `x_i` to the tip.
    pub lambda: f64,
}

impl Default for TrocarConfig {
    fn default() -> Self {
        Self { position: None, lambda: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    /// Camera frame period (s).
    pub dt: f64,
    /// Controller updates per camera frame.
    pub substeps: usize,
    pub damping: f64,
    pub integral_clamp: f64,
    /// Gain diagonals, task channels then RCM channels.
    pub kp: Option<Vec<f64>>,
    pub ki: Option<Vec<f64>>,
    pub kd: Option<Vec<f64>>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self { dt: 1.0 / 30.0, substeps: 10, damping: DEFAULT_DAMPING, integral_clamp: DEFAULT_INTEGRAL_CLAMP, kp: None, ki: None, kd: None }
    }
}

impl ControlConfig {
    pub fn control_dt(&self) -> f64 {
        self.dt / self.substeps.max(1) as f64
    }

    pub fn gains(&self) -> Result<PidGains, SimError> {
        let d = PidGains::servo_defaults();
        let pick = |v: &Option<Vec<f64>>, def: &DVector<f64>| v.as_ref().map(|v| DVector::from_column_slice(v)).unwrap_or_else(|| def.clone());
        Ok(PidGains::new(pick(&self.kp, &d.kp), pick(&self.ki, &d.ki), pick(&self.kd, &d.kd))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub mode: ProjectionMode,
    /// Moving-average length in frames.
    pub window: usize,
    pub m_star: MStarPolicy,
    /// Multiplies the task error; `-1` flips the rotation convention.
    pub sign: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self { mode: ProjectionMode::B, window: 10, m_star: MStarPolicy::PrincipalRay, sign: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub intermediate_mpd_px: f64,
    pub final_mpd_px: f64,
    /// Frames before the servo gives up.
    pub max_steps: usize,
    /// Consecutive failed registrations before the servo fails.
    pub max_failures: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { intermediate_mpd_px: 5.0, final_mpd_px: 1.5, max_steps: 1500, max_failures: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JogConfig {
    pub mode: ProjectionMode,
    pub task_gain: f64,
    pub rcm_gain: f64,
}

impl Default for JogConfig {
    fn default() -> Self {
        Self { mode: ProjectionMode::A, task_gain: 1.0, rcm_gain: 100.0 }
    }
}

/// Periodic corruption bursts standing in for instruments crossing the view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BurstConfig {
    /// First frame of the first burst.
    pub start: usize,
    pub period: usize,
    pub length: usize,
    pub outlier_rate: f64,
    pub dropout: f64,
}

impl Default for BurstConfig {
    fn default() -> Self {
        Self { start: 5, period: 40, length: 15, outlier_rate: 0.3, dropout: 0.3 }
    }
}

impl BurstConfig {
    pub fn active(&self, step: usize) -> bool {
        self.period > 0 && step >= self.start && (step - self.start) % self.period < self.length
    }
}

/// Point the repositioning rotation axis passes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepositionPivot {
    /// The trocar. The scene moves as a rigid body that keeps the port in
    /// place, so the original relative view stays reachable.
    #[default]
    Trocar,
    /// Where the camera's optical axis meets the scene plane.
    ViewCenter,
}

/// Rigid scene motion applied before servoing back to the overview.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepositionConfig {
    pub angle_deg: f64,
    /// Rotation axis in the scene-plane frame; `[0, 0, 1]` is the normal.
    pub axis: [f64; 3],
    pub pivot: RepositionPivot,
}

impl Default for RepositionConfig {
    fn default() -> Self {
        Self { angle_deg: 16.6, axis: [0.0, 0.0, 1.0], pivot: RepositionPivot::Trocar }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptStep {
    /// Hold a camera-frame twist `(vx, vy, vz, wx, wy, wz)` for `frames` frames.
    Jog { twist: [f64; 6], frames: usize },
    Capture,
}

impl ScriptStep {
    pub fn twist(&self) -> Option<Vector6<f64>> {
        match self {
            Self::Jog { twist, .. } => Some(Vector6::from_column_slice(twist)),
            Self::Capture => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    /// Chain file; relative paths resolve against the config file. The
    /// built-in seven-joint arm when omitted.
    #[serde(default)]
    pub chain: Option<PathBuf>,
    /// Initial joint positions (rad).
    #[serde(default)]
    pub initial_q: Option<Vec<f64>>,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub trocar: TrocarConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    /// Corruption applied to every registration.
    #[serde(default)]
    pub corruption: Corruption,
    #[serde(default)]
    pub ransac: RansacParams,
    #[serde(default)]
    pub jog: JogConfig,
    /// Corruption bursts; defaults on for `tool_motion`, off otherwise.
    #[serde(default)]
    pub bursts: Option<BurstConfig>,
    #[serde(default)]
    pub reposition: RepositionConfig,
    /// Graph-building script; a per-kind default when omitted.
    #[serde(default)]
    pub script: Option<Vec<ScriptStep>>,
    /// Servo target vertex; vertex 0 (the overview) when omitted.
    #[serde(default)]
    pub target: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
}

pub const DEFAULT_INITIAL_Q: [f64; 7] = [0.0, 0.6, 0.0, 1.8, 0.0, 0.74, 0.0];

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            seed: 0,
            chain: None,
            initial_q: None,
            scene: SceneConfig::default(),
            trocar: TrocarConfig::default(),
            control: ControlConfig::default(),
            task: TaskConfig::default(),
            convergence: ConvergenceConfig::default(),
            corruption: Corruption::default(),
            ransac: RansacParams::default(),
            jog: JogConfig::default(),
            bursts: None,
            reposition: RepositionConfig::default(),
            script: None,
            target: None,
            output: OutputConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves a relative chain path against it.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(chain) = &cfg.chain {
            if chain.is_relative() {
                cfg.chain = Some(path.parent().unwrap_or(Path::new(".")).join(chain));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |s: String| Err(SimError::InvalidConfig(s));
        let c = &self.control;
        if !(c.dt > 0.0) || !c.dt.is_finite() {
            return bad(format!("control.dt must be positive, got {}", c.dt));
        }
        if c.substeps == 0 {
            return bad("control.substeps must be at least 1".into());
        }
        if !(c.damping >= 0.0) || !c.damping.is_finite() || !(c.integral_clamp >= 0.0) {
            return bad("control.damping and control.integral_clamp must be non-negative".into());
        }
        let gains = c.gains()?;
        if gains.channels() != 7 {
            return bad(format!("gain vectors need 7 entries (4 task + 3 RCM), got {}", gains.channels()));
        }
        let v = &self.convergence;
        if !(v.intermediate_mpd_px > 0.0) || !(v.final_mpd_px > 0.0) {
            return bad("convergence thresholds must be positive".into());
        }
        if v.max_steps == 0 || v.max_failures == 0 {
            return bad("convergence.max_steps and convergence.max_failures must be positive".into());
        }
        if self.task.window == 0 {
            return bad("task.window must be at least 1".into());
        }
        if self.task.sign != 1.0 && self.task.sign != -1.0 {
            return bad(format!("task.sign must be 1 or -1, got {}", self.task.sign));
        }
        let s = &self.scene;
        if !(s.distance > 0.0) || !s.extent.iter().all(|e| *e > 0.0 && e.is_finite()) || s.feature_count < 4 {
            return bad("scene needs a positive distance and extent and at least 4 features".into());
        }
        if self.trocar.position.is_none() && !self.trocar.lambda.is_finite() {
            return bad("trocar.lambda must be finite".into());
        }
        if let Some(p) = self.trocar.position {
            if !p.iter().all(|v| v.is_finite()) {
                return bad("trocar.position must be finite".into());
            }
        }
        self.corruption.validate()?;
        if let Some(b) = &self.bursts {
            Corruption { noise_px: 0.0, outlier_rate: b.outlier_rate, dropout: b.dropout }.validate()?;
        }
        let r = &self.ransac;
        if !(r.threshold_px > 0.0) || !(r.confidence > 0.0 && r.confidence < 1.0) || r.max_iters == 0 {
            return bad("ransac needs threshold_px > 0, confidence in (0, 1) and max_iters > 0".into());
        }
        let axis = self.reposition.axis;
        if !self.reposition.angle_deg.is_finite() || !axis.iter().all(|v| v.is_finite()) || axis.iter().all(|v| *v == 0.0) {
            return bad("reposition needs a finite angle and a non-zero axis".into());
        }
        if let Some(q) = &self.initial_q {
            if !q.iter().all(|v| v.is_finite()) {
                return bad("initial_q must be finite".into());
            }
        }
        if let Some(script) = &self.script {
            for step in script {
                if let ScriptStep::Jog { twist, .. } = step {
                    if !twist.iter().all(|v| v.is_finite()) {
                        return bad("script twists must be finite".into());
                    }
                }
            }
        }
        if !(self.jog.task_gain >= 0.0) || !(self.jog.rcm_gain >= 0.0) {
            return bad("jog gains must be non-negative".into());
        }
        Ok(())
    }

    pub fn chain_model(&self) -> Result<ChainModel, SimError> {
        match &self.chain {
            None => Ok(ChainModel::default_seven_dof()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
                Ok(parse_chain(&text).map_err(|e| SimError::Config(e.to_string()))?)
            }
        }
    }

    pub fn initial_q(&self, dof: usize) -> Result<Vec<f64>, SimError> {
        match &self.initial_q {
            Some(q) if q.len() == dof => Ok(q.clone()),
            Some(q) => Err(SimError::InvalidConfig(format!("initial_q has {} entries, chain has {dof} joints", q.len()))),
            None if dof == DEFAULT_INITIAL_Q.len() => Ok(DEFAULT_INITIAL_Q.to_vec()),
            None => Err(SimError::InvalidConfig(format!("initial_q is required for a {dof}-joint chain"))),
        }
    }

    pub fn texture_seed(&self) -> u64 {
        self.scene.texture_seed.unwrap_or(self.seed)
    }

    pub fn bursts(&self) -> Option<BurstConfig> {
        match (&self.bursts, self.kind) {
            (Some(b), _) => Some(b.clone()),
            (None, ScenarioKind::ToolMotion) => Some(BurstConfig::default()),
            (None, _) => None,
        }
    }

    pub fn script(&self) -> Vec<ScriptStep> {
        self.script.clone().unwrap_or_else(|| default_script(self.kind))
    }

    pub fn target(&self) -> usize {
        self.target.unwrap_or(0)
    }
}

/// Overview capture followed by a zoomed, panned and rolled close-up and
/// a second close-up, then a small uncaptured drift.
fn default_script(kind: ScenarioKind) -> Vec<ScriptStep> {
    use ScriptStep::*;
    match kind {
        ScenarioKind::Reposition => vec![Capture],
        ScenarioKind::AnyToAny | ScenarioKind::ToolMotion => vec![
            Capture,
            Jog { twist: [0.01, 0.0, 0.03, 0.0, 0.0, 0.2], frames: 30 },
            Capture,
            Jog { twist: [-0.01, 0.012, 0.015, 0.0, 0.0, -0.25], frames: 30 },
            Capture,
            Jog { twist: [0.004, -0.004, -0.005, 0.0, 0.0, 0.05], frames: 15 },
        ],
    }
}
