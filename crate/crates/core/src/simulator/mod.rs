//! Closed-loop simulation: world integration, manual jogging, servo
//! execution along view-graph paths and scripted scenarios.
//!
//! Vision runs at the camera frame rate (`control.dt`, 30 Hz by default).
//! Each frame the controller is updated `control.substeps` times with the
//! frame's task error held and the RCM error refreshed from kinematics.

mod config;
mod metrics;
mod scenario;
mod servo;
mod world;

pub use config::{
    BurstConfig, ControlConfig, ConvergenceConfig, JogConfig, MStarPolicy, OutputConfig, RepositionConfig, RepositionPivot, ScenarioConfig,
    ScenarioKind, SceneConfig, ScriptStep, TaskConfig, TrocarConfig, DEFAULT_INITIAL_Q,
};
pub use metrics::{
    metrics_to_csv_string, read_metrics_csv, replay_summary, summarize, write_metrics_csv, MetricsRecord, RunSummary, CSV_HEADER,
};
pub use scenario::{
    build_world, capture, jog_controller, prepare_scenario, reposition_motion, run_scenario, view_center, run_script, ScenarioOutcome,
};
pub use servo::{run_servo, ServoOutcome, ServoRun, ServoSettings, ServoStatus};
pub use world::{manual_jog, JogController, World};

use thiserror::Error;

use crate::homography_task::HomographyTaskError;
use crate::kinematics::KinematicsError;
use crate::rcm_control::RcmError;
use crate::view_graph::GraphError;
use crate::vision::VisionError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Rcm(#[from] RcmError),
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Task(#[from] HomographyTaskError),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}
