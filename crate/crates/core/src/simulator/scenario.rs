//! Scripted scenarios: build a view graph by jogging and capturing, then
//! servo back to a target vertex.

use std::path::Path;
use std::time::Instant;

use nalgebra::{Point3, Rotation3, Translation3, Unit, Vector3};

use super::config::{RepositionPivot, ScenarioConfig, ScenarioKind, ScriptStep};
use super::metrics::{metrics_to_csv_string, summarize, MetricsRecord, RunSummary};
use super::servo::{run_servo, ServoSettings, ServoStatus};
use super::world::{JogController, World};
use super::SimError;
use crate::kinematics::{ChainEvaluation, JointConfig, Pose};
use crate::rcm_control::{rcm_point, PidGains};
use crate::view_graph::{CaptureMeta, ViewGraph};
use crate::vision::{EndoscopeCamera, PlanarScene};

/// Initial world of a scenario: the configured arm and a scene plane facing
/// the camera at the configured distance.
pub fn build_world(cfg: &ScenarioConfig) -> Result<World, SimError> {
    cfg.validate()?;
    let chain = cfg.chain_model()?;
    let q = JointConfig::from_slice(&cfg.initial_q(chain.dof())?);
    let eval = ChainEvaluation::new(&chain, &q)?;
    let camera_pose = eval.pose_ip1;
    let axis = camera_pose.rotation * Vector3::z();
    let plane_pose = Pose::from_parts(
        Translation3::from(camera_pose.translation.vector + axis * cfg.scene.distance),
        camera_pose.rotation,
    );
    let scene = PlanarScene::generate(plane_pose, cfg.scene.extent, cfg.scene.feature_count, cfg.texture_seed());
    let x_trocar = match cfg.trocar.position {
        Some(p) => Vector3::from(p),
        None => rcm_point(&eval.x_i(), &eval.x_ip1(), cfg.trocar.lambda),
    };
    World::new(chain, q, scene, EndoscopeCamera::default_endoscope(), x_trocar)
}

pub fn jog_controller(cfg: &ScenarioConfig) -> Result<JogController, SimError> {
    let gains = PidGains::proportional(4, cfg.jog.task_gain, cfg.jog.rcm_gain);
    JogController::new(cfg.jog.mode, gains, cfg.control.damping, cfg.control.dt, cfg.control.substeps)
}

/// Adds the current view to the graph.
pub fn capture(world: &World, graph: &mut ViewGraph) -> Result<usize, SimError> {
    let obs = world.observe()?;
    let meta = CaptureMeta { time_s: world.time_s(), eval_camera_pose: Some(world.camera_pose()) };
    Ok(graph.capture_view(obs, world.intrinsics(), meta)?)
}

/// Executes a graph-building script.
pub fn run_script(world: &mut World, graph: &mut ViewGraph, jog: &mut JogController, script: &[ScriptStep]) -> Result<(), SimError> {
    for step in script {
        match step {
            ScriptStep::Capture => {
                capture(world, graph)?;
            }
            ScriptStep::Jog { frames, .. } => {
                let twist = step.twist().expect("jog step has a twist");
                for _ in 0..*frames {
                    jog.jog(world, &twist)?;
                }
            }
        }
    }
    Ok(())
}

/// Where the optical axis of `viewer` meets the scene plane.
pub fn view_center(scene: &PlanarScene, viewer: &Pose) -> Result<Vector3<f64>, SimError> {
    let origin = viewer.translation.vector;
    let dir = viewer.rotation * Vector3::z();
    let normal = scene.normal();
    let denom = normal.dot(&dir);
    if denom.abs() < 1e-9 {
        return Err(SimError::InvalidConfig("viewer optical axis is parallel to the scene plane".into()));
    }
    let s = normal.dot(&(scene.plane_pose.translation.vector - origin)) / denom;
    Ok(origin + dir * s)
}

/// Rigid motion rotating the scene by `angle_deg` about `axis` (scene
/// frame) through `pivot` (world frame).
pub fn reposition_motion(scene: &PlanarScene, pivot: &Vector3<f64>, axis: [f64; 3], angle_deg: f64) -> Result<Pose, SimError> {
    let pivot = *pivot;
    let world_axis = Unit::new_normalize(scene.plane_pose.rotation * Vector3::from(axis));
    let rotation = Rotation3::from_axis_angle(&world_axis, angle_deg.to_radians());
    let rotated = rotation * Point3::from(-pivot);
    Ok(Pose::from_parts(Translation3::from(pivot + rotated.coords), rotation))
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub kind: ScenarioKind,
    pub records: Vec<MetricsRecord>,
    pub summary: RunSummary,
    pub status: ServoStatus,
    pub graph: ViewGraph,
    pub world: World,
}

impl ScenarioOutcome {
    pub fn metrics_csv(&self) -> String {
        metrics_to_csv_string(&self.records)
    }

    /// Writes `metrics.csv`, `summary.json` and `graph.json` into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(|e| SimError::Io(format!("{}: {e}", dir.display())))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| SimError::Io(format!("{}: {e}", p.display())))
        };
        write("metrics.csv", self.metrics_csv())?;
        write("summary.json", serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n")?;
        write("graph.json", self.graph.to_json() + "\n")?;
        Ok(())
    }
}

/// Graph-building phase only: the world and graph right before servoing.
pub fn prepare_scenario(cfg: &ScenarioConfig) -> Result<(World, ViewGraph), SimError> {
    let mut world = build_world(cfg)?;
    let mut graph = ViewGraph::new();
    let mut jog = jog_controller(cfg)?;
    run_script(&mut world, &mut graph, &mut jog, &cfg.script())?;
    if graph.is_empty() {
        return Err(SimError::InvalidConfig("the script captured no views".into()));
    }
    if cfg.kind == ScenarioKind::Reposition {
        let pivot = match cfg.reposition.pivot {
            RepositionPivot::Trocar => world.x_trocar(),
            RepositionPivot::ViewCenter => view_center(world.scene(), &world.camera_pose())?,
        };
        let motion = reposition_motion(world.scene(), &pivot, cfg.reposition.axis, cfg.reposition.angle_deg)?;
        let moved = world.scene().moved(&motion);
        world.set_scene(moved);
    }
    Ok((world, graph))
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, SimError> {
    let started = Instant::now();
    let (mut world, mut graph) = prepare_scenario(cfg)?;
    let target = cfg.target();
    let target_tip = graph
        .vertex(target)?
        .capture
        .eval_camera_pose
        .map(|p| {
            let t = p.translation.vector * 1e3;
            [t.x, t.y, t.z]
        });
    let outcome = run_servo(&mut world, &mut graph, target, ServoSettings::from_config(cfg)?)?;
    let mut summary = summarize(&outcome.records, outcome.status.as_str(), &outcome.path, target_tip);
    summary.wall_time_s = Some(started.elapsed().as_secs_f64());
    Ok(ScenarioOutcome { kind: cfg.kind, records: outcome.records, summary, status: outcome.status, graph, world })
}
