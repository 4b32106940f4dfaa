//! Path-following homography servo, one camera frame per tick.

use nalgebra::{Vector3, Vector4};

use super::config::{BurstConfig, MStarPolicy, ScenarioConfig};
use super::metrics::MetricsRecord;
use super::world::World;
use super::SimError;
use crate::homography_task::{pixel_to_normalized_between, project_task, task_error, MovingAverage, ProjectionMode};
use crate::rcm_control::{PidGains, PidState};
use crate::view_graph::{target_homography, GraphError, ViewGraph};
use crate::vision::{Corruption, RansacParams};

/// Everything the servo loop needs from a scenario configuration.
#[derive(Debug, Clone)]
pub struct ServoSettings {
    pub gains: PidGains,
    pub damping: f64,
    pub integral_clamp: f64,
    pub frame_dt: f64,
    pub substeps: usize,
    pub mode: ProjectionMode,
    pub window: usize,
    pub m_star: MStarPolicy,
    pub sign: f64,
    pub intermediate_mpd_px: f64,
    pub final_mpd_px: f64,
    pub max_steps: usize,
    pub max_failures: usize,
    pub ransac: RansacParams,
    pub corruption: Corruption,
    pub bursts: Option<BurstConfig>,
    pub seed: u64,
}

impl ServoSettings {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        Ok(Self {
            gains: cfg.control.gains()?,
            damping: cfg.control.damping,
            integral_clamp: cfg.control.integral_clamp,
            frame_dt: cfg.control.dt,
            substeps: cfg.control.substeps,
            mode: cfg.task.mode,
            window: cfg.task.window,
            m_star: cfg.task.m_star,
            sign: cfg.task.sign,
            intermediate_mpd_px: cfg.convergence.intermediate_mpd_px,
            final_mpd_px: cfg.convergence.final_mpd_px,
            max_steps: cfg.convergence.max_steps,
            max_failures: cfg.convergence.max_failures,
            ransac: cfg.ransac,
            corruption: cfg.corruption,
            bursts: cfg.bursts(),
            seed: cfg.seed,
        })
    }

    /// Match corruption in effect at `step`.
    pub fn corruption_at(&self, step: usize) -> (Corruption, bool) {
        match &self.bursts {
            Some(b) if b.active(step) => (
                Corruption {
                    noise_px: self.corruption.noise_px,
                    outlier_rate: self.corruption.outlier_rate.max(b.outlier_rate),
                    dropout: self.corruption.dropout.max(b.dropout),
                },
                true,
            ),
            _ => (self.corruption, false),
        }
    }

    fn step_seed(&self, step: usize) -> u64 {
        self.seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServoStatus {
    Running,
    Converged,
    /// Too many consecutive registration failures.
    Failed,
    MaxSteps,
    Aborted,
}

impl ServoStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Running => "running",
            Self::Converged => "converged",
            Self::Failed => "failed",
            Self::MaxSteps => "max_steps",
            Self::Aborted => "aborted",
        }
    }

    pub fn is_finished(&self) -> bool {
        *self != Self::Running
    }
}

/// An in-progress servo along a graph path.
#[derive(Debug, Clone)]
pub struct ServoRun {
    settings: ServoSettings,
    path: Vec<usize>,
    index: usize,
    pid: PidState,
    smoother: MovingAverage,
    failures: usize,
    step: usize,
    status: ServoStatus,
    last_error: Vector4<f64>,
}

impl ServoRun {
    /// Plans the shortest path from the graph's current vertex to `target`.
    pub fn new(graph: &ViewGraph, target: usize, settings: ServoSettings) -> Result<Self, SimError> {
        let from = graph.current().ok_or(GraphError::UnknownVertex(target))?;
        let path = graph.shortest_path(from, target)?;
        let pid = PidState::new(settings.gains.channels(), settings.frame_dt / settings.substeps as f64, settings.integral_clamp)?;
        let smoother = MovingAverage::new(settings.window);
        Ok(Self { settings, path, index: 0, pid, smoother, failures: 0, step: 0, status: ServoStatus::Running, last_error: Vector4::zeros() })
    }

    pub fn path(&self) -> &[usize] {
        &self.path
    }

    pub fn active_vertex(&self) -> usize {
        self.path[self.index]
    }

    pub fn target(&self) -> usize {
        *self.path.last().expect("path is never empty")
    }

    pub fn status(&self) -> &ServoStatus {
        &self.status
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn settings(&self) -> &ServoSettings {
        &self.settings
    }

    pub fn abort(&mut self) {
        if !self.status.is_finished() {
            self.status = ServoStatus::Aborted;
        }
    }

    /// Observes, registers against the active vertex, and runs one frame of
    /// control. Returns the frame's metrics record.
    pub fn tick(&mut self, world: &mut World, graph: &mut ViewGraph) -> Result<MetricsRecord, SimError> {
        if self.status.is_finished() {
            return Err(SimError::InvalidConfig(format!("servo already finished ({})", self.status.as_str())));
        }
        self.step += 1;
        let step = self.step;
        let (corruption, burst) = self.settings.corruption_at(step);
        let mut events: Vec<String> = Vec::new();
        if burst {
            events.push("burst".into());
        }

        let vertex = graph.vertex(self.active_vertex())?.clone();
        let frame = world.camera().frame_size();
        let registration = world.observe().map_err(GraphError::from).and_then(|observations| {
            target_homography(&observations, &vertex, &corruption, frame, &self.settings.ransac, self.settings.step_seed(step))
        });

        let (mpd, inliers, task) = match registration {
            Ok(reg) => {
                self.failures = 0;
                let mpd = reg.mpd_px;
                let inliers = reg.inlier_count();
                let last = self.index + 1 == self.path.len();
                let threshold = if last { self.settings.final_mpd_px } else { self.settings.intermediate_mpd_px };
                if mpd <= threshold {
                    graph.set_current(self.active_vertex())?;
                    if last {
                        self.status = ServoStatus::Converged;
                        events.push("converged".into());
                        return Ok(self.record(world, mpd, inliers, events));
                    }
                    self.index += 1;
                    self.pid.reset();
                    self.smoother.clear();
                    events.push(format!("advance:{}", self.active_vertex()));
                    // the new vertex is registered on the next frame
                    (mpd, inliers, None)
                } else {
                    let k_cur = world.intrinsics();
                    let h = pixel_to_normalized_between(&reg.homography, &k_cur, &vertex.intrinsics)?;
                    let m_star = match self.settings.m_star {
                        MStarPolicy::PrincipalRay => Vector3::new(0.0, 0.0, 1.0),
                        MStarPolicy::TargetCentroid => {
                            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
                            for (m, inl) in reg.matches.matches.iter().zip(&reg.ransac.inliers) {
                                if *inl {
                                    let p = vertex.intrinsics.pixel_to_normalized(m.target);
                                    sx += p[0];
                                    sy += p[1];
                                    n += 1.0;
                                }
                            }
                            Vector3::new(sx / n, sy / n, 1.0)
                        }
                    };
                    let e = task_error(&h, &m_star)?;
                    let raw = project_task(&e.e_v, &e.e_w, self.settings.mode) * self.settings.sign;
                    (mpd, inliers, Some(self.smoother.push(raw)))
                }
            }
            Err(GraphError::Vision(err)) => {
                log::debug!("step {step}: registration failed: {err}");
                self.failures += 1;
                events.push("registration_failed".into());
                if self.failures >= self.settings.max_failures {
                    self.status = ServoStatus::Failed;
                    events.push("failed".into());
                    return Ok(self.record(world, f64::NAN, 0, events));
                }
                (f64::NAN, 0, None)
            }
            Err(other) => return Err(other.into()),
        };

        // Without a fresh measurement the camera holds still while the RCM is regulated.
        let e_task = task.unwrap_or_else(Vector4::zeros);
        self.last_error = e_task;
        for _ in 0..self.settings.substeps {
            world.control_step(&mut self.pid, &self.settings.gains, self.settings.damping, self.settings.mode, &e_task)?;
        }
        if step >= self.settings.max_steps {
            self.status = ServoStatus::MaxSteps;
            events.push("max_steps".into());
        }
        Ok(self.record(world, mpd, inliers, events))
    }

    fn record(&self, world: &World, mpd: f64, inliers: usize, events: Vec<String>) -> MetricsRecord {
        let tip = world.tip_position() * 1e3;
        let e = self.last_error;
        MetricsRecord {
            step: self.step,
            time_s: world.time_s(),
            rcm_error_mm: world.rcm().e_rcm.norm() * 1e3,
            e_t0: e[0],
            e_t1: e[1],
            e_t2: e[2],
            e_t3: e[3],
            mpd_px: mpd,
            inliers,
            tip_x_mm: tip.x,
            tip_y_mm: tip.y,
            tip_z_mm: tip.z,
            target_vertex: self.active_vertex(),
            event: events.join(";"),
        }
    }
}

/// Outcome of a complete servo.
#[derive(Debug, Clone)]
pub struct ServoOutcome {
    pub records: Vec<MetricsRecord>,
    pub status: ServoStatus,
    pub path: Vec<usize>,
}

impl ServoOutcome {
    pub fn converged(&self) -> bool {
        self.status == ServoStatus::Converged
    }
}

/// Runs a servo to completion from the graph's current vertex to `target`.
pub fn run_servo(world: &mut World, graph: &mut ViewGraph, target: usize, settings: ServoSettings) -> Result<ServoOutcome, SimError> {
    let mut run = ServoRun::new(graph, target, settings)?;
    let mut records = Vec::new();
    while !run.status().is_finished() {
        records.push(run.tick(world, graph)?);
    }
    Ok(ServoOutcome { records, status: run.status().clone(), path: run.path().to_vec() })
}
