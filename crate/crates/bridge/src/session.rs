//! The command state machine of one session.

use std::collections::VecDeque;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};
use serde_json::json;

use rcmservo_core::simulator::{
    build_world, capture, jog_controller, manual_jog, JogController, MetricsRecord, ScenarioConfig, ServoRun, ServoSettings, ServoStatus,
    SimError, World,
};
use rcmservo_core::view_graph::{GraphFile, PoseRecord, ViewGraph};

use crate::protocol::{Ack, Command, CommandKind, EvalData, Rejection, ServerMessage, ServoEvent, ServoProgress, Snapshot, Telemetry, EVAL_NOTE};

/// Records kept for `get_state`.
pub const METRICS_TAIL: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    ManualControl,
    GraphReady,
    Servoing,
    Fault,
}

impl std::fmt::Display for SessionState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Idle => "Idle",
            Self::ManualControl => "ManualControl",
            Self::GraphReady => "GraphReady",
            Self::Servoing => "Servoing",
            Self::Fault => "Fault",
        };
        f.write_str(s)
    }
}

/// Whether `command` is accepted in `state`.
///
/// `Idle` and `GraphReady` hand control to the operator on the first `jog`
/// or `capture`, entering `ManualControl`.
pub fn feasible(state: SessionState, command: CommandKind) -> bool {
    use CommandKind as C;
    use SessionState as S;
    match command {
        C::GetState | C::Reset => true,
        C::Jog | C::Capture => matches!(state, S::Idle | S::ManualControl | S::GraphReady),
        C::SelectAndExecute => matches!(state, S::ManualControl | S::GraphReady),
        C::Abort => state == S::Servoing,
    }
}

/// Reply to the issuing client plus events for every subscriber.
#[derive(Debug, Clone, PartialEq)]
pub struct Handled {
    pub reply: ServerMessage,
    pub events: Vec<ServerMessage>,
}

pub struct Session {
    cfg: ScenarioConfig,
    world: World,
    graph: ViewGraph,
    jog: JogController,
    state: SessionState,
    servo: Option<ServoRun>,
    last_mpd: Option<f64>,
    tail: VecDeque<MetricsRecord>,
    fault: Option<String>,
}

impl Session {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        let world = build_world(&cfg)?;
        let jog = jog_controller(&cfg)?;
        ServoSettings::from_config(&cfg)?;
        Ok(Self {
            cfg,
            world,
            graph: ViewGraph::new(),
            jog,
            state: SessionState::Idle,
            servo: None,
            last_mpd: None,
            tail: VecDeque::new(),
            fault: None,
        })
    }

    /// A fresh session resuming an exported graph. Starts in `GraphReady`
    /// when the graph is non-empty.
    pub fn with_graph(cfg: ScenarioConfig, graph: ViewGraph) -> Result<Self, SimError> {
        let mut s = Self::new(cfg)?;
        if !graph.is_empty() {
            s.state = SessionState::GraphReady;
        }
        s.graph = graph;
        Ok(s)
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn graph(&self) -> &ViewGraph {
        &self.graph
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn fault(&self) -> Option<&str> {
        self.fault.as_deref()
    }

    pub fn servo_step(&self) -> Option<usize> {
        self.servo.as_ref().map(ServoRun::steps)
    }

    pub fn metrics_tail(&self) -> impl Iterator<Item = &MetricsRecord> {
        self.tail.iter()
    }

    fn reject(&self, command: CommandKind, reason: String) -> Rejection {
        Rejection { command: Some(command), state: self.state, reason }
    }

    fn ack(&self, command: CommandKind, result: serde_json::Value) -> ServerMessage {
        ServerMessage::Ack(Ack { command, state: self.state, result })
    }

    fn enter_fault(&mut self, reason: String) {
        log::error!("session fault: {reason}");
        self.servo = None;
        self.fault = Some(reason);
        self.state = SessionState::Fault;
    }

    /// Applies one command. A rejection leaves the session untouched.
    pub fn handle(&mut self, command: &Command) -> Result<Handled, Rejection> {
        let kind = command.kind();
        if !feasible(self.state, kind) {
            return Err(self.reject(kind, format!("{kind} is infeasible in state {}", self.state)));
        }
        let plain = |reply| Handled { reply, events: Vec::new() };
        match command {
            Command::GetState => Ok(plain(ServerMessage::Snapshot(Box::new(self.snapshot())))),
            Command::Jog { twist } => {
                if !twist.iter().all(|v| v.is_finite()) {
                    return Err(self.reject(kind, "twist must be finite".into()));
                }
                self.state = SessionState::ManualControl;
                match manual_jog(&mut self.world, &mut self.jog, &Vector6::from_row_slice(twist)) {
                    Ok(()) => Ok(plain(self.ack(kind, json!({ "rcm_error_mm": self.world.rcm().e_rcm.norm() * 1e3 })))),
                    Err(e) => {
                        self.enter_fault(format!("jog failed: {e}"));
                        Ok(plain(self.ack(kind, json!({ "error": e.to_string() }))))
                    }
                }
            }
            Command::Capture => {
                let mut graph = self.graph.clone();
                let vertex = capture(&self.world, &mut graph).map_err(|e| self.reject(kind, format!("capture failed: {e}")))?;
                self.graph = graph;
                self.state = SessionState::ManualControl;
                Ok(plain(self.ack(kind, json!({ "vertex": vertex, "features": self.graph.vertices()[vertex].features.len() }))))
            }
            Command::SelectAndExecute { target } => {
                if self.graph.vertex(*target).is_err() {
                    return Err(self.reject(kind, format!("unknown target vertex {target}")));
                }
                let settings = ServoSettings::from_config(&self.cfg).map_err(|e| self.reject(kind, e.to_string()))?;
                let run = ServoRun::new(&self.graph, *target, settings).map_err(|e| self.reject(kind, e.to_string()))?;
                let path = run.path().to_vec();
                self.servo = Some(run);
                self.last_mpd = None;
                self.state = SessionState::Servoing;
                let started = self.servo_event("started", None);
                Ok(Handled { reply: self.ack(kind, json!({ "target": target, "path": path })), events: vec![started] })
            }
            Command::Abort => {
                if let Some(run) = self.servo.as_mut() {
                    run.abort();
                }
                let event = self.servo_event("aborted", Some("robot halted".into()));
                self.servo = None;
                self.state = SessionState::ManualControl;
                Ok(Handled { reply: self.ack(kind, serde_json::Value::Null), events: vec![event] })
            }
            Command::Reset => {
                let world = match build_world(&self.cfg) {
                    Ok(w) => w,
                    Err(e) => {
                        self.enter_fault(format!("reset failed: {e}"));
                        return Ok(plain(self.ack(kind, json!({ "error": e.to_string() }))));
                    }
                };
                self.jog = jog_controller(&self.cfg).expect("validated at construction");
                self.world = world;
                self.graph = ViewGraph::new();
                self.servo = None;
                self.last_mpd = None;
                self.tail.clear();
                self.fault = None;
                self.state = SessionState::Idle;
                Ok(plain(self.ack(kind, serde_json::Value::Null)))
            }
        }
    }

    /// One control-loop tick. Advances a running servo by one frame and
    /// returns its telemetry and servo events; does nothing otherwise.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        let Some(run) = self.servo.as_mut() else {
            return Vec::new();
        };
        let record = match run.tick(&mut self.world, &mut self.graph) {
            Ok(r) => r,
            Err(e) => {
                let ev = self.servo_event("error", Some(e.to_string()));
                self.enter_fault(format!("servo failed: {e}"));
                return vec![ev];
            }
        };
        let status = run.status().clone();
        self.last_mpd = record.mpd_px.is_finite().then_some(record.mpd_px);
        if self.tail.len() == METRICS_TAIL {
            self.tail.pop_front();
        }
        self.tail.push_back(record.clone());

        let mut out = Vec::new();
        let advances = record.event.split(';').any(|e| e.starts_with("advance:"));
        match status {
            ServoStatus::Converged => self.state = SessionState::GraphReady,
            ServoStatus::Failed | ServoStatus::MaxSteps => {
                self.state = SessionState::Fault;
                self.fault = Some(format!("servo ended with status {}", status.as_str()));
            }
            ServoStatus::Running | ServoStatus::Aborted => {}
        }
        out.push(ServerMessage::Telemetry(Box::new(Telemetry {
            record,
            state: self.state,
            servo: self.progress(),
            observations: self.observations(),
            eval: self.eval(),
        })));
        if advances {
            out.push(self.servo_event("advance", None));
        }
        if status.is_finished() {
            out.push(self.servo_event(status.as_str(), None));
            self.servo = None;
        }
        out
    }

    fn progress(&self) -> Option<ServoProgress> {
        self.servo.as_ref().map(|run| ServoProgress {
            target: run.target(),
            path: run.path().to_vec(),
            active_vertex: run.active_vertex(),
            step: run.steps(),
            mpd_px: self.last_mpd,
        })
    }

    fn servo_event(&self, kind: &str, detail: Option<String>) -> ServerMessage {
        let run = self.servo.as_ref().expect("servo events need a servo");
        ServerMessage::ServoEvent(ServoEvent {
            kind: kind.into(),
            target: run.target(),
            path: run.path().to_vec(),
            active_vertex: run.active_vertex(),
            step: run.steps(),
            detail,
        })
    }

    fn observations(&self) -> Vec<rcmservo_core::vision::FeatureObservation> {
        self.world.observe().map(|o| o.into_iter().filter(|f| f.inside_fov).collect()).unwrap_or_default()
    }

    fn eval(&self) -> EvalData {
        let mm = |v: nalgebra::Vector3<f64>| [v.x * 1e3, v.y * 1e3, v.z * 1e3];
        EvalData {
            note: EVAL_NOTE.into(),
            camera_pose: PoseRecord::from(&self.world.camera_pose()),
            tip_mm: mm(self.world.tip_position()),
            trocar_mm: mm(self.world.x_trocar()),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            state: self.state,
            fault: self.fault.clone(),
            time_s: self.world.time_s(),
            q: self.world.q().0.as_slice().to_vec(),
            rcm_error_mm: self.world.rcm().e_rcm.norm() * 1e3,
            frame_size: self.world.camera().frame_size(),
            observations: self.observations(),
            graph: GraphFile::from(&self.graph),
            servo: self.progress(),
            metrics_tail: self.tail.iter().cloned().collect(),
            eval: self.eval(),
        }
    }
}
