//! The session's control loop: one task owns the [`Session`], applies queued
//! commands in arrival order and ticks the servo at the frame period.

use std::sync::Arc;
use std::time::Duration;

use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio::time::{interval, Instant, MissedTickBehavior};

use crate::protocol::{encode_server_message, Command, Gap, Heartbeat, ServerMessage};
use crate::session::{Session, SessionState};

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// Servo tick period. Defaults to the session's frame period.
    pub tick: Option<Duration>,
    pub heartbeat: Duration,
    /// Broadcast events buffered per subscriber before the oldest are dropped.
    pub event_buffer: usize,
    pub command_queue: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self { tick: None, heartbeat: Duration::from_secs(1), event_buffer: 256, command_queue: 64 }
    }
}

/// State visible to connections without going through the command queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionStatus {
    pub state: SessionState,
    pub servo_step: Option<usize>,
    /// `seq` of the most recent broadcast event.
    pub last_seq: u64,
}

#[derive(Debug)]
pub(crate) struct Broadcast {
    pub seq: u64,
    pub text: String,
}

struct Request {
    seq: u64,
    command: Command,
    reply: oneshot::Sender<(ServerMessage, String)>,
}

#[derive(Clone)]
pub struct SessionHandle {
    commands: mpsc::Sender<Request>,
    events: broadcast::Sender<Arc<Broadcast>>,
    status: watch::Receiver<SessionStatus>,
}

impl SessionHandle {
    /// Queues a command and waits for the reply. Returns `None` once the
    /// session loop has stopped.
    pub async fn request(&self, seq: u64, command: Command) -> Option<(ServerMessage, String)> {
        let (tx, rx) = oneshot::channel();
        self.commands.send(Request { seq, command, reply: tx }).await.ok()?;
        rx.await.ok()
    }

    pub fn status(&self) -> SessionStatus {
        *self.status.borrow()
    }

    /// Subscribes to broadcast events. A subscriber joining mid-servo first
    /// receives a `gap` notice carrying the current step.
    pub fn subscribe(&self) -> Subscription {
        let rx = self.events.subscribe();
        let status = self.status();
        let pending = (status.state == SessionState::Servoing).then(|| {
            let gap = ServerMessage::Gap(Gap { reason: "joined".into(), missed: 0, state: status.state, current_step: status.servo_step });
            encode_server_message(status.last_seq, &gap)
        });
        Subscription { rx, status: self.status.clone(), pending, missed: None }
    }
}

/// One subscriber's view of the event stream.
pub struct Subscription {
    rx: broadcast::Receiver<Arc<Broadcast>>,
    status: watch::Receiver<SessionStatus>,
    pending: Option<String>,
    missed: Option<u64>,
}

impl Subscription {
    /// Next encoded event. After the subscriber falls behind and buffered
    /// events are dropped, a `gap` notice precedes the next delivered event.
    /// Returns `None` when the session has stopped. Cancel safe.
    pub async fn next(&mut self) -> Option<String> {
        if let Some(p) = self.pending.take() {
            return Some(p);
        }
        loop {
            match self.rx.recv().await {
                Ok(b) => {
                    let Some(missed) = self.missed.take() else {
                        return Some(b.text.clone());
                    };
                    let status = *self.status.borrow();
                    let gap = ServerMessage::Gap(Gap { reason: "lagged".into(), missed, state: status.state, current_step: status.servo_step });
                    self.pending = Some(b.text.clone());
                    return Some(encode_server_message(b.seq, &gap));
                }
                Err(broadcast::error::RecvError::Lagged(n)) => self.missed = Some(self.missed.unwrap_or(0) + n),
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    }
}

struct Loop {
    session: Session,
    events: broadcast::Sender<Arc<Broadcast>>,
    status: watch::Sender<SessionStatus>,
    seq: u64,
}

impl Loop {
    fn publish(&mut self, message: &ServerMessage) {
        self.seq += 1;
        let text = encode_server_message(self.seq, message);
        // no subscribers is not an error
        let _ = self.events.send(Arc::new(Broadcast { seq: self.seq, text }));
    }

    fn update_status(&self) {
        let s = SessionStatus { state: self.session.state(), servo_step: self.session.servo_step(), last_seq: self.seq };
        self.status.send_if_modified(|old| {
            let changed = *old != s;
            *old = s;
            changed
        });
    }
}

/// Starts the session loop. The loop stops when every [`SessionHandle`] is
/// dropped and hands the session back through the join handle.
pub fn spawn_session(session: Session, options: ServiceOptions) -> (SessionHandle, JoinHandle<Session>) {
    let (cmd_tx, mut cmd_rx) = mpsc::channel::<Request>(options.command_queue.max(1));
    let (ev_tx, _) = broadcast::channel(options.event_buffer.max(1));
    let initial = SessionStatus { state: session.state(), servo_step: session.servo_step(), last_seq: 0 };
    let (status_tx, status_rx) = watch::channel(initial);
    let tick = options.tick.unwrap_or_else(|| Duration::from_secs_f64(session.config().control.dt));
    let handle = SessionHandle { commands: cmd_tx, events: ev_tx.clone(), status: status_rx };
    let mut lp = Loop { session, events: ev_tx, status: status_tx, seq: 0 };

    let task = tokio::spawn(async move {
        let mut ticker = interval(tick);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
        let mut last_heartbeat = Instant::now();
        loop {
            tokio::select! {
                biased;
                request = cmd_rx.recv() => {
                    let Some(req) = request else { break };
                    let (reply, events) = match lp.session.handle(&req.command) {
                        Ok(h) => (h.reply, h.events),
                        Err(r) => (ServerMessage::Rejected(r), Vec::new()),
                    };
                    for e in &events {
                        lp.publish(e);
                    }
                    lp.update_status();
                    let text = encode_server_message(req.seq, &reply);
                    let _ = req.reply.send((reply, text));
                }
                _ = ticker.tick() => {
                    if lp.session.state() == SessionState::Servoing {
                        for e in lp.session.tick() {
                            lp.publish(&e);
                        }
                        lp.update_status();
                    } else if last_heartbeat.elapsed() >= options.heartbeat {
                        last_heartbeat = Instant::now();
                        let hb = Heartbeat {
                            state: lp.session.state(),
                            time_s: lp.session.world().time_s(),
                            vertices: lp.session.graph().len(),
                        };
                        lp.publish(&ServerMessage::Heartbeat(hb));
                        lp.update_status();
                    }
                }
            }
        }
        lp.session
    });
    (handle, task)
}
