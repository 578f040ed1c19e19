//! Live session service: drives the presenter over a WebSocket, records the
//! tracker stream and writes logs in the simulator's schema.
//!
//! Session socket messages are JSON text frames. Core to presenter:
//! `session_start`, `break`, `end` and `ping`; presenter to core: the onset,
//! keypress, `resume` and `abort` events plus `pong`. A `trial` field is the
//! position in the `trials` list of `session_start` (practice trials first).
//!
//! Three clocks are involved. Presenter timestamps are mapped onto the core's
//! monotonic clock with the ping/pong handshake, and core time onto the gaze
//! clock with the smallest observed frame latency. Logs only carry gaze-clock
//! times.

use crate::scheduler::{break_points, generate_practice, generate_session, ScheduleError, SessionConfig, TrialSpec};
use crate::simulator::{simulate_session, SessionTiming, SimError, SubjectModel};
use crate::stats::median;
use crate::tracker::{
    record_gaze, record_trials, FrameSource, GazeFrame, MockTracker, Pacing, ResponseKey, TrackerClient, TrackerError,
    TrialRecord,
};
use chrono::{Local, NaiveDateTime};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};
use thiserror::Error;
use tungstenite::{Message, WebSocket};

pub const MIN_PINGS: usize = 5;
/// Round-trip spread above which the clock estimate is flagged.
pub const JITTER_WARNING_MS: f64 = 50.0;
/// How long the core waits for a response to the last target before ending.
pub const RESPONSE_WINDOW_MS: i64 = 2000;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("tracker: {0}")]
    Tracker(#[from] TrackerError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("session socket: {0}")]
    Socket(String),
    #[error("no pong for ping {nonce} within {timeout:?}")]
    NoPong { nonce: u64, timeout: Duration },
    #[error("at least {MIN_PINGS} pings are required, configured {0}")]
    TooFewPings(usize),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<tungstenite::Error> for ServiceError {
    fn from(e: tungstenite::Error) -> Self {
        ServiceError::Socket(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CoreMessage {
    SessionStart { trials: Vec<TrialSpec>, config: SessionConfig },
    Break { after_trial: u32 },
    End,
    Ping { ts_core_ms: f64, nonce: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UiMessage {
    FixationOnset { trial: usize, ts_ui_ms: f64 },
    CueOnset { trial: usize, ts_ui_ms: f64 },
    TargetOnset { trial: usize, ts_ui_ms: f64 },
    Keypress { trial: usize, ts_ui_ms: f64, key: ResponseKey },
    Resume { trial: usize, ts_ui_ms: f64 },
    Abort { trial: usize, ts_ui_ms: f64 },
    Pong { ts_ui_ms: f64, nonce: u64 },
}

/// One ping/pong exchange, all times in ms. `core_sent` and `core_received`
/// are on the core clock, `ui` on the presenter clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PingSample {
    pub core_sent: f64,
    pub ui: f64,
    pub core_received: f64,
}

impl PingSample {
    pub fn rtt(&self) -> f64 {
        self.core_received - self.core_sent
    }

    /// Core clock minus presenter clock, assuming a symmetric link.
    pub fn offset(&self) -> f64 {
        self.core_received - self.ui - self.rtt() / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockEstimate {
    /// Add to a presenter timestamp to get core time.
    pub ui_to_core_ms: f64,
    pub rtt_jitter_ms: f64,
    pub samples: Vec<PingSample>,
    pub warning: Option<String>,
}

/// Median offset over the exchanges; flags a round-trip spread above
/// [`JITTER_WARNING_MS`].
pub fn estimate_clock(samples: &[PingSample]) -> Option<ClockEstimate> {
    let offsets: Vec<f64> = samples.iter().map(PingSample::offset).collect();
    let ui_to_core_ms = median(&offsets)?;
    let rtts = samples.iter().map(PingSample::rtt);
    let rtt_jitter_ms = rtts.clone().fold(f64::NEG_INFINITY, f64::max) - rtts.fold(f64::INFINITY, f64::min);
    let warning = (rtt_jitter_ms > JITTER_WARNING_MS)
        .then(|| format!("round-trip jitter {rtt_jitter_ms:.1} ms exceeds {JITTER_WARNING_MS} ms"));
    Some(ClockEstimate { ui_to_core_ms, rtt_jitter_ms, samples: samples.to_vec(), warning })
}

/// Presenter clock to gaze clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockMap {
    pub ui_to_core_ms: f64,
    pub core_to_gaze_ms: f64,
}

impl ClockMap {
    pub fn to_gaze(&self, ts_ui_ms: f64) -> i64 {
        (ts_ui_ms + self.ui_to_core_ms + self.core_to_gaze_ms).round() as i64
    }
}

/// Schedule for one live session: practice trials followed by the main blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub session_id: String,
    pub config: SessionConfig,
    pub trials: Vec<TrialSpec>,
    pub practice_count: usize,
}

impl SessionPlan {
    pub fn new(session_id: impl Into<String>, config: SessionConfig) -> Result<Self, ScheduleError> {
        let mut trials = generate_practice(&config);
        let practice_count = trials.len();
        trials.extend(generate_session(&config)?);
        Ok(SessionPlan { session_id: session_id.into(), config, trials, practice_count })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    AbortedInPractice,
    Aborted,
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Running,
    OnBreak,
    Finishing { deadline_core_ms: f64 },
    Done(Outcome),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Progress {
    cue: Option<f64>,
    target: Option<f64>,
    key: Option<(ResponseKey, f64)>,
}

/// Session state machine. All presenter events are fed through
/// [`handle`](Self::handle) in arrival order; timers through
/// [`tick`](Self::tick).
#[derive(Debug, Clone)]
pub struct SessionMachine {
    plan: SessionPlan,
    progress: Vec<Progress>,
    phase: Phase,
    breaks: BTreeSet<u32>,
    response_window_ms: f64,
    pub warnings: Vec<String>,
}

impl SessionMachine {
    pub fn new(plan: SessionPlan) -> Self {
        let breaks = break_points(&plan.config).into_iter().collect();
        let progress = vec![Progress::default(); plan.trials.len()];
        SessionMachine {
            plan,
            progress,
            phase: Phase::Running,
            breaks,
            response_window_ms: RESPONSE_WINDOW_MS as f64,
            warnings: Vec::new(),
        }
    }

    pub fn plan(&self) -> &SessionPlan {
        &self.plan
    }

    pub fn start_message(&self) -> CoreMessage {
        CoreMessage::SessionStart { trials: self.plan.trials.clone(), config: self.plan.config.clone() }
    }

    pub fn outcome(&self) -> Option<Outcome> {
        match self.phase {
            Phase::Done(o) => Some(o),
            _ => None,
        }
    }

    pub fn on_break(&self) -> bool {
        self.phase == Phase::OnBreak
    }

    fn finish(&mut self, outcome: Outcome) -> Vec<CoreMessage> {
        self.phase = Phase::Done(outcome);
        vec![CoreMessage::End]
    }

    pub fn handle(&mut self, msg: UiMessage, core_now_ms: f64) -> Vec<CoreMessage> {
        if self.outcome().is_some() {
            return Vec::new();
        }
        let trial = match msg {
            UiMessage::Pong { .. } => return Vec::new(),
            UiMessage::FixationOnset { trial, .. }
            | UiMessage::CueOnset { trial, .. }
            | UiMessage::TargetOnset { trial, .. }
            | UiMessage::Keypress { trial, .. }
            | UiMessage::Resume { trial, .. }
            | UiMessage::Abort { trial, .. } => trial,
        };
        if trial >= self.progress.len() {
            self.warnings.push(format!("event for unknown trial {trial} ignored"));
            return Vec::new();
        }
        let last = self.progress.len() - 1;
        let p = &mut self.progress[trial];
        match msg {
            UiMessage::FixationOnset { .. } | UiMessage::Pong { .. } => Vec::new(),
            UiMessage::CueOnset { ts_ui_ms, .. } => {
                p.cue.get_or_insert(ts_ui_ms);
                Vec::new()
            }
            UiMessage::TargetOnset { ts_ui_ms, .. } => {
                p.target.get_or_insert(ts_ui_ms);
                if trial == last {
                    self.phase = Phase::Finishing { deadline_core_ms: core_now_ms + self.response_window_ms };
                    return Vec::new();
                }
                let Some(ordinal) = (trial + 1).checked_sub(self.plan.practice_count) else {
                    return Vec::new();
                };
                let ordinal = ordinal as u32;
                if self.breaks.remove(&ordinal) {
                    self.phase = Phase::OnBreak;
                    return vec![CoreMessage::Break { after_trial: ordinal }];
                }
                Vec::new()
            }
            UiMessage::Keypress { ts_ui_ms, key, .. } => {
                // only the first press after the target counts
                if p.key.is_none() && p.target.is_some_and(|t| ts_ui_ms >= t) {
                    p.key = Some((key, ts_ui_ms));
                    if trial == last && matches!(self.phase, Phase::Finishing { .. }) {
                        return self.finish(Outcome::Completed);
                    }
                }
                Vec::new()
            }
            UiMessage::Resume { .. } => {
                if self.phase == Phase::OnBreak {
                    self.phase = Phase::Running;
                }
                Vec::new()
            }
            UiMessage::Abort { .. } => {
                let outcome =
                    if trial < self.plan.practice_count { Outcome::AbortedInPractice } else { Outcome::Aborted };
                self.finish(outcome)
            }
        }
    }

    pub fn tick(&mut self, core_now_ms: f64) -> Vec<CoreMessage> {
        match self.phase {
            Phase::Finishing { deadline_core_ms } if core_now_ms >= deadline_core_ms => self.finish(Outcome::Completed),
            _ => Vec::new(),
        }
    }

    pub fn disconnect(&mut self) {
        if self.outcome().is_none() {
            self.phase = Phase::Done(Outcome::Disconnected);
        }
    }

    /// Records of every trial whose target was shown, on the gaze clock.
    pub fn records(&self, clock: &ClockMap) -> Vec<TrialRecord> {
        let cue_to_target = self.plan.config.cue_to_target_ms as f64;
        self.plan
            .trials
            .iter()
            .zip(&self.progress)
            .filter_map(|(spec, p)| {
                let target = p.target?;
                let cue = p.cue.unwrap_or(target - cue_to_target);
                let mut r = TrialRecord::pending(
                    &self.plan.session_id,
                    spec.clone(),
                    clock.to_gaze(cue),
                    clock.to_gaze(target),
                );
                if let (false, Some((key, at))) = (spec.baseline_mode, p.key) {
                    r.response_key = key;
                    r.rt_ms = Some((at - target).round() as i64);
                    r.correct = Some(key.matches(spec.direction));
                }
                Some(r)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub enum TrackerSource {
    Connect(String),
    /// Spawn a mock tracker replaying a simulated session.
    Mock {
        pacing: Pacing,
        model: Box<SubjectModel>,
    },
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub session_id: String,
    pub session: SessionConfig,
    pub out_dir: PathBuf,
    pub tracker: TrackerSource,
    pub ui_addr: String,
    pub pings: usize,
    pub pong_timeout: Duration,
}

impl ServeConfig {
    pub fn new(session: SessionConfig, out_dir: impl Into<PathBuf>) -> Self {
        ServeConfig {
            session_id: format!("session-{}", session.seed),
            session,
            out_dir: out_dir.into(),
            tracker: TrackerSource::Mock { pacing: Pacing::RealTime, model: Box::default() },
            ui_addr: "127.0.0.1:8765".into(),
            pings: 8,
            pong_timeout: Duration::from_secs(5),
        }
    }
}

/// Written next to the logs; `partial` marks sessions that did not complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub outcome: Outcome,
    pub partial: bool,
    pub wall_clock_start: NaiveDateTime,
    pub practice_trials_run: usize,
    pub trials_run: usize,
    pub frames_recorded: usize,
    pub clock: Option<ClockEstimate>,
    pub core_to_gaze_ms: Option<f64>,
    pub warnings: Vec<String>,
    pub config: SessionConfig,
}

pub const SESSION_META_FILE: &str = "session.json";
pub const GAZE_FILE: &str = "gaze.csv";
pub const TRIALS_FILE: &str = "trials.csv";
pub const PRACTICE_TRIALS_FILE: &str = "practice_trials.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct ServeReport {
    pub meta: SessionMeta,
    pub files: Vec<PathBuf>,
}

/// Records frames on its own thread so that event handling never waits for
/// the tracker.
struct Recorder {
    frames: Arc<Mutex<Vec<GazeFrame>>>,
    /// Largest gaze timestamp minus core receive time seen so far.
    best_offset: Arc<AtomicI64>,
    socket: TcpStream,
    handle: JoinHandle<()>,
}

impl Recorder {
    fn start(mut client: TrackerClient, epoch: Instant) -> Result<Self, ServiceError> {
        let socket = client.shutdown_handle()?;
        let frames = Arc::new(Mutex::new(Vec::new()));
        let best_offset = Arc::new(AtomicI64::new(i64::MIN));
        let handle = {
            let frames = Arc::clone(&frames);
            let best_offset = Arc::clone(&best_offset);
            thread::spawn(move || loop {
                match client.next_frame() {
                    Ok(Some(frame)) => {
                        let received = epoch.elapsed().as_millis() as i64;
                        best_offset.fetch_max(frame.ts_ms - received, Ordering::SeqCst);
                        frames.lock().expect("recorder lock").push(frame);
                    }
                    Ok(None) => break,
                    Err(e) => {
                        warn!("tracker stream ended: {e}");
                        break;
                    }
                }
            })
        };
        Ok(Recorder { frames, best_offset, socket, handle })
    }

    fn stop(self) -> (Vec<GazeFrame>, Option<f64>) {
        let _ = self.socket.shutdown(Shutdown::Both);
        let _ = self.handle.join();
        let offset = self.best_offset.load(Ordering::SeqCst);
        let frames = std::mem::take(&mut *self.frames.lock().expect("recorder lock"));
        (frames, (offset != i64::MIN).then_some(offset as f64))
    }
}

pub struct SessionServer {
    config: ServeConfig,
    plan: SessionPlan,
    listener: TcpListener,
    recorder: Recorder,
    epoch: Instant,
    _mock: Option<MockTracker>,
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &CoreMessage) -> Result<(), ServiceError> {
    ws.send(Message::text(serde_json::to_string(msg)?))?;
    Ok(())
}

enum Incoming {
    Message(UiMessage),
    Idle,
    Closed,
}

fn receive(ws: &mut WebSocket<TcpStream>, warnings: &mut Vec<String>) -> Incoming {
    match ws.read() {
        Ok(Message::Text(text)) => match serde_json::from_str(text.as_str()) {
            Ok(msg) => Incoming::Message(msg),
            Err(e) => {
                warnings.push(format!("unreadable presenter message {:?}: {e}", text.as_str()));
                Incoming::Idle
            }
        },
        Ok(Message::Close(_)) => Incoming::Closed,
        Ok(_) => Incoming::Idle,
        Err(tungstenite::Error::Io(e))
            if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) =>
        {
            Incoming::Idle
        }
        Err(e) => {
            info!("session socket closed: {e}");
            Incoming::Closed
        }
    }
}

impl SessionServer {
    /// Connect to (or spawn) the tracker, start recording and open the
    /// session socket.
    pub fn bind(config: ServeConfig) -> Result<Self, ServiceError> {
        if config.pings < MIN_PINGS {
            return Err(ServiceError::TooFewPings(config.pings));
        }
        let plan = SessionPlan::new(config.session_id.clone(), config.session.clone())?;
        let (addr, mock) = match &config.tracker {
            TrackerSource::Connect(addr) => (addr.clone(), None),
            TrackerSource::Mock { pacing, model } => {
                let sim =
                    simulate_session(model, &plan.trials, &SessionTiming::from_config(&plan.config), plan.config.seed)?;
                let mock = MockTracker::serve(FrameSource::replay(sim.frames), "127.0.0.1:0", *pacing)?;
                (mock.local_addr().to_string(), Some(mock))
            }
        };
        let epoch = Instant::now();
        let recorder = Recorder::start(TrackerClient::connect(addr.as_str())?, epoch)?;
        let listener = TcpListener::bind(&config.ui_addr)
            .map_err(|source| ServiceError::Bind { addr: config.ui_addr.clone(), source })?;
        Ok(SessionServer { config, plan, listener, recorder, epoch, _mock: mock })
    }

    pub fn ui_addr(&self) -> Result<SocketAddr, ServiceError> {
        Ok(self.listener.local_addr()?)
    }

    fn now(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64() * 1000.0
    }

    fn handshake(
        &self,
        ws: &mut WebSocket<TcpStream>,
        warnings: &mut Vec<String>,
    ) -> Result<ClockEstimate, ServiceError> {
        let mut samples = Vec::new();
        for nonce in 0..self.config.pings as u64 {
            let core_sent = self.now();
            send(ws, &CoreMessage::Ping { ts_core_ms: core_sent, nonce })?;
            let deadline = Instant::now() + self.config.pong_timeout;
            loop {
                if Instant::now() >= deadline {
                    return Err(ServiceError::NoPong { nonce, timeout: self.config.pong_timeout });
                }
                match receive(ws, warnings) {
                    Incoming::Message(UiMessage::Pong { ts_ui_ms, nonce: n }) if n == nonce => {
                        samples.push(PingSample { core_sent, ui: ts_ui_ms, core_received: self.now() });
                        break;
                    }
                    Incoming::Message(other) => warnings.push(format!("ignored during handshake: {other:?}")),
                    Incoming::Idle => {}
                    Incoming::Closed => return Err(ServiceError::Socket("closed during clock handshake".into())),
                }
            }
        }
        let estimate = estimate_clock(&samples).expect("at least MIN_PINGS samples");
        if let Some(w) = &estimate.warning {
            warn!("{w}");
            warnings.push(w.clone());
        }
        Ok(estimate)
    }

    /// Serve one presenter connection until the session ends, then write the
    /// logs.
    pub fn run(self) -> Result<ServeReport, ServiceError> {
        let wall_clock_start = Local::now().naive_local();
        info!("waiting for the presenter on {}", self.ui_addr()?);
        let (stream, peer) = self.listener.accept()?;
        info!("presenter connected from {peer}");
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_millis(20)))?;
        let mut ws = tungstenite::accept(stream).map_err(|e| ServiceError::Socket(e.to_string()))?;

        let mut machine = SessionMachine::new(self.plan.clone());
        let mut warnings = Vec::new();
        let clock = match self.handshake(&mut ws, &mut warnings) {
            Ok(c) => Some(c),
            Err(ServiceError::Socket(reason)) => {
                warnings.push(reason);
                machine.disconnect();
                None
            }
            Err(e) => return Err(e),
        };

        if clock.is_some() {
            send(&mut ws, &machine.start_message())?;
        }
        while machine.outcome().is_none() {
            let replies = match receive(&mut ws, &mut warnings) {
                Incoming::Message(msg) => machine.handle(msg, self.now()),
                Incoming::Idle => machine.tick(self.now()),
                Incoming::Closed => {
                    machine.disconnect();
                    Vec::new()
                }
            };
            for reply in &replies {
                if let Err(e) = send(&mut ws, reply) {
                    warnings.push(format!("send failed: {e}"));
                    machine.disconnect();
                }
            }
        }
        let _ = ws.close(None);
        let _ = ws.flush();

        let outcome = machine.outcome().expect("loop ends when the session is done");
        warnings.append(&mut machine.warnings);
        let (frames, core_to_gaze_ms) = self.recorder.stop();
        if core_to_gaze_ms.is_none() {
            warnings.push("no gaze frames received; onsets left on the core clock".into());
        }
        let map = ClockMap {
            ui_to_core_ms: clock.as_ref().map_or(0.0, |c| c.ui_to_core_ms),
            core_to_gaze_ms: core_to_gaze_ms.unwrap_or(0.0),
        };
        let records = machine.records(&map);
        let practice_trials_run = records.iter().filter(|r| r.trial.practice).count();
        let meta = SessionMeta {
            session_id: self.plan.session_id.clone(),
            outcome,
            partial: outcome != Outcome::Completed,
            wall_clock_start,
            practice_trials_run,
            trials_run: records.len() - practice_trials_run,
            frames_recorded: frames.len(),
            clock,
            core_to_gaze_ms,
            warnings,
            config: self.plan.config.clone(),
        };
        let files = write_outputs(&self.config.out_dir, &meta, &records, &frames)?;
        Ok(ServeReport { meta, files })
    }
}

fn write_outputs(
    dir: &Path,
    meta: &SessionMeta,
    records: &[TrialRecord],
    frames: &[GazeFrame],
) -> Result<Vec<PathBuf>, ServiceError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    if meta.outcome == Outcome::AbortedInPractice {
        let path = dir.join(PRACTICE_TRIALS_FILE);
        record_trials(records, &path)?;
        files.push(path);
    } else {
        let gaze = dir.join(GAZE_FILE);
        record_gaze(frames, &gaze)?;
        let trials = dir.join(TRIALS_FILE);
        record_trials(records, &trials)?;
        files.extend([gaze, trials]);
    }
    let path = dir.join(SESSION_META_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(meta)?)?;
    files.push(path);
    Ok(files)
}
