//! Command service: one session thread owns the state; connection threads
//! exchange messages with it and observers read published snapshots.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use super::frame::{decode_frame, encode_frame, Confidence, Frame};
use super::sources::{AcquireRequest, SignalSource};
use super::status::{ConsoleMessage, MazeView, PhaseName, StatusBoard, StatusSnapshot};
use crate::dsp::FeaturePipeline;
use crate::mazebot::{sense, Command, Maze, Pose, Robot, RobotState};
use crate::ssvepnet::Cnn;

pub const DEFAULT_ROBOT_PORT: u16 = 7071;
pub const DEFAULT_CONSOLE_PORT: u16 = 7072;
/// Samples acquired ahead of the classified window so the filter settles.
pub const DEFAULT_PRE_ROLL: usize = 256;

pub const ERR_MALFORMED: u16 = 400;
pub const ERR_NO_SESSION: u16 = 404;
pub const ERR_UNEXPECTED: u16 = 405;
pub const ERR_STALE_ID: u16 = 409;
pub const ERR_SOURCE: u16 = 500;

const TICK: Duration = Duration::from_millis(100);
const IO_POLL: Duration = Duration::from_millis(20);
const MAX_LINE: usize = 4096;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error("model and pipeline disagree: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decision {
    pub command: Command,
    pub confidence: Confidence,
    pub probs: [f64; 3],
}

/// Filter, features and network applied to one acquired block.
#[derive(Debug, Clone)]
pub struct Classifier {
    pipeline: FeaturePipeline,
    model: Cnn,
    pre_roll: usize,
    mask_blocked: bool,
}

impl Classifier {
    pub fn new(
        pipeline: FeaturePipeline,
        model: Cnn,
        pre_roll: usize,
        mask_blocked: bool,
    ) -> Result<Self, ServeError> {
        let feature_len = pipeline
            .config()
            .feature_len()
            .map_err(|e| ServeError::Incompatible(e.to_string()))?;
        if feature_len != model.config.input_len {
            return Err(ServeError::Incompatible(format!(
                "pipeline yields {feature_len} features, model expects {}",
                model.config.input_len
            )));
        }
        if model.config.n_classes != 3 {
            return Err(ServeError::Incompatible(format!(
                "model has {} classes, commands need 3",
                model.config.n_classes
            )));
        }
        Ok(Self {
            pipeline,
            model,
            pre_roll,
            mask_blocked,
        })
    }

    pub fn fs_hz(&self) -> u32 {
        self.pipeline.config().fs_hz
    }

    /// Samples requested from the source per stimulus.
    pub fn n_samples(&self) -> usize {
        self.pre_roll + self.pipeline.config().window.window_len
    }

    /// Classifies the most recent window of `x`. With masking on, classes whose
    /// direction is closed in `open_mask` cannot win (unless all are closed).
    pub fn classify(&self, x: &[f64], open_mask: u8) -> Result<Decision, String> {
        let features = self
            .pipeline
            .latest_window_features(x)
            .map_err(|e| e.to_string())?;
        let pred = if self.mask_blocked {
            let allowed: Vec<bool> = (0..3).map(|c| open_mask & (1 << c) != 0).collect();
            self.model.predict_masked(&features.values, &allowed)
        } else {
            self.model.predict(&features.values)
        }
        .map_err(|e| e.to_string())?;
        Ok(Decision {
            command: Command::try_from(pred.class_index as u8).map_err(|e| e.to_string())?,
            confidence: Confidence::from_prob(pred.confidence()),
            probs: [pred.probs[0], pred.probs[1], pred.probs[2]],
        })
    }
}

/// Server-side replica of the robot, advanced with the same deterministic
/// state machine, so the pose is known without extra protocol fields.
#[derive(Debug, Clone)]
struct Mirror {
    maze: Maze,
    robot: Robot,
    synced: bool,
}

impl Mirror {
    fn new(maze: Maze) -> Self {
        let robot = Robot::new(&maze);
        Self {
            maze,
            robot,
            synced: true,
        }
    }

    fn pose(&self) -> Option<Pose> {
        self.synced.then_some(self.robot.pose)
    }

    fn reset_if_finished(&mut self) {
        if self.robot.is_finished() || !self.synced {
            *self = Self::new(self.maze.clone());
        }
    }

    fn on_junction(&mut self, open_mask: u8) -> Option<Pose> {
        if !self.synced {
            return None;
        }
        let limit = 4 * self.maze.width() * self.maze.height();
        for _ in 0..limit {
            match self.robot.state {
                RobotState::AwaitingCommand { .. } | RobotState::Finished => break,
                _ => match self.robot.step(&self.maze, None) {
                    Ok((next, _)) => self.robot = next,
                    Err(_) => break,
                },
            }
        }
        let agrees = matches!(self.robot.state, RobotState::AwaitingCommand { .. })
            && sense(&self.maze, self.robot.pose).open_mask() == open_mask;
        self.synced = agrees;
        self.pose()
    }

    fn on_decision(&mut self, command: Command) {
        if self.synced && matches!(self.robot.state, RobotState::AwaitingCommand { .. }) {
            match self.robot.step(&self.maze, Some(command)) {
                Ok((next, _)) => self.robot = next,
                Err(_) => self.synced = false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Idle,
    Stimulus {
        id: u32,
        open_mask: u8,
        started: Instant,
        deadline: Instant,
    },
    Decided {
        id: u32,
        decision: Decision,
    },
}

/// One completed stimulus window, as seen by the server.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub junction_id: u32,
    pub open_mask: u8,
    pub pose: Option<Pose>,
    pub decision: Option<Decision>,
    pub error: Option<String>,
    /// From JUNCTION receipt to the decision.
    pub stimulus_ms: f64,
}

/// Session state and its transition rules, independent of sockets and threads.
pub struct Session {
    phase: Phase,
    last_id: Option<u32>,
    failed: Option<(u32, String)>,
    stimulus: Duration,
    classifier: Classifier,
    source: Box<dyn SignalSource>,
    mirror: Option<Mirror>,
    maze_view: Option<MazeView>,
    records: Vec<DecisionRecord>,
}

impl Session {
    pub fn new(
        classifier: Classifier,
        source: Box<dyn SignalSource>,
        stimulus: Duration,
        maze: Option<Maze>,
    ) -> Self {
        Self {
            phase: Phase::Idle,
            last_id: None,
            failed: None,
            stimulus,
            classifier,
            source,
            maze_view: maze.as_ref().map(MazeView::from),
            mirror: maze.map(Mirror::new),
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[DecisionRecord] {
        &self.records
    }

    /// A new robot connection starts a fresh id sequence.
    pub fn on_robot_connected(&mut self) {
        self.phase = Phase::Idle;
        self.last_id = None;
        self.failed = None;
        if let Some(m) = &mut self.mirror {
            m.reset_if_finished();
        }
    }

    pub fn select(&mut self, target: Option<u8>) {
        self.source.select(target);
    }

    pub fn deadline(&self) -> Option<Instant> {
        match self.phase {
            Phase::Stimulus { deadline, .. } => Some(deadline),
            _ => None,
        }
    }

    pub fn on_frame(&mut self, frame: Frame, now: Instant) -> Frame {
        self.resolve_due(now);
        match frame {
            Frame::Junction { id, open_mask } => {
                if let Some(last) = self.last_id {
                    if id <= last {
                        return Frame::error(
                            ERR_STALE_ID,
                            format!("junction id {id} not above {last}"),
                        );
                    }
                }
                self.last_id = Some(id);
                self.failed = None;
                if let Some(m) = &mut self.mirror {
                    m.on_junction(open_mask);
                }
                self.phase = Phase::Stimulus {
                    id,
                    open_mask,
                    started: now,
                    deadline: now + self.stimulus,
                };
                Frame::Pending { id }
            }
            Frame::Poll { id } => self.poll_reply(id),
            other => Frame::error(ERR_UNEXPECTED, format!("{} is not a request", other.verb())),
        }
    }

    fn poll_reply(&self, id: u32) -> Frame {
        let Some(last) = self.last_id else {
            return Frame::error(ERR_NO_SESSION, "no session");
        };
        match self.phase {
            Phase::Stimulus { id: cur, .. } if cur == id => Frame::Pending { id },
            Phase::Decided { id: cur, decision } if cur == id => Frame::Cmd {
                id,
                command: decision.command,
                confidence: decision.confidence,
            },
            Phase::Idle => match &self.failed {
                Some((fid, text)) if *fid == id => Frame::error(ERR_SOURCE, text),
                _ if id < last => Frame::error(ERR_STALE_ID, format!("stale junction id {id}")),
                _ => Frame::error(ERR_STALE_ID, format!("unknown junction id {id}")),
            },
            _ if id < last => Frame::error(ERR_STALE_ID, format!("stale junction id {id}")),
            _ => Frame::error(ERR_STALE_ID, format!("unknown junction id {id}")),
        }
    }

    /// Closes the stimulus window once its deadline has passed. Returns whether
    /// the phase changed.
    pub fn resolve_due(&mut self, now: Instant) -> bool {
        let Phase::Stimulus {
            id,
            open_mask,
            started,
            deadline,
        } = self.phase
        else {
            return false;
        };
        if now < deadline {
            return false;
        }
        let pose = self.mirror.as_ref().and_then(Mirror::pose);
        let req = AcquireRequest {
            junction_id: id,
            open_mask,
            pose,
            maze: self.mirror.as_ref().map(|m| &m.maze),
            n_samples: self.classifier.n_samples(),
            fs_hz: self.classifier.fs_hz(),
        };
        let outcome = self
            .source
            .acquire(&req)
            .map_err(|e| format!("signal source failure: {e}"))
            .and_then(|x| {
                self.classifier
                    .classify(&x, open_mask)
                    .map_err(|e| format!("classifier failure: {e}"))
            });
        let stimulus_ms = Instant::now().duration_since(started).as_secs_f64() * 1e3;
        match outcome {
            Ok(decision) => {
                if let Some(m) = &mut self.mirror {
                    m.on_decision(decision.command);
                }
                self.phase = Phase::Decided { id, decision };
                self.records.push(DecisionRecord {
                    junction_id: id,
                    open_mask,
                    pose,
                    decision: Some(decision),
                    error: None,
                    stimulus_ms,
                });
            }
            Err(text) => {
                self.phase = Phase::Idle;
                self.failed = Some((id, text.clone()));
                self.records.push(DecisionRecord {
                    junction_id: id,
                    open_mask,
                    pose,
                    decision: None,
                    error: Some(text),
                    stimulus_ms,
                });
            }
        }
        true
    }

    pub fn snapshot(&self, now: Instant) -> StatusSnapshot {
        let mut s = StatusSnapshot::idle(
            self.maze_view.clone(),
            self.mirror.as_ref().and_then(Mirror::pose),
        );
        s.selected = self.source.selected();
        match self.phase {
            Phase::Idle => {}
            Phase::Stimulus {
                id,
                open_mask,
                deadline,
                ..
            } => {
                s.phase = PhaseName::Stimulus;
                s.junction_id = Some(id);
                s.open_mask = Some(open_mask);
                s.countdown_ms = deadline.saturating_duration_since(now).as_millis() as u64;
            }
            Phase::Decided { id, decision } => {
                s.phase = PhaseName::Decided;
                s.junction_id = Some(id);
                s.probs = Some(decision.probs);
                s.command = Some(decision.command.index());
                s.confidence = Some(decision.confidence.value());
            }
        }
        s
    }
}

enum SessionMsg {
    Frame(Frame, Sender<Frame>),
    RobotConnected,
    Console(ConsoleMessage),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub robot_bind: SocketAddr,
    /// `None` disables the status stream.
    pub console_bind: Option<SocketAddr>,
    pub stimulus: Duration,
    pub maze: Option<Maze>,
}

pub struct ServerHandle {
    robot_addr: SocketAddr,
    console_addr: Option<SocketAddr>,
    shutdown: Arc<AtomicBool>,
    board: Arc<StatusBoard>,
    records: Arc<Mutex<Vec<DecisionRecord>>>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn robot_addr(&self) -> SocketAddr {
        self.robot_addr
    }

    pub fn console_addr(&self) -> Option<SocketAddr> {
        self.console_addr
    }

    pub fn status(&self) -> StatusSnapshot {
        serde_json::from_str(&self.board.latest().1).expect("published snapshot parses")
    }

    /// Completed stimulus windows so far.
    pub fn records(&self) -> Vec<DecisionRecord> {
        self.records.lock().expect("records lock").clone()
    }

    /// Setting this flag stops the server; `wait` then returns.
    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }

    /// Blocks until the shutdown flag is set, then joins every thread.
    pub fn wait(mut self) {
        while !self.shutdown.load(Ordering::SeqCst) {
            thread::sleep(IO_POLL);
        }
        self.join();
    }

    pub fn shutdown(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        self.join();
    }

    fn join(&mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        self.join();
    }
}

fn bind(addr: SocketAddr) -> Result<TcpListener, ServeError> {
    let l = TcpListener::bind(addr).map_err(|source| ServeError::Bind { addr, source })?;
    l.set_nonblocking(true)?;
    Ok(l)
}

pub fn serve(
    config: ServerConfig,
    classifier: Classifier,
    source: Box<dyn SignalSource>,
) -> Result<ServerHandle, ServeError> {
    let robot_listener = bind(config.robot_bind)?;
    let console_listener = config.console_bind.map(bind).transpose()?;
    let robot_addr = robot_listener.local_addr()?;
    let console_addr = console_listener
        .as_ref()
        .map(|l| l.local_addr())
        .transpose()?;

    let shutdown = Arc::new(AtomicBool::new(false));
    let board = StatusBoard::new();
    let records = Arc::new(Mutex::new(Vec::new()));
    let (tx, rx) = mpsc::channel();

    let session = Session::new(classifier, source, config.stimulus, config.maze);
    board.publish(&session.snapshot(Instant::now()));
    let mut threads = vec![{
        let (shutdown, board, records) = (shutdown.clone(), board.clone(), records.clone());
        thread::spawn(move || run_session(session, rx, &board, &records, &shutdown))
    }];
    threads.push({
        let (shutdown, tx) = (shutdown.clone(), tx.clone());
        thread::spawn(move || {
            accept_loop(robot_listener, &shutdown, |stream| {
                let (shutdown, tx) = (shutdown.clone(), tx.clone());
                thread::spawn(move || handle_robot(stream, &tx, &shutdown))
            })
        })
    });
    if let Some(listener) = console_listener {
        let (shutdown, board) = (shutdown.clone(), board.clone());
        threads.push(thread::spawn(move || {
            accept_loop(listener, &shutdown, |stream| {
                let (shutdown, tx, board) = (shutdown.clone(), tx.clone(), board.clone());
                thread::spawn(move || handle_console(stream, &tx, &board, &shutdown))
            })
        }));
    }
    Ok(ServerHandle {
        robot_addr,
        console_addr,
        shutdown,
        board,
        records,
        threads,
    })
}

fn run_session(
    mut session: Session,
    rx: Receiver<SessionMsg>,
    board: &StatusBoard,
    records: &Mutex<Vec<DecisionRecord>>,
    shutdown: &AtomicBool,
) {
    let publish = |s: &Session| {
        let now = Instant::now();
        *records.lock().expect("records lock") = s.records().to_vec();
        board.publish(&s.snapshot(now));
    };
    while !shutdown.load(Ordering::SeqCst) {
        if session.resolve_due(Instant::now()) {
            publish(&session);
        }
        let wait = session.deadline().map_or(TICK, |d| {
            d.saturating_duration_since(Instant::now()).min(TICK)
        });
        match rx.recv_timeout(wait) {
            Ok(msg) => {
                let now = Instant::now();
                match msg {
                    SessionMsg::Frame(frame, reply) => {
                        let _ = reply.send(session.on_frame(frame, now));
                    }
                    SessionMsg::RobotConnected => session.on_robot_connected(),
                    SessionMsg::Console(ConsoleMessage::Select { target }) => {
                        session.select(Some(target))
                    }
                    SessionMsg::Console(ConsoleMessage::Deselect) => session.select(None),
                }
                publish(&session);
            }
            Err(RecvTimeoutError::Timeout) => {
                if session.deadline().is_some() {
                    publish(&session);
                }
            }
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
}

fn accept_loop<F>(listener: TcpListener, shutdown: &AtomicBool, mut spawn: F)
where
    F: FnMut(TcpStream) -> JoinHandle<()>,
{
    let mut handlers = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                if stream.set_nonblocking(false).is_ok()
                    && stream.set_read_timeout(Some(IO_POLL)).is_ok()
                {
                    let _ = stream.set_nodelay(true);
                    handlers.push(spawn(stream));
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(IO_POLL),
            Err(_) => thread::sleep(IO_POLL),
        }
        handlers.retain(|h: &JoinHandle<()>| !h.is_finished());
    }
    for h in handlers {
        let _ = h.join();
    }
}

enum LineRead {
    Line(Vec<u8>),
    Idle,
    Closed,
}

/// Reads one line, tolerating read timeouts; partial data stays in `buf`.
fn read_line(reader: &mut BufReader<TcpStream>, buf: &mut Vec<u8>) -> LineRead {
    match reader.read_until(b'\n', buf) {
        Ok(0) => LineRead::Closed,
        Ok(_) if buf.ends_with(b"\n") => LineRead::Line(std::mem::take(buf)),
        Ok(_) => LineRead::Closed,
        Err(e)
            if matches!(
                e.kind(),
                io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
            ) =>
        {
            if buf.len() > MAX_LINE {
                LineRead::Closed
            } else {
                LineRead::Idle
            }
        }
        Err(e) if e.kind() == io::ErrorKind::Interrupted => LineRead::Idle,
        Err(_) => LineRead::Closed,
    }
}

fn handle_robot(stream: TcpStream, tx: &Sender<SessionMsg>, shutdown: &AtomicBool) {
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(stream);
    if tx.send(SessionMsg::RobotConnected).is_err() {
        return;
    }
    let mut buf = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        let line = match read_line(&mut reader, &mut buf) {
            LineRead::Line(l) => l,
            LineRead::Idle => continue,
            LineRead::Closed => break,
        };
        let reply = match decode_frame(&line) {
            Ok(frame) => {
                let (reply_tx, reply_rx) = mpsc::channel();
                if tx.send(SessionMsg::Frame(frame, reply_tx)).is_err() {
                    break;
                }
                match reply_rx.recv() {
                    Ok(f) => f,
                    Err(_) => break,
                }
            }
            Err(e) => Frame::error(ERR_MALFORMED, e.to_string()),
        };
        if writer.write_all(&encode_frame(&reply)).is_err() {
            break;
        }
    }
}

fn handle_console(
    stream: TcpStream,
    tx: &Sender<SessionMsg>,
    board: &StatusBoard,
    shutdown: &AtomicBool,
) {
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(stream);
    let mut seen = 0;
    let mut buf = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        let (version, line) = board.latest();
        if version > seen {
            seen = version;
            if writer
                .write_all(line.as_bytes())
                .and_then(|_| writer.write_all(b"\n"))
                .is_err()
            {
                break;
            }
        }
        match read_line(&mut reader, &mut buf) {
            LineRead::Line(l) => {
                let msg = std::str::from_utf8(&l).ok().and_then(ConsoleMessage::parse);
                if let Some(msg) = msg {
                    if tx.send(SessionMsg::Console(msg)).is_err() {
                        break;
                    }
                }
            }
            LineRead::Idle => {}
            LineRead::Closed => break,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::PipelineConfig;
    use crate::loopnet::sources::{ReplaySource, SourceError};
    use crate::ssvepnet::{init_params, CnnConfig};

    struct Failing;

    impl SignalSource for Failing {
        fn acquire(&mut self, _: &AcquireRequest<'_>) -> Result<Vec<f64>, SourceError> {
            Err(SourceError::Exhausted { served: 0 })
        }
    }

    struct Constant;

    impl SignalSource for Constant {
        fn acquire(&mut self, req: &AcquireRequest<'_>) -> Result<Vec<f64>, SourceError> {
            Ok((0..req.n_samples).map(|i| (i as f64 * 0.3).sin()).collect())
        }
    }

    fn classifier() -> Classifier {
        let pipeline = FeaturePipeline::new(PipelineConfig::default()).unwrap();
        let c = CnnConfig::default();
        Classifier::new(
            pipeline,
            Cnn::new(c, init_params(&c, 1).unwrap()).unwrap(),
            DEFAULT_PRE_ROLL,
            true,
        )
        .unwrap()
    }

    fn session(source: Box<dyn SignalSource>) -> Session {
        Session::new(classifier(), source, Duration::from_secs(3), None)
    }

    #[test]
    fn poll_before_junction_is_no_session() {
        let mut s = session(Box::new(Constant));
        assert_eq!(
            s.on_frame(Frame::Poll { id: 1 }, Instant::now()),
            Frame::error(ERR_NO_SESSION, "no session")
        );
    }

    #[test]
    fn pending_until_deadline_then_cmd() {
        let mut s = session(Box::new(Constant));
        let t0 = Instant::now();
        assert_eq!(
            s.on_frame(
                Frame::Junction {
                    id: 1,
                    open_mask: 7
                },
                t0
            ),
            Frame::Pending { id: 1 }
        );
        for ms in [0, 100, 1500, 2999] {
            let reply = s.on_frame(Frame::Poll { id: 1 }, t0 + Duration::from_millis(ms));
            assert_eq!(reply, Frame::Pending { id: 1 }, "at {ms} ms");
        }
        let reply = s.on_frame(Frame::Poll { id: 1 }, t0 + Duration::from_secs(3));
        assert!(matches!(reply, Frame::Cmd { id: 1, .. }), "{reply:?}");
        assert_eq!(
            s.on_frame(Frame::Poll { id: 1 }, t0 + Duration::from_secs(4)),
            reply
        );
    }

    #[test]
    fn stale_and_unknown_ids() {
        let mut s = session(Box::new(Constant));
        let t0 = Instant::now();
        s.on_frame(
            Frame::Junction {
                id: 5,
                open_mask: 7,
            },
            t0,
        );
        assert!(matches!(
            s.on_frame(Frame::Poll { id: 4 }, t0),
            Frame::Err {
                code: ERR_STALE_ID,
                ..
            }
        ));
        assert!(matches!(
            s.on_frame(Frame::Poll { id: 6 }, t0),
            Frame::Err {
                code: ERR_STALE_ID,
                ..
            }
        ));
        assert!(matches!(
            s.on_frame(
                Frame::Junction {
                    id: 5,
                    open_mask: 7
                },
                t0
            ),
            Frame::Err {
                code: ERR_STALE_ID,
                ..
            }
        ));
        assert!(matches!(
            s.on_frame(Frame::Pending { id: 5 }, t0),
            Frame::Err {
                code: ERR_UNEXPECTED,
                ..
            }
        ));
    }

    #[test]
    fn source_failure_reports_error_and_goes_idle() {
        let mut s = session(Box::new(Failing));
        let t0 = Instant::now();
        s.on_frame(
            Frame::Junction {
                id: 1,
                open_mask: 7,
            },
            t0,
        );
        let reply = s.on_frame(Frame::Poll { id: 1 }, t0 + Duration::from_secs(3));
        match reply {
            Frame::Err { code, text } => {
                assert_eq!(code, ERR_SOURCE);
                assert!(text.contains("exhausted"), "{text}");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(s.snapshot(t0).phase, PhaseName::Idle);
        assert_eq!(
            s.on_frame(
                Frame::Junction {
                    id: 2,
                    open_mask: 7
                },
                t0
            ),
            Frame::Pending { id: 2 }
        );
    }

    #[test]
    fn masking_never_picks_closed_direction() {
        let mut s = session(Box::new(Constant));
        let t0 = Instant::now();
        for (i, mask) in [0b001u8, 0b010, 0b100].into_iter().enumerate() {
            let id = i as u32 + 1;
            s.on_frame(
                Frame::Junction {
                    id,
                    open_mask: mask,
                },
                t0,
            );
            match s.on_frame(Frame::Poll { id }, t0 + Duration::from_secs(3)) {
                Frame::Cmd { command, .. } => assert_eq!(1 << command.index(), mask),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn snapshot_tracks_phase_and_countdown() {
        let mut s = session(Box::new(Constant));
        let t0 = Instant::now();
        s.on_frame(
            Frame::Junction {
                id: 1,
                open_mask: 7,
            },
            t0,
        );
        let snap = s.snapshot(t0 + Duration::from_millis(1000));
        assert_eq!(snap.phase, PhaseName::Stimulus);
        assert_eq!(snap.countdown_ms, 2000);
        s.resolve_due(t0 + Duration::from_secs(3));
        let snap = s.snapshot(t0 + Duration::from_secs(3));
        assert_eq!(snap.phase, PhaseName::Decided);
        let p = snap.probs.unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incompatible_model_is_refused() {
        let pipeline = FeaturePipeline::new(PipelineConfig::default()).unwrap();
        let c = CnnConfig {
            input_len: 40,
            ..CnnConfig::default()
        };
        let model = Cnn::new(c, init_params(&c, 1).unwrap()).unwrap();
        assert!(matches!(
            Classifier::new(pipeline, model, 256, true),
            Err(ServeError::Incompatible(_))
        ));
    }

    #[test]
    fn empty_replay_fails_at_first_stimulus() {
        let rec = crate::eegio::EegRecording::new(256, vec!["Oz".into()], vec![], vec![]).unwrap();
        let mut s = session(Box::new(ReplaySource::new(rec, 0)));
        let t0 = Instant::now();
        s.on_frame(
            Frame::Junction {
                id: 1,
                open_mask: 7,
            },
            t0,
        );
        assert!(matches!(
            s.on_frame(Frame::Poll { id: 1 }, t0 + Duration::from_secs(3)),
            Frame::Err {
                code: ERR_SOURCE,
                ..
            }
        ));
    }
}
