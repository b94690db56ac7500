//! Robot side of the loop: drives the maze state machine and asks the server
//! for a command at every junction.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use super::frame::{decode_frame, encode_frame, Frame};
use super::status::MazeView;
use crate::mazebot::{Command, Event, Maze, Pose, Robot, RobotState};

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub server: SocketAddr,
    pub poll_interval: Duration,
    /// Connection attempts per outage before giving up.
    pub connect_attempts: u32,
    pub retry_backoff: Duration,
    pub io_timeout: Duration,
    /// Defaults to `4·width·height`.
    pub max_steps: Option<usize>,
}

impl ClientConfig {
    pub fn new(server: SocketAddr) -> Self {
        Self {
            server,
            poll_interval: Duration::from_millis(250),
            connect_attempts: 5,
            retry_backoff: Duration::from_millis(200),
            io_timeout: Duration::from_secs(10),
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceStep {
    pub t_ms: f64,
    pub before: RobotState,
    pub command: Option<Command>,
    pub events: Vec<Event>,
    pub pose: Pose,
}

/// One answered junction query.
#[derive(Debug, Clone, Serialize)]
pub struct JunctionRecord {
    /// Protocol id, strictly increasing over the run.
    pub junction_id: u32,
    /// The state machine's own junction counter.
    pub robot_junction: u32,
    pub pose: Pose,
    pub open_mask: u8,
    pub command: Command,
    pub confidence: f64,
    pub polls: u32,
    pub announced_ms: f64,
    pub decided_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobotTrace {
    pub maze: MazeView,
    pub steps: Vec<TraceStep>,
    pub junctions: Vec<JunctionRecord>,
    pub finished: bool,
    pub moves: usize,
    pub final_pose: Pose,
    pub elapsed_ms: f64,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("aborted: {reason}")]
    Aborted {
        reason: String,
        trace: Box<RobotTrace>,
    },
    #[error("step limit {limit} reached before the exit")]
    StepLimit {
        limit: usize,
        trace: Box<RobotTrace>,
    },
}

impl ClientError {
    pub fn trace(&self) -> &RobotTrace {
        match self {
            ClientError::Aborted { trace, .. } | ClientError::StepLimit { trace, .. } => trace,
        }
    }
}

struct Link<'a> {
    config: &'a ClientConfig,
    conn: Option<(BufReader<TcpStream>, TcpStream)>,
}

impl Link<'_> {
    fn connect(&mut self) -> Result<(), String> {
        if self.conn.is_some() {
            return Ok(());
        }
        let mut last = String::new();
        for attempt in 0..self.config.connect_attempts.max(1) {
            if attempt > 0 {
                thread::sleep(self.config.retry_backoff * attempt);
            }
            match TcpStream::connect_timeout(&self.config.server, self.config.io_timeout) {
                Ok(s) => {
                    s.set_read_timeout(Some(self.config.io_timeout))
                        .map_err(|e| e.to_string())?;
                    let _ = s.set_nodelay(true);
                    let w = s.try_clone().map_err(|e| e.to_string())?;
                    self.conn = Some((BufReader::new(s), w));
                    return Ok(());
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(format!(
            "could not connect to {} after {} attempts: {last}",
            self.config.server,
            self.config.connect_attempts.max(1)
        ))
    }

    fn exchange(&mut self, frame: &Frame) -> io::Result<Frame> {
        let (reader, writer) = self.conn.as_mut().ok_or(io::ErrorKind::NotConnected)?;
        let result = (|| {
            writer.write_all(&encode_frame(frame))?;
            let mut line = Vec::new();
            if reader.read_until(b'\n', &mut line)? == 0 {
                return Err(io::ErrorKind::UnexpectedEof.into());
            }
            decode_frame(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        })();
        if result.is_err() {
            self.conn = None;
        }
        result
    }
}

struct Query {
    junction_id: u32,
    command: Command,
    confidence: f64,
    polls: u32,
    announced: Instant,
}

/// Announces the junction and polls until a command arrives. A lost connection
/// is re-established and the junction announced again under a fresh id.
fn query(link: &mut Link<'_>, next_id: &mut u32, open_mask: u8) -> Result<Query, String> {
    let mut lost = 0;
    loop {
        if lost > link.config.connect_attempts {
            return Err(format!("connection lost {lost} times during one junction"));
        }
        link.connect()?;
        let junction_id = *next_id;
        *next_id += 1;
        let announced = Instant::now();
        match link.exchange(&Frame::Junction {
            id: junction_id,
            open_mask,
        }) {
            Ok(Frame::Pending { id }) if id == junction_id => {}
            Ok(Frame::Err { code, text }) => {
                return Err(format!("server refused junction: {code} {text}"))
            }
            Ok(other) => return Err(format!("unexpected reply to JUNCTION: {other}")),
            Err(_) => {
                lost += 1;
                continue;
            }
        }
        let mut polls = 0;
        loop {
            thread::sleep(link.config.poll_interval);
            polls += 1;
            match link.exchange(&Frame::Poll { id: junction_id }) {
                Ok(Frame::Pending { id }) if id == junction_id => {}
                Ok(Frame::Cmd {
                    id,
                    command,
                    confidence,
                }) if id == junction_id => {
                    return Ok(Query {
                        junction_id,
                        command,
                        confidence: confidence.value(),
                        polls,
                        announced,
                    });
                }
                Ok(Frame::Err { code, text }) => {
                    return Err(format!("server error: {code} {text}"))
                }
                Ok(other) => return Err(format!("unexpected reply to POLL: {other}")),
                Err(_) => {
                    lost += 1;
                    break;
                }
            }
        }
    }
}

/// Runs the robot from the maze start to the exit.
pub fn run_robot(maze: &Maze, config: &ClientConfig) -> Result<RobotTrace, ClientError> {
    let t0 = Instant::now();
    let ms = |t: Instant| t.duration_since(t0).as_secs_f64() * 1e3;
    let limit = config.max_steps.unwrap_or(4 * maze.width() * maze.height());
    let mut link = Link { config, conn: None };
    let mut robot = Robot::new(maze);
    let mut next_id = 1;
    let mut trace = RobotTrace {
        maze: MazeView::from(maze),
        steps: Vec::new(),
        junctions: Vec::new(),
        finished: false,
        moves: 0,
        final_pose: robot.pose,
        elapsed_ms: 0.0,
    };
    let finish = |trace: &mut RobotTrace, robot: &Robot| {
        trace.finished = robot.is_finished();
        trace.final_pose = robot.pose;
        trace.elapsed_ms = ms(Instant::now());
    };
    if let Err(reason) = link.connect() {
        finish(&mut trace, &robot);
        return Err(ClientError::Aborted {
            reason,
            trace: Box::new(trace),
        });
    }
    while !robot.is_finished() {
        if trace.steps.len() >= limit {
            finish(&mut trace, &robot);
            return Err(ClientError::StepLimit {
                limit,
                trace: Box::new(trace),
            });
        }
        let command = match robot.pending_junction(maze) {
            Some(j) => match query(&mut link, &mut next_id, j.open_mask) {
                Ok(q) => {
                    trace.junctions.push(JunctionRecord {
                        junction_id: q.junction_id,
                        robot_junction: j.junction_id,
                        pose: j.pose,
                        open_mask: j.open_mask,
                        command: q.command,
                        confidence: q.confidence,
                        polls: q.polls,
                        announced_ms: ms(q.announced),
                        decided_ms: ms(Instant::now()),
                    });
                    Some(q.command)
                }
                Err(reason) => {
                    finish(&mut trace, &robot);
                    return Err(ClientError::Aborted {
                        reason,
                        trace: Box::new(trace),
                    });
                }
            },
            None => None,
        };
        let (next, events) = robot.step(maze, command).map_err(|e| {
            let mut t = trace.clone();
            finish(&mut t, &robot);
            ClientError::Aborted {
                reason: e.to_string(),
                trace: Box::new(t),
            }
        })?;
        trace.moves += events
            .iter()
            .filter(|e| matches!(e, Event::Moved { .. }))
            .count();
        trace.steps.push(TraceStep {
            t_ms: ms(Instant::now()),
            before: robot.state,
            command,
            events,
            pose: next.pose,
        });
        robot = next;
    }
    finish(&mut trace, &robot);
    Ok(trace)
}
