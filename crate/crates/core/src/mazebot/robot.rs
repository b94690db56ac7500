//! Sensing, the navigation state machine, and the scripted operator.

use serde::Serialize;
use thiserror::Error;

use super::{Cell, Command, Heading, Maze, Pose, Relative};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Reading {
    Open,
    Blocked,
}

/// What the three range sensors report, relative to the heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SensorReading {
    pub front: Reading,
    pub left: Reading,
    pub right: Reading,
}

impl SensorReading {
    pub fn get(&self, rel: Relative) -> Reading {
        match rel {
            Relative::Left => self.left,
            Relative::Front => self.front,
            Relative::Right => self.right,
        }
    }

    /// Bit `i` set when command `i` leads into an open edge (bit0 left, bit1 front, bit2 right).
    pub fn open_mask(&self) -> u8 {
        Relative::ALL
            .iter()
            .enumerate()
            .filter(|(_, &r)| self.get(r) == Reading::Open)
            .fold(0, |m, (i, _)| m | (1 << i))
    }

    pub fn open_count(&self) -> u32 {
        self.open_mask().count_ones()
    }
}

pub fn sense(maze: &Maze, pose: Pose) -> SensorReading {
    let read = |rel: Relative| {
        if maze.is_open(pose.cell, pose.heading.turn(rel)) {
            Reading::Open
        } else {
            Reading::Blocked
        }
    };
    SensorReading {
        front: read(Relative::Front),
        left: read(Relative::Left),
        right: read(Relative::Right),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RobotState {
    Cruising,
    AtJunction { open_mask: u8 },
    AwaitingCommand { junction_id: u32 },
    Executing { command: Command },
    DeadEnd,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Moved { from: Cell, to: Cell },
    Turned { from: Heading, to: Heading },
    JunctionDetected { open_mask: u8 },
    JunctionAnnounced { junction_id: u32, open_mask: u8 },
    Executing { junction_id: u32, command: Command },
    Rejected { junction_id: u32, command: Command },
    DeadEnd,
    UTurn { heading: Heading },
    Finished { cell: Cell },
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("command {command:?} given while robot is {state:?}")]
    UnexpectedCommand { state: RobotState, command: Command },
    #[error("junction {junction_id} needs a command")]
    MissingCommand { junction_id: u32 },
    #[error("cannot execute {command:?} at {pose:?}: edge is closed")]
    IntoWall { pose: Pose, command: Command },
    #[error("step limit {limit} reached before the exit")]
    StepLimit {
        limit: usize,
        trace: Box<Vec<TraceEntry>>,
    },
}

/// The robot's full state. `step` is pure: it returns the successor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Robot {
    pub state: RobotState,
    pub pose: Pose,
    pub next_junction_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct JunctionInfo {
    pub junction_id: u32,
    pub pose: Pose,
    pub open_mask: u8,
}

impl Robot {
    pub fn new(maze: &Maze) -> Self {
        Self {
            state: RobotState::Cruising,
            pose: maze.start(),
            next_junction_id: 1,
        }
    }

    /// The junction currently waiting for a command, if any.
    pub fn pending_junction(&self, maze: &Maze) -> Option<JunctionInfo> {
        match self.state {
            RobotState::AwaitingCommand { junction_id } => Some(JunctionInfo {
                junction_id,
                pose: self.pose,
                open_mask: sense(maze, self.pose).open_mask(),
            }),
            _ => None,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.state == RobotState::Finished
    }

    /// Turn toward `rel` then advance one cell.
    fn advance(&mut self, maze: &Maze, rel: Relative, events: &mut Vec<Event>) -> Option<()> {
        let heading = self.pose.heading.turn(rel);
        let to = maze.passage(self.pose.cell, heading)?;
        if heading != self.pose.heading {
            events.push(Event::Turned {
                from: self.pose.heading,
                to: heading,
            });
        }
        events.push(Event::Moved {
            from: self.pose.cell,
            to,
        });
        self.pose = Pose { cell: to, heading };
        if to == maze.exit() {
            self.state = RobotState::Finished;
            events.push(Event::Finished { cell: to });
        } else {
            self.state = RobotState::Cruising;
        }
        Some(())
    }

    fn announce(&mut self, open_mask: u8, events: &mut Vec<Event>) {
        let junction_id = self.next_junction_id;
        self.next_junction_id += 1;
        events.push(Event::JunctionAnnounced {
            junction_id,
            open_mask,
        });
        self.state = RobotState::AwaitingCommand { junction_id };
    }

    pub fn step(
        &self,
        maze: &Maze,
        command: Option<Command>,
    ) -> Result<(Robot, Vec<Event>), StepError> {
        let mut next = *self;
        let mut events = Vec::new();
        match (self.state, command) {
            (RobotState::AwaitingCommand { junction_id }, Some(cmd)) => {
                if sense(maze, self.pose).get(cmd.relative()) == Reading::Blocked {
                    events.push(Event::Rejected {
                        junction_id,
                        command: cmd,
                    });
                } else {
                    events.push(Event::Executing {
                        junction_id,
                        command: cmd,
                    });
                    next.advance(maze, cmd.relative(), &mut events)
                        .expect("edge checked open");
                }
            }
            (RobotState::AwaitingCommand { junction_id }, None) => {
                return Err(StepError::MissingCommand { junction_id });
            }
            (state, Some(cmd)) => {
                return Err(StepError::UnexpectedCommand {
                    state,
                    command: cmd,
                })
            }
            (RobotState::Finished, None) => {}
            (RobotState::Cruising, None) => {
                if self.pose.cell == maze.exit() {
                    next.state = RobotState::Finished;
                    events.push(Event::Finished {
                        cell: self.pose.cell,
                    });
                    return Ok((next, events));
                }
                let reading = sense(maze, self.pose);
                let mask = reading.open_mask();
                match reading.open_count() {
                    0 => {
                        next.state = RobotState::DeadEnd;
                        events.push(Event::DeadEnd);
                    }
                    1 => {
                        let rel = Relative::ALL[mask.trailing_zeros() as usize];
                        next.advance(maze, rel, &mut events).expect("sensed open");
                    }
                    _ => {
                        events.push(Event::JunctionDetected { open_mask: mask });
                        next.announce(mask, &mut events);
                    }
                }
            }
            (RobotState::AtJunction { open_mask }, None) => next.announce(open_mask, &mut events),
            (RobotState::Executing { command }, None) => {
                if next
                    .advance(maze, command.relative(), &mut events)
                    .is_none()
                {
                    return Err(StepError::IntoWall {
                        pose: self.pose,
                        command,
                    });
                }
            }
            (RobotState::DeadEnd, None) => {
                let heading = self.pose.heading.reverse();
                next.pose.heading = heading;
                next.state = RobotState::Cruising;
                events.push(Event::UTurn { heading });
            }
        }
        Ok((next, events))
    }
}

/// Answers junction queries.
pub trait Operator {
    fn decide(&mut self, maze: &Maze, junction: &JunctionInfo) -> Command;
}

impl<F: FnMut(&JunctionInfo) -> Command> Operator for F {
    fn decide(&mut self, _maze: &Maze, junction: &JunctionInfo) -> Command {
        self(junction)
    }
}

/// The command that follows the breadth-first shortest path from `pose`, or
/// `None` when that path starts behind the robot.
pub fn oracle_command(maze: &Maze, pose: Pose) -> Option<Command> {
    let path = maze.shortest_path(pose.cell, maze.exit())?;
    let next = *path.get(1)?;
    Relative::ALL
        .into_iter()
        .find(|&rel| maze.passage(pose.cell, pose.heading.turn(rel)) == Some(next))
        .map(Command::from_relative)
}

/// Scripted operator that always knows the shortest route.
#[derive(Debug, Default, Clone, Copy)]
pub struct BfsOperator;

impl Operator for BfsOperator {
    fn decide(&mut self, maze: &Maze, junction: &JunctionInfo) -> Command {
        oracle_command(maze, junction.pose).unwrap_or_else(|| {
            if junction.open_mask == 0 {
                Command::FORWARD
            } else {
                Command::try_from(junction.open_mask.trailing_zeros() as u8).expect("3-bit mask")
            }
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub step: usize,
    pub before: Robot,
    pub command: Option<Command>,
    pub after: Robot,
    pub events: Vec<Event>,
}

pub type SolveTrace = Vec<TraceEntry>;

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutcome {
    pub trace: SolveTrace,
    pub robot: Robot,
    pub moves: usize,
    pub commands: Vec<(u32, Command)>,
}

/// Runs the robot to the exit, asking `operator` at every junction. The
/// default limit is `4·width·height` steps.
pub fn solve_with_oracle(
    maze: &Maze,
    operator: &mut impl Operator,
    max_steps: Option<usize>,
) -> Result<SolveOutcome, StepError> {
    let limit = max_steps.unwrap_or(4 * maze.width() * maze.height());
    let mut robot = Robot::new(maze);
    let mut trace = Vec::new();
    let mut moves = 0;
    let mut commands = Vec::new();
    while !robot.is_finished() {
        if trace.len() == limit {
            return Err(StepError::StepLimit {
                limit,
                trace: Box::new(trace),
            });
        }
        let command = robot.pending_junction(maze).map(|j| {
            let c = operator.decide(maze, &j);
            commands.push((j.junction_id, c));
            c
        });
        let (next, events) = robot.step(maze, command)?;
        moves += events
            .iter()
            .filter(|e| matches!(e, Event::Moved { .. }))
            .count();
        trace.push(TraceEntry {
            step: trace.len(),
            before: robot,
            command,
            after: next,
            events,
        });
        robot = next;
    }
    Ok(SolveOutcome {
        trace,
        robot,
        moves,
        commands,
    })
}
