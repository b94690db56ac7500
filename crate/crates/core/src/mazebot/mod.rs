//! Grid maze world and the robot's junction-halting navigation state machine.
//!
//! Coordinates are `(col, row)` with row 0 at the top (north). Each cell keeps a
//! 4-bit mask of open sides: N=1, E=2, S=4, W=8.

mod ascii;
mod robot;

pub use ascii::{load_maze, render_maze};
pub use robot::{
    oracle_command, sense, solve_with_oracle, BfsOperator, Event, JunctionInfo, Operator, Robot,
    RobotState, SensorReading, SolveOutcome, SolveTrace, StepError, TraceEntry,
};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum MazeError {
    #[error("maze must be at least {min}×{min}, got {width}×{height}")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("wall flags vector has {found} cells, expected {expected}")]
    WrongCellCount { expected: usize, found: usize },
    #[error("asymmetric wall between {a:?} and {b:?}")]
    AsymmetricWall { a: Cell, b: Cell },
    #[error("border of cell {0:?} is open")]
    OpenBorder(Cell),
    #[error("cell {0:?} is out of bounds")]
    OutOfBounds(Cell),
    #[error("start and exit coincide at {0:?}")]
    StartIsExit(Cell),
    #[error("maze text: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

    pub fn bit(self) -> u8 {
        match self {
            Heading::N => 1,
            Heading::E => 2,
            Heading::S => 4,
            Heading::W => 8,
        }
    }

    pub fn left(self) -> Self {
        match self {
            Heading::N => Heading::W,
            Heading::E => Heading::N,
            Heading::S => Heading::E,
            Heading::W => Heading::S,
        }
    }

    pub fn right(self) -> Self {
        self.left().reverse()
    }

    pub fn reverse(self) -> Self {
        match self {
            Heading::N => Heading::S,
            Heading::E => Heading::W,
            Heading::S => Heading::N,
            Heading::W => Heading::E,
        }
    }

    pub fn turn(self, rel: Relative) -> Self {
        match rel {
            Relative::Left => self.left(),
            Relative::Front => self,
            Relative::Right => self.right(),
        }
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Heading::N => (0, -1),
            Heading::E => (1, 0),
            Heading::S => (0, 1),
            Heading::W => (-1, 0),
        }
    }
}

/// Direction relative to the robot's heading; also the command-class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relative {
    Left,
    Front,
    Right,
}

impl Relative {
    pub const ALL: [Relative; 3] = [Relative::Left, Relative::Front, Relative::Right];
}

/// Operator command: 0 = turn left, 1 = keep heading, 2 = turn right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Command(u8);

#[derive(Debug, Error, PartialEq)]
#[error("command {0} out of range (expected 0, 1 or 2)")]
pub struct CommandOutOfRange(pub u8);

impl Command {
    pub const LEFT: Command = Command(0);
    pub const FORWARD: Command = Command(1);
    pub const RIGHT: Command = Command(2);

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn relative(self) -> Relative {
        Relative::ALL[self.0 as usize]
    }

    pub fn from_relative(rel: Relative) -> Self {
        match rel {
            Relative::Left => Command::LEFT,
            Relative::Front => Command::FORWARD,
            Relative::Right => Command::RIGHT,
        }
    }

    pub fn name(self) -> &'static str {
        ["left", "forward", "right"][self.0 as usize]
    }
}

impl TryFrom<u8> for Command {
    type Error = CommandOutOfRange;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        if v <= 2 {
            Ok(Command(v))
        } else {
            Err(CommandOutOfRange(v))
        }
    }
}

impl From<Command> for u8 {
    fn from(c: Command) -> u8 {
        c.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Cell,
    pub heading: Heading,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Maze {
    width: usize,
    height: usize,
    open: Vec<u8>,
    start: Pose,
    exit: Cell,
}

impl Maze {
    /// Validates symmetry, closed borders and endpoints. `open` is row-major.
    pub fn new(
        width: usize,
        height: usize,
        open: Vec<u8>,
        start: Pose,
        exit: Cell,
    ) -> Result<Self, MazeError> {
        if width == 0 || height == 0 {
            return Err(MazeError::TooSmall {
                width,
                height,
                min: 1,
            });
        }
        if open.len() != width * height {
            return Err(MazeError::WrongCellCount {
                expected: width * height,
                found: open.len(),
            });
        }
        let maze = Self {
            width,
            height,
            open,
            start,
            exit,
        };
        for c in [start.cell, exit] {
            if !maze.in_bounds(c) {
                return Err(MazeError::OutOfBounds(c));
            }
        }
        if start.cell == exit {
            return Err(MazeError::StartIsExit(exit));
        }
        for row in 0..height {
            for col in 0..width {
                let cell = Cell::new(col, row);
                for h in Heading::ALL {
                    let flag = maze.open[row * width + col] & h.bit() != 0;
                    match maze.neighbor(cell, h) {
                        None if flag => return Err(MazeError::OpenBorder(cell)),
                        Some(n)
                            if flag
                                != (maze.open[n.row * width + n.col] & h.reverse().bit() != 0) =>
                        {
                            return Err(MazeError::AsymmetricWall { a: cell, b: n });
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(maze)
    }

    /// Every interior edge open.
    pub fn fully_open(
        width: usize,
        height: usize,
        start: Pose,
        exit: Cell,
    ) -> Result<Self, MazeError> {
        let mut open = vec![0u8; width * height];
        for row in 0..height {
            for col in 0..width {
                let v = &mut open[row * width + col];
                if row > 0 {
                    *v |= Heading::N.bit();
                }
                if col + 1 < width {
                    *v |= Heading::E.bit();
                }
                if row + 1 < height {
                    *v |= Heading::S.bit();
                }
                if col > 0 {
                    *v |= Heading::W.bit();
                }
            }
        }
        Self::new(width, height, open, start, exit)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Pose {
        self.start
    }

    pub fn exit(&self) -> Cell {
        self.exit
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.col < self.width && c.row < self.height
    }

    pub fn open_mask(&self, c: Cell) -> u8 {
        self.open[c.row * self.width + c.col]
    }

    pub fn is_open(&self, c: Cell, h: Heading) -> bool {
        self.open_mask(c) & h.bit() != 0
    }

    /// Adjacent cell in direction `h`, if inside the grid.
    pub fn neighbor(&self, c: Cell, h: Heading) -> Option<Cell> {
        let (dc, dr) = h.delta();
        let col = c.col.checked_add_signed(dc)?;
        let row = c.row.checked_add_signed(dr)?;
        let n = Cell::new(col, row);
        self.in_bounds(n).then_some(n)
    }

    /// Neighbor reachable through an open edge.
    pub fn passage(&self, c: Cell, h: Heading) -> Option<Cell> {
        if self.is_open(c, h) {
            self.neighbor(c, h)
        } else {
            None
        }
    }

    /// Number of open interior edges (each counted once).
    pub fn open_edge_count(&self) -> usize {
        self.open
            .iter()
            .map(|m| {
                ((m & Heading::E.bit() != 0) as usize) + ((m & Heading::S.bit() != 0) as usize)
            })
            .sum()
    }

    /// Breadth-first shortest path, both endpoints included. Neighbors are
    /// expanded in N, E, S, W order.
    pub fn shortest_path(&self, from: Cell, to: Cell) -> Option<Vec<Cell>> {
        if !self.in_bounds(from) || !self.in_bounds(to) {
            return None;
        }
        let idx = |c: Cell| c.row * self.width + c.col;
        let mut prev: Vec<Option<Cell>> = vec![None; self.width * self.height];
        let mut seen = vec![false; self.width * self.height];
        let mut queue = VecDeque::from([from]);
        seen[idx(from)] = true;
        while let Some(c) = queue.pop_front() {
            if c == to {
                let mut path = vec![c];
                let mut cur = c;
                while let Some(p) = prev[idx(cur)] {
                    path.push(p);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for h in Heading::ALL {
                if let Some(n) = self.passage(c, h) {
                    if !seen[idx(n)] {
                        seen[idx(n)] = true;
                        prev[idx(n)] = Some(c);
                        queue.push_back(n);
                    }
                }
            }
        }
        None
    }

    /// Moves between start and exit along the shortest path.
    pub fn shortest_path_len(&self) -> Option<usize> {
        self.shortest_path(self.start.cell, self.exit)
            .map(|p| p.len() - 1)
    }
}

/// Perfect maze by randomized depth-first search (recursive backtracker,
/// iterative). Unvisited neighbors are listed N, E, S, W and one is drawn with
/// `SeededRng::below`. Start `(0, 0)` facing east, exit at the far corner.
pub fn generate_maze(width: usize, height: usize, seed: u64) -> Result<Maze, MazeError> {
    if width < 2 || height < 2 {
        return Err(MazeError::TooSmall {
            width,
            height,
            min: 2,
        });
    }
    let mut open = vec![0u8; width * height];
    let mut visited = vec![false; width * height];
    let mut rng = SeededRng::new(seed);
    let mut stack = vec![Cell::new(0, 0)];
    visited[0] = true;
    let grid = Maze {
        width,
        height,
        open: vec![0; width * height],
        start: Pose {
            cell: Cell::new(0, 0),
            heading: Heading::E,
        },
        exit: Cell::new(width - 1, height - 1),
    };
    while let Some(&cur) = stack.last() {
        let options: Vec<(Heading, Cell)> = Heading::ALL
            .iter()
            .filter_map(|&h| grid.neighbor(cur, h).map(|n| (h, n)))
            .filter(|(_, n)| !visited[n.row * width + n.col])
            .collect();
        if options.is_empty() {
            stack.pop();
            continue;
        }
        let (h, next) = options[rng.below(options.len() as u64) as usize];
        open[cur.row * width + cur.col] |= h.bit();
        open[next.row * width + next.col] |= h.reverse().bit();
        visited[next.row * width + next.col] = true;
        stack.push(next);
    }
    Maze::new(width, height, open, grid.start, grid.exit)
}
