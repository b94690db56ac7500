//! Status snapshots for observers and the console message types.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::mazebot::{Cell, Maze, Pose};

/// Plain description of a maze for observers: `cells` holds each cell's open
/// mask (N=1, E=2, S=4, W=8), row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeView {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<u8>,
    pub start: Pose,
    pub exit: Cell,
}

impl From<&Maze> for MazeView {
    fn from(m: &Maze) -> Self {
        let cells = (0..m.height())
            .flat_map(|row| (0..m.width()).map(move |col| Cell::new(col, row)))
            .map(|c| m.open_mask(c))
            .collect();
        Self {
            width: m.width(),
            height: m.height(),
            cells,
            start: m.start(),
            exit: m.exit(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseName {
    Idle,
    Stimulus,
    Decided,
}

/// One `{"type":"state",...}` message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusSnapshot {
    #[serde(rename = "type")]
    pub kind: String,
    pub maze: Option<MazeView>,
    pub pose: Option<Pose>,
    pub phase: PhaseName,
    pub countdown_ms: u64,
    pub probs: Option<[f64; 3]>,
    pub junction_id: Option<u32>,
    pub open_mask: Option<u8>,
    pub command: Option<u8>,
    pub confidence: Option<f64>,
    pub selected: Option<u8>,
}

impl StatusSnapshot {
    pub fn idle(maze: Option<MazeView>, pose: Option<Pose>) -> Self {
        Self {
            kind: "state".into(),
            maze,
            pose,
            phase: PhaseName::Idle,
            countdown_ms: 0,
            probs: None,
            junction_id: None,
            open_mask: None,
            command: None,
            confidence: None,
            selected: None,
        }
    }
}

/// Messages the console may send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConsoleMessage {
    Select { target: u8 },
    Deselect,
}

impl ConsoleMessage {
    /// Parses one line; targets outside 0..=2 are rejected.
    pub fn parse(line: &str) -> Option<Self> {
        match serde_json::from_str::<ConsoleMessage>(line.trim()).ok()? {
            ConsoleMessage::Select { target } if target > 2 => None,
            m => Some(m),
        }
    }
}

/// Latest snapshot with a version counter. Single writer, many readers; a
/// reader always gets a whole serialized line.
#[derive(Debug, Default)]
pub struct StatusBoard {
    slot: Mutex<(u64, Arc<String>)>,
    changed: Condvar,
}

impl StatusBoard {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn publish(&self, snapshot: &StatusSnapshot) {
        let line = serde_json::to_string(snapshot).expect("snapshot serializes");
        let mut slot = self.slot.lock().expect("status lock");
        slot.0 += 1;
        slot.1 = Arc::new(line);
        self.changed.notify_all();
    }

    pub fn latest(&self) -> (u64, Arc<String>) {
        self.slot.lock().expect("status lock").clone()
    }

    /// Waits up to `timeout` for a version newer than `seen`.
    pub fn wait_newer(&self, seen: u64, timeout: Duration) -> Option<(u64, Arc<String>)> {
        let slot = self.slot.lock().expect("status lock");
        let (slot, _) = self
            .changed
            .wait_timeout_while(slot, timeout, |s| s.0 <= seen)
            .expect("status lock");
        (slot.0 > seen).then(|| slot.clone())
    }
}
