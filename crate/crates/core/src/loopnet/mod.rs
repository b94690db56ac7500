//! The closed loop over TCP: a command service that runs stimulus windows and
//! classifies them, a robot client that halts at junctions and polls for
//! commands, and a JSON status stream for observers.

mod client;
mod frame;
mod server;
mod sim;
mod sources;
mod status;

pub use client::{run_robot, ClientConfig, ClientError, JunctionRecord, RobotTrace, TraceStep};
pub use frame::{decode_frame, decode_line, encode_frame, Confidence, Frame, FrameError};
pub use server::{
    serve, Classifier, Decision, DecisionRecord, ServeError, ServerConfig, ServerHandle, Session,
    DEFAULT_CONSOLE_PORT, DEFAULT_PRE_ROLL, DEFAULT_ROBOT_PORT, ERR_MALFORMED, ERR_NO_SESSION,
    ERR_SOURCE, ERR_STALE_ID, ERR_UNEXPECTED,
};
pub use sim::{simulate, JunctionOutcome, SimError, SimulationConfig, SimulationReport};
pub use sources::{AcquireRequest, ReplaySource, Selector, SignalSource, SourceError, SynthSource};
pub use status::{ConsoleMessage, MazeView, PhaseName, StatusBoard, StatusSnapshot};
