//! Headless closed loop: server, robot client and a shortest-path operator in
//! one process.

use std::net::{Ipv4Addr, SocketAddr};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use super::client::{run_robot, ClientConfig, ClientError, RobotTrace};
use super::server::{serve, Classifier, DecisionRecord, ServeError, ServerConfig};
use super::sources::{Selector, SynthSource};
use crate::mazebot::{BfsOperator, Command, JunctionInfo, Maze, Operator};
use crate::synth::SynthConfig;

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub maze: Maze,
    /// Noise level, amplitude and seed of the synthesized response.
    pub synth: SynthConfig,
    pub class_freqs: Vec<f64>,
    pub stimulus: Duration,
    pub poll_interval: Duration,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct JunctionOutcome {
    pub junction_id: u32,
    pub intent: Command,
    pub command: Command,
    pub confidence: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub finished: bool,
    /// Why the robot stopped short of the exit.
    pub stop_reason: Option<String>,
    pub junctions: usize,
    pub correct: usize,
    /// `None` when no junction was met.
    pub command_accuracy: Option<f64>,
    pub moves: usize,
    pub shortest_path: Option<usize>,
    pub steps: usize,
    pub wall_time_s: f64,
    pub outcomes: Vec<JunctionOutcome>,
    pub trace: RobotTrace,
    pub server: Vec<DecisionRecord>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("robot aborted: {0}")]
    Aborted(String),
}

pub fn simulate(
    config: &SimulationConfig,
    classifier: Classifier,
) -> Result<SimulationReport, SimError> {
    let t0 = Instant::now();
    let source = SynthSource::new(
        config.synth.clone(),
        config.class_freqs.clone(),
        Selector::Oracle,
    );
    let server = serve(
        ServerConfig {
            robot_bind: SocketAddr::from((Ipv4Addr::LOCALHOST, 0)),
            console_bind: None,
            stimulus: config.stimulus,
            maze: Some(config.maze.clone()),
        },
        classifier,
        Box::new(source),
    )?;
    let client = ClientConfig {
        poll_interval: config.poll_interval,
        max_steps: config.max_steps,
        ..ClientConfig::new(server.robot_addr())
    };
    let (trace, stop_reason) = match run_robot(&config.maze, &client) {
        Ok(t) => (t, None),
        Err(ClientError::StepLimit { limit, trace }) => {
            (*trace, Some(format!("step limit {limit} reached")))
        }
        Err(ClientError::Aborted { reason, .. }) => return Err(SimError::Aborted(reason)),
    };
    let records = server.records();
    server.shutdown();

    let outcomes: Vec<JunctionOutcome> = trace
        .junctions
        .iter()
        .map(|j| {
            let info = JunctionInfo {
                junction_id: j.robot_junction,
                pose: j.pose,
                open_mask: j.open_mask,
            };
            JunctionOutcome {
                junction_id: j.junction_id,
                intent: BfsOperator.decide(&config.maze, &info),
                command: j.command,
                confidence: j.confidence,
            }
        })
        .collect();
    let correct = outcomes.iter().filter(|o| o.intent == o.command).count();
    Ok(SimulationReport {
        finished: trace.finished,
        stop_reason,
        junctions: outcomes.len(),
        correct,
        command_accuracy: (!outcomes.is_empty()).then(|| correct as f64 / outcomes.len() as f64),
        moves: trace.moves,
        shortest_path: config.maze.shortest_path_len(),
        steps: trace.steps.len(),
        wall_time_s: t0.elapsed().as_secs_f64(),
        outcomes,
        trace,
        server: records,
    })
}
