//! Command-line grammar. Every flag can also be set through an `SSVEP_*`
//! environment variable.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ssvep",
    version,
    about = "SSVEP-driven maze robot: data, training, evaluation and the live loop"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Synthesize a labeled recording.
    GenData(GenDataArgs),
    /// Train the classifier on a recording.
    Train(TrainArgs),
    /// Score a trained model on a recording.
    Eval(EvalArgs),
    /// Stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Headless closed loop with a shortest-path operator.
    Simulate(SimulateArgs),
    /// Run the command service for a robot and a console.
    Serve(ServeArgs),
    /// Drive a simulated robot against a running service.
    Robot(RobotArgs),
    /// Print the band-pass filter's second-order sections.
    FilterCoeffs(FilterArgs),
    /// Draw a generated maze in the text format.
    GenMaze(GenMazeArgs),
}

/// Accepts a number of dB or `inf`/`+inf` for a noiseless signal.
pub fn parse_snr(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let v = match t.as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => f64::INFINITY,
        _ => t
            .parse::<f64>()
            .map_err(|_| format!("`{s}` is not a number of dB or `inf`"))?,
    };
    if v.is_nan() || v == f64::NEG_INFINITY {
        return Err(format!("`{s}` is not a usable SNR"));
    }
    Ok(v)
}

fn parse_window_seconds(s: &str) -> Result<f64, String> {
    match s.trim() {
        "1" | "1.0" => Ok(1.0),
        "2" | "2.0" => Ok(2.0),
        "3" | "3.0" => Ok(3.0),
        _ => Err(format!(
            "window length must be 1, 2 or 3 seconds, got `{s}`"
        )),
    }
}

fn parse_positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Classified window length in seconds (1, 2 or 3).
    #[arg(long, env = "SSVEP_WINDOW_SECONDS", default_value = "3", value_parser = parse_window_seconds)]
    pub window_seconds: f64,
    /// Stride between successive windows, in samples.
    #[arg(long, env = "SSVEP_OFFSET", default_value_t = 16)]
    pub offset: usize,
    #[arg(long, env = "SSVEP_BAND_LO", default_value_t = 8.0)]
    pub band_lo: f64,
    #[arg(long, env = "SSVEP_BAND_HI", default_value_t = 16.0)]
    pub band_hi: f64,
    #[arg(long, env = "SSVEP_NFFT", default_value_t = 1024)]
    pub nfft: usize,
    /// Butterworth order (2, 4 or 8).
    #[arg(long, env = "SSVEP_FILTER_ORDER", default_value_t = 4)]
    pub filter_order: usize,
    /// Channel to classify.
    #[arg(long, env = "SSVEP_CHANNEL", default_value = "Oz")]
    pub channel: String,
}

#[derive(Debug, Clone, Args)]
pub struct TrainKnobs {
    #[arg(long, env = "SSVEP_LR", default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, env = "SSVEP_BATCH", default_value_t = 32)]
    pub batch: usize,
    #[arg(long, env = "SSVEP_EPOCHS", default_value_t = 50)]
    pub epochs: usize,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output recording.
    #[arg(long, env = "SSVEP_DATA")]
    pub data: PathBuf,
    #[arg(long, env = "SSVEP_TRIALS_PER_CLASS", default_value_t = 150)]
    pub trials_per_class: usize,
    /// In-band SNR in dB, or `inf` for no noise.
    #[arg(long, env = "SSVEP_SNR_DB", default_value = "0", value_parser = parse_snr, allow_hyphen_values = true)]
    pub snr_db: f64,
    /// Trial length in seconds.
    #[arg(long, env = "SSVEP_TRIAL_SECONDS", default_value = "4", value_parser = parse_positive_f64)]
    pub trial_seconds: f64,
    #[arg(long, env = "SSVEP_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "SSVEP_DATA")]
    pub data: PathBuf,
    /// Output model file.
    #[arg(long, env = "SSVEP_MODEL")]
    pub model: PathBuf,
    /// Per-epoch curve CSV (default: next to the model).
    #[arg(long, env = "SSVEP_HISTORY")]
    pub history: Option<PathBuf>,
    /// Test-set metrics CSV (default: next to the model).
    #[arg(long, env = "SSVEP_METRICS")]
    pub metrics: Option<PathBuf>,
    /// Share of examples used for training; the rest is the test set.
    #[arg(long, env = "SSVEP_TRAIN_FRACTION", default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, env = "SSVEP_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub knobs: TrainKnobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalSubset {
    /// The held-out part of the split that `train` made with the same seed.
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, env = "SSVEP_DATA")]
    pub data: PathBuf,
    #[arg(long, env = "SSVEP_MODEL")]
    pub model: PathBuf,
    #[arg(long, env = "SSVEP_METRICS")]
    pub metrics: Option<PathBuf>,
    #[arg(long, env = "SSVEP_EVAL_SUBSET", value_enum, default_value_t = EvalSubset::Test)]
    pub subset: EvalSubset,
    #[arg(long, env = "SSVEP_TRAIN_FRACTION", default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, env = "SSVEP_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long, env = "SSVEP_DATA")]
    pub data: PathBuf,
    #[arg(long, env = "SSVEP_FOLDS", default_value_t = 5)]
    pub folds: usize,
    /// Per-fold, per-epoch curves CSV.
    #[arg(long, env = "SSVEP_HISTORY")]
    pub history: Option<PathBuf>,
    /// Per-fold summary CSV.
    #[arg(long, env = "SSVEP_METRICS")]
    pub metrics: Option<PathBuf>,
    /// Folds are drawn from this share of the data (the training pool).
    #[arg(long, env = "SSVEP_TRAIN_FRACTION", default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Cross-validate over every example instead of the training pool.
    #[arg(long, env = "SSVEP_CV_ALL", default_value_t = false)]
    pub all: bool,
    #[arg(long, env = "SSVEP_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub knobs: TrainKnobs,
}

#[derive(Debug, Clone, Args)]
pub struct MazeArgs {
    /// Maze in the text format; a generated maze is used when omitted.
    #[arg(long, env = "SSVEP_MAZE")]
    pub maze: Option<PathBuf>,
    #[arg(long, env = "SSVEP_MAZE_WIDTH", default_value_t = 10)]
    pub maze_width: usize,
    #[arg(long, env = "SSVEP_MAZE_HEIGHT", default_value_t = 10)]
    pub maze_height: usize,
    #[arg(long, env = "SSVEP_MAZE_SEED", default_value_t = 0)]
    pub maze_seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Trained model; when omitted a small model is trained on noiseless synthetic data first.
    #[arg(long, env = "SSVEP_MODEL")]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub maze: MazeArgs,
    #[arg(long, env = "SSVEP_SNR_DB", default_value = "inf", value_parser = parse_snr, allow_hyphen_values = true)]
    pub snr_db: f64,
    #[arg(long, env = "SSVEP_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Mask classes whose direction is closed before picking the command.
    #[arg(long, env = "SSVEP_MASK_BLOCKED", default_value_t = true, action = ArgAction::Set)]
    pub mask_blocked: bool,
    /// Multiplies stimulus and poll durations (1.0 = real time).
    #[arg(long, env = "SSVEP_TIME_SCALE", default_value = "1", value_parser = parse_positive_f64)]
    pub time_scale: f64,
    #[arg(long, env = "SSVEP_POLL_MS", default_value_t = 250)]
    pub poll_ms: u64,
    /// JSON trace output.
    #[arg(long, env = "SSVEP_TRACE")]
    pub trace: Option<PathBuf>,
    #[arg(long, env = "SSVEP_MAX_STEPS")]
    pub max_steps: Option<usize>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceKind {
    /// Synthesized response to the target selected in the console.
    Console,
    /// Synthesized response to the shortest-path command.
    Oracle,
    /// Successive trials of a recording.
    Replay,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SSVEP_MODEL")]
    pub model: PathBuf,
    #[command(flatten)]
    pub maze: MazeArgs,
    #[arg(long, env = "SSVEP_SOURCE", value_enum, default_value_t = SourceKind::Console)]
    pub source: SourceKind,
    /// Recording served by `--source replay`.
    #[arg(long, env = "SSVEP_DATA")]
    pub data: Option<PathBuf>,
    #[arg(long, env = "SSVEP_BIND", default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, env = "SSVEP_PORT_ROBOT", default_value_t = 7071)]
    pub port_robot: u16,
    #[arg(long, env = "SSVEP_PORT_CONSOLE", default_value_t = 7072)]
    pub port_console: u16,
    #[arg(long, env = "SSVEP_SNR_DB", default_value = "inf", value_parser = parse_snr, allow_hyphen_values = true)]
    pub snr_db: f64,
    #[arg(long, env = "SSVEP_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "SSVEP_MASK_BLOCKED", default_value_t = true, action = ArgAction::Set)]
    pub mask_blocked: bool,
    #[arg(long, env = "SSVEP_TIME_SCALE", default_value = "1", value_parser = parse_positive_f64)]
    pub time_scale: f64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct RobotArgs {
    #[command(flatten)]
    pub maze: MazeArgs,
    #[arg(long, env = "SSVEP_HOST", default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "SSVEP_PORT_ROBOT", default_value_t = 7071)]
    pub port_robot: u16,
    #[arg(long, env = "SSVEP_POLL_MS", default_value_t = 250)]
    pub poll_ms: u64,
    #[arg(long, env = "SSVEP_RETRIES", default_value_t = 5)]
    pub retries: u32,
    #[arg(long, env = "SSVEP_TRACE")]
    pub trace: Option<PathBuf>,
    #[arg(long, env = "SSVEP_MAX_STEPS")]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long, env = "SSVEP_FS", default_value_t = 256)]
    pub fs: u32,
    #[arg(long, env = "SSVEP_BAND_LO", default_value_t = 8.0)]
    pub band_lo: f64,
    #[arg(long, env = "SSVEP_BAND_HI", default_value_t = 16.0)]
    pub band_hi: f64,
    #[arg(long, env = "SSVEP_FILTER_ORDER", default_value_t = 4)]
    pub filter_order: usize,
}

#[derive(Debug, Args)]
pub struct GenMazeArgs {
    #[arg(long, env = "SSVEP_MAZE_WIDTH", default_value_t = 10)]
    pub maze_width: usize,
    #[arg(long, env = "SSVEP_MAZE_HEIGHT", default_value_t = 10)]
    pub maze_height: usize,
    #[arg(long, env = "SSVEP_MAZE_SEED", default_value_t = 0)]
    pub maze_seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long, env = "SSVEP_MAZE")]
    pub maze: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn grammar_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn snr_syntax() {
        assert_eq!(parse_snr("inf"), Ok(f64::INFINITY));
        assert_eq!(parse_snr("-10"), Ok(-10.0));
        assert!(parse_snr("loud").is_err());
        assert!(parse_snr("nan").is_err());
        assert!(parse_snr("-inf").is_err());
    }

    #[test]
    fn env_mirrors_flags() {
        for sub in Cli::command().get_subcommands() {
            for arg in sub.get_arguments() {
                let id = arg.get_id().as_str();
                if id == "help" || id == "version" {
                    continue;
                }
                let env = arg.get_env().map(|e| e.to_string_lossy().into_owned());
                assert!(
                    env.as_deref().is_some_and(|e| e.starts_with("SSVEP_")),
                    "{} --{id} lacks an SSVEP_ variable",
                    sub.get_name()
                );
            }
        }
    }
}
