//! Subcommand bodies.

use std::fs;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};

use ssvep_core::dsp::{design_bandpass, FeaturePipeline, PipelineConfig, WindowSpec};
use ssvep_core::eegio::{
    read_recording, split_dataset, write_recording, LabeledExample, DEFAULT_CLASS_FREQS,
};
use ssvep_core::loopnet::{
    run_robot, serve, simulate, Classifier, ClientConfig, ClientError, ReplaySource, RobotTrace,
    Selector, ServerConfig, SignalSource, SimulationConfig, SynthSource, DEFAULT_PRE_ROLL,
};
use ssvep_core::mazebot::{generate_maze, load_maze, render_maze, Maze};
use ssvep_core::ssvepnet::{
    cross_validate, evaluate, load_model, save_model, train, Cnn, CnnConfig, TrainConfig,
};
use ssvep_core::synth::{generate_dataset, SynthConfig};

use crate::args::*;
use crate::report;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or argument files; exit status 2.
    Usage(String),
    /// Anything that fails while running; exit status 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

pub fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::GenData(a) => gen_data(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Eval(a) => eval_cmd(a),
        Cmd::Cv(a) => cv_cmd(a),
        Cmd::Simulate(a) => simulate_cmd(a),
        Cmd::Serve(a) => serve_cmd(a),
        Cmd::Robot(a) => robot_cmd(a),
        Cmd::FilterCoeffs(a) => filter_coeffs(a),
        Cmd::GenMaze(a) => gen_maze(a),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn pipeline(a: &PipelineArgs) -> Result<FeaturePipeline> {
    let window = WindowSpec::new(768, a.offset).map_err(usage)?;
    let cfg = PipelineConfig {
        window,
        n_fft: a.nfft,
        band_lo_hz: a.band_lo,
        band_hi_hz: a.band_hi,
        filter_order: a.filter_order,
        ..PipelineConfig::default()
    }
    .with_window_seconds(a.window_seconds)
    .map_err(usage)?;
    FeaturePipeline::new(cfg).map_err(usage)
}

fn net_config(p: &FeaturePipeline) -> Result<CnnConfig> {
    let input_len = p.config().feature_len().map_err(usage)?;
    Ok(CnnConfig {
        input_len,
        ..CnnConfig::default()
    })
}

fn train_config(k: &TrainKnobs, seed: u64) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        learning_rate: k.lr,
        batch_size: k.batch,
        epochs: k.epochs,
        seed,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn load_examples(data: &Path, p: &FeaturePipeline, channel: &str) -> Result<Vec<LabeledExample>> {
    let rec = read_recording(existing(data, "--data")?)
        .with_context(|| format!("reading {}", data.display()))?;
    let ex = p
        .preprocess_recording(&rec, channel)
        .with_context(|| format!("extracting features from {}", data.display()))?;
    if ex.is_empty() {
        return Err(anyhow!(
            "{} yields no windows of {} samples",
            data.display(),
            p.config().window.window_len
        )
        .into());
    }
    Ok(ex)
}

/// Read paths must name existing files; anything else is a usage error.
fn existing<'a>(path: &'a Path, flag: &str) -> Result<&'a Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(usage(format!(
            "{flag} {} is not a readable file",
            path.display()
        )))
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(usage(format!(
            "--train-fraction {f} must lie strictly between 0 and 1"
        )))
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    if a.trials_per_class == 0 {
        return Err(usage("--trials-per-class must be at least 1"));
    }
    let cfg = SynthConfig {
        snr_db: a.snr_db,
        duration_s: a.trial_seconds,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let rec =
        generate_dataset(&DEFAULT_CLASS_FREQS, a.trials_per_class, &cfg).context("synthesizing")?;
    write_recording(&rec, &a.data).with_context(|| format!("writing {}", a.data.display()))?;
    println!(
        "wrote {}: {} trials x {} samples at {} Hz, snr {} dB, seed {}",
        a.data.display(),
        rec.trials().len(),
        cfg.n_samples(),
        rec.fs_hz(),
        a.snr_db,
        a.seed
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    check_fraction(a.train_fraction)?;
    let p = pipeline(&a.pipeline)?;
    let net = net_config(&p)?;
    let tc = train_config(&a.knobs, a.seed)?;
    let examples = load_examples(&a.data, &p, &a.pipeline.channel)?;
    let split = split_dataset(&examples, a.train_fraction, a.seed).context("splitting")?;
    println!(
        "{} examples: {} train, {} test",
        examples.len(),
        split.train.len(),
        split.test.len()
    );
    let outcome = train(&split.train, Some(&split.test), &tc, &net).context("training")?;
    save_model(&outcome.model, &a.model)
        .with_context(|| format!("writing {}", a.model.display()))?;
    let history = a
        .history
        .unwrap_or_else(|| sibling(&a.model, ".history.csv"));
    write_file(&history, report::history_csv(&outcome.history))?;

    let train_m = evaluate(&outcome.model, &split.train).context("scoring")?;
    let test_m = evaluate(&outcome.model, &split.test).context("scoring")?;
    let metrics = a
        .metrics
        .unwrap_or_else(|| sibling(&a.model, ".metrics.csv"));
    write_file(&metrics, report::metrics_csv(&test_m))?;
    print!("{}", report::metrics_table("train", &train_m));
    print!("{}", report::metrics_table("test", &test_m));
    println!(
        "model {}, curves {}, metrics {}",
        a.model.display(),
        history.display(),
        metrics.display()
    );
    Ok(())
}

fn load_model_for(path: &Path, p: &FeaturePipeline) -> Result<Cnn> {
    let model = load_model(existing(path, "--model")?)
        .with_context(|| format!("reading {}", path.display()))?;
    let want = p.config().feature_len().map_err(usage)?;
    if model.config.input_len != want {
        return Err(anyhow!(
            "model expects {} features but this pipeline yields {}; use the pipeline flags the model was trained with",
            model.config.input_len,
            want
        )
        .into());
    }
    Ok(model)
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    check_fraction(a.train_fraction)?;
    let p = pipeline(&a.pipeline)?;
    let model = load_model_for(&a.model, &p)?;
    let examples = load_examples(&a.data, &p, &a.pipeline.channel)?;
    let set = match a.subset {
        EvalSubset::All => examples,
        EvalSubset::Test => {
            split_dataset(&examples, a.train_fraction, a.seed)
                .context("splitting")?
                .test
        }
    };
    let m = evaluate(&model, &set).context("scoring")?;
    if let Some(path) = &a.metrics {
        write_file(path, report::metrics_csv(&m))?;
    }
    print!(
        "{}",
        report::metrics_table(
            if a.subset == EvalSubset::All {
                "all"
            } else {
                "test"
            },
            &m
        )
    );
    Ok(())
}

fn cv_cmd(a: CvArgs) -> Result<()> {
    check_fraction(a.train_fraction)?;
    if a.folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    let p = pipeline(&a.pipeline)?;
    let net = net_config(&p)?;
    let tc = train_config(&a.knobs, a.seed)?;
    let examples = load_examples(&a.data, &p, &a.pipeline.channel)?;
    let pool = if a.all {
        examples
    } else {
        split_dataset(&examples, a.train_fraction, a.seed)
            .context("splitting")?
            .train
    };
    let folds = cross_validate(&pool, a.folds, &tc, &net).context("cross-validating")?;
    if let Some(path) = &a.history {
        write_file(path, report::folds_history_csv(&folds))?;
    }
    if let Some(path) = &a.metrics {
        write_file(path, report::folds_summary_csv(&folds))?;
    }
    println!(
        "{:>4} {:>10} {:>10} {:>8}",
        "fold", "train_acc", "val_acc", "val_n"
    );
    for f in &folds {
        println!(
            "{:>4} {:>10.4} {:>10.4} {:>8}",
            f.fold,
            f.train.accuracy,
            f.val.accuracy,
            f.val.total()
        );
    }
    let accs: Vec<f64> = folds.iter().map(|f| f.val.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let sd =
        (accs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (accs.len() - 1) as f64).sqrt();
    println!(
        "validation accuracy {mean:.4} +/- {sd:.4} over {} folds of {} examples",
        folds.len(),
        pool.len()
    );
    Ok(())
}

fn maze_from(a: &MazeArgs) -> Result<Maze> {
    match &a.maze {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read maze {}: {e}", path.display())))?;
            load_maze(&text).map_err(|e| usage(format!("bad maze {}: {e}", path.display())))
        }
        None => generate_maze(a.maze_width, a.maze_height, a.maze_seed).map_err(usage),
    }
}

/// Noiseless data, few epochs: enough for a clean-signal demo when no model is given.
fn bootstrap_model(p: &FeaturePipeline, channel: &str, seed: u64) -> Result<Cnn> {
    let synth = SynthConfig {
        seed,
        ..SynthConfig::default()
    }
    .noiseless();
    let rec = generate_dataset(&p.config().class_freqs, 20, &synth).context("synthesizing")?;
    let ex = p
        .preprocess_recording(&rec, channel)
        .context("extracting features")?;
    let tc = TrainConfig {
        epochs: 15,
        seed,
        ..TrainConfig::default()
    };
    Ok(train(&ex, None, &tc, &net_config(p)?)
        .context("training")?
        .model)
}

fn scaled(d: Duration, scale: f64) -> Duration {
    d.mul_f64(scale)
}

fn write_json(path: &Path, json: serde_json::Result<String>) -> Result<()> {
    write_file(path, json.context("serializing trace")?)
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let p = pipeline(&a.pipeline)?;
    let maze = maze_from(&a.maze)?;
    let model = match &a.model {
        Some(path) => load_model_for(path, &p)?,
        None => {
            eprintln!("no --model given; training a small model on noiseless synthetic data");
            bootstrap_model(&p, &a.pipeline.channel, a.seed)?
        }
    };
    let class_freqs = p.config().class_freqs.clone();
    let classifier = Classifier::new(p, model, DEFAULT_PRE_ROLL, a.mask_blocked)
        .context("building classifier")?;
    let config = SimulationConfig {
        maze,
        synth: SynthConfig {
            snr_db: a.snr_db,
            seed: a.seed,
            ..SynthConfig::default()
        },
        class_freqs,
        stimulus: scaled(
            Duration::from_secs_f64(a.pipeline.window_seconds),
            a.time_scale,
        ),
        poll_interval: scaled(Duration::from_millis(a.poll_ms), a.time_scale),
        max_steps: a.max_steps,
    };
    let r = simulate(&config, classifier).context("closed loop")?;
    if let Some(path) = &a.trace {
        write_json(path, serde_json::to_string_pretty(&r))?;
    }
    println!(
        "finished: {}  junctions: {}  correct: {}  accuracy: {}",
        r.finished,
        r.junctions,
        r.correct,
        r.command_accuracy
            .map_or("n/a".into(), |v| format!("{v:.4}"))
    );
    println!(
        "moves: {}  shortest path: {}  steps: {}  wall time: {:.2} s",
        r.moves,
        r.shortest_path.map_or("n/a".into(), |v| v.to_string()),
        r.steps,
        r.wall_time_s
    );
    match r.stop_reason {
        Some(reason) => Err(anyhow!("robot stopped short of the exit: {reason}").into()),
        None => Ok(()),
    }
}

fn socket(host: &str, port: u16) -> Result<SocketAddr> {
    (host, port)
        .to_socket_addrs()
        .map_err(|e| usage(format!("cannot resolve {host}:{port}: {e}")))?
        .next()
        .ok_or_else(|| usage(format!("{host}:{port} resolves to no address")))
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let p = pipeline(&a.pipeline)?;
    let maze = maze_from(&a.maze)?;
    let robot_bind = socket(&a.bind, a.port_robot)?;
    let console_bind = socket(&a.bind, a.port_console)?;
    let class_freqs = p.config().class_freqs.clone();
    let synth = SynthConfig {
        snr_db: a.snr_db,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let source: Box<dyn SignalSource> = match a.source {
        SourceKind::Console => Box::new(SynthSource::new(synth, class_freqs, Selector::Console)),
        SourceKind::Oracle => Box::new(SynthSource::new(synth, class_freqs, Selector::Oracle)),
        SourceKind::Replay => {
            let path = a
                .data
                .as_ref()
                .ok_or_else(|| usage("--source replay needs --data"))?;
            let rec = read_recording(existing(path, "--data")?)
                .with_context(|| format!("reading {}", path.display()))?;
            let ch = rec.channel_index(&a.pipeline.channel).map_err(usage)?;
            Box::new(ReplaySource::new(rec, ch))
        }
    };
    let model = load_model_for(&a.model, &p)?;
    let classifier = Classifier::new(p, model, DEFAULT_PRE_ROLL, a.mask_blocked)
        .context("building classifier")?;
    let handle = serve(
        ServerConfig {
            robot_bind,
            console_bind: Some(console_bind),
            stimulus: scaled(
                Duration::from_secs_f64(a.pipeline.window_seconds),
                a.time_scale,
            ),
            maze: Some(maze),
        },
        classifier,
        source,
    )
    .context("starting server")?;
    let flag = handle.shutdown_flag();
    ctrlc::set_handler(move || flag.store(true, std::sync::atomic::Ordering::SeqCst))
        .context("installing interrupt handler")?;
    println!("robot port {}", handle.robot_addr());
    if let Some(c) = handle.console_addr() {
        println!("console port {c}");
    }
    handle.wait();
    println!("shut down");
    Ok(())
}

fn print_trace_summary(t: &RobotTrace) {
    println!(
        "finished: {}  junctions: {}  moves: {}  steps: {}  elapsed: {:.2} s",
        t.finished,
        t.junctions.len(),
        t.moves,
        t.steps.len(),
        t.elapsed_ms / 1e3
    );
}

fn robot_cmd(a: RobotArgs) -> Result<()> {
    let maze = maze_from(&a.maze)?;
    let server = socket(&a.host, a.port_robot)?;
    let cfg = ClientConfig {
        poll_interval: Duration::from_millis(a.poll_ms),
        connect_attempts: a.retries.max(1),
        max_steps: a.max_steps,
        ..ClientConfig::new(server)
    };
    match run_robot(&maze, &cfg) {
        Ok(trace) => {
            if let Some(path) = &a.trace {
                write_json(path, serde_json::to_string_pretty(&trace))?;
            }
            print_trace_summary(&trace);
            Ok(())
        }
        Err(e) => {
            let trace = e.trace();
            if let Some(path) = &a.trace {
                write_json(path, serde_json::to_string_pretty(trace))?;
            }
            print_trace_summary(trace);
            Err(match e {
                ClientError::Aborted { reason, .. } => anyhow!("robot aborted: {reason}"),
                ClientError::StepLimit { limit, .. } => {
                    anyhow!("step limit {limit} reached before the exit")
                }
            }
            .into())
        }
    }
}

fn filter_coeffs(a: FilterArgs) -> Result<()> {
    let f = design_bandpass(a.fs as f64, a.band_lo, a.band_hi, a.filter_order).map_err(usage)?;
    print!("{}", f.coefficients_text());
    Ok(())
}

fn gen_maze(a: GenMazeArgs) -> Result<()> {
    let maze = generate_maze(a.maze_width, a.maze_height, a.maze_seed).map_err(usage)?;
    let text = render_maze(&maze);
    match &a.maze {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
