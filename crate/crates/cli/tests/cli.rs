//! The `ssvep` binary as a user sees it: exit codes, files and the live pair
//! of `serve` and `robot` processes.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn ssvep() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ssvep"));
    for (k, _) in std::env::vars() {
        if k.starts_with("SSVEP_") {
            c.env_remove(k);
        }
    }
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn ssvep")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn ok(cmd: &mut Command) -> String {
    let out = run(cmd);
    assert!(out.status.success(), "{cmd:?}: {}", text(&out.stderr));
    text(&out.stdout)
}

fn small_model(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let data = dir.join("d.rec");
    let model = dir.join("m.model");
    ok(ssvep()
        .args(["gen-data", "--trials-per-class", "10", "--snr-db", "inf"])
        .arg("--data")
        .arg(&data));
    ok(ssvep()
        .args(["train", "--epochs", "10"])
        .arg("--data")
        .arg(&data)
        .arg("--model")
        .arg(&model));
    (data, model)
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec![],
        vec!["frobnicate"],
        vec!["gen-data"],
        vec!["gen-data", "--data", "x.rec", "--snr-db", "nan"],
        vec![
            "train",
            "--data",
            "a",
            "--model",
            "b",
            "--window-seconds",
            "4",
        ],
        vec!["simulate", "--maze", "/nonexistent/maze.txt"],
        vec!["train", "--data", "missing.rec", "--model", "m"],
        vec!["eval", "--data", "missing.rec", "--model", "missing.model"],
        vec!["filter-coeffs", "--filter-order", "3"],
        vec!["gen-maze", "--maze-width", "1"],
    ];
    for args in cases {
        let out = run(ssvep().args(&args).current_dir(dir.path()));
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            text(&out.stderr)
        );
    }
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.rec");
    fs::write(&junk, b"not a recording").unwrap();
    let out = run(ssvep()
        .args(["train", "--model", "m"])
        .arg("--data")
        .arg(&junk)
        .current_dir(dir.path()));
    assert_eq!(out.status.code(), Some(1), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("junk.rec"));

    let out = run(ssvep().args([
        "robot",
        "--port-robot",
        "1",
        "--retries",
        "1",
        "--maze-width",
        "3",
        "--maze-height",
        "3",
    ]));
    assert_eq!(out.status.code(), Some(1));
    assert!(
        text(&out.stderr).contains("after 1 attempts"),
        "{}",
        text(&out.stderr)
    );
}

#[test]
fn train_eval_cv_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = small_model(dir.path());
    let history = fs::read_to_string(dir.path().join("m.model.history.csv")).unwrap();
    assert_eq!(
        history.lines().next(),
        Some("epoch,train_loss,train_acc,val_loss,val_acc")
    );
    assert_eq!(history.lines().count(), 11);
    let metrics = fs::read_to_string(dir.path().join("m.model.metrics.csv")).unwrap();
    assert_eq!(
        metrics.lines().next(),
        Some("class,label,support,correct,recall,pred_0,pred_1,pred_2")
    );
    assert!(metrics.lines().last().unwrap().starts_with("all,all,"));

    let eval_csv = dir.path().join("eval.csv");
    let out = ok(ssvep()
        .arg("eval")
        .arg("--data")
        .arg(&data)
        .arg("--model")
        .arg(&model)
        .arg("--metrics")
        .arg(&eval_csv));
    assert!(out.contains("test: accuracy"), "{out}");
    assert_eq!(fs::read_to_string(&eval_csv).unwrap(), metrics);

    let out = run(ssvep()
        .arg("eval")
        .arg("--data")
        .arg(&data)
        .arg("--model")
        .arg(&model)
        .args(["--nfft", "2048"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(
        text(&out.stderr).contains("features"),
        "{}",
        text(&out.stderr)
    );

    let curves = dir.path().join("cv.csv");
    let out = ok(ssvep()
        .args(["cv", "--folds", "3", "--epochs", "2"])
        .arg("--data")
        .arg(&data)
        .arg("--history")
        .arg(&curves));
    assert!(out.contains("over 3 folds"), "{out}");
    let curves = fs::read_to_string(&curves).unwrap();
    assert!(curves.starts_with("fold,epoch,"));
    assert_eq!(curves.lines().count(), 1 + 3 * 2);
}

#[test]
fn environment_variables_stand_in_for_flags() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.rec");
    let b = dir.path().join("b.rec");
    ok(ssvep()
        .args(["gen-data", "--trials-per-class", "2", "--seed", "5"])
        .arg("--data")
        .arg(&a));
    ok(ssvep()
        .env("SSVEP_SEED", "5")
        .env("SSVEP_TRIALS_PER_CLASS", "2")
        .env("SSVEP_DATA", &b)
        .arg("gen-data"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn maze_and_filter_output() {
    let dir = tempfile::tempdir().unwrap();
    let maze = dir.path().join("maze.txt");
    ok(ssvep()
        .args([
            "gen-maze",
            "--maze-width",
            "4",
            "--maze-height",
            "3",
            "--maze-seed",
            "2",
        ])
        .arg("--maze")
        .arg(&maze));
    let drawn = fs::read_to_string(&maze).unwrap();
    assert_eq!(drawn.lines().count(), 7);
    assert!(drawn.contains('S') && drawn.contains('E'));

    let coeffs = ok(ssvep().arg("filter-coeffs"));
    let rows: Vec<&str> = coeffs.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 5));
}

#[test]
fn simulate_reports_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (_, model) = small_model(dir.path());
    let trace = dir.path().join("trace.json");
    let out = ok(ssvep()
        .args([
            "simulate",
            "--maze-width",
            "4",
            "--maze-height",
            "4",
            "--maze-seed",
            "1",
            "--time-scale",
            "0.05",
        ])
        .arg("--model")
        .arg(&model)
        .arg("--trace")
        .arg(&trace));
    assert!(out.contains("finished: true"), "{out}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(v["finished"], true);
    assert_eq!(v["moves"], v["shortest_path"]);
    assert!(v["trace"]["steps"].as_array().unwrap().len() >= v["moves"].as_u64().unwrap() as usize);
}

fn simulated_accuracy(snr_db: &str) -> f64 {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    ok(ssvep()
        .args([
            "simulate",
            "--seed",
            "0",
            "--time-scale",
            "0.02",
            "--snr-db",
            snr_db,
        ])
        .arg("--trace")
        .arg(&trace));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(v["finished"], true);
    v["command_accuracy"].as_f64().unwrap()
}

#[test]
fn noise_lowers_simulated_accuracy() {
    let clean = simulated_accuracy("inf");
    let noisy = simulated_accuracy("-10");
    assert_eq!(clean, 1.0);
    assert!(noisy < clean, "{noisy} vs {clean}");
}

#[test]
fn serve_and_robot_processes_complete_a_maze() {
    let dir = tempfile::tempdir().unwrap();
    let (_, model) = small_model(dir.path());
    let maze = dir.path().join("maze.txt");
    ok(ssvep()
        .args([
            "gen-maze",
            "--maze-width",
            "4",
            "--maze-height",
            "4",
            "--maze-seed",
            "7",
        ])
        .arg("--maze")
        .arg(&maze));

    let mut server = ssvep()
        .args([
            "serve",
            "--source",
            "oracle",
            "--port-robot",
            "0",
            "--port-console",
            "0",
            "--time-scale",
            "0.1",
        ])
        .arg("--model")
        .arg(&model)
        .arg("--maze")
        .arg(&maze)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(server.stdout.take().unwrap()).lines();
    let first = lines.next().unwrap().unwrap();
    let port = first.rsplit(':').next().unwrap().to_string();
    assert!(first.starts_with("robot port"), "{first}");

    let trace = dir.path().join("robot.json");
    let started = Instant::now();
    let out = run(ssvep()
        .args(["robot", "--poll-ms", "25", "--port-robot", &port])
        .arg("--maze")
        .arg(&maze)
        .arg("--trace")
        .arg(&trace));
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(started.elapsed() < Duration::from_secs(30));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(v["finished"], true);

    let pid = server.id().to_string();
    assert!(Command::new("kill")
        .args(["-INT", &pid])
        .status()
        .unwrap()
        .success());
    let deadline = Instant::now() + Duration::from_secs(10);
    let status = loop {
        if let Some(s) = server.try_wait().unwrap() {
            break s;
        }
        assert!(Instant::now() < deadline, "serve ignored SIGINT");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert_eq!(status.code(), Some(0));
}
