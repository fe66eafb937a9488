use std::fs;
use std::path::Path;
use std::process::Command;

use linbreg::solver::StopReason;
use linbreg_bench::experiment::{read_snapshot, snapshot_path};
use linbreg_bench::{run_experiment, ExperimentConfig};
use proptest::prelude::*;

fn config(text: &str, out: &Path) -> ExperimentConfig {
    let mut cfg: ExperimentConfig = text.parse().unwrap();
    cfg.out = out.to_path_buf();
    cfg
}

#[test]
fn zero_iterations_log_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("problem = deconv\nrows = 8\ncols = 8\nmax_iter = 0\n", dir.path());
    let log = run_experiment(&cfg).unwrap();
    assert_eq!(log.summary.stop_reason, StopReason::MaxIter);
    assert_eq!(log.summary.iterations, 0);
    assert!(log.records.is_empty());
    let csv = fs::read_to_string(dir.path().join("log.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("max_iter"), "{summary}");
}

#[test]
fn snapshots_round_trip_through_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("problem = deconv\nrows = 12\ncols = 10\nalpha = 0.05\nmax_iter = 6\nsnapshots = 0, 3, 6\n", dir.path());
    let log = run_experiment(&cfg).unwrap();
    for k in [0, 3, 6] {
        for block in ["image", "kernel"] {
            let p = snapshot_path(dir.path(), k, block, "pgm");
            assert!(p.exists(), "{}", p.display());
        }
    }
    assert!(!snapshot_path(dir.path(), 2, "image", "pgm").exists());
    let img = read_snapshot(&snapshot_path(dir.path(), 6, "image", "pgm")).unwrap();
    assert_eq!(img.shape(), &[12, 10]);
    let truth = &log.final_iterate.data()[..120];
    let span = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max) - truth.iter().copied().fold(f64::INFINITY, f64::min);
    let worst = img.data().iter().zip(truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    // 16-bit quantisation over the value range
    assert!(worst <= 1.6e-5 * span.max(f64::MIN_POSITIVE), "{worst} vs span {span}");
}

#[test]
fn classifier_snapshots_are_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("problem = classifier\ntrain = 40\nhidden = 6\nmax_iter = 2\nsnapshots = 2\n", dir.path());
    run_experiment(&cfg).unwrap();
    // A1 is the output layer
    let a1 = fs::read_to_string(snapshot_path(dir.path(), 2, "A1", "csv")).unwrap();
    assert_eq!(a1.lines().count(), 10);
    assert_eq!(a1.lines().next().unwrap().split(',').count(), 6);
    let a2 = fs::read_to_string(snapshot_path(dir.path(), 2, "A2", "csv")).unwrap();
    assert_eq!(a2.lines().count(), 6);
    assert_eq!(a2.lines().next().unwrap().split(',').count(), 784);
}

#[test]
fn log_columns_follow_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("problem = mri\nsize = 8\ncoils = 2\nmax_iter = 3\n", dir.path());
    let log = run_experiment(&cfg).unwrap();
    assert_eq!(log.records.len(), 3);
    let csv = fs::read_to_string(dir.path().join("log.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("k,"), "{header}");
    assert!(header.ends_with("tv_value"), "{header}");
    assert!(log.summary.metric("data_fit").is_some());
}

#[test]
fn resolved_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("problem = deconv\nrows = 8\ncols = 8\nsigma = 1e-3\nmax_iter = 5\nseed = 9\n", &dir.path().join("a"));
    run_experiment(&cfg).unwrap();
    let resolved = fs::read_to_string(dir.path().join("a/config.resolved")).unwrap();
    let again: ExperimentConfig = resolved.parse().unwrap();
    assert_eq!(again, cfg);
    let mut second = again.clone();
    second.out = dir.path().join("b");
    run_experiment(&second).unwrap();
    let a = fs::read(dir.path().join("a/log.csv")).unwrap();
    let b = fs::read(dir.path().join("b/log.csv")).unwrap();
    assert_eq!(a, b);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_linbreg-bench"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    fs::write(&good, "problem = deconv\nrows = 8\ncols = 8\nmax_iter = 3\n").unwrap();
    let status = cli().arg("check").arg(&good).output().unwrap().status;
    assert_eq!(status.code(), Some(0));

    let out = dir.path().join("run");
    let status = cli().args(["run", good.to_str().unwrap(), "--out", out.to_str().unwrap()]).output().unwrap().status;
    assert_eq!(status.code(), Some(0));
    assert!(out.join("log.csv").exists());
    assert!(out.join("summary.txt").exists());

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "problem = deconv\nsize = 8\n").unwrap();
    let output = cli().arg("check").arg(&bad).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 2"));

    let missing = dir.path().join("missing.cfg");
    assert_eq!(cli().arg("check").arg(&missing).output().unwrap().status.code(), Some(2));

    let status = cli().args(["grad-check", good.to_str().unwrap(), "--coords", "8"]).output().unwrap().status;
    assert_eq!(status.code(), Some(0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deconv_config_round_trips(
        rows in 5usize..64,
        cols in 5usize..64,
        sigma in prop_oneof![Just(0.0), 1e-6f64..1.0],
        alpha in 1e-4f64..10.0,
        tau0 in 1e-3f64..10.0,
        seed in any::<u64>(),
        max_iter in 0usize..100_000,
        snaps in proptest::collection::vec(0usize..1000, 0..5),
    ) {
        let snap_text = if snaps.is_empty() {
            "none".to_string()
        } else {
            snaps.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ")
        };
        let text = format!(
            "problem = deconv\nrows = {rows}\ncols = {cols}\nsigma = {sigma}\nalpha = {alpha}\ntau0 = {tau0}\n\
             seed = {seed}\nmax_iter = {max_iter}\nsnapshots = {snap_text}\n"
        );
        let cfg: ExperimentConfig = text.parse().unwrap();
        let again: ExperimentConfig = cfg.resolved().parse().unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.resolved(), cfg.resolved());
        prop_assert!(cfg.snapshots.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}
