//! End-to-end runs of the `sasfield` binary: exit codes, CSV output,
//! determinism across identical invocations, and the report flow.

use std::path::Path;
use std::process::{Command, Output};

fn sasfield(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sasfield"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path.to_string_lossy().into_owned()
}

const TINY_MAXIMA: &str = "experiment.name = tiny\n\
                           run.seed = 7\n\
                           run.replications = 4\n\
                           run.ladder = 2, 4, 8\n\
                           run.calibration = 20000\n";

#[test]
fn invalid_alpha_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(dir.path(), "bad.conf", "run.seed = 1\nkernel.alpha = 2.0\n");
    let out = sasfield(&["simulate", "--config", &conf], dir.path());
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("strictly between 0 and 2"), "{stderr}");
}

#[test]
fn missing_config_flag_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = sasfield(&["maxima"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn maxima_run_writes_a_result_table() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(dir.path(), "tiny.conf", TINY_MAXIMA);
    let out = sasfield(&["maxima", "--config", &conf], dir.path());
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,operation,replication,tau,raw_value,normalization,statistic,value,seed,config_hash"
    );
    // 4 replications x 3 rungs x 2 normalizations
    assert_eq!(lines.count(), 24, "{csv}");
    assert!(csv.contains("m-over-power"));
    assert!(csv.contains("m-over-btau"));
}

#[test]
fn identical_invocations_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(dir.path(), "tiny.conf", TINY_MAXIMA);
    let first = sasfield(&["maxima", "--config", &conf, "--jobs", "2"], dir.path());
    let second = sasfield(&["maxima", "--config", &conf, "--jobs", "3"], dir.path());
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    assert!(!first.stdout.is_empty());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(dir.path(), "tiny.conf", TINY_MAXIMA);
    let base = sasfield(&["maxima", "--config", &conf], dir.path());
    let reseeded = sasfield(&["maxima", "--config", &conf, "--seed", "8"], dir.path());
    assert_eq!(reseeded.status.code(), Some(0), "{reseeded:?}");
    assert_ne!(base.stdout, reseeded.stdout);
    assert!(String::from_utf8_lossy(&reseeded.stdout).contains(",8,"));
}

#[test]
fn report_flow_summarizes_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(dir.path(), "tiny.conf", TINY_MAXIMA);
    let table = dir.path().join("table.csv");
    let out = sasfield(
        &["maxima", "--config", &conf, "--out", table.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");

    let summary = dir.path().join("summary.txt");
    let rep = sasfield(
        &[
            "report",
            table.to_str().unwrap(),
            "--out",
            summary.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(rep.status.code(), Some(0), "{rep:?}");
    let text = std::fs::read_to_string(&summary).unwrap();
    assert!(text.contains("experiment 'tiny'"), "{text}");
    assert!(text.contains("med M/t^da"), "{text}");

    let curves = std::fs::read_to_string(dir.path().join("summary.curves.csv")).unwrap();
    assert!(curves.starts_with("experiment,operation,statistic,tau,mid,lower,upper,count"));
    assert!(curves.lines().count() >= 7, "{curves}");
}

#[test]
fn report_of_empty_table_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(
        dir.path(),
        "empty.csv",
        "experiment,operation,replication,tau,raw_value,normalization,statistic,value,seed,config_hash\n",
    );
    let out = sasfield(&["report", &empty], dir.path());
    assert_eq!(out.status.code(), Some(4), "{out:?}");
}

#[test]
fn classify_rotation_prints_conservative_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(
        dir.path(),
        "rot.conf",
        "run.seed = 3\nrun.replications = 4\nkernel.family = torus_rotation\nrun.ladder = 4, 8\n",
    );
    let out = sasfield(&["classify", "--config", &conf], dir.path());
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict/conservative"));
}
