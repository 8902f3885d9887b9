//! Replays the checked-in fuzz seeds through the same entry points as the
//! fuzz targets, so the corpus stays parseable as formats evolve.

use std::fs;
use std::path::PathBuf;

use pvrnn_hri::checkpoint::Checkpoint;
use pvrnn_hri::config::RunConfig;
use pvrnn_hri::control::scenario::{run_scenario, Scenario};
use pvrnn_hri::encoding::Trajectory;
use pvrnn_hri::live::SessionMessage;
use pvrnn_hri::trainer::{read_curves_csv, write_curves_csv};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(b: &[u8]) -> &str {
    std::str::from_utf8(b).unwrap()
}

#[test]
fn trajectory_json_seeds() {
    for (name, b) in seeds("trajectory_json") {
        let t = Trajectory::from_json_str(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(Trajectory::from_json_str(&t.to_json_string().unwrap()).unwrap(), t);
    }
}

#[test]
fn trajectory_csv_seeds() {
    let parsed: Vec<_> =
        seeds("trajectory_csv").into_iter().map(|(n, b)| (n, Trajectory::from_csv_reader(&b[..], 4.0, None))).collect();
    assert!(parsed.iter().any(|(n, r)| n == "B.csv" && r.is_ok()));
    for (_, r) in parsed {
        if let Ok(t) = r {
            let mut out = Vec::new();
            t.write_csv(&mut out).unwrap();
            let again = Trajectory::from_csv_reader(&out[..], 4.0, None).unwrap();
            assert_eq!((again.steps(), again.dims()), (t.steps(), t.dims()));
        }
    }
}

#[test]
fn checkpoint_seeds() {
    for (name, b) in seeds("checkpoint") {
        Checkpoint::from_json_str(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn scenario_seeds() {
    for (name, b) in seeds("scenario") {
        let sc = Scenario::from_json_str(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let run = run_scenario(&sc).unwrap();
        let first: Vec<f64> = run.rows.iter().take(run.dims).map(|r| r.command).collect();
        assert!(run.max_command_step(&first) <= sc.gains.delta_max + 1e-9);
    }
}

#[test]
fn session_message_seeds() {
    for (name, b) in seeds("session_message") {
        let m = SessionMessage::from_json(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(SessionMessage::from_json(&m.to_json()).unwrap(), m);
    }
}

#[test]
fn run_config_seeds() {
    for (name, b) in seeds("run_config") {
        let cfg = RunConfig::from_json_str(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
        cfg.coding().unwrap();
    }
}

#[test]
fn curves_csv_seeds() {
    for (name, b) in seeds("curves_csv") {
        let log = read_curves_csv(&b[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut out = Vec::new();
        write_curves_csv(&log, &mut out).unwrap();
        assert_eq!(read_curves_csv(&out[..]).unwrap(), log);
    }
}
