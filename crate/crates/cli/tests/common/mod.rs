#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TINY_CONFIG: &str = r#"{
  "primitives": {"dims": 3, "steps": 12},
  "network": {"layers": [{"d_units": 8, "z_units": 2, "timescale": 2.0}, {"d_units": 4, "z_units": 1, "timescale": 6.0}],
              "output_dims": 3, "bins_per_dim": 5, "meta_w": 0.0, "seed": 1},
  "coding": {"bins": 5, "sharpness": 10.0},
  "train": {"epochs": 10},
  "observer": {"hidden": [8, 4], "epochs": 200},
  "session": {"regression": {"window": 4, "inner_epochs": 2}}
}"#;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pvhri"));
    c.env_remove("PVHRI_CONFIG");
    c
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().expect("pvhri runs");
    assert!(
        out.status.success(),
        "pvhri {args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Tiny config, primitives, observer and three checkpoints in a temp dir.
pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("tiny.json"), TINY_CONFIG).unwrap();
        run(dir.path(), &["--config", "tiny.json", "gen-data", "--out", "data"]);
        run(dir.path(), &["--config", "tiny.json", "train", "--out", "ck", "--log-every", "0"]);
        Self { dir }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn join(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }
}
