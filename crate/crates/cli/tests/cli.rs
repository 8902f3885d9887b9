mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use common::{bin, run, Fixture};

fn code(dir: &Path, args: &[&str]) -> Option<i32> {
    bin().current_dir(dir).args(args).output().unwrap().status.code()
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["--help"]), Some(0));
    assert_eq!(code(d, &[]), Some(1));
    assert_eq!(code(d, &["train", "--bogus"]), Some(1));
    assert_eq!(code(d, &["--config", "missing.json", "scenario"]), Some(1));
    assert_eq!(code(d, &["generate", "--checkpoint", "missing.json", "--out", "g"]), Some(1));
    fs::write(d.join("junk.json"), "{ not json").unwrap();
    assert_eq!(code(d, &["generate", "--checkpoint", "junk.json", "--out", "g"]), Some(2));
    assert_eq!(code(d, &["--config", "junk.json", "scenario"]), Some(2));
    fs::write(d.join("bad.json"), r#"{"primitives": {"dims": 0}}"#).unwrap();
    assert_eq!(code(d, &["--config", "bad.json", "gen-data", "--out", "x"]), Some(2));
}

#[test]
fn scenario_demo_script_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(d, &["scenario", "--write-demo", "demo.json"]);
    run(d, &["scenario", "--script", "demo.json", "--out", "a.csv"]);
    let builtin = run(d, &["scenario"]).stdout;
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), builtin);
    assert!(builtin.starts_with(b"t,joint,theta,"));
}

fn pipeline(fx: &Fixture, out: &str) {
    let go = |cmd: &str| {
        let mut args = vec!["--config", "tiny.json"];
        args.extend(cmd.split_whitespace());
        run(fx.path(), &args);
    };
    let obs = "--observer data/observer.json";
    go(&format!("generate --checkpoint ck/rigid.json --out {out}/gen --draws 3"));
    go(&format!("generate --checkpoint ck/flexible.json --out {out}/gens --mode sampled --draws 3"));
    go(&format!("regress --checkpoint ck/moderate.json --evidence data/B.csv --intent A --steps 20 {obs} --out {out}/regress"));
    go(&format!("trial --checkpoints ck --profile moderate --robot A --human B --steps 20 {obs} --out {out}/trial.json"));
    go(&format!("matrix --checkpoints ck --repeats 1 --steps 12 --congruent {obs} --out {out}/matrix"));
    go(&format!("analyze --checkpoints ck --draws 2 {obs} --out {out}/analyze"));
}

#[test]
fn batch_pipeline_is_deterministic() {
    let fx = Fixture::new();
    for f in ["data/A.json", "data/A.csv", "data/observer.json", "ck/rigid.json", "ck/moderate_curves.csv"] {
        assert!(fx.join(f).is_file(), "{f} missing");
    }
    pipeline(&fx, "run1");
    pipeline(&fx, "run2");
    let a = tree(&fx.join("run1"));
    let b = tree(&fx.join("run2"));
    assert!(a.contains_key("matrix/probs.csv"));
    assert!(a.contains_key("matrix/torque.csv"));
    assert!(a.contains_key("analyze/transitions.csv"));
    assert!(a.contains_key("regress/regress.csv"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(v == &b[k], "{k} differs between identical runs");
    }
    let t2 = String::from_utf8(a["matrix/probs.csv"].clone()).unwrap();
    assert!(t2.lines().count() > 1);

    // A second independent fixture trains bit-identical checkpoints.
    let other = Fixture::new();
    assert_eq!(tree(&fx.join("ck")), tree(&other.join("ck")));
    assert_eq!(tree(&fx.join("data")), tree(&other.join("data")));
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.json"), common::TINY_CONFIG).unwrap();
    let base = ["--config", "tiny.json", "train", "--profile", "flexible", "--log-every", "0"];
    run(d, &[&base[..], &["--out", "full", "--epochs", "10"]].concat());
    run(d, &[&base[..], &["--out", "part", "--epochs", "4"]].concat());
    run(d, &[&base[..], &["--out", "part", "--epochs", "10", "--resume"]].concat());
    assert_eq!(tree(&d.join("full")), tree(&d.join("part")));
}
