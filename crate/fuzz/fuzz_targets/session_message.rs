#![no_main]

use std::sync::{Mutex, OnceLock};

use libfuzzer_sys::fuzz_target;
use pvrnn_hri::analysis::ObserverNet;
use pvrnn_hri::config::RunConfig;
use pvrnn_hri::live::{LiveSession, SessionMessage};
use pvrnn_hri::primitives::make_primitives;
use pvrnn_hri::trainer::{CognitiveProfile, ProfileName, Trainer};

const TINY: &str = r#"{
  "primitives": {"dims": 3, "steps": 12},
  "network": {"layers": [{"d_units": 6, "z_units": 2, "timescale": 2.0}], "output_dims": 3, "bins_per_dim": 5, "meta_w": 0.0, "seed": 1},
  "coding": {"bins": 5, "sharpness": 10.0},
  "session": {"regression": {"window": 4, "inner_epochs": 1}}
}"#;

fn session() -> &'static Mutex<LiveSession> {
    static S: OnceLock<Mutex<LiveSession>> = OnceLock::new();
    S.get_or_init(|| {
        let cfg = RunConfig::from_json_str(TINY).unwrap();
        let set = make_primitives(&cfg.primitives).unwrap();
        let trainer = Trainer::new(
            cfg.network.clone(),
            cfg.coding().unwrap(),
            CognitiveProfile::reference(ProfileName::Moderate),
            cfg.train.clone(),
            set.labels.clone(),
            set.trajectories,
        )
        .unwrap();
        let observer = ObserverNet::init(3, [4, 4], set.labels, 0);
        Mutex::new(LiveSession::new(trainer.to_checkpoint(), observer, &cfg.session, "A", 0).unwrap())
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(msg) = SessionMessage::from_json(text) {
        assert_eq!(SessionMessage::from_json(&msg.to_json()).unwrap(), msg);
    }
    let mut s = session().lock().unwrap();
    let _ = s.submit_text(text);
    s.step().unwrap();
});
