//! Small trained fixtures shared by unit tests.

use crate::analysis::{fit_observer, ObserverConfig, ObserverNet};
use crate::checkpoint::Checkpoint;
use crate::encoding::SoftmaxCoding;
use crate::primitives::{make_primitives, PrimitiveSpec};
use crate::pvrnn::{LayerConfig, NetworkConfig};
use crate::trainer::{CognitiveProfile, ProfileName, TrainConfig, Trainer};

/// Three 3-joint, 12-step primitives on a small network, a few epochs in.
pub fn tiny() -> (Checkpoint, ObserverNet) {
    let spec = PrimitiveSpec { dims: 3, steps: 12, ..PrimitiveSpec::default() };
    let set = make_primitives(&spec).unwrap();
    let net = NetworkConfig {
        layers: vec![
            LayerConfig { d_units: 8, z_units: 2, timescale: 2.0 },
            LayerConfig { d_units: 4, z_units: 1, timescale: 6.0 },
        ],
        output_dims: 3,
        bins_per_dim: 5,
        meta_w: 0.0,
        seed: 1,
    };
    let coding = SoftmaxCoding::symmetric(3, -1.0, 1.0, 5, 10.0).unwrap();
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let mut tr = Trainer::new(
        net,
        coding,
        CognitiveProfile::reference(ProfileName::Moderate),
        cfg,
        set.labels.clone(),
        set.trajectories.clone(),
    )
    .unwrap();
    tr.run(3).unwrap();
    let obs_cfg = ObserverConfig { hidden: [8, 4], epochs: 50, ..ObserverConfig::default() };
    let obs = fit_observer(set.labels, &set.trajectories, &obs_cfg).unwrap().net;
    (tr.to_checkpoint(), obs)
}
