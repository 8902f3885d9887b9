//! Two-layer predictive-coding variational RNN.
//!
//! A deterministic multiple-timescale backbone (`d`, leaky integrators with
//! time constant ι per layer) is driven by a stochastic latent `z` at every
//! step. The prior over `z_t` is a one-layer network of `d_{t-1}`; the
//! approximate posterior uses the same weights plus per-step adaptive offsets
//! `a_μ`, `a_σ` that absorb evidence. Outputs are per-dimension softmax
//! distributions read from the lowest layer.

pub mod grads;
pub mod network;
pub mod objective;
pub mod rollout;

use ndarray::Array2;
use rand::Rng;

pub use grads::{bptt_grads, GradScope, Gradients};
pub use network::{Carry, LayerConfig, LayerParams, NetworkConfig, NetworkParams, SIGMA_FLOOR};
pub use objective::{elbo, kl_term, reconstruction_max, Elbo};
pub use rollout::{
    forward_step, generate_rollout, mtrnn_step, output_step, posterior_params, posterior_rollout, prior_params,
    sample_z, AdaptiveSequence, AdaptiveStep, Gaussian, GenerationMode, LayerState, Noise, Rollout, StepState,
};

use crate::encoding::{SoftmaxCoding, Trajectory};
use crate::error::Result;

/// Decode every step of a rollout into joint angles.
pub fn decode_rollout(rollout: &Rollout, coding: &SoftmaxCoding, rate_hz: f64) -> Result<Trajectory> {
    let dims = coding.dims();
    let mut values = Array2::zeros((rollout.len(), dims));
    for (t, s) in rollout.steps.iter().enumerate() {
        let posture = coding.decode_posture(ndarray::ArrayView1::from(&s.x[..]))?;
        values.row_mut(t).assign(&ndarray::ArrayView1::from(&posture[..]));
    }
    let limits = (0..dims).map(|d| coding.range(d)).collect();
    Trajectory::new(rate_hz, crate::encoding::default_joint_names(dims), limits, values)
}

/// Open-loop generation decoded to a trajectory.
#[allow(clippy::too_many_arguments)]
pub fn generate<R: Rng>(
    params: &NetworkParams,
    config: &NetworkConfig,
    coding: &SoftmaxCoding,
    init: &Carry,
    lead: &[AdaptiveStep],
    steps: usize,
    mode: GenerationMode,
    rng: &mut R,
) -> Result<(Rollout, Trajectory)> {
    let rollout = generate_rollout(params, config, init, lead, steps, mode, rng)?;
    let traj = decode_rollout(&rollout, coding, crate::NETWORK_RATE_HZ)?;
    Ok((rollout, traj))
}
