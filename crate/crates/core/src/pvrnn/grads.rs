//! Exact gradients of the lower bound by backpropagation through time.
//!
//! The backward pass walks a retained [`Rollout`] from the last step to the
//! first. Gradients flow through the softmax readout, the leaky integrators,
//! the reparameterized sample `z = μ + σ·ε` and both Gaussian heads. All
//! returned values are ascent directions (∂L/∂θ, not ∂(−L)/∂θ).

use super::network::{NetworkConfig, NetworkParams};
use super::rollout::{AdaptiveStep, Rollout};
use crate::encoding::EncodedSequence;
use crate::error::{Error, Result};
use crate::linalg::{gemv_t_acc, outer_acc};

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Present when parameter gradients were requested.
    pub params: Option<NetworkParams>,
    /// One entry per rollout step; zeros on prior-driven steps.
    pub adaptive: Vec<AdaptiveStep>,
}

/// Which gradients to accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradScope {
    /// Network parameters and adaptive offsets.
    All,
    /// Adaptive offsets only; weights are treated as constants.
    AdaptiveOnly,
}

pub fn bptt_grads(
    rollout: &Rollout,
    targets: &EncodedSequence,
    w: f64,
    params: &NetworkParams,
    config: &NetworkConfig,
    scope: GradScope,
) -> Result<Gradients> {
    let steps = rollout.len();
    if steps == 0 {
        return Err(Error::Shape("missing rollout state".into()));
    }
    if targets.steps() != steps {
        return Err(Error::Shape(format!(
            "rollout has {steps} steps, targets have {}",
            targets.steps()
        )));
    }
    if targets.width() != config.output_width() {
        return Err(Error::Shape("target width differs from output width".into()));
    }
    let n = config.layers.len();
    let bins = config.bins_per_dim;
    let mut gp = match scope {
        GradScope::All => Some(params.zeros_like()),
        GradScope::AdaptiveOnly => None,
    };
    let mut ga = vec![AdaptiveStep::zeros(config); steps];

    // ∂L/∂d_t arriving from step t+1, and ∂L/∂h_t through the leak.
    let mut g_d_future: Vec<Vec<f64>> = config.layers.iter().map(|l| vec![0.0; l.d_units]).collect();
    let mut g_h_carry = g_d_future.clone();

    for t in (0..steps).rev() {
        let step = &rollout.steps[t];
        if step.layers.len() != n {
            return Err(Error::Shape(format!("step {t}: missing layer state")));
        }
        let target = targets.row(t);
        let target = target.as_slice().expect("contiguous target row");

        let mut g_d = std::mem::replace(
            &mut g_d_future,
            config.layers.iter().map(|l| vec![0.0; l.d_units]).collect(),
        );

        // Softmax + categorical log-likelihood: ∂/∂logit = target − x·Σtarget.
        let mut g_logits = vec![0.0; step.x.len()];
        for ((gl, x), t) in g_logits
            .chunks_exact_mut(bins)
            .zip(step.x.chunks_exact(bins))
            .zip(target.chunks_exact(bins))
        {
            let mass: f64 = t.iter().sum();
            for k in 0..bins {
                gl[k] = t[k] - x[k] * mass;
            }
        }
        let d_low = &step.layers[0].d;
        if let Some(g) = gp.as_mut() {
            outer_acc(&mut g.w_out, &g_logits, d_low);
            for (b, v) in g.b_out.iter_mut().zip(&g_logits) {
                *b += v;
            }
        }
        gemv_t_acc(&params.w_out, &g_logits, &mut g_d[0]);

        let g_d_prev = &mut g_d_future;
        for k in 0..n {
            let ls = &step.layers[k];
            let lp = &params.layers[k];
            let inv = 1.0 / config.layers[k].timescale;
            let d_prev = rollout.d_prev(t, k);

            let mut g_u = vec![0.0; ls.d.len()];
            for i in 0..ls.d.len() {
                let g_h = g_d[k][i] * (1.0 - ls.d[i] * ls.d[i]) + g_h_carry[k][i];
                g_u[i] = g_h * inv;
                g_h_carry[k][i] = g_h * (1.0 - inv);
            }

            gemv_t_acc(&lp.w_dd, &g_u, &mut g_d_prev[k]);
            if let Some(w) = &lp.w_below {
                gemv_t_acc(w, &g_u, &mut g_d_prev[k - 1]);
            }
            if let Some(w) = &lp.w_above {
                gemv_t_acc(w, &g_u, &mut g_d_prev[k + 1]);
            }
            let mut g_z = vec![0.0; ls.z.len()];
            gemv_t_acc(&lp.w_zd, &g_u, &mut g_z);

            if let Some(g) = gp.as_mut() {
                let gl = &mut g.layers[k];
                outer_acc(&mut gl.w_dd, &g_u, d_prev);
                if let Some(w) = gl.w_below.as_mut() {
                    outer_acc(w, &g_u, rollout.d_prev(t, k - 1));
                }
                if let Some(w) = gl.w_above.as_mut() {
                    outer_acc(w, &g_u, rollout.d_prev(t, k + 1));
                }
                outer_acc(&mut gl.w_zd, &g_u, &ls.z);
            }

            let zn = ls.z.len();
            let p = &ls.prior;
            let mut g_pre_mu_p = vec![0.0; zn];
            let mut g_pre_ls_p = vec![0.0; zn];
            let mut g_pre_mu_q = vec![0.0; zn];
            let mut g_pre_ls_q = vec![0.0; zn];

            match &ls.posterior {
                Some(q) => {
                    for i in 0..zn {
                        let var_p = p.sigma[i] * p.sigma[i];
                        let dm = q.mu[i] - p.mu[i];
                        let ratio = q.sigma[i] * q.sigma[i] / var_p;
                        // KL partials.
                        let dkl_mu_q = dm / var_p;
                        let dkl_ls_q = ratio - 1.0;
                        let dkl_ls_p = 1.0 - dm * dm / var_p - ratio;

                        let g_mu_q = g_z[i] - w * dkl_mu_q;
                        let g_mu_p = w * dkl_mu_q;
                        g_pre_mu_q[i] = g_mu_q * (1.0 - q.mu[i] * q.mu[i]);
                        g_pre_mu_p[i] = g_mu_p * (1.0 - p.mu[i] * p.mu[i]);
                        if q.log_sigma_active(i) {
                            g_pre_ls_q[i] = g_z[i] * ls.eps[i] * q.sigma[i] - w * dkl_ls_q;
                        }
                        if p.log_sigma_active(i) {
                            g_pre_ls_p[i] = -w * dkl_ls_p;
                        }
                    }
                    ga[t].mu[k].copy_from_slice(&g_pre_mu_q);
                    ga[t].sigma[k].copy_from_slice(&g_pre_ls_q);
                }
                None => {
                    for i in 0..zn {
                        g_pre_mu_p[i] = g_z[i] * (1.0 - p.mu[i] * p.mu[i]);
                        if p.log_sigma_active(i) {
                            g_pre_ls_p[i] = g_z[i] * ls.eps[i] * p.sigma[i];
                        }
                    }
                }
            }

            for g_pre in [&g_pre_mu_p, &g_pre_mu_q] {
                gemv_t_acc(&lp.w_mu, g_pre, &mut g_d_prev[k]);
            }
            for g_pre in [&g_pre_ls_p, &g_pre_ls_q] {
                gemv_t_acc(&lp.w_sigma, g_pre, &mut g_d_prev[k]);
            }
            if let Some(g) = gp.as_mut() {
                let gl = &mut g.layers[k];
                outer_acc(&mut gl.w_mu, &g_pre_mu_p, d_prev);
                outer_acc(&mut gl.w_mu, &g_pre_mu_q, d_prev);
                outer_acc(&mut gl.w_sigma, &g_pre_ls_p, d_prev);
                outer_acc(&mut gl.w_sigma, &g_pre_ls_q, d_prev);
                for i in 0..zn {
                    gl.b_mu_prior[i] += g_pre_mu_p[i];
                    gl.b_sigma_prior[i] += g_pre_ls_p[i];
                    gl.b_mu_post[i] += g_pre_mu_q[i];
                    gl.b_sigma_post[i] += g_pre_ls_q[i];
                }
            }
        }
    }

    Ok(Gradients {
        params: gp,
        adaptive: ga,
    })
}
